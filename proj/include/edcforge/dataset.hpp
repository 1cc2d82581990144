#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "edcforge/decay.hpp"
#include "edcforge/ism.hpp"
#include "edcforge/room.hpp"

namespace edcforge {

inline constexpr int kDatasetSchemaVersion = 1;

// Absorption sampling range and per-band jitter of the generator.
inline constexpr double kAlphaMin = 0.14;
inline constexpr double kAlphaMax = 0.65;
inline constexpr double kAlphaJitter = 0.05;

struct DatasetManifest {
    std::uint64_t seed = 0;
    std::int64_t n_rooms = 0;
    int edc_len = kEdcLength;
    double edc_window_s = kEdcWindowS;
    double train_fraction = 0.6;
    double val_fraction = 0.2;
    double test_fraction = 0.2;
    SimParams sim;
    int schema_version = kDatasetSchemaVersion;
};

void validate_manifest(const DatasetManifest& manifest);

struct Sample {
    FeatureVector features{};
    EnergyDecayCurve target;
    double t60_s = 0.0;
};

// Per-dimension min-max over the training split; the epsilon keeps constant
// dimensions at zero instead of dividing by zero.
struct FeatureScaler {
    std::array<double, kNumFeatures> min{};
    std::array<double, kNumFeatures> max{};

    FeatureVector transform(const FeatureVector& x) const;
    FeatureVector inverse(const FeatureVector& x) const;

    bool operator==(const FeatureScaler&) const = default;
};

FeatureScaler fit_scaler(std::span<const FeatureVector> training_rows);

struct SplitIndices {
    std::vector<std::int64_t> train, val, test;

    bool operator==(const SplitIndices&) const = default;
};

// Seeded shuffle of 0..n-1, then contiguous slices. Validation and test get
// the floor counts, training absorbs the remainder.
SplitIndices split_indices(std::int64_t n, const DatasetManifest& manifest);

// Room sampler: dimensions uniform over the generator's ranges,
// source/receiver redrawn until 1 m <= distance <= 4 m, absorption =
// clamp(base + jitter, range) per band. One RNG stream, so the list is a
// pure function of (n, seed).
std::vector<RoomConfig> sample_configs(std::int64_t n, std::uint64_t seed);

// Simulates every config into a (features, EDC target, T60) sample. Parallel
// across rooms; slot-indexed output keeps bytes independent of thread count.
std::vector<Sample> build_samples(const std::vector<RoomConfig>& configs,
                                  const DatasetManifest& manifest, int threads = 0);

// The persisted form: float32 rows, exactly what the files hold.
struct Dataset {
    DatasetManifest manifest;
    std::vector<float> features; // n x 16 row-major
    std::vector<float> targets;  // n x edc_len row-major
    std::vector<float> t60;      // n
    SplitIndices splits;
    FeatureScaler scaler; // fit on the training rows as stored

    std::int64_t size() const { return static_cast<std::int64_t>(t60.size()); }
    FeatureVector feature_row(std::int64_t i) const;
    std::vector<double> target_row(std::int64_t i) const;
    Sample sample(std::int64_t i) const;
};

// sample_configs + build_samples + quantize + split + scaler fit.
Dataset build_dataset(const DatasetManifest& manifest, int threads = 0);

// Directory layout: manifest.json (with content checksums), features.f32,
// targets.f32, t60.f32, splits.json, scaler.json, t60_histogram.csv.
void save_dataset(const Dataset& dataset, const std::string& dir);
Dataset load_dataset(const std::string& dir);

} // namespace edcforge
