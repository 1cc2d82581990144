#pragma once

#include <array>
#include <string>
#include <vector>

#include "edcforge/vec3.hpp"

namespace edcforge {

inline constexpr int kNumBands = 7;
inline constexpr std::array<double, kNumBands> kBandCentersHz = {
    125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0};

inline constexpr int kNumFeatures = 16;
using FeatureVector = std::array<double, kNumFeatures>;

// One shoebox scenario: dimensions, source/receiver, and the wall-averaged
// absorption coefficient per octave band. Origin is a room corner with axes
// along the walls.
struct RoomConfig {
    double length_m = 0.0;
    double width_m = 0.0;
    double height_m = 0.0;
    Vec3 source;
    Vec3 receiver;
    std::array<double, kNumBands> absorption{};

    double volume() const { return length_m * width_m * height_m; }
    double surface_area() const {
        return 2.0 * (length_m * width_m + length_m * height_m + width_m * height_m);
    }
    double mean_absorption() const {
        double sum = 0.0;
        for (double a : absorption) sum += a;
        return sum / kNumBands;
    }

    bool operator==(const RoomConfig&) const = default;
};

// Acceptable ranges for validation; defaults mirror the sampler's ranges.
// Widen these to validate rooms from outside the generated dataset.
struct RoomLimits {
    double min_length_m = 3.0, max_length_m = 6.0;
    double min_width_m = 3.0, max_width_m = 6.0;
    double min_height_m = 2.5, max_height_m = 4.0;
    double wall_margin_m = 0.5;
    double min_src_rcv_dist_m = 1.0;
    double max_src_rcv_dist_m = 4.0;
};

// Returns one message per violated invariant; empty means valid.
std::vector<std::string> validate(const RoomConfig& config, const RoomLimits& limits = {});

// Throws ValidationError listing every violation.
void validate_or_throw(const RoomConfig& config, const RoomLimits& limits = {});

// Packs the config as [L, W, H, sx, sy, sz, rx, ry, rz, a125..a8000].
FeatureVector to_features(const RoomConfig& config);
RoomConfig from_features(const FeatureVector& features);

// JSON record with keys length_m/width_m/height_m/source/receiver/absorption.
std::string room_to_json(const RoomConfig& config);
RoomConfig room_from_json(const std::string& text);

RoomConfig load_room_file(const std::string& path);
void save_room_file(const RoomConfig& config, const std::string& path);

} // namespace edcforge
