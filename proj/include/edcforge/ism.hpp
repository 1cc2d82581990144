#pragma once

#include <array>
#include <span>
#include <vector>

#include "edcforge/room.hpp"
#include "edcforge/vec3.hpp"

namespace edcforge {

inline constexpr double kDefaultSampleRate = 44100.0;

// Mirror image of the source across some sequence of walls.
// reflection_counts order: x=0, x=L, y=0, y=W, z=0, z=H.
struct ImageSource {
    std::array<int, 3> index{};
    Vec3 position;
    std::array<int, 6> reflection_counts{};
    int order = 0;
};

struct Rir {
    std::vector<double> samples;
    double sample_rate_hz = kDefaultSampleRate;
};

struct SimParams {
    int max_order = 30;
    double speed_of_sound = 343.0;
    int frac_delay_taps = 81;
    // <= 0 selects the automatic length max(1 s, 1.5 x Eyring T60).
    double duration_s = 0.0;
    double sample_rate_hz = kDefaultSampleRate;
};

// All mirror-lattice points with total reflection order <= max_order, sorted
// by order then lattice index. max_order 0 yields just the source.
std::vector<ImageSource> enumerate_images(const RoomConfig& config, int max_order);

// Sum of windowed-sinc pulses, one per image, amplitude beta^order / (4 pi d)
// at delay d / c. num_samples <= 0 sizes the buffer to fit every pulse.
Rir band_impulse_train(std::span<const ImageSource> images, const Vec3& receiver,
                       double band_beta, double fs = kDefaultSampleRate,
                       int frac_delay_taps = 81, double speed_of_sound = 343.0,
                       std::int64_t num_samples = -1);

// Full broadband synthesis: per-band image trains, octave bandpass each band
// forward-only, sum. Deterministic for identical inputs.
Rir simulate_rir(const RoomConfig& config, const SimParams& params = {});

// Convenience wrapper over the filterbank for one octave band.
std::vector<double> octave_bandpass(std::span<const double> signal, double center_hz,
                                    double fs = kDefaultSampleRate);

} // namespace edcforge
