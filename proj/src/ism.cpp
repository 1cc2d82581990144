#include "edcforge/ism.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numbers>
#include <tuple>

#include "edcforge/decay.hpp"
#include "edcforge/errors.hpp"
#include "edcforge/filterbank.hpp"

namespace edcforge {

namespace {

// Mirror-lattice coordinate along one axis: index i, room span L, source s.
double lattice_coord(int i, double span, double src) {
    const double base = i * span;
    return (i % 2 == 0) ? base + src : base + (span - src);
}

// Reflections against the low and high wall of one axis for lattice index i.
std::pair<int, int> wall_counts(int i) {
    if (i % 2 == 0) return {std::abs(i) / 2, std::abs(i) / 2};
    return {std::abs((i - 1) / 2), std::abs((i + 1) / 2)};
}

void check_sim_params(const SimParams& p) {
    std::vector<std::string> issues;
    if (p.max_order < 0) issues.push_back(fmt::format("max_order = {} negative", p.max_order));
    if (p.frac_delay_taps < 3 || p.frac_delay_taps % 2 == 0) {
        issues.push_back(fmt::format("frac_delay_taps = {} not an odd integer >= 3", p.frac_delay_taps));
    }
    if (!(p.speed_of_sound > 0.0)) {
        issues.push_back(fmt::format("speed_of_sound = {:.6g} not positive", p.speed_of_sound));
    }
    if (!(p.sample_rate_hz > 0.0)) {
        issues.push_back(fmt::format("sample_rate_hz = {:.6g} not positive", p.sample_rate_hz));
    }
    if (!issues.empty()) throw ValidationError(std::move(issues));
}

// Scatters every image's windowed-sinc pulse into one buffer per band, the
// band amplitudes being beta_b^order. Single code path for both the per-band
// API and the fused broadband synthesis keeps the two bit-identical.
void accumulate_trains(std::span<const ImageSource> images, const Vec3& receiver,
                       std::span<const double> betas, double fs, int taps, double c,
                       std::span<std::vector<double>> buffers) {
    const double pi = std::numbers::pi;
    const double radius = 0.5 * (taps - 1) + 0.5;
    const std::size_t bands = betas.size();

    int max_order = 0;
    for (const ImageSource& img : images) max_order = std::max(max_order, img.order);

    // beta^q by repeated multiplication; pow_table[b][0] = 1 covers beta = 0
    // for the direct path.
    std::vector<std::vector<double>> pow_table(bands);
    for (std::size_t b = 0; b < bands; ++b) {
        pow_table[b].resize(max_order + 1);
        pow_table[b][0] = 1.0;
        for (int q = 1; q <= max_order; ++q) pow_table[b][q] = pow_table[b][q - 1] * betas[b];
    }

    for (const ImageSource& img : images) {
        const double d = distance(img.position, receiver);
        if (d < 1e-6) {
            throw Error(ErrorKind::validation,
                        fmt::format("receiver coincides with image ({}, {}, {})", img.index[0],
                                    img.index[1], img.index[2]));
        }
        const double geom = 1.0 / (4.0 * pi * d);
        const double delay = d / c * fs;
        const double whole = std::floor(delay);
        const double frac = delay - whole;
        const double sin_pf = std::sin(pi * frac);
        const std::int64_t n_begin = static_cast<std::int64_t>(std::ceil(delay - radius));
        const std::int64_t n_end = static_cast<std::int64_t>(std::floor(delay + radius));
        const std::int64_t parity_base = static_cast<std::int64_t>(whole);

        for (std::int64_t n = std::max<std::int64_t>(n_begin, 0); n <= n_end; ++n) {
            if (static_cast<std::size_t>(n) >= buffers[0].size()) break;
            const double x = n - delay;
            // sin(pi (n - delay)) = (-1)^(n + floor(delay) + 1) sin(pi frac):
            // one sin per image instead of one per tap.
            double sinc;
            if (std::abs(x) < 1e-9) {
                sinc = 1.0;
            } else {
                const double sign = ((n + parity_base) & 1) ? 1.0 : -1.0;
                sinc = sign * sin_pf / (pi * x);
            }
            const double window = 0.5 * (1.0 + std::cos(pi * x / radius));
            const double base = window * sinc * geom;
            for (std::size_t b = 0; b < bands; ++b) {
                buffers[b][n] += base * pow_table[b][img.order];
            }
        }
    }
}

std::int64_t auto_train_length(std::span<const ImageSource> images, const Vec3& receiver,
                               double fs, int taps, double c) {
    double max_delay = 0.0;
    for (const ImageSource& img : images) {
        max_delay = std::max(max_delay, distance(img.position, receiver) / c * fs);
    }
    return static_cast<std::int64_t>(std::ceil(max_delay)) + taps;
}

} // namespace

std::vector<ImageSource> enumerate_images(const RoomConfig& config, int max_order) {
    if (max_order < 0) {
        throw Error(ErrorKind::validation, fmt::format("max_order = {} negative", max_order));
    }
    std::vector<ImageSource> images;
    for (int i = -max_order; i <= max_order; ++i) {
        const int rem_i = max_order - std::abs(i);
        for (int j = -rem_i; j <= rem_i; ++j) {
            const int rem_j = rem_i - std::abs(j);
            for (int k = -rem_j; k <= rem_j; ++k) {
                ImageSource img;
                img.index = {i, j, k};
                img.position = {lattice_coord(i, config.length_m, config.source.x),
                                lattice_coord(j, config.width_m, config.source.y),
                                lattice_coord(k, config.height_m, config.source.z)};
                const auto [xl, xh] = wall_counts(i);
                const auto [yl, yh] = wall_counts(j);
                const auto [zl, zh] = wall_counts(k);
                img.reflection_counts = {xl, xh, yl, yh, zl, zh};
                img.order = std::abs(i) + std::abs(j) + std::abs(k);
                images.push_back(img);
            }
        }
    }
    std::sort(images.begin(), images.end(), [](const ImageSource& a, const ImageSource& b) {
        return std::tuple(a.order, a.index[0], a.index[1], a.index[2]) <
               std::tuple(b.order, b.index[0], b.index[1], b.index[2]);
    });
    return images;
}

Rir band_impulse_train(std::span<const ImageSource> images, const Vec3& receiver,
                       double band_beta, double fs, int frac_delay_taps, double speed_of_sound,
                       std::int64_t num_samples) {
    if (!(band_beta >= 0.0) || band_beta > 1.0) {
        throw Error(ErrorKind::validation, fmt::format("band beta = {:.6g} outside [0, 1]", band_beta));
    }
    if (images.empty()) {
        throw Error(ErrorKind::validation, "band_impulse_train needs at least one image");
    }
    const std::int64_t n = num_samples > 0
                               ? num_samples
                               : auto_train_length(images, receiver, fs, frac_delay_taps,
                                                   speed_of_sound);
    Rir rir;
    rir.sample_rate_hz = fs;
    std::vector<std::vector<double>> buffers(1);
    buffers[0].assign(static_cast<std::size_t>(n), 0.0);
    const double betas[1] = {band_beta};
    accumulate_trains(images, receiver, betas, fs, frac_delay_taps, speed_of_sound, buffers);
    rir.samples = std::move(buffers[0]);
    return rir;
}

Rir simulate_rir(const RoomConfig& config, const SimParams& params) {
    validate_or_throw(config);
    check_sim_params(params);

    double duration = params.duration_s;
    if (duration <= 0.0) {
        const double t60 = eyring_t60(config.volume(), config.surface_area(), config.mean_absorption());
        duration = std::max(1.0, 1.5 * t60);
    }
    const double fs = params.sample_rate_hz;
    const auto length = static_cast<std::size_t>(std::llround(duration * fs));
    if (length == 0) throw Error(ErrorKind::validation, "simulation duration rounds to zero samples");

    const auto images = enumerate_images(config, params.max_order);

    std::array<double, kNumBands> betas;
    for (int b = 0; b < kNumBands; ++b) betas[b] = std::sqrt(1.0 - config.absorption[b]);

    std::vector<std::vector<double>> band_buffers(kNumBands);
    for (auto& buf : band_buffers) buf.assign(length, 0.0);
    accumulate_trains(images, config.receiver, betas, fs, params.frac_delay_taps,
                      params.speed_of_sound, band_buffers);

    const auto bank = design_octave_bank(fs);
    Rir rir;
    rir.sample_rate_hz = fs;
    rir.samples.assign(length, 0.0);
    for (int b = 0; b < kNumBands; ++b) {
        filter_forward_inplace(bank[b], band_buffers[b]);
        for (std::size_t t = 0; t < length; ++t) rir.samples[t] += band_buffers[b][t];
    }
    return rir;
}

std::vector<double> octave_bandpass(std::span<const double> signal, double center_hz, double fs) {
    const double sqrt2 = std::numbers::sqrt2;
    return filter_forward(design_bandpass(center_hz / sqrt2, center_hz * sqrt2, fs), signal);
}

} // namespace edcforge
