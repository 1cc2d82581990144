#pragma once

#include <span>
#include <vector>

#include "edcforge/room.hpp"

namespace edcforge {

// One second-order section, a0 normalized to 1.
struct Biquad {
    double b0 = 0.0, b1 = 0.0, b2 = 0.0;
    double a1 = 0.0, a2 = 0.0;
};

struct BandFilter {
    double center_hz = 0.0;
    double low_edge_hz = 0.0;
    double high_edge_hz = 0.0;
    double sample_rate_hz = 0.0;
    std::vector<Biquad> sections;
};

// Butterworth-magnitude bandpass: analog order-N lowpass prototype, LP->BP
// transform, bilinear transform, paired into N biquads. Unity gain at the
// geometric center of the band edges. The upper edge is clipped to
// 0.95 * Nyquist when the requested edge does not fit.
BandFilter design_bandpass(double low_hz, double high_hz, double sample_rate_hz,
                           int prototype_order = 4);

// One bandpass per center in kBandCentersHz, edges center/sqrt(2)..center*sqrt(2).
std::vector<BandFilter> design_octave_bank(double sample_rate_hz);

// Causal cascade filtering; no warm-up or backward pass.
void filter_forward_inplace(const BandFilter& filter, std::span<double> signal);
std::vector<double> filter_forward(const BandFilter& filter, std::span<const double> input);

// |H(e^{j 2 pi f / fs})| of the biquad cascade.
double magnitude_at(const BandFilter& filter, double freq_hz);

} // namespace edcforge
