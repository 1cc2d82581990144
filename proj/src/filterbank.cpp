#include "edcforge/filterbank.hpp"

#include <cmath>
#include <complex>
#include <fmt/format.h>
#include <numbers>

#include "edcforge/errors.hpp"

namespace edcforge {

namespace {

using cd = std::complex<double>;

cd biquad_response(const Biquad& s, double omega) {
    const cd z1 = std::polar(1.0, -omega);
    const cd z2 = z1 * z1;
    return (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
}

} // namespace

BandFilter design_bandpass(double low_hz, double high_hz, double fs, int order) {
    if (order < 2 || order > 12 || order % 2 != 0) {
        throw Error(ErrorKind::validation,
                    fmt::format("bandpass prototype order {} must be even and in [2, 12]", order));
    }
    const double nyquist = 0.5 * fs;
    if (!(fs > 0.0) || !(low_hz > 0.0) || !(high_hz > low_hz)) {
        throw Error(ErrorKind::validation,
                    fmt::format("bandpass edges {:.6g}..{:.6g} Hz invalid at fs {:.6g}", low_hz,
                                high_hz, fs));
    }
    const double high_clipped = std::min(high_hz, 0.95 * nyquist);
    if (high_clipped <= low_hz) {
        throw Error(ErrorKind::validation,
                    fmt::format("band {:.6g}..{:.6g} Hz does not fit below Nyquist {:.6g}", low_hz,
                                high_hz, nyquist));
    }

    // Pre-warp the edges so the bilinear transform lands them exactly.
    const double pi = std::numbers::pi;
    const double warped_lo = 2.0 * fs * std::tan(pi * low_hz / fs);
    const double warped_hi = 2.0 * fs * std::tan(pi * high_clipped / fs);
    const double w0_sq = warped_lo * warped_hi;
    const double bw = warped_hi - warped_lo;

    // Left-half-plane Butterworth prototype poles, unit cutoff.
    std::vector<cd> proto(order);
    for (int k = 0; k < order; ++k) {
        proto[k] = std::exp(cd(0.0, pi * (2.0 * (k + 1) + order - 1.0) / (2.0 * order)));
    }

    // Each prototype pole splits into two bandpass poles, then maps through
    // the bilinear transform. With even order the prototype poles form strict
    // conjugate pairs, so keeping the upper-half-plane members and pairing
    // each resulting z pole with its conjugate yields real biquads covering
    // all 2N poles exactly once.
    const double k_bilinear = 2.0 * fs;
    std::vector<cd> zpoles;
    zpoles.reserve(2 * static_cast<std::size_t>(order));
    for (int k = 0; k < order; ++k) {
        const cd p = proto[k];
        if (p.imag() < 0.0) continue;
        const cd bp_half = 0.5 * bw * p;
        const cd root = std::sqrt(bp_half * bp_half - w0_sq);
        for (const cd s : {bp_half + root, bp_half - root}) {
            zpoles.push_back((k_bilinear + s) / (k_bilinear - s));
        }
    }

    BandFilter filter;
    filter.center_hz = std::sqrt(low_hz * high_clipped);
    filter.low_edge_hz = low_hz;
    filter.high_edge_hz = high_clipped;
    filter.sample_rate_hz = fs;
    for (const cd zp : zpoles) {
        Biquad s;
        s.a1 = -2.0 * zp.real();
        s.a2 = std::norm(zp);
        // Numerator distributes the N zeros at z=1 and N at z=-1 as (1 - z^-2)
        // per section; gain set below.
        s.b0 = 1.0;
        s.b1 = 0.0;
        s.b2 = -1.0;
        filter.sections.push_back(s);
    }

    // Normalize each section to unit magnitude at the band center so the
    // cascade is exactly unity there and intermediate signals stay scaled.
    const double omega_c = 2.0 * pi * filter.center_hz / fs;
    for (Biquad& s : filter.sections) {
        const double mag = std::abs(biquad_response(s, omega_c));
        if (!(mag > 0.0) || !std::isfinite(mag)) {
            throw Error(ErrorKind::numeric, "degenerate bandpass section during normalization");
        }
        s.b0 /= mag;
        s.b2 /= mag;
    }
    return filter;
}

std::vector<BandFilter> design_octave_bank(double fs) {
    const double sqrt2 = std::numbers::sqrt2;
    std::vector<BandFilter> bank;
    bank.reserve(kNumBands);
    for (double fc : kBandCentersHz) {
        bank.push_back(design_bandpass(fc / sqrt2, fc * sqrt2, fs));
    }
    return bank;
}

void filter_forward_inplace(const BandFilter& filter, std::span<double> x) {
    for (const Biquad& s : filter.sections) {
        // Direct form II transposed.
        double z1 = 0.0, z2 = 0.0;
        for (double& v : x) {
            const double in = v;
            const double out = s.b0 * in + z1;
            z1 = s.b1 * in - s.a1 * out + z2;
            z2 = s.b2 * in - s.a2 * out;
            v = out;
        }
    }
}

std::vector<double> filter_forward(const BandFilter& filter, std::span<const double> input) {
    std::vector<double> out(input.begin(), input.end());
    filter_forward_inplace(filter, out);
    return out;
}

double magnitude_at(const BandFilter& filter, double freq_hz) {
    const double omega = 2.0 * std::numbers::pi * freq_hz / filter.sample_rate_hz;
    cd h = 1.0;
    for (const Biquad& s : filter.sections) h *= biquad_response(s, omega);
    return std::abs(h);
}

} // namespace edcforge
