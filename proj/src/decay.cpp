#include "edcforge/decay.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <optional>

#include "edcforge/errors.hpp"
#include "edcforge/io_util.hpp"

namespace edcforge {

namespace {

// 1e-15 floor keeps exact-zero tails at a finite -150 dB.
double to_db(double v) { return 10.0 * std::log10(std::max(v, 1e-15)); }

std::vector<double> curve_db(const EnergyDecayCurve& edc) {
    std::vector<double> db(edc.values.size());
    for (std::size_t i = 0; i < db.size(); ++i) db[i] = to_db(edc.values[i]);
    return db;
}

void require_curve(const EnergyDecayCurve& edc) {
    if (edc.values.empty() || !(edc.time_step_s > 0.0)) {
        throw Error(ErrorKind::validation, "empty decay curve");
    }
}

std::optional<DecayFit> least_squares_fit(const std::vector<double>& db, double dt,
                                          double upper_db, double lower_db) {
    double sum_t = 0.0, sum_y = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < db.size(); ++i) {
        if (db[i] <= upper_db && db[i] >= lower_db) {
            sum_t += i * dt;
            sum_y += db[i];
            ++n;
        }
    }
    if (n < 5) return std::nullopt;
    const double mean_t = sum_t / n;
    const double mean_y = sum_y / n;
    double stt = 0.0, sty = 0.0;
    for (std::size_t i = 0; i < db.size(); ++i) {
        if (db[i] <= upper_db && db[i] >= lower_db) {
            const double t = i * dt - mean_t;
            stt += t * t;
            sty += t * (db[i] - mean_y);
        }
    }
    if (!(stt > 0.0)) return std::nullopt;
    const double slope = sty / stt;
    if (!(slope < 0.0)) return std::nullopt;
    DecayFit fit;
    fit.slope_db_per_s = slope;
    fit.intercept_db = mean_y - slope * mean_t;
    fit.upper_db = upper_db;
    fit.lower_db = lower_db;
    return fit;
}

// Time where the level first drops to `threshold_db`, linearly interpolated
// in dB across the bracketing samples.
double first_crossing_s(const std::vector<double>& db, double dt, double threshold_db) {
    if (db[0] <= threshold_db) return 0.0;
    for (std::size_t i = 1; i < db.size(); ++i) {
        if (db[i] <= threshold_db) {
            const double w = (db[i - 1] - threshold_db) / (db[i - 1] - db[i]);
            return (i - 1 + w) * dt;
        }
    }
    throw InsufficientRangeError(
        fmt::format("decay curve never reaches {:.1f} dB (minimum {:.1f} dB)", threshold_db,
                    *std::min_element(db.begin(), db.end())));
}

// Shared core of EDT/T20/T30: least-squares slope in range, or the
// crossing-time slope when the fit is degenerate (for example a curve that
// plummets through the whole range between two samples).
double decay_time(const EnergyDecayCurve& edc, double upper_db, double lower_db) {
    require_curve(edc);
    const auto db = curve_db(edc);
    if (*std::min_element(db.begin(), db.end()) > lower_db) {
        throw InsufficientRangeError(
            fmt::format("decay curve never reaches {:.1f} dB (minimum {:.1f} dB)", lower_db,
                        *std::min_element(db.begin(), db.end())));
    }
    double slope;
    if (auto fit = least_squares_fit(db, edc.time_step_s, upper_db, lower_db)) {
        slope = fit->slope_db_per_s;
    } else {
        const double t_up = first_crossing_s(db, edc.time_step_s, upper_db);
        const double t_lo = first_crossing_s(db, edc.time_step_s, lower_db);
        if (!(t_lo > t_up)) {
            throw InsufficientRangeError(
                fmt::format("degenerate decay between {:.1f} and {:.1f} dB", upper_db, lower_db));
        }
        slope = (lower_db - upper_db) / (t_lo - t_up);
    }
    return -60.0 / slope;
}

double interp_at(const EnergyDecayCurve& edc, double t_s) {
    const double pos = t_s / edc.time_step_s;
    if (pos <= 0.0) return edc.values.front();
    const auto lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= edc.values.size()) {
        throw InsufficientRangeError(
            fmt::format("decay curve shorter than {:.3f} s", t_s));
    }
    const double w = pos - lo;
    return edc.values[lo] * (1.0 - w) + edc.values[lo + 1] * w;
}

void check_mean_absorption(double a) {
    if (!(a > 0.0) || a >= 1.0) {
        throw Error(ErrorKind::numeric,
                    fmt::format("mean absorption {:.6g} outside (0, 1)", a));
    }
}

} // namespace

EnergyDecayCurve schroeder_edc(const Rir& rir) {
    if (rir.samples.empty() || !(rir.sample_rate_hz > 0.0)) {
        throw Error(ErrorKind::validation, "RIR is empty");
    }
    // Extended precision keeps the normalized curve scale-invariant to well
    // below 1e-12 even for long tails.
    std::vector<long double> cum(rir.samples.size());
    long double run = 0.0L;
    for (std::size_t i = rir.samples.size(); i-- > 0;) {
        const long double h = rir.samples[i];
        run += h * h;
        cum[i] = run;
    }
    if (!(run > 0.0L)) {
        throw Error(ErrorKind::validation, "RIR has zero energy");
    }
    EnergyDecayCurve edc;
    edc.time_step_s = 1.0 / rir.sample_rate_hz;
    edc.values.resize(rir.samples.size());
    for (std::size_t i = 0; i < cum.size(); ++i) {
        edc.values[i] = static_cast<double>(cum[i] / run);
    }
    return edc;
}

EnergyDecayCurve resample_edc(const EnergyDecayCurve& edc, int target_len, double window_s) {
    require_curve(edc);
    if (target_len < 2 || !(window_s > 0.0)) {
        throw Error(ErrorKind::validation,
                    fmt::format("bad resample grid: {} points over {:.6g} s", target_len, window_s));
    }
    EnergyDecayCurve out;
    out.time_step_s = window_s / (target_len - 1);
    out.values.resize(target_len);
    const std::size_t n = edc.values.size();
    for (int i = 0; i < target_len; ++i) {
        const double t = window_s * i / (target_len - 1);
        double pos = t / edc.time_step_s;
        // Snap to the lattice so resampling a curve already on the target
        // grid reproduces it exactly.
        const double nearest = std::round(pos);
        if (std::abs(pos - nearest) < 1e-9) pos = nearest;
        double v;
        if (pos <= 0.0) {
            v = edc.values.front();
        } else if (pos >= static_cast<double>(n - 1)) {
            v = edc.values.back();
        } else {
            const auto lo = static_cast<std::size_t>(pos);
            const double w = pos - lo;
            v = edc.values[lo] * (1.0 - w) + edc.values[lo + 1] * w;
        }
        out.values[i] = v;
    }
    // Linear interpolation of a monotone sequence is monotone; the running
    // min only irons out last-ulp rounding.
    for (int i = 1; i < target_len; ++i) out.values[i] = std::min(out.values[i], out.values[i - 1]);
    return out;
}

DecayFit fit_decay(const EnergyDecayCurve& edc, double upper_db, double lower_db) {
    require_curve(edc);
    if (!(upper_db > lower_db)) {
        throw Error(ErrorKind::validation,
                    fmt::format("fit range [{:.1f}, {:.1f}] dB is empty", lower_db, upper_db));
    }
    const auto db = curve_db(edc);
    const double min_db = *std::min_element(db.begin(), db.end());
    if (min_db > lower_db) {
        throw InsufficientRangeError(
            fmt::format("decay curve never reaches {:.1f} dB (minimum {:.1f} dB)", lower_db, min_db));
    }
    auto fit = least_squares_fit(db, edc.time_step_s, upper_db, lower_db);
    if (!fit) {
        throw InsufficientRangeError(
            fmt::format("fewer than 5 usable samples between {:.1f} and {:.1f} dB", upper_db,
                        lower_db));
    }
    return *fit;
}

double edt(const EnergyDecayCurve& edc) { return decay_time(edc, 0.0, -10.0); }
double t20(const EnergyDecayCurve& edc) { return decay_time(edc, -5.0, -25.0); }
double t30(const EnergyDecayCurve& edc) { return decay_time(edc, -5.0, -35.0); }

double t60_from_edc(const EnergyDecayCurve& edc) {
    try {
        return t30(edc);
    } catch (const InsufficientRangeError&) {
        return t20(edc);
    }
}

double t60_from_rir(const Rir& rir) { return t60_from_edc(schroeder_edc(rir)); }

double c50(const EnergyDecayCurve& edc) {
    require_curve(edc);
    const double e = interp_at(edc, 0.050);
    if (!(e > 0.0)) {
        throw Error(ErrorKind::numeric, "C50 is infinite: no energy beyond 50 ms");
    }
    if (!(e < 1.0)) {
        throw Error(ErrorKind::numeric, "C50 is undefined: no energy before 50 ms");
    }
    return 10.0 * std::log10((1.0 - e) / e);
}

double sabine_t60(double volume_m3, double surface_m2, double mean_absorption) {
    check_mean_absorption(mean_absorption);
    if (!(volume_m3 > 0.0) || !(surface_m2 > 0.0)) {
        throw Error(ErrorKind::numeric, "sabine_t60 needs positive volume and surface");
    }
    return 0.161 * volume_m3 / (mean_absorption * surface_m2);
}

double eyring_t60(double volume_m3, double surface_m2, double mean_absorption) {
    check_mean_absorption(mean_absorption);
    if (!(volume_m3 > 0.0) || !(surface_m2 > 0.0)) {
        throw Error(ErrorKind::numeric, "eyring_t60 needs positive volume and surface");
    }
    return 0.161 * volume_m3 / (-surface_m2 * std::log1p(-mean_absorption));
}

double sabine_t60(const RoomConfig& c) {
    return sabine_t60(c.volume(), c.surface_area(), c.mean_absorption());
}

double eyring_t60(const RoomConfig& c) {
    return eyring_t60(c.volume(), c.surface_area(), c.mean_absorption());
}

void write_edc_csv(const EnergyDecayCurve& edc, const std::string& path) {
    require_curve(edc);
    std::string text = "time_s,edc_linear,edc_db\n";
    for (std::size_t i = 0; i < edc.values.size(); ++i) {
        text += fmt::format("{:.9g},{:.9g},{:.6f}\n", i * edc.time_step_s, edc.values[i],
                            to_db(edc.values[i]));
    }
    write_text_file(path, text);
}

} // namespace edcforge
