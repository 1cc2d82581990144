#pragma once

#include <string>
#include <vector>

#include "edcforge/ism.hpp"
#include "edcforge/room.hpp"

namespace edcforge {

// Target grid the network predicts on: 256 samples spanning [0, 2] s.
inline constexpr int kEdcLength = 256;
inline constexpr double kEdcWindowS = 2.0;

// Normalized Schroeder curve: values[0] = 1, non-increasing, in [0, 1].
struct EnergyDecayCurve {
    std::vector<double> values;
    double time_step_s = 0.0;
};

struct DecayFit {
    double slope_db_per_s = 0.0;
    double intercept_db = 0.0;
    double upper_db = 0.0;
    double lower_db = 0.0;
};

// Backward-integrated squared RIR, normalized to total energy.
EnergyDecayCurve schroeder_edc(const Rir& rir);

// Linear interpolation onto target_len points over [0, window_s]; the curve
// holds its final value past its end. Monotone non-increasing output.
EnergyDecayCurve resample_edc(const EnergyDecayCurve& edc, int target_len = kEdcLength,
                              double window_s = kEdcWindowS);

// Least-squares line over the samples whose level lies in [lower_db, upper_db]
// (0 dB at t = 0). Throws InsufficientRangeError when the curve never reaches
// lower_db, has fewer than 5 samples in range, or fits a non-negative slope.
DecayFit fit_decay(const EnergyDecayCurve& edc, double upper_db, double lower_db);

// Reverberation metrics; each falls back to threshold-crossing times when the
// least-squares fit inside its range is degenerate, and propagates
// InsufficientRangeError when the curve never reaches the range's floor.
double edt(const EnergyDecayCurve& edc);
double t20(const EnergyDecayCurve& edc);
double t30(const EnergyDecayCurve& edc);

// T30-based T60; falls back to T20 when the curve never reaches -35 dB.
double t60_from_edc(const EnergyDecayCurve& edc);
double t60_from_rir(const Rir& rir);

// 10 log10((1 - EDC(50 ms)) / EDC(50 ms)), interpolated at 50 ms.
double c50(const EnergyDecayCurve& edc);

// Closed-form reverberation times from room geometry and mean absorption.
double sabine_t60(double volume_m3, double surface_m2, double mean_absorption);
double eyring_t60(double volume_m3, double surface_m2, double mean_absorption);
double sabine_t60(const RoomConfig& config);
double eyring_t60(const RoomConfig& config);

// CSV with columns time_s, edc_linear, edc_db.
void write_edc_csv(const EnergyDecayCurve& edc, const std::string& path);

} // namespace edcforge
