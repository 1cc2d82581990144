#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edcforge/dataset.hpp"
#include "edcforge/decay.hpp"
#include "edcforge/nn.hpp"

namespace edcforge {

double mae(std::span<const double> pred, std::span<const double> target);
double rmse(std::span<const double> pred, std::span<const double> target);
// R^2 = 1 - SS_res/SS_tot; errors on constant targets.
double r2(std::span<const double> pred, std::span<const double> target);

// Per-time-index error statistics across the test set.
struct EdcErrorProfile {
    std::vector<double> mae;
    std::vector<double> rmse;
    std::vector<double> std_abs_err;
    double time_step_s = 0.0;
};

EdcErrorProfile edc_error_profile(std::span<const std::vector<double>> preds,
                                  std::span<const std::vector<double>> targets,
                                  double time_step_s);

// EDT/T20/C50 from one resampled EDC; nullopt where the curve cannot support
// the fit. The same function runs on predicted and target curves.
struct ExtractedParams {
    std::optional<double> edt_s;
    std::optional<double> t20_s;
    std::optional<double> c50_db;
};

ExtractedParams extract_params(const EnergyDecayCurve& edc);

struct ParamStats {
    double mae = 0.0;
    double rmse = 0.0;
    double r2 = 0.0;
    std::vector<double> targets;       // included rooms, paired with preds
    std::vector<double> preds;
    std::vector<std::int64_t> excluded; // positions within the evaluated set
};

struct ParamReport {
    ParamStats edt;
    ParamStats t20;
    ParamStats c50;
    std::int64_t n_rooms = 0;
};

// Derives parameters from both curve sets through extract_params and
// aggregates metrics over rooms where both derivations succeeded.
ParamReport param_report(std::span<const std::vector<double>> preds,
                         std::span<const std::vector<double>> targets, double time_step_s);

struct EvaluationResult {
    EdcErrorProfile profile;
    ParamReport report;
    std::int64_t n_test = 0;
};

// Runs the checkpoint over the dataset's test split.
EvaluationResult evaluate_test_split(const Dataset& data, const ModelCheckpoint& checkpoint,
                                     int threads = 0);

// Writes report.json, edc_error_profile.csv, scatter_{edt,t20,c50}.csv and
// exclusions.json into out_dir (which must exist).
void export_report(const EvaluationResult& result, const std::string& out_dir);

} // namespace edcforge
