#include "edcforge/eval.hpp"

#include <cmath>
#include <filesystem>

#include <fmt/format.h>
#include <json.hpp>

#include "edcforge/errors.hpp"
#include "edcforge/io_util.hpp"

namespace edcforge {

using nlohmann::ordered_json;

namespace {

void check_pair(std::span<const double> pred, std::span<const double> target, const char* op) {
    if (pred.size() != target.size() || pred.empty()) {
        throw Error(ErrorKind::validation,
                    fmt::format("{} needs equal non-empty lists, got {} and {}", op, pred.size(),
                                target.size()));
    }
}

} // namespace

double mae(std::span<const double> pred, std::span<const double> target) {
    check_pair(pred, target, "mae");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - target[i]);
    return s / static_cast<double>(pred.size());
}

double rmse(std::span<const double> pred, std::span<const double> target) {
    check_pair(pred, target, "rmse");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double e = pred[i] - target[i];
        s += e * e;
    }
    return std::sqrt(s / static_cast<double>(pred.size()));
}

double r2(std::span<const double> pred, std::span<const double> target) {
    check_pair(pred, target, "r2");
    double mean = 0.0;
    for (double t : target) mean += t;
    mean /= static_cast<double>(target.size());

    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double r = pred[i] - target[i];
        const double d = target[i] - mean;
        ss_res += r * r;
        ss_tot += d * d;
    }
    if (ss_tot <= 0.0) {
        throw Error(ErrorKind::numeric, "r2 is undefined for constant targets");
    }
    return 1.0 - ss_res / ss_tot;
}

EdcErrorProfile edc_error_profile(std::span<const std::vector<double>> preds,
                                  std::span<const std::vector<double>> targets,
                                  double time_step_s) {
    if (preds.size() != targets.size() || preds.empty()) {
        throw Error(ErrorKind::validation, "edc_error_profile needs equal non-empty curve sets");
    }
    const std::size_t len = targets.front().size();
    for (const auto& c : preds) {
        if (c.size() != len) throw Error(ErrorKind::validation, "edc_error_profile grid mismatch");
    }
    for (const auto& c : targets) {
        if (c.size() != len) throw Error(ErrorKind::validation, "edc_error_profile grid mismatch");
    }

    EdcErrorProfile p;
    p.time_step_s = time_step_s;
    p.mae.resize(len);
    p.rmse.resize(len);
    p.std_abs_err.resize(len);
    const double n = static_cast<double>(preds.size());
    for (std::size_t t = 0; t < len; ++t) {
        double sum_abs = 0.0, sum_sq = 0.0;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            const double e = std::abs(preds[i][t] - targets[i][t]);
            sum_abs += e;
            sum_sq += e * e;
        }
        const double m = sum_abs / n;
        p.mae[t] = m;
        p.rmse[t] = std::sqrt(sum_sq / n);
        p.std_abs_err[t] = std::sqrt(std::max(0.0, sum_sq / n - m * m));
    }
    return p;
}

ExtractedParams extract_params(const EnergyDecayCurve& edc) {
    ExtractedParams out;
    const auto grab = [&edc](auto fn) -> std::optional<double> {
        try {
            return fn(edc);
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::numeric) return std::nullopt;
            throw;
        }
    };
    out.edt_s = grab([](const EnergyDecayCurve& c) { return edt(c); });
    out.t20_s = grab([](const EnergyDecayCurve& c) { return t20(c); });
    out.c50_db = grab([](const EnergyDecayCurve& c) { return c50(c); });
    return out;
}

ParamReport param_report(std::span<const std::vector<double>> preds,
                         std::span<const std::vector<double>> targets, double time_step_s) {
    if (preds.size() != targets.size() || preds.empty()) {
        throw Error(ErrorKind::validation, "param_report needs equal non-empty curve sets");
    }

    ParamReport report;
    report.n_rooms = static_cast<std::int64_t>(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
        EnergyDecayCurve pred_edc{preds[i], time_step_s};
        EnergyDecayCurve target_edc{targets[i], time_step_s};
        const ExtractedParams p = extract_params(pred_edc);
        const ExtractedParams t = extract_params(target_edc);

        const auto fold = [i](ParamStats& stats, const std::optional<double>& pv,
                              const std::optional<double>& tv) {
            if (pv && tv) {
                stats.preds.push_back(*pv);
                stats.targets.push_back(*tv);
            } else {
                stats.excluded.push_back(static_cast<std::int64_t>(i));
            }
        };
        fold(report.edt, p.edt_s, t.edt_s);
        fold(report.t20, p.t20_s, t.t20_s);
        fold(report.c50, p.c50_db, t.c50_db);
    }

    const auto finish = [](ParamStats& stats) {
        if (stats.targets.empty()) {
            stats.mae = stats.rmse = stats.r2 = std::numeric_limits<double>::quiet_NaN();
            return;
        }
        stats.mae = mae(stats.preds, stats.targets);
        stats.rmse = rmse(stats.preds, stats.targets);
        try {
            stats.r2 = r2(stats.preds, stats.targets);
        } catch (const Error&) {
            stats.r2 = std::numeric_limits<double>::quiet_NaN();
        }
    };
    finish(report.edt);
    finish(report.t20);
    finish(report.c50);
    return report;
}

EvaluationResult evaluate_test_split(const Dataset& data, const ModelCheckpoint& checkpoint,
                                     int threads) {
    if (checkpoint.edc_len != data.manifest.edc_len ||
        checkpoint.edc_window_s != data.manifest.edc_window_s) {
        throw Error(ErrorKind::validation,
                    fmt::format("checkpoint grid ({} points over {} s) does not match dataset "
                                "grid ({} points over {} s)",
                                checkpoint.edc_len, checkpoint.edc_window_s,
                                data.manifest.edc_len, data.manifest.edc_window_s));
    }
    const auto& test = data.splits.test;
    if (test.empty()) {
        throw Error(ErrorKind::validation, "dataset has an empty test split");
    }

    std::vector<FeatureVector> rows;
    std::vector<std::vector<double>> targets;
    rows.reserve(test.size());
    targets.reserve(test.size());
    for (std::int64_t idx : test) {
        rows.push_back(data.feature_row(idx));
        targets.push_back(data.target_row(idx));
    }
    const auto preds = predict_rows(checkpoint, rows, threads);

    const double dt = data.manifest.edc_window_s / (data.manifest.edc_len - 1);
    EvaluationResult result;
    result.n_test = static_cast<std::int64_t>(test.size());
    result.profile = edc_error_profile(preds, targets, dt);
    result.report = param_report(preds, targets, dt);
    return result;
}

namespace {

ordered_json stats_json(const ParamStats& s, const char* unit) {
    ordered_json j;
    j["mae"] = s.mae;
    j["rmse"] = s.rmse;
    j["r2"] = s.r2;
    j["unit"] = unit;
    j["n_included"] = s.targets.size();
    j["n_excluded"] = s.excluded.size();
    return j;
}

void write_scatter(const std::filesystem::path& path, const ParamStats& s) {
    std::string text = "target,predicted\n";
    for (std::size_t i = 0; i < s.targets.size(); ++i) {
        text += fmt::format("{:.9g},{:.9g}\n", s.targets[i], s.preds[i]);
    }
    write_text_file(path, text);
}

} // namespace

void export_report(const EvaluationResult& result, const std::string& out_dir) {
    const std::filesystem::path dir(out_dir);

    ordered_json report;
    report["n_test"] = result.n_test;
    report["edt"] = stats_json(result.report.edt, "s");
    report["t20"] = stats_json(result.report.t20, "s");
    report["c50"] = stats_json(result.report.c50, "dB");
    write_text_file(dir / "report.json", report.dump(2) + "\n");

    std::string profile_text = "time_s,mae,rmse,std_abs_err\n";
    for (std::size_t t = 0; t < result.profile.mae.size(); ++t) {
        profile_text += fmt::format("{:.9g},{:.9g},{:.9g},{:.9g}\n",
                                    static_cast<double>(t) * result.profile.time_step_s,
                                    result.profile.mae[t], result.profile.rmse[t],
                                    result.profile.std_abs_err[t]);
    }
    write_text_file(dir / "edc_error_profile.csv", profile_text);

    write_scatter(dir / "scatter_edt.csv", result.report.edt);
    write_scatter(dir / "scatter_t20.csv", result.report.t20);
    write_scatter(dir / "scatter_c50.csv", result.report.c50);

    ordered_json exclusions;
    exclusions["edt"] = {{"count", result.report.edt.excluded.size()},
                         {"rows", result.report.edt.excluded}};
    exclusions["t20"] = {{"count", result.report.t20.excluded.size()},
                         {"rows", result.report.t20.excluded}};
    exclusions["c50"] = {{"count", result.report.c50.excluded.size()},
                         {"rows", result.report.c50.excluded}};
    write_text_file(dir / "exclusions.json", exclusions.dump(2) + "\n");
}

} // namespace edcforge
