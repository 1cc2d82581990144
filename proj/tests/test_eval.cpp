#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <vector>

#include "edcforge/errors.hpp"
#include "edcforge/eval.hpp"
#include "edcforge/rng.hpp"

using namespace edcforge;

namespace {

std::vector<double> exp_curve(double t60, int len, double window_s) {
    std::vector<double> v(len);
    for (int k = 0; k < len; ++k) {
        const double t = window_s * k / (len - 1);
        v[k] = std::pow(10.0, -6.0 * t / t60);
    }
    return v;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

} // namespace

TEST_CASE("scalar metrics against hand values") {
    const std::vector<double> target{0.0, 1.0, 2.0};
    const std::vector<double> pred{0.0, 1.0, 3.0};
    CHECK(mae(pred, target) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(rmse(pred, target) == doctest::Approx(1.0 / std::sqrt(3.0)).epsilon(1e-15));
    // SS_res = 1, SS_tot = 2.
    CHECK(r2(pred, target) == doctest::Approx(0.5).epsilon(1e-15));

    CHECK(mae(target, target) == 0.0);
    CHECK(rmse(target, target) == 0.0);
    CHECK(r2(target, target) == doctest::Approx(1.0));

    // Predicting the mean scores zero.
    const std::vector<double> mean_pred{1.0, 1.0, 1.0};
    CHECK(r2(mean_pred, target) == doctest::Approx(0.0));
}

TEST_CASE("metric preconditions") {
    const std::vector<double> a{1.0, 2.0};
    const std::vector<double> b{1.0};
    CHECK_THROWS_AS(mae(a, b), Error);
    CHECK_THROWS_AS(rmse(a, b), Error);
    CHECK_THROWS_AS(r2(a, b), Error);

    const std::vector<double> constant{2.0, 2.0, 2.0};
    try {
        r2(constant, constant);
        FAIL("expected numeric error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::numeric);
    }
}

TEST_CASE("rmse dominates mae") {
    Rng rng(11);
    std::vector<double> pred(64), target(64);
    for (int i = 0; i < 64; ++i) {
        pred[i] = rng.uniform(0.0, 1.0);
        target[i] = rng.uniform(0.0, 1.0);
    }
    CHECK(rmse(pred, target) >= mae(pred, target));
}

TEST_CASE("edc error profile per time index") {
    // Two rooms, constant offsets 0.1 and 0.3 at every index.
    const std::vector<std::vector<double>> targets{{1.0, 0.5, 0.2}, {1.0, 0.4, 0.1}};
    const std::vector<std::vector<double>> preds{{1.1, 0.6, 0.3}, {1.3, 0.7, 0.4}};
    const auto profile = edc_error_profile(preds, targets, 0.25);
    REQUIRE(profile.mae.size() == 3);
    CHECK(profile.time_step_s == 0.25);
    for (int k = 0; k < 3; ++k) {
        CHECK(profile.mae[k] == doctest::Approx(0.2).epsilon(1e-12));
        CHECK(profile.rmse[k] ==
              doctest::Approx(std::sqrt((0.01 + 0.09) / 2.0)).epsilon(1e-12));
        CHECK(profile.std_abs_err[k] == doctest::Approx(0.1).epsilon(1e-12));
    }

    SUBCASE("single room has zero spread") {
        const auto one = edc_error_profile(
            std::vector<std::vector<double>>{preds[0]},
            std::vector<std::vector<double>>{targets[0]}, 0.25);
        for (int k = 0; k < 3; ++k) {
            CHECK(one.mae[k] == doctest::Approx(0.1).epsilon(1e-12));
            CHECK(one.std_abs_err[k] == doctest::Approx(0.0).epsilon(1e-12));
        }
    }

    SUBCASE("shape mismatches are rejected") {
        auto bad = preds;
        bad[1].pop_back();
        CHECK_THROWS_AS(edc_error_profile(bad, targets, 0.25), Error);
        CHECK_THROWS_AS(
            edc_error_profile(preds, std::vector<std::vector<double>>{targets[0]}, 0.25),
            Error);
    }
}

TEST_CASE("parameter extraction on clean exponentials") {
    EnergyDecayCurve edc;
    edc.values = exp_curve(0.5, 256, 2.0);
    edc.time_step_s = 2.0 / 255.0;
    const auto params = extract_params(edc);
    REQUIRE(params.edt_s.has_value());
    REQUIRE(params.t20_s.has_value());
    REQUIRE(params.c50_db.has_value());
    CHECK(*params.edt_s == doctest::Approx(0.5).epsilon(1e-3));
    CHECK(*params.t20_s == doctest::Approx(0.5).epsilon(1e-3));
    // The grid's linear interpolation at 50 ms biases C50 slightly against
    // the continuous-curve value; pin both the analytic target and an exact
    // interpolation oracle.
    const double c50_analytic = 10.0 * std::log10(std::pow(10.0, 6.0 * 0.05 / 0.5) - 1.0);
    CHECK(*params.c50_db == doctest::Approx(c50_analytic).epsilon(0.05));
    const double dt = edc.time_step_s;
    const int k = static_cast<int>(0.05 / dt);
    const double frac = (0.05 - k * dt) / dt;
    const double e = edc.values[k] + frac * (edc.values[k + 1] - edc.values[k]);
    const double c50_interp = 10.0 * std::log10((1.0 - e) / e);
    CHECK(*params.c50_db == doctest::Approx(c50_interp).epsilon(1e-9));
}

TEST_CASE("parameter extraction refuses unusable curves") {
    EnergyDecayCurve flat;
    flat.values.assign(256, 1.0);
    flat.time_step_s = 2.0 / 255.0;
    const auto params = extract_params(flat);
    CHECK_FALSE(params.edt_s.has_value());
    CHECK_FALSE(params.t20_s.has_value());
    // C50 of an all-ones curve is defined (zero late energy is not reached),
    // but the 50 ms split gives e = 1, so it is undefined too.
    CHECK_FALSE(params.c50_db.has_value());
}

TEST_CASE("param report on matching curve sets") {
    const int len = 256;
    const double window = 2.0;
    const double dt = window / (len - 1);
    std::vector<std::vector<double>> targets{exp_curve(0.4, len, window),
                                             exp_curve(0.8, len, window),
                                             exp_curve(0.6, len, window)};
    const auto preds = targets;
    const auto report = param_report(preds, targets, dt);
    CHECK(report.n_rooms == 3);
    CHECK(report.edt.excluded.empty());
    CHECK(report.t20.excluded.empty());
    CHECK(report.c50.excluded.empty());
    REQUIRE(report.edt.targets.size() == 3);
    CHECK(report.edt.mae == doctest::Approx(0.0));
    CHECK(report.t20.mae == doctest::Approx(0.0));
    CHECK(report.c50.mae == doctest::Approx(0.0));
    CHECK(report.edt.r2 == doctest::Approx(1.0));
    CHECK(report.t20.r2 == doctest::Approx(1.0));
    CHECK(report.c50.r2 == doctest::Approx(1.0));
    CHECK(report.edt.targets[0] == doctest::Approx(0.4).epsilon(1e-3));
    CHECK(report.edt.targets[1] == doctest::Approx(0.8).epsilon(1e-3));
}

TEST_CASE("rooms failing either derivation are excluded") {
    const int len = 256;
    const double window = 2.0;
    const double dt = window / (len - 1);
    std::vector<std::vector<double>> targets{exp_curve(0.4, len, window),
                                             exp_curve(0.8, len, window)};
    std::vector<std::vector<double>> preds = targets;
    preds[1].assign(len, 1.0); // prediction collapsed to a flat line

    const auto report = param_report(preds, targets, dt);
    CHECK(report.n_rooms == 2);
    REQUIRE(report.edt.excluded.size() == 1);
    CHECK(report.edt.excluded[0] == 1);
    CHECK(report.t20.excluded == std::vector<std::int64_t>{1});
    CHECK(report.c50.excluded == std::vector<std::int64_t>{1});
    CHECK(report.edt.targets.size() == 1);
    CHECK(report.edt.mae == doctest::Approx(0.0));
}

TEST_CASE("report export writes every file") {
    const int len = 256;
    const double window = 2.0;
    const double dt = window / (len - 1);
    std::vector<std::vector<double>> targets{exp_curve(0.4, len, window),
                                             exp_curve(0.8, len, window),
                                             exp_curve(0.5, len, window)};
    std::vector<std::vector<double>> preds = targets;
    for (auto& row : preds)
        for (auto& v : row) v = std::min(1.0, v * 1.02);
    preds[2].assign(len, 1.0);

    EvaluationResult result;
    result.profile = edc_error_profile(preds, targets, dt);
    result.report = param_report(preds, targets, dt);
    result.n_test = 3;

    const auto dir = std::filesystem::temp_directory_path() / "edcforge_eval_export";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    export_report(result, dir.string());

    for (const char* name : {"report.json", "edc_error_profile.csv", "scatter_edt.csv",
                             "scatter_t20.csv", "scatter_c50.csv", "exclusions.json"}) {
        CHECK(std::filesystem::exists(dir / name));
    }

    const auto report = nlohmann::json::parse(slurp(dir / "report.json"));
    CHECK(report.at("n_test").get<int>() == 3);
    CHECK(report.at("edt").at("n_included").get<int>() == 2);
    CHECK(report.at("edt").at("n_excluded").get<int>() == 1);
    CHECK(report.at("edt").at("mae").get<double>() ==
          doctest::Approx(result.report.edt.mae).epsilon(1e-9));
    CHECK(report.at("t20").at("unit").get<std::string>() == "s");
    CHECK(report.at("c50").at("unit").get<std::string>() == "dB");

    const auto exclusions = nlohmann::json::parse(slurp(dir / "exclusions.json"));
    CHECK(exclusions.at("edt").at("count").get<int>() == 1);

    // One header plus one row per included room.
    const auto scatter = slurp(dir / "scatter_edt.csv");
    CHECK(std::count(scatter.begin(), scatter.end(), '\n') == 3);
    CHECK(scatter.rfind("target,predicted", 0) == 0);

    const auto profile_csv = slurp(dir / "edc_error_profile.csv");
    CHECK(profile_csv.rfind("time_s,mae,rmse,std_abs_err", 0) == 0);
    CHECK(std::count(profile_csv.begin(), profile_csv.end(), '\n') == len + 1);

    std::filesystem::remove_all(dir);
}

TEST_CASE("grid mismatch between checkpoint and dataset is rejected") {
    Dataset ds;
    ds.manifest.n_rooms = 4;
    ds.manifest.edc_len = 32;
    ds.manifest.edc_window_s = 2.0;
    for (int i = 0; i < 4; ++i) {
        for (int k = 0; k < kNumFeatures; ++k) ds.features.push_back(0.5f);
        for (int k = 0; k < 32; ++k) ds.targets.push_back(1.0f);
        ds.t60.push_back(0.5f);
    }
    ds.splits.test = {0, 1, 2, 3};

    ModelCheckpoint ckpt;
    ckpt.params = init_params(ModelDims{.input = 16, .hidden = 4, .dense = 8, .output = 16}, 1);
    ckpt.edc_len = 16;
    ckpt.edc_window_s = 2.0;
    CHECK_THROWS_AS(evaluate_test_split(ds, ckpt), Error);

    ckpt.params = init_params(ModelDims{.input = 16, .hidden = 4, .dense = 8, .output = 32}, 1);
    ckpt.edc_len = 32;
    ckpt.edc_window_s = 1.0;
    CHECK_THROWS_AS(evaluate_test_split(ds, ckpt), Error);

    Dataset empty = ds;
    empty.splits.test.clear();
    ckpt.edc_window_s = 2.0;
    CHECK_THROWS_AS(evaluate_test_split(empty, ckpt), Error);
}
