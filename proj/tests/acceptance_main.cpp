// Acceptance gate for the full pipeline. Each criterion prints one
// [PASS]/[FAIL] line; the exit code is the number of failures.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <tuple>
#include <vector>

#include <fmt/core.h>

#include "edcforge/dataset.hpp"
#include "edcforge/decay.hpp"
#include "edcforge/errors.hpp"
#include "edcforge/eval.hpp"
#include "edcforge/io_util.hpp"
#include "edcforge/ism.hpp"
#include "edcforge/nn.hpp"
#include "edcforge/rng.hpp"

using namespace edcforge;
namespace fs = std::filesystem;

namespace {

struct Result {
    bool pass = false;
    std::string detail;
};

Result pass(std::string detail) { return {true, std::move(detail)}; }
Result fail(std::string detail) { return {false, std::move(detail)}; }

// ---------------------------------------------------------------------------
// Criterion 2: image-source enumeration vs a brute-force lattice scan.

double mirror_coord(int i, double span, double src) {
    if (i % 2 == 0) return i * span + src;
    return i * span + (span - src);
}

// Count low/high wall reflections by walking the mirror planes one at a time.
std::pair<int, int> plane_crossings(int i) {
    int low = 0, high = 0;
    if (i > 0) {
        for (int k = 1; k <= i; ++k) (k % 2 == 0 ? low : high) += 1;
    } else {
        for (int k = 0; k > i; --k) (k % 2 == 0 ? low : high) += 1;
    }
    return {low, high};
}

std::vector<ImageSource> scan_images(const RoomConfig& cfg, int max_order) {
    std::vector<ImageSource> out;
    for (int i = -max_order; i <= max_order; ++i) {
        for (int j = -max_order; j <= max_order; ++j) {
            for (int k = -max_order; k <= max_order; ++k) {
                const int order = std::abs(i) + std::abs(j) + std::abs(k);
                if (order > max_order) continue;
                ImageSource img;
                img.index = {i, j, k};
                img.order = order;
                img.position = {mirror_coord(i, cfg.length_m, cfg.source.x),
                                mirror_coord(j, cfg.width_m, cfg.source.y),
                                mirror_coord(k, cfg.height_m, cfg.source.z)};
                const auto [xl, xh] = plane_crossings(i);
                const auto [yl, yh] = plane_crossings(j);
                const auto [zl, zh] = plane_crossings(k);
                img.reflection_counts = {xl, xh, yl, yh, zl, zh};
                out.push_back(img);
            }
        }
    }
    std::sort(out.begin(), out.end(), [](const ImageSource& a, const ImageSource& b) {
        return std::tuple(a.order, a.index[0], a.index[1], a.index[2]) <
               std::tuple(b.order, b.index[0], b.index[1], b.index[2]);
    });
    return out;
}

Result criterion2() {
    const auto configs = sample_configs(50, 7);
    std::int64_t images_checked = 0;
    for (std::size_t c = 0; c < configs.size(); ++c) {
        for (int m = 0; m <= 4; ++m) {
            const auto got = enumerate_images(configs[c], m);
            const auto want = scan_images(configs[c], m);
            if (got.size() != want.size()) {
                return fail(fmt::format("config {} order {}: {} images, scan found {}", c, m,
                                        got.size(), want.size()));
            }
            for (std::size_t s = 0; s < got.size(); ++s) {
                const auto& g = got[s];
                const auto& w = want[s];
                const bool same = g.index == w.index && g.order == w.order &&
                                  g.reflection_counts == w.reflection_counts &&
                                  g.position.x == w.position.x && g.position.y == w.position.y &&
                                  g.position.z == w.position.z;
                if (!same) {
                    return fail(fmt::format("config {} order {} image {} differs from scan", c,
                                            m, s));
                }
                ++images_checked;
            }
        }
    }
    return pass(fmt::format(
        "enumeration matches brute-force scan exactly on 50 configs, orders 0..4 ({} images)",
        images_checked));
}

// ---------------------------------------------------------------------------
// Criterion 3: decay analysis on analytic exponentials.

EnergyDecayCurve analytic_edc(double t60, int len, double window_s) {
    EnergyDecayCurve edc;
    edc.time_step_s = window_s / (len - 1);
    edc.values.resize(len);
    for (int k = 0; k < len; ++k) {
        edc.values[k] = std::pow(10.0, -6.0 * (edc.time_step_s * k) / t60);
    }
    return edc;
}

Result criterion3() {
    double worst_rt = 0.0, worst_c50 = 0.0;
    for (double t60 : {0.3, 0.5, 1.0}) {
        const auto edc = analytic_edc(t60, 4001, t60);
        for (double est : {edt(edc), t20(edc), t30(edc)}) {
            worst_rt = std::max(worst_rt, std::abs(est - t60) / t60);
        }
        const double c50_ref = 10.0 * std::log10(std::pow(10.0, 0.3 / t60) - 1.0);
        worst_c50 = std::max(worst_c50, std::abs(c50(edc) - c50_ref));
    }
    if (worst_rt > 0.01 || worst_c50 > 0.05) {
        return fail(fmt::format("max RT error {:.4f}% (limit 1%), max C50 error {:.4f} dB "
                                "(limit 0.05)",
                                100.0 * worst_rt, worst_c50));
    }
    return pass(fmt::format("EDT/T20/T30 within {:.4f}% of T60, C50 within {:.4f} dB",
                            100.0 * worst_rt, worst_c50));
}

// ---------------------------------------------------------------------------
// Criterion 4: closed-form baselines plus a full simulation sanity band.

RoomConfig baseline_room() {
    RoomConfig cfg;
    cfg.length_m = 5.0;
    cfg.width_m = 4.0;
    cfg.height_m = 3.0;
    cfg.source = {1.5, 1.0, 1.2};
    cfg.receiver = {3.5, 2.8, 1.6};
    cfg.absorption.fill(0.3);
    return cfg;
}

Result criterion4() {
    const RoomConfig cfg = baseline_room();
    const double v = 5.0 * 4.0 * 3.0;
    const double s = 2.0 * (5.0 * 4.0 + 5.0 * 3.0 + 4.0 * 3.0);
    const double sabine_ref = 0.161 * v / (0.3 * s);
    const double eyring_ref = 0.161 * v / (-s * std::log(1.0 - 0.3));

    const double sab = sabine_t60(cfg);
    const double eyr = eyring_t60(cfg);
    if (std::abs(sab - sabine_ref) > 1e-3 || std::abs(eyr - eyring_ref) > 1e-3) {
        return fail(fmt::format("Sabine {:.6f} vs {:.6f}, Eyring {:.6f} vs {:.6f}", sab,
                                sabine_ref, eyr, eyring_ref));
    }

    const Rir rir = simulate_rir(cfg);
    const double sim_t60 = t60_from_rir(rir);
    const double rel = (sim_t60 - eyr) / eyr;
    if (std::abs(rel) > 0.25) {
        return fail(fmt::format("simulated T60 {:.4f} s is {:+.1f}% from Eyring {:.4f} s "
                                "(limit 25%)",
                                sim_t60, 100.0 * rel, eyr));
    }
    return pass(fmt::format("Sabine {:.3f} s, Eyring {:.3f} s match formulas; simulated T60 "
                            "{:.3f} s is {:+.1f}% from Eyring",
                            sab, eyr, sim_t60, 100.0 * rel));
}

// ---------------------------------------------------------------------------
// Criterion 5: full-parameter gradient check on a down-sized model.

Result criterion5() {
    ModelDims dims;
    dims.input = kNumFeatures;
    dims.hidden = 8;
    dims.dense = 16;
    dims.output = 8;
    ModelParams params = init_params(dims, 5);

    Rng rng(55);
    const double step = 1e-5;
    double worst = 0.0;
    for (int pair = 0; pair < 20; ++pair) {
        std::vector<double> x(dims.input), target(dims.output);
        for (auto& v : x) v = rng.uniform(0.0, 1.0);
        for (auto& v : target) v = rng.uniform(0.0, 1.0);

        std::vector<double> grad(param_count(dims), 0.0);
        accumulate_sample_gradient(params, x, target, RunMode::eval, 0, grad);

        for (std::size_t i = 0; i < params.theta.size(); ++i) {
            const double keep = params.theta[i];
            params.theta[i] = keep + step;
            const double up = mse_loss(forward(params, x, RunMode::eval, 0), target);
            params.theta[i] = keep - step;
            const double down = mse_loss(forward(params, x, RunMode::eval, 0), target);
            params.theta[i] = keep;
            const double fd = (up - down) / (2.0 * step);
            const double rel =
                std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-10});
            worst = std::max(worst, rel);
        }
    }
    if (worst > 1e-4) {
        return fail(fmt::format("max relative gradient error {:.3e} (limit 1e-4)", worst));
    }
    return pass(fmt::format("{} parameters x 20 samples, max relative error {:.3e}",
                            param_count(dims), worst));
}

// ---------------------------------------------------------------------------
// Criterion 6: Schroeder EDC properties over random RIRs.

Result criterion6() {
    Rng rng(66);
    const std::array<double, 4> scales{1e-6, 1e-3, 1e3, 1e6};
    double worst_dev = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int len = 400 + static_cast<int>(rng.below(3601));
        Rir rir;
        rir.samples.resize(len);
        for (int i = 0; i < len; ++i) {
            rir.samples[i] = rng.uniform(-1.0, 1.0) * std::exp(-3.0 * i / len);
        }
        const auto edc = schroeder_edc(rir);
        if (edc.values.front() != 1.0) {
            return fail(fmt::format("trial {}: EDC starts at {:.17g}", trial,
                                    edc.values.front()));
        }
        for (std::size_t k = 0; k < edc.values.size(); ++k) {
            if (edc.values[k] < 0.0 || edc.values[k] > 1.0) {
                return fail(fmt::format("trial {}: EDC[{}] = {:.17g} outside [0, 1]", trial, k,
                                        edc.values[k]));
            }
            if (k > 0 && edc.values[k] > edc.values[k - 1]) {
                return fail(fmt::format("trial {}: EDC increases at index {}", trial, k));
            }
        }
        Rir scaled = rir;
        const double scale = scales[trial % scales.size()];
        for (auto& v : scaled.samples) v *= scale;
        const auto edc2 = schroeder_edc(scaled);
        for (std::size_t k = 0; k < edc.values.size(); ++k) {
            worst_dev = std::max(worst_dev, std::abs(edc2.values[k] - edc.values[k]));
        }
    }
    if (worst_dev > 1e-12) {
        return fail(fmt::format("scale invariance deviation {:.3e} (limit 1e-12)", worst_dev));
    }
    return pass(fmt::format("1000 RIRs: in [0,1], non-increasing, start at 1; max scale "
                            "deviation {:.2e}",
                            worst_dev));
}

// ---------------------------------------------------------------------------
// Criterion 7: determinism of dataset build, training, and reporting.

bool same_file(const fs::path& a, const fs::path& b) {
    return read_file_bytes(a.string()) == read_file_bytes(b.string());
}

Result criterion7(const fs::path& work) {
    DatasetManifest manifest;
    manifest.seed = 11;
    manifest.n_rooms = 48;
    manifest.sim.max_order = 12;
    manifest.sim.duration_s = 0.8;

    const auto ds_a = build_dataset(manifest, 1);
    const auto ds_b = build_dataset(manifest, 1);
    const auto ds_par = build_dataset(manifest, 4);

    const fs::path dir_a = work / "det_a", dir_b = work / "det_b", dir_p = work / "det_par";
    for (const auto& d : {dir_a, dir_b, dir_p}) fs::create_directories(d);
    save_dataset(ds_a, dir_a.string());
    save_dataset(ds_b, dir_b.string());
    save_dataset(ds_par, dir_p.string());

    const std::array<const char*, 7> names{"manifest.json", "features.f32", "targets.f32",
                                           "t60.f32",       "splits.json",  "scaler.json",
                                           "t60_histogram.csv"};
    for (const char* name : names) {
        if (!same_file(dir_a / name, dir_b / name)) {
            return fail(fmt::format("repeated build differs in {}", name));
        }
        if (!same_file(dir_a / name, dir_p / name)) {
            return fail(fmt::format("parallel build differs in {}", name));
        }
    }

    TrainConfig cfg;
    cfg.max_epochs = 12;
    cfg.patience = 12;
    cfg.batch_size = 8;
    cfg.seed = 11;
    cfg.dims.hidden = 16;
    cfg.dims.dense = 64;
    const auto ck_a = train(ds_a, ds_a.splits.train, ds_a.splits.val, cfg);
    const auto ck_b = train(ds_b, ds_b.splits.train, ds_b.splits.val, cfg);
    if (ck_a.history.size() != ck_b.history.size()) {
        return fail("training histories have different lengths");
    }
    for (std::size_t i = 0; i < ck_a.history.size(); ++i) {
        if (ck_a.history[i].train_loss != ck_b.history[i].train_loss ||
            ck_a.history[i].val_loss != ck_b.history[i].val_loss) {
            return fail(fmt::format("loss history differs at epoch {}", i));
        }
    }
    if (ck_a.params.theta != ck_b.params.theta) {
        return fail("trained parameters differ between identical runs");
    }

    const fs::path rep_a = work / "rep_a", rep_b = work / "rep_b";
    fs::create_directories(rep_a);
    fs::create_directories(rep_b);
    export_report(evaluate_test_split(ds_a, ck_a), rep_a.string());
    export_report(evaluate_test_split(ds_b, ck_b), rep_b.string());
    if (!same_file(rep_a / "report.json", rep_b / "report.json")) {
        return fail("report.json differs between identical runs");
    }
    return pass("dataset files, loss history, and report.json bit-identical across reruns; "
                "4-worker build matches serial byte for byte");
}

// ---------------------------------------------------------------------------
// Criterion 8: parameter agreement between the 256-point grid and the
// full-rate EDC.

Result criterion8() {
    const auto configs = sample_configs(100, 8);
    SimParams sim;
    int eligible = 0, skipped = 0;
    int bad_edt = 0, bad_t20 = 0, bad_c50 = 0;
    double worst_edt = 0.0, worst_t20 = 0.0, worst_c50 = 0.0;
    for (std::size_t i = 0; i < configs.size(); ++i) {
        const auto full = schroeder_edc(simulate_rir(configs[i], sim));
        const double t60 = t60_from_edc(full);
        if (t60 < 0.2) {
            ++skipped;
            continue;
        }
        ++eligible;
        const auto grid = resample_edc(full);
        try {
            const double edt_rel = std::abs(edt(grid) - edt(full)) / edt(full);
            const double t20_rel = std::abs(t20(grid) - t20(full)) / t20(full);
            const double c50_abs = std::abs(c50(grid) - c50(full));
            worst_edt = std::max(worst_edt, edt_rel);
            worst_t20 = std::max(worst_t20, t20_rel);
            worst_c50 = std::max(worst_c50, c50_abs);
            if (edt_rel > 0.05) ++bad_edt;
            if (t20_rel > 0.05) ++bad_t20;
            if (c50_abs > 0.5) ++bad_c50;
        } catch (const Error& e) {
            return fail(fmt::format("room {} (T60 {:.3f} s): parameter extraction failed: {}",
                                    i, t60, e.what()));
        }
    }
    if (eligible == 0) return fail("no sampled room reached T60 >= 0.2 s");
    const auto detail = fmt::format(
        "{} rooms with T60 >= 0.2 s ({} below): EDT worst {:.2f}% ({} rooms > 5%), "
        "T20 worst {:.2f}% ({} rooms > 5%), C50 worst {:.3f} dB ({} rooms > 0.5 dB)",
        eligible, skipped, 100.0 * worst_edt, bad_edt, 100.0 * worst_t20, bad_t20, worst_c50,
        bad_c50);
    if (bad_edt + bad_t20 + bad_c50 > 0) return fail(detail);
    return pass(detail);
}

// ---------------------------------------------------------------------------
// Criterion 1: end-to-end dataset, training, evaluation.

Result criterion1(const fs::path& work) {
    DatasetManifest manifest;
    manifest.seed = 42;
    manifest.n_rooms = 1200;

    fmt::print(stderr, "criterion 1: building 1200-room dataset...\n");
    const auto ds = build_dataset(manifest);
    const fs::path data_dir = work / "dataset";
    fs::create_directories(data_dir);
    save_dataset(ds, data_dir.string());

    TrainConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.batch_size = 64;
    cfg.max_epochs = 500;
    cfg.patience = 10;
    cfg.seed = 42;
    cfg.dims.hidden = 128;
    cfg.dims.dense = 2048;

    fmt::print(stderr, "criterion 1: training (hidden 128, dense 2048, lr 1e-3)...\n");
    const auto ckpt = train(ds, ds.splits.train, ds.splits.val, cfg, [](const EpochStats& s) {
        if (s.epoch % 20 == 0) {
            fmt::print(stderr, "  epoch {:3d}  train {:.6f}  val {:.6f}\n", s.epoch,
                       s.train_loss, s.val_loss);
        }
    });
    fmt::print(stderr, "criterion 1: stopped after {} epochs, best epoch {}\n",
               ckpt.history.size(), ckpt.best_epoch);
    save_checkpoint(ckpt, (work / "model.edcn").string());

    const auto result = evaluate_test_split(ds, ckpt);
    const fs::path report_dir = work / "evaluation";
    fs::create_directories(report_dir);
    export_report(result, report_dir.string());

    const auto& r = result.report;
    const std::string summary = fmt::format(
        "test rooms {}: EDT MAE {:.4f} s R2 {:.3f} ({} excl), T20 MAE {:.4f} s R2 {:.3f} "
        "({} excl), C50 MAE {:.3f} dB R2 {:.3f} ({} excl)",
        result.n_test, r.edt.mae, r.edt.r2, r.edt.excluded.size(), r.t20.mae, r.t20.r2,
        r.t20.excluded.size(), r.c50.mae, r.c50.r2, r.c50.excluded.size());

    const bool ok = r.edt.mae <= 0.05 && r.edt.r2 >= 0.90 && r.t20.mae <= 0.06 &&
                    r.t20.r2 >= 0.90 && r.c50.r2 >= 0.70;
    if (!ok) {
        return fail(summary +
                    " (gates: EDT MAE <= 0.05 R2 >= 0.90, T20 MAE <= 0.06 R2 >= 0.90, "
                    "C50 R2 >= 0.70)");
    }
    return pass(summary);
}

} // namespace

int main() {
    const fs::path work = fs::current_path() / "acceptance_work";
    std::error_code ec;
    fs::remove_all(work, ec);
    fs::create_directories(work);

    std::array<Result, 9> results;
    const auto run = [&](int id, auto&& fn) {
        fmt::print(stderr, "running criterion {}...\n", id);
        try {
            results[id] = fn();
        } catch (const std::exception& e) {
            results[id] = fail(fmt::format("unexpected error: {}", e.what()));
        }
    };

    run(2, [] { return criterion2(); });
    run(3, [] { return criterion3(); });
    run(4, [] { return criterion4(); });
    run(5, [] { return criterion5(); });
    run(6, [] { return criterion6(); });
    run(7, [&] { return criterion7(work); });
    run(8, [] { return criterion8(); });
    run(1, [&] { return criterion1(work); });

    int failures = 0;
    for (int id = 1; id <= 8; ++id) {
        const auto& r = results[id];
        fmt::print("[{}] criterion {}: {}\n", r.pass ? "PASS" : "FAIL", id, r.detail);
        if (!r.pass) ++failures;
    }
    return failures;
}
