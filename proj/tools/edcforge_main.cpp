#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "edcforge/dataset.hpp"
#include "edcforge/decay.hpp"
#include "edcforge/errors.hpp"
#include "edcforge/eval.hpp"
#include "edcforge/io_util.hpp"
#include "edcforge/ism.hpp"
#include "edcforge/nn.hpp"
#include "edcforge/rir.hpp"
#include "edcforge/room.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct GlobalOpts {
    std::uint64_t seed = 0;
    int threads = 0;
    std::string out_dir;
    bool overwrite = false;
};

fs::path prepare_out_dir(const GlobalOpts& g) {
    if (g.out_dir.empty()) {
        throw edcforge::Error(edcforge::ErrorKind::usage, "--out-dir is required");
    }
    const fs::path dir(g.out_dir);
    if (fs::exists(dir)) {
        if (!fs::is_directory(dir)) {
            throw edcforge::Error(edcforge::ErrorKind::usage,
                                  fmt::format("{} exists and is not a directory", g.out_dir));
        }
        if (!fs::is_empty(dir) && !g.overwrite) {
            throw edcforge::Error(
                edcforge::ErrorKind::usage,
                fmt::format("output directory {} is not empty (pass --overwrite to reuse it)",
                            g.out_dir));
        }
    } else {
        fs::create_directories(dir);
    }
    return dir;
}

void echo_run_config(const fs::path& dir, const std::string& command, const GlobalOpts& g,
                     ordered_json options) {
    ordered_json j;
    j["command"] = command;
    j["seed"] = g.seed;
    j["threads"] = g.threads;
    j["out_dir"] = g.out_dir;
    j["overwrite"] = g.overwrite;
    j["options"] = std::move(options);
    edcforge::write_text_file(dir / "run_config.json", j.dump(2) + "\n");
}

ordered_json opt_json(const std::optional<double>& v) {
    if (v) return ordered_json(*v);
    return ordered_json(nullptr);
}

struct GenerateOpts {
    std::int64_t n = 1200;
    int max_order = 30;
    double sample_rate = edcforge::kDefaultSampleRate;
    double duration = 0.0;
};

int cmd_generate(const GlobalOpts& g, const GenerateOpts& o) {
    const fs::path dir = prepare_out_dir(g);

    edcforge::DatasetManifest manifest;
    manifest.seed = g.seed;
    manifest.n_rooms = o.n;
    manifest.sim.max_order = o.max_order;
    manifest.sim.sample_rate_hz = o.sample_rate;
    manifest.sim.duration_s = o.duration;

    const auto dataset = edcforge::build_dataset(manifest, g.threads);
    edcforge::save_dataset(dataset, dir.string());
    echo_run_config(dir, "generate", g,
                    {{"n", o.n},
                     {"max_order", o.max_order},
                     {"sample_rate_hz", o.sample_rate},
                     {"duration_s", o.duration}});

    fmt::print("generated {} rooms into {} (train {}, val {}, test {})\n", dataset.size(),
               dir.string(), dataset.splits.train.size(), dataset.splits.val.size(),
               dataset.splits.test.size());
    return 0;
}

struct TrainOpts {
    std::string dataset;
    double lr = 1e-3;
    int batch_size = 64;
    int max_epochs = 500;
    int patience = 10;
    int hidden = 128;
    int dense = 2048;
    bool scale_targets = false;
    bool quiet = false;
};

int cmd_train(const GlobalOpts& g, const TrainOpts& o) {
    const fs::path dir = prepare_out_dir(g);
    const auto dataset = edcforge::load_dataset(o.dataset);

    edcforge::TrainConfig cfg;
    cfg.learning_rate = o.lr;
    cfg.batch_size = o.batch_size;
    cfg.max_epochs = o.max_epochs;
    cfg.patience = o.patience;
    cfg.seed = g.seed;
    cfg.scale_targets = o.scale_targets;
    cfg.dims.hidden = o.hidden;
    cfg.dims.dense = o.dense;
    cfg.threads = g.threads;

    const auto on_epoch = [&o](const edcforge::EpochStats& s) {
        if (!o.quiet) {
            fmt::print("epoch {:4d}  train {:.6e}  val {:.6e}\n", s.epoch, s.train_loss,
                       s.val_loss);
            std::fflush(stdout);
        }
    };
    const auto ckpt =
        edcforge::train(dataset, dataset.splits.train, dataset.splits.val, cfg, on_epoch);

    edcforge::save_checkpoint(ckpt, (dir / "model.edcn").string());
    std::string history = "epoch,train_loss,val_loss\n";
    for (const auto& e : ckpt.history) {
        history += fmt::format("{},{:.9e},{:.9e}\n", e.epoch, e.train_loss, e.val_loss);
    }
    edcforge::write_text_file(dir / "loss_history.csv", history);
    echo_run_config(dir, "train", g,
                    {{"dataset", o.dataset},
                     {"learning_rate", o.lr},
                     {"batch_size", o.batch_size},
                     {"max_epochs", o.max_epochs},
                     {"patience", o.patience},
                     {"hidden", o.hidden},
                     {"dense", o.dense},
                     {"scale_targets", o.scale_targets}});

    fmt::print("trained {} epochs, best epoch {} (val loss {:.6e}); checkpoint at {}\n",
               ckpt.history.size(), ckpt.best_epoch,
               ckpt.history.empty() ? 0.0 : ckpt.history[ckpt.best_epoch].val_loss,
               (dir / "model.edcn").string());
    return 0;
}

struct EvaluateOpts {
    std::string dataset;
    std::string checkpoint;
};

int cmd_evaluate(const GlobalOpts& g, const EvaluateOpts& o) {
    const fs::path dir = prepare_out_dir(g);
    const auto dataset = edcforge::load_dataset(o.dataset);
    const auto ckpt = edcforge::load_checkpoint(o.checkpoint);

    const auto result = edcforge::evaluate_test_split(dataset, ckpt, g.threads);
    edcforge::export_report(result, dir.string());
    echo_run_config(dir, "evaluate", g,
                    {{"dataset", o.dataset}, {"checkpoint", o.checkpoint}});

    const auto line = [](const char* name, const edcforge::ParamStats& s, const char* unit) {
        fmt::print("{}: mae {:.4f} {u}, rmse {:.4f} {u}, r2 {:.4f} ({} rooms, {} excluded)\n",
                   name, s.mae, s.rmse, s.r2, s.targets.size(), s.excluded.size(),
                   fmt::arg("u", unit));
    };
    fmt::print("evaluated {} test rooms\n", result.n_test);
    line("edt", result.report.edt, "s");
    line("t20", result.report.t20, "s");
    line("c50", result.report.c50, "dB");
    return 0;
}

struct PredictOpts {
    std::string checkpoint;
    std::string room;
};

int cmd_predict(const GlobalOpts& g, const PredictOpts& o) {
    const fs::path dir = prepare_out_dir(g);
    const auto ckpt = edcforge::load_checkpoint(o.checkpoint);
    const auto room = edcforge::load_room_file(o.room);

    const auto edc = edcforge::predict(ckpt, room);
    edcforge::write_edc_csv(edc, (dir / "edc.csv").string());
    const auto params = edcforge::extract_params(edc);

    ordered_json summary;
    summary["edt_s"] = opt_json(params.edt_s);
    summary["t20_s"] = opt_json(params.t20_s);
    summary["c50_db"] = opt_json(params.c50_db);
    summary["sabine_t60_s"] = edcforge::sabine_t60(room);
    summary["eyring_t60_s"] = edcforge::eyring_t60(room);
    summary["edc_points"] = edc.values.size();
    summary["edc_window_s"] = edc.time_step_s * (static_cast<double>(edc.values.size()) - 1.0);
    edcforge::write_text_file(dir / "summary.json", summary.dump(2) + "\n");
    echo_run_config(dir, "predict", g, {{"checkpoint", o.checkpoint}, {"room", o.room}});

    fmt::print("predicted EDC ({} points) for {}; summary at {}\n", edc.values.size(), o.room,
               (dir / "summary.json").string());
    return 0;
}

struct SimulateOpts {
    std::string room;
    int max_order = 30;
    double sample_rate = edcforge::kDefaultSampleRate;
    double duration = 0.0;
};

int cmd_simulate(const GlobalOpts& g, const SimulateOpts& o) {
    const fs::path dir = prepare_out_dir(g);
    const auto room = edcforge::load_room_file(o.room);

    edcforge::SimParams params;
    params.max_order = o.max_order;
    params.sample_rate_hz = o.sample_rate;
    params.duration_s = o.duration;
    const auto rir = edcforge::simulate_rir(room, params);

    edcforge::save_rir(rir, (dir / "rir.bin").string());
    edcforge::save_rir_wav(rir, (dir / "rir.wav").string());
    const auto edc_full = edcforge::schroeder_edc(rir);
    const auto edc_grid = edcforge::resample_edc(edc_full);
    edcforge::write_edc_csv(edc_full, (dir / "edc_full.csv").string());
    edcforge::write_edc_csv(edc_grid, (dir / "edc_grid.csv").string());

    const auto params_full = edcforge::extract_params(edc_full);
    std::optional<double> t30_s, t60_s;
    try {
        t30_s = edcforge::t30(edc_full);
    } catch (const edcforge::Error& e) {
        if (e.kind() != edcforge::ErrorKind::numeric) throw;
    }
    try {
        t60_s = edcforge::t60_from_edc(edc_full);
    } catch (const edcforge::Error& e) {
        if (e.kind() != edcforge::ErrorKind::numeric) throw;
    }

    ordered_json summary;
    summary["samples"] = rir.samples.size();
    summary["sample_rate_hz"] = rir.sample_rate_hz;
    summary["duration_s"] = static_cast<double>(rir.samples.size()) / rir.sample_rate_hz;
    summary["edt_s"] = opt_json(params_full.edt_s);
    summary["t20_s"] = opt_json(params_full.t20_s);
    summary["t30_s"] = opt_json(t30_s);
    summary["t60_s"] = opt_json(t60_s);
    summary["c50_db"] = opt_json(params_full.c50_db);
    summary["sabine_t60_s"] = edcforge::sabine_t60(room);
    summary["eyring_t60_s"] = edcforge::eyring_t60(room);
    edcforge::write_text_file(dir / "summary.json", summary.dump(2) + "\n");
    echo_run_config(dir, "simulate", g,
                    {{"room", o.room},
                     {"max_order", o.max_order},
                     {"sample_rate_hz", o.sample_rate},
                     {"duration_s", o.duration}});

    fmt::print("simulated {} samples at {} Hz for {}; outputs in {}\n", rir.samples.size(),
               rir.sample_rate_hz, o.room, dir.string());
    return 0;
}

std::string single_line(std::string msg) {
    for (char& c : msg) {
        if (c == '\n' || c == '\r') c = ' ';
    }
    return msg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Room-acoustic EDC pipeline: simulate, generate, train, evaluate, predict"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOpts g;
    app.add_option("--seed", g.seed, "Root RNG seed")->capture_default_str();
    app.add_option("--threads", g.threads,
                   "Worker threads (0 = EDCFORGE_THREADS or all cores)")
        ->capture_default_str();
    app.add_option("--out-dir", g.out_dir, "Directory for all outputs");
    app.add_flag("--overwrite", g.overwrite, "Allow writing into a non-empty output directory");
    app.set_config("--config", "", "Read option defaults from an INI/TOML file");

    GenerateOpts gen;
    auto* c_gen = app.add_subcommand("generate", "Sample rooms and build a dataset directory");
    c_gen->add_option("--n", gen.n, "Number of rooms")->capture_default_str();
    c_gen->add_option("--max-order", gen.max_order, "Image source reflection order")
        ->capture_default_str();
    c_gen->add_option("--sample-rate", gen.sample_rate, "Simulation sample rate in Hz")
        ->capture_default_str();
    c_gen->add_option("--duration", gen.duration, "RIR length in seconds (0 = automatic)")
        ->capture_default_str();

    TrainOpts tr;
    auto* c_tr = app.add_subcommand("train", "Train the EDC model on a dataset");
    c_tr->add_option("--dataset", tr.dataset, "Dataset directory")->required();
    c_tr->add_option("--lr", tr.lr, "Adam learning rate")->capture_default_str();
    c_tr->add_option("--batch-size", tr.batch_size, "Minibatch size")->capture_default_str();
    c_tr->add_option("--max-epochs", tr.max_epochs, "Epoch cap")->capture_default_str();
    c_tr->add_option("--patience", tr.patience, "Early-stopping patience")->capture_default_str();
    c_tr->add_option("--hidden", tr.hidden, "LSTM hidden units")->capture_default_str();
    c_tr->add_option("--dense", tr.dense, "Dense layer units")->capture_default_str();
    c_tr->add_flag("--scale-targets", tr.scale_targets, "Min-max scale EDC targets for training");
    c_tr->add_flag("--quiet", tr.quiet, "Suppress per-epoch progress lines");

    EvaluateOpts ev;
    auto* c_ev = app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset's test split");
    c_ev->add_option("--dataset", ev.dataset, "Dataset directory")->required();
    c_ev->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();

    PredictOpts pr;
    auto* c_pr = app.add_subcommand("predict", "Predict the EDC for one room");
    c_pr->add_option("--checkpoint", pr.checkpoint, "Checkpoint file")->required();
    c_pr->add_option("--room", pr.room, "Room JSON file")->required();

    SimulateOpts sim;
    auto* c_sim = app.add_subcommand("simulate", "Simulate the ground-truth RIR for one room");
    c_sim->add_option("--room", sim.room, "Room JSON file")->required();
    c_sim->add_option("--max-order", sim.max_order, "Image source reflection order")
        ->capture_default_str();
    c_sim->add_option("--sample-rate", sim.sample_rate, "Simulation sample rate in Hz")
        ->capture_default_str();
    c_sim->add_option("--duration", sim.duration, "RIR length in seconds (0 = automatic)")
        ->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        fmt::print(stderr, "error: {}\n", single_line(e.what()));
        return static_cast<int>(edcforge::ErrorKind::usage);
    }

    try {
        if (c_gen->parsed()) return cmd_generate(g, gen);
        if (c_tr->parsed()) return cmd_train(g, tr);
        if (c_ev->parsed()) return cmd_evaluate(g, ev);
        if (c_pr->parsed()) return cmd_predict(g, pr);
        if (c_sim->parsed()) return cmd_simulate(g, sim);
        fmt::print(stderr, "error: no command given\n");
        return static_cast<int>(edcforge::ErrorKind::usage);
    } catch (const edcforge::Error& e) {
        fmt::print(stderr, "error: {}\n", single_line(e.what()));
        return static_cast<int>(e.kind());
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", single_line(e.what()));
        return static_cast<int>(edcforge::ErrorKind::generic);
    }
}
