#include <chrono>
#include <cstring>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "edcforge/dataset.hpp"
#include "edcforge/nn.hpp"
#include "edcforge/rng.hpp"
#include "edcforge/threading.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::vector<float> quantize_samples(const std::vector<edcforge::Sample>& samples) {
    std::vector<float> out;
    for (const auto& s : samples) {
        for (double v : s.features) out.push_back(static_cast<float>(v));
        for (double v : s.target.values) out.push_back(static_cast<float>(v));
        out.push_back(static_cast<float>(s.t60_s));
    }
    return out;
}

bool bench_dataset(int rooms, int threads) {
    edcforge::DatasetManifest manifest;
    manifest.seed = 20260816;
    manifest.n_rooms = rooms;
    const auto configs = edcforge::sample_configs(rooms, manifest.seed);

    auto t0 = std::chrono::steady_clock::now();
    const auto serial = edcforge::build_samples(configs, manifest, 1);
    const double t_serial = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    const auto parallel = edcforge::build_samples(configs, manifest, threads);
    const double t_parallel = seconds_since(t0);

    const auto a = quantize_samples(serial);
    const auto b = quantize_samples(parallel);
    const bool same =
        a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;

    fmt::print("dataset build: {} rooms, image order {}\n", rooms, manifest.sim.max_order);
    fmt::print("  serial    1 thread  : {:8.3f} s\n", t_serial);
    fmt::print("  parallel {:2d} threads: {:8.3f} s  (speedup {:.2f}x, outputs identical: {})\n",
               threads, t_parallel, t_serial / t_parallel, same ? "yes" : "NO");
    return same;
}

// Mirrors the training batch path: fixed 8-chunk accumulation, reduced in
// chunk order, so the result must not depend on the thread count.
std::vector<double> chunked_gradient(const edcforge::ModelParams& params,
                                     const std::vector<std::vector<double>>& xs,
                                     const std::vector<std::vector<double>>& ys, int threads) {
    constexpr int kChunks = 8;
    const std::size_t n_params = params.theta.size();
    std::vector<std::vector<double>> chunk_grad(kChunks, std::vector<double>(n_params, 0.0));
    const int n = static_cast<int>(xs.size());

#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(std::min(threads, kChunks))
#endif
    for (int chunk = 0; chunk < kChunks; ++chunk) {
        for (int i = chunk; i < n; i += kChunks) {
            edcforge::accumulate_sample_gradient(params, xs[i], ys[i], edcforge::RunMode::train,
                                                 edcforge::derive_seed(1, 0, i),
                                                 chunk_grad[chunk]);
        }
    }

    std::vector<double> grad(n_params, 0.0);
    for (int chunk = 0; chunk < kChunks; ++chunk) {
        for (std::size_t i = 0; i < n_params; ++i) grad[i] += chunk_grad[chunk][i];
    }
    return grad;
}

bool bench_gradients(int samples, int threads) {
    edcforge::ModelDims dims;
    const auto params = edcforge::init_params(dims, 7);

    edcforge::Rng rng(99);
    std::vector<std::vector<double>> xs(samples), ys(samples);
    for (int i = 0; i < samples; ++i) {
        xs[i].resize(dims.input);
        ys[i].resize(dims.output);
        for (auto& v : xs[i]) v = rng.uniform(0.0, 1.0);
        double level = 1.0;
        for (auto& v : ys[i]) {
            v = level;
            level *= rng.uniform(0.9, 1.0);
        }
    }

    auto t0 = std::chrono::steady_clock::now();
    const auto g_serial = chunked_gradient(params, xs, ys, 1);
    const double t_serial = seconds_since(t0);

    t0 = std::chrono::steady_clock::now();
    const auto g_parallel = chunked_gradient(params, xs, ys, threads);
    const double t_parallel = seconds_since(t0);

    const bool same = g_serial.size() == g_parallel.size() &&
                      std::memcmp(g_serial.data(), g_parallel.data(),
                                  g_serial.size() * sizeof(double)) == 0;

    fmt::print("gradient batch: {} samples, model {}-{}-{}-{}\n", samples, dims.input,
               dims.hidden, dims.dense, dims.output);
    fmt::print("  serial    1 thread  : {:8.3f} s\n", t_serial);
    fmt::print("  parallel {:2d} threads: {:8.3f} s  (speedup {:.2f}x, gradients identical: {})\n",
               threads, t_parallel, t_serial / t_parallel, same ? "yes" : "NO");
    return same;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Parallel vs serial benchmark for the RIR simulator and training kernels"};
    int rooms = 16;
    int threads = 0;
    int forward = 256;
    app.add_option("--rooms", rooms, "Rooms for the dataset-build benchmark")
        ->capture_default_str();
    app.add_option("--threads", threads, "Parallel worker count (0 = auto)")
        ->capture_default_str();
    app.add_option("--forward", forward, "Samples for the gradient benchmark")
        ->capture_default_str();
    CLI11_PARSE(app, argc, argv);

    threads = edcforge::resolve_threads(threads);
    fmt::print("benchmarking with {} parallel threads\n\n", threads);

    bool ok = bench_dataset(rooms, threads);
    fmt::print("\n");
    ok = bench_gradients(forward, threads) && ok;

    if (!ok) {
        fmt::print(stderr, "error: parallel and serial outputs differ\n");
        return 1;
    }
    return 0;
}
