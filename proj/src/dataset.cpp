#include "edcforge/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include <fmt/format.h>
#include <json.hpp>

#include "edcforge/errors.hpp"
#include "edcforge/io_util.hpp"
#include "edcforge/rng.hpp"
#include "edcforge/threading.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace edcforge {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr double kScalerEps = 1e-12;
constexpr int kMaxPlacementTries = 10000;
constexpr double kHistogramBinS = 0.05;

const char* const kArrayFiles[] = {"features.f32", "targets.f32", "t60.f32"};

json sim_to_json(const SimParams& p) {
    return json{{"max_order", p.max_order},
                {"speed_of_sound", p.speed_of_sound},
                {"frac_delay_taps", p.frac_delay_taps},
                {"duration_s", p.duration_s},
                {"sample_rate_hz", p.sample_rate_hz}};
}

SimParams sim_from_json(const json& j) {
    SimParams p;
    p.max_order = j.at("max_order").get<int>();
    p.speed_of_sound = j.at("speed_of_sound").get<double>();
    p.frac_delay_taps = j.at("frac_delay_taps").get<int>();
    p.duration_s = j.at("duration_s").get<double>();
    p.sample_rate_hz = j.at("sample_rate_hz").get<double>();
    return p;
}

void write_t60_histogram(const Dataset& d, const fs::path& path) {
    double max_t60 = 0.0;
    for (float t : d.t60) max_t60 = std::max(max_t60, static_cast<double>(t));
    const int bins = std::max(1, static_cast<int>(std::ceil(max_t60 / kHistogramBinS)));
    std::vector<std::int64_t> counts(bins, 0);
    for (float t : d.t60) {
        int b = static_cast<int>(t / kHistogramBinS);
        b = std::clamp(b, 0, bins - 1);
        ++counts[b];
    }
    std::string text = "t60_bin_start_s,count\n";
    for (int b = 0; b < bins; ++b) {
        text += fmt::format("{:.2f},{}\n", b * kHistogramBinS, counts[b]);
    }
    write_text_file(path.string(), text);
}

} // namespace

void validate_manifest(const DatasetManifest& m) {
    std::vector<std::string> issues;
    if (m.n_rooms < 1) issues.push_back(fmt::format("n_rooms = {} not positive", m.n_rooms));
    if (m.edc_len < 2) issues.push_back(fmt::format("edc_len = {} too short", m.edc_len));
    if (!(m.edc_window_s > 0.0)) {
        issues.push_back(fmt::format("edc_window_s = {:.6g} not positive", m.edc_window_s));
    }
    const double frac_sum = m.train_fraction + m.val_fraction + m.test_fraction;
    if (m.train_fraction < 0.0 || m.val_fraction < 0.0 || m.test_fraction < 0.0 ||
        std::abs(frac_sum - 1.0) > 1e-9) {
        issues.push_back(fmt::format("split fractions {:.3g}/{:.3g}/{:.3g} do not sum to 1",
                                     m.train_fraction, m.val_fraction, m.test_fraction));
    }
    if (m.schema_version != kDatasetSchemaVersion) {
        issues.push_back(fmt::format("schema_version {} unsupported", m.schema_version));
    }
    if (!issues.empty()) throw ValidationError(std::move(issues));
}

FeatureVector FeatureScaler::transform(const FeatureVector& x) const {
    FeatureVector out{};
    for (int i = 0; i < kNumFeatures; ++i) {
        out[i] = (x[i] - min[i]) / (max[i] - min[i] + kScalerEps);
    }
    return out;
}

FeatureVector FeatureScaler::inverse(const FeatureVector& x) const {
    FeatureVector out{};
    for (int i = 0; i < kNumFeatures; ++i) {
        out[i] = x[i] * (max[i] - min[i] + kScalerEps) + min[i];
    }
    return out;
}

FeatureScaler fit_scaler(std::span<const FeatureVector> rows) {
    if (rows.size() < 2) {
        throw Error(ErrorKind::validation, "scaler needs at least 2 training rows");
    }
    FeatureScaler s;
    s.min = rows[0];
    s.max = rows[0];
    for (const FeatureVector& row : rows) {
        for (int i = 0; i < kNumFeatures; ++i) {
            s.min[i] = std::min(s.min[i], row[i]);
            s.max[i] = std::max(s.max[i], row[i]);
        }
    }
    return s;
}

SplitIndices split_indices(std::int64_t n, const DatasetManifest& manifest) {
    validate_manifest(manifest);
    if (n < 1) throw Error(ErrorKind::validation, "split needs at least one sample");
    std::vector<std::int64_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(manifest.seed ^ rng_tag::split);
    rng.shuffle(order);

    const auto n_val = static_cast<std::int64_t>(std::floor(manifest.val_fraction * n));
    const auto n_test = static_cast<std::int64_t>(std::floor(manifest.test_fraction * n));
    const std::int64_t n_train = n - n_val - n_test;

    SplitIndices s;
    s.train.assign(order.begin(), order.begin() + n_train);
    s.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
    s.test.assign(order.begin() + n_train + n_val, order.end());
    return s;
}

std::vector<RoomConfig> sample_configs(std::int64_t n, std::uint64_t seed) {
    if (n < 1) throw Error(ErrorKind::validation, "sample_configs needs n >= 1");
    const RoomLimits lim;
    Rng rng(seed ^ rng_tag::sampler);
    std::vector<RoomConfig> configs;
    configs.reserve(n);
    for (std::int64_t r = 0; r < n; ++r) {
        RoomConfig c;
        c.length_m = rng.uniform(lim.min_length_m, lim.max_length_m);
        c.width_m = rng.uniform(lim.min_width_m, lim.max_width_m);
        c.height_m = rng.uniform(lim.min_height_m, lim.max_height_m);

        bool placed = false;
        for (int attempt = 0; attempt < kMaxPlacementTries; ++attempt) {
            const double m = lim.wall_margin_m;
            c.source = {rng.uniform(m, c.length_m - m), rng.uniform(m, c.width_m - m),
                        rng.uniform(m, c.height_m - m)};
            c.receiver = {rng.uniform(m, c.length_m - m), rng.uniform(m, c.width_m - m),
                          rng.uniform(m, c.height_m - m)};
            const double d = distance(c.source, c.receiver);
            if (d >= lim.min_src_rcv_dist_m && d <= lim.max_src_rcv_dist_m) {
                placed = true;
                break;
            }
        }
        if (!placed) {
            throw Error(ErrorKind::generic,
                        fmt::format("room {}: no source/receiver placement after {} tries", r,
                                    kMaxPlacementTries));
        }

        const double base = rng.uniform(kAlphaMin, kAlphaMax);
        for (int b = 0; b < kNumBands; ++b) {
            const double jitter = rng.uniform(-kAlphaJitter, kAlphaJitter);
            c.absorption[b] = std::clamp(base + jitter, kAlphaMin, kAlphaMax);
        }
        configs.push_back(c);
    }
    return configs;
}

std::vector<Sample> build_samples(const std::vector<RoomConfig>& configs,
                                  const DatasetManifest& manifest, int threads) {
    validate_manifest(manifest);
    const auto n = static_cast<std::int64_t>(configs.size());
    std::vector<Sample> samples(n);
    std::vector<std::string> failures(n);
    const int nthreads = resolve_threads(threads);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) num_threads(nthreads)
#endif
    for (std::int64_t i = 0; i < n; ++i) {
        try {
            const Rir rir = simulate_rir(configs[i], manifest.sim);
            const EnergyDecayCurve edc = schroeder_edc(rir);
            Sample& s = samples[i];
            s.features = to_features(configs[i]);
            s.target = resample_edc(edc, manifest.edc_len, manifest.edc_window_s);
            s.t60_s = t60_from_edc(edc);
        } catch (const std::exception& e) {
            failures[i] = e.what();
        }
    }
    (void)nthreads;

    std::string combined;
    int failed = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        if (!failures[i].empty()) {
            if (failed < 5) combined += fmt::format(" [room {}: {}]", i, failures[i]);
            ++failed;
        }
    }
    if (failed > 0) {
        throw Error(ErrorKind::generic,
                    fmt::format("{} of {} rooms failed to simulate:{}", failed, n, combined));
    }
    return samples;
}

FeatureVector Dataset::feature_row(std::int64_t i) const {
    FeatureVector f{};
    for (int k = 0; k < kNumFeatures; ++k) f[k] = features[i * kNumFeatures + k];
    return f;
}

std::vector<double> Dataset::target_row(std::int64_t i) const {
    std::vector<double> t(manifest.edc_len);
    for (int k = 0; k < manifest.edc_len; ++k) t[k] = targets[i * manifest.edc_len + k];
    return t;
}

Sample Dataset::sample(std::int64_t i) const {
    Sample s;
    s.features = feature_row(i);
    s.target.values = target_row(i);
    s.target.time_step_s = manifest.edc_window_s / (manifest.edc_len - 1);
    s.t60_s = t60[i];
    return s;
}

Dataset build_dataset(const DatasetManifest& manifest, int threads) {
    validate_manifest(manifest);
    const auto configs = sample_configs(manifest.n_rooms, manifest.seed);
    const auto samples = build_samples(configs, manifest, threads);

    Dataset d;
    d.manifest = manifest;
    d.features.resize(manifest.n_rooms * kNumFeatures);
    d.targets.resize(manifest.n_rooms * static_cast<std::int64_t>(manifest.edc_len));
    d.t60.resize(manifest.n_rooms);
    for (std::int64_t i = 0; i < manifest.n_rooms; ++i) {
        for (int k = 0; k < kNumFeatures; ++k) {
            d.features[i * kNumFeatures + k] = static_cast<float>(samples[i].features[k]);
        }
        for (int k = 0; k < manifest.edc_len; ++k) {
            d.targets[i * manifest.edc_len + k] = static_cast<float>(samples[i].target.values[k]);
        }
        d.t60[i] = static_cast<float>(samples[i].t60_s);
    }
    d.splits = split_indices(manifest.n_rooms, manifest);

    std::vector<FeatureVector> train_rows;
    train_rows.reserve(d.splits.train.size());
    for (std::int64_t idx : d.splits.train) train_rows.push_back(d.feature_row(idx));
    d.scaler = fit_scaler(train_rows);
    return d;
}

void save_dataset(const Dataset& d, const std::string& dir) {
    validate_manifest(d.manifest);
    const auto n = d.size();
    if (n != d.manifest.n_rooms ||
        d.features.size() != static_cast<std::size_t>(n * kNumFeatures) ||
        d.targets.size() != static_cast<std::size_t>(n * d.manifest.edc_len)) {
        throw Error(ErrorKind::validation, "dataset arrays disagree with manifest");
    }
    fs::create_directories(dir);
    const fs::path base(dir);

    write_f32_file(base / "features.f32", d.features);
    write_f32_file(base / "targets.f32", d.targets);
    write_f32_file(base / "t60.f32", d.t60);

    ordered_json splits_j{{"train", d.splits.train}, {"val", d.splits.val}, {"test", d.splits.test}};
    write_text_file((base / "splits.json").string(), splits_j.dump(2) + "\n");

    ordered_json scaler_j{{"min", d.scaler.min}, {"max", d.scaler.max}};
    write_text_file((base / "scaler.json").string(), scaler_j.dump(2) + "\n");

    write_t60_histogram(d, base / "t60_histogram.csv");

    ordered_json m;
    m["schema_version"] = d.manifest.schema_version;
    m["seed"] = d.manifest.seed;
    m["n_rooms"] = d.manifest.n_rooms;
    m["edc_len"] = d.manifest.edc_len;
    m["edc_window_s"] = d.manifest.edc_window_s;
    m["fractions"] = {{"train", d.manifest.train_fraction},
                      {"val", d.manifest.val_fraction},
                      {"test", d.manifest.test_fraction}};
    m["sim"] = sim_to_json(d.manifest.sim);
    ordered_json sums;
    for (const char* name : kArrayFiles) sums[name] = crc32_hex(crc32_of_file(base / name));
    sums["splits.json"] = crc32_hex(crc32_of_file(base / "splits.json"));
    sums["scaler.json"] = crc32_hex(crc32_of_file(base / "scaler.json"));
    m["checksums"] = sums;
    write_text_file((base / "manifest.json").string(), m.dump(2) + "\n");
}

Dataset load_dataset(const std::string& dir) {
    const fs::path base(dir);
    json m;
    try {
        m = json::parse(read_text_file((base / "manifest.json").string()));
    } catch (const json::exception& e) {
        throw FormatError(fmt::format("manifest.json: {}", e.what()));
    }

    Dataset d;
    try {
        d.manifest.schema_version = m.at("schema_version").get<int>();
        if (d.manifest.schema_version != kDatasetSchemaVersion) {
            throw FormatError(fmt::format("dataset schema version {} unsupported (expected {})",
                                          d.manifest.schema_version, kDatasetSchemaVersion));
        }
        d.manifest.seed = m.at("seed").get<std::uint64_t>();
        d.manifest.n_rooms = m.at("n_rooms").get<std::int64_t>();
        d.manifest.edc_len = m.at("edc_len").get<int>();
        d.manifest.edc_window_s = m.at("edc_window_s").get<double>();
        d.manifest.train_fraction = m.at("fractions").at("train").get<double>();
        d.manifest.val_fraction = m.at("fractions").at("val").get<double>();
        d.manifest.test_fraction = m.at("fractions").at("test").get<double>();
        d.manifest.sim = sim_from_json(m.at("sim"));

        const auto& sums = m.at("checksums");
        for (const auto& [name, expected] : sums.items()) {
            const std::string actual = crc32_hex(crc32_of_file(base / name));
            if (actual != expected.get<std::string>()) {
                throw FormatError(fmt::format("checksum mismatch for {}: expected {}, got {}", name,
                                              expected.get<std::string>(), actual));
            }
        }
    } catch (const json::exception& e) {
        throw FormatError(fmt::format("manifest.json: {}", e.what()));
    }
    validate_manifest(d.manifest);

    d.features = read_f32_file(base / "features.f32");
    d.targets = read_f32_file(base / "targets.f32");
    d.t60 = read_f32_file(base / "t60.f32");
    const auto n = d.manifest.n_rooms;
    if (d.features.size() != static_cast<std::size_t>(n * kNumFeatures) ||
        d.targets.size() != static_cast<std::size_t>(n * d.manifest.edc_len) ||
        d.t60.size() != static_cast<std::size_t>(n)) {
        throw FormatError("dataset array sizes disagree with manifest");
    }

    try {
        const json splits_j = json::parse(read_text_file((base / "splits.json").string()));
        d.splits.train = splits_j.at("train").get<std::vector<std::int64_t>>();
        d.splits.val = splits_j.at("val").get<std::vector<std::int64_t>>();
        d.splits.test = splits_j.at("test").get<std::vector<std::int64_t>>();

        const json scaler_j = json::parse(read_text_file((base / "scaler.json").string()));
        const auto mins = scaler_j.at("min").get<std::vector<double>>();
        const auto maxs = scaler_j.at("max").get<std::vector<double>>();
        if (mins.size() != kNumFeatures || maxs.size() != kNumFeatures) {
            throw FormatError("scaler.json arrays must have 16 entries");
        }
        std::copy(mins.begin(), mins.end(), d.scaler.min.begin());
        std::copy(maxs.begin(), maxs.end(), d.scaler.max.begin());
    } catch (const json::exception& e) {
        throw FormatError(fmt::format("dataset metadata: {}", e.what()));
    }

    // The splits must tile 0..n-1 exactly.
    std::vector<std::int64_t> all;
    all.reserve(n);
    for (const auto* part : {&d.splits.train, &d.splits.val, &d.splits.test}) {
        all.insert(all.end(), part->begin(), part->end());
    }
    std::sort(all.begin(), all.end());
    bool ok = all.size() == static_cast<std::size_t>(n);
    for (std::int64_t i = 0; ok && i < n; ++i) ok = all[i] == i;
    if (!ok) throw FormatError("splits.json does not partition the dataset");

    return d;
}

} // namespace edcforge
