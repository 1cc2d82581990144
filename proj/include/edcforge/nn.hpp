#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "edcforge/dataset.hpp"
#include "edcforge/decay.hpp"
#include "edcforge/room.hpp"

namespace edcforge {

inline constexpr int kCheckpointVersion = 1;

struct ModelDims {
    int input = kNumFeatures;
    int hidden = 128;
    int dense = 2048;
    int output = kEdcLength;

    bool operator==(const ModelDims&) const = default;
};

// All parameters live in one flat vector; the named spans view slices of it
// in a fixed layout (lstm.w_x, lstm.w_h, lstm.b, dense.w, dense.b, out.w,
// out.b). Gate order inside the 4H rows is i, f, g, o.
struct ModelParams {
    ModelDims dims;
    double dropout_rate = 0.30;
    std::vector<double> theta;

    std::span<double> w_x();
    std::span<double> w_h();
    std::span<double> b();
    std::span<double> dense_w();
    std::span<double> dense_b();
    std::span<double> out_w();
    std::span<double> out_b();
    std::span<const double> w_x() const;
    std::span<const double> w_h() const;
    std::span<const double> b() const;
    std::span<const double> dense_w() const;
    std::span<const double> dense_b() const;
    std::span<const double> out_w() const;
    std::span<const double> out_b() const;
};

std::size_t param_count(const ModelDims& dims);

// Uniform +-1/sqrt(fan_in) weights, zero biases except the forget gate's 1.0.
ModelParams init_params(const ModelDims& dims, std::uint64_t seed);

enum class RunMode { train, eval };

// Everything backward needs from the matching forward call.
struct ForwardCache {
    std::vector<double> x, h0, c0;
    std::vector<double> gates; // 4H post-activation
    std::vector<double> c, tanh_c, h;
    std::vector<double> mask1, h_drop;
    std::vector<double> dense_pre, mask2, dense_drop;
    std::vector<double> y;
};

// One LSTM cell step; h0/c0 may be empty for zero state. gates_out, if
// non-null, receives the 4H post-activation gate values.
void lstm_step(const ModelParams& params, std::span<const double> x,
               std::span<const double> h0, std::span<const double> c0, std::span<double> h_out,
               std::span<double> c_out, std::vector<double>* gates_out = nullptr);

// Full network pass. Train mode draws inverted-dropout masks from
// dropout_seed; eval mode uses all-ones masks and ignores the seed. h0/c0
// empty means zero initial state.
std::vector<double> forward(const ModelParams& params, std::span<const double> x, RunMode mode,
                            std::uint64_t dropout_seed, ForwardCache* cache = nullptr,
                            std::span<const double> h0 = {}, std::span<const double> c0 = {});

double mse_loss(std::span<const double> pred, std::span<const double> target);
std::vector<double> mse_grad(std::span<const double> pred, std::span<const double> target);

// Gradient of the scalar loss w.r.t. every entry of theta, same layout.
std::vector<double> backward(const ModelParams& params, const ForwardCache& cache,
                             std::span<const double> loss_grad);

// Adds the gradient for one (x, target) pair into grad_accum and returns the
// sample's loss. Shared by training and the gradient checker.
double accumulate_sample_gradient(const ModelParams& params, std::span<const double> x,
                                  std::span<const double> target, RunMode mode,
                                  std::uint64_t dropout_seed, std::span<double> grad_accum);

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int batch_size = 64;
    int max_epochs = 500;
    int patience = 10;
    std::uint64_t seed = 0;
    bool scale_targets = false;
    ModelDims dims;
    int threads = 0;
};

void validate_train_config(const TrainConfig& config);

struct AdamState {
    std::vector<double> m, v;
    std::int64_t t = 0;
};

// One bias-corrected Adam update; t is the 1-based step number.
void adam_step(std::span<double> theta, std::span<const double> grad, AdamState& state,
               std::int64_t t, const TrainConfig& config);

// Early-stopping bookkeeping: strict improvement resets the counter.
class EarlyStopper {
public:
    explicit EarlyStopper(int patience) : patience_(patience) {}

    // Returns true when training should stop after this epoch.
    bool update(int epoch, double val_loss);
    int best_epoch() const { return best_epoch_; }
    double best_loss() const { return best_loss_; }
    bool improved_last() const { return improved_last_; }

private:
    int patience_;
    int best_epoch_ = -1;
    double best_loss_ = 0.0;
    bool has_best_ = false;
    bool improved_last_ = false;
    int since_best_ = 0;
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct ModelCheckpoint {
    int format_version = kCheckpointVersion;
    ModelParams params;
    TrainConfig config;
    FeatureScaler scaler;
    int edc_len = kEdcLength;
    double edc_window_s = kEdcWindowS;
    std::vector<EpochStats> history;
    int best_epoch = -1;
    // Per-index target min-max, present only when config.scale_targets.
    std::vector<double> target_min, target_max;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Trains on the index sets of one dataset; the checkpoint holds the
// best-validation parameters quantized to float32.
ModelCheckpoint train(const Dataset& data, std::span<const std::int64_t> train_idx,
                      std::span<const std::int64_t> val_idx, const TrainConfig& config,
                      const EpochCallback& on_epoch = nullptr);

// Eval-mode prediction with clamp-to-[0,1] and running-minimum repair.
EnergyDecayCurve predict(const ModelCheckpoint& checkpoint, const RoomConfig& config);
EnergyDecayCurve predict_features(const ModelCheckpoint& checkpoint, const FeatureVector& raw);

// Row-parallel eval-mode predictions; output order independent of threads.
std::vector<std::vector<double>> predict_rows(const ModelCheckpoint& checkpoint,
                                              std::span<const FeatureVector> raw_rows,
                                              int threads = 0);

// "EDCN" file: u32 version, JSON header, named f32 tensor blocks, CRC32.
void save_checkpoint(const ModelCheckpoint& checkpoint, const std::string& path);
ModelCheckpoint load_checkpoint(const std::string& path);

} // namespace edcforge
