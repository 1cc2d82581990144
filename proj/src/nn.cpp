#include "edcforge/nn.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <limits>
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

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr int kGradChunks = 8;
constexpr double kTargetScaleEps = 1e-12;

struct Layout {
    std::size_t wx = 0, wh = 0, b = 0, dw = 0, db = 0, ow = 0, ob = 0, total = 0;
    std::size_t n_wx = 0, n_wh = 0, n_b = 0, n_dw = 0, n_db = 0, n_ow = 0, n_ob = 0;
};

Layout layout_of(const ModelDims& d) {
    const std::size_t H = d.hidden, I = d.input, D = d.dense, O = d.output, G = 4 * H;
    Layout l;
    l.n_wx = G * I;
    l.n_wh = G * H;
    l.n_b = G;
    l.n_dw = D * H;
    l.n_db = D;
    l.n_ow = O * D;
    l.n_ob = O;
    l.wx = 0;
    l.wh = l.wx + l.n_wx;
    l.b = l.wh + l.n_wh;
    l.dw = l.b + l.n_b;
    l.db = l.dw + l.n_dw;
    l.ow = l.db + l.n_db;
    l.ob = l.ow + l.n_ow;
    l.total = l.ob + l.n_ob;
    return l;
}

void check_dims(const ModelDims& d) {
    if (d.input < 1 || d.hidden < 1 || d.dense < 1 || d.output < 1) {
        throw Error(ErrorKind::validation,
                    fmt::format("model dims {}x{}x{}x{} must all be positive", d.input, d.hidden,
                                d.dense, d.output));
    }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_finite(std::span<const double> v, const char* layer) {
    double s = 0.0;
    for (double x : v) s += x;
    if (!std::isfinite(s)) {
        throw Error(ErrorKind::numeric, fmt::format("non-finite activation in {} layer", layer));
    }
}

// y = W x + b with W row-major [rows x cols].
void affine(const double* w, const double* b, const double* x, double* y, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        const double* row = w + static_cast<std::size_t>(r) * cols;
        double s = b[r];
        for (int c = 0; c < cols; ++c) s += row[c] * x[c];
        y[r] = s;
    }
}

// y += W^T g, streaming W row by row.
void add_transposed(const double* w, const double* g, double* y, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        const double* row = w + static_cast<std::size_t>(r) * cols;
        const double gr = g[r];
        for (int c = 0; c < cols; ++c) y[c] += row[c] * gr;
    }
}

// dW += g x^T.
void add_outer(double* dw, const double* g, const double* x, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        double* row = dw + static_cast<std::size_t>(r) * cols;
        const double gr = g[r];
        for (int c = 0; c < cols; ++c) row[c] += gr * x[c];
    }
}

} // namespace

std::size_t param_count(const ModelDims& dims) { return layout_of(dims).total; }

#define EDCFORGE_PARAM_SPAN(name, off, len)                                                        \
    std::span<double> ModelParams::name() {                                                        \
        const Layout l = layout_of(dims);                                                          \
        return {theta.data() + l.off, l.len};                                                      \
    }                                                                                              \
    std::span<const double> ModelParams::name() const {                                            \
        const Layout l = layout_of(dims);                                                          \
        return {theta.data() + l.off, l.len};                                                      \
    }

EDCFORGE_PARAM_SPAN(w_x, wx, n_wx)
EDCFORGE_PARAM_SPAN(w_h, wh, n_wh)
EDCFORGE_PARAM_SPAN(b, b, n_b)
EDCFORGE_PARAM_SPAN(dense_w, dw, n_dw)
EDCFORGE_PARAM_SPAN(dense_b, db, n_db)
EDCFORGE_PARAM_SPAN(out_w, ow, n_ow)
EDCFORGE_PARAM_SPAN(out_b, ob, n_ob)

#undef EDCFORGE_PARAM_SPAN

ModelParams init_params(const ModelDims& dims, std::uint64_t seed) {
    check_dims(dims);
    ModelParams p;
    p.dims = dims;
    p.theta.assign(param_count(dims), 0.0);
    Rng rng(seed ^ rng_tag::init);

    const auto fill = [&rng](std::span<double> w, int fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (double& v : w) v = rng.uniform(-bound, bound);
    };
    fill(p.w_x(), dims.input);
    fill(p.w_h(), dims.hidden);
    fill(p.dense_w(), dims.hidden);
    fill(p.out_w(), dims.dense);
    // Biases stay zero except the forget gate, opened so early training can
    // retain cell state.
    auto b = p.b();
    for (int j = 0; j < dims.hidden; ++j) b[dims.hidden + j] = 1.0;
    return p;
}

void lstm_step(const ModelParams& p, std::span<const double> x, std::span<const double> h0,
               std::span<const double> c0, std::span<double> h_out, std::span<double> c_out,
               std::vector<double>* gates_out) {
    const int H = p.dims.hidden;
    const int I = p.dims.input;
    if (static_cast<int>(x.size()) != I || static_cast<int>(h_out.size()) != H ||
        static_cast<int>(c_out.size()) != H || (!h0.empty() && static_cast<int>(h0.size()) != H) ||
        (!c0.empty() && static_cast<int>(c0.size()) != H)) {
        throw Error(ErrorKind::validation, "lstm_step size mismatch");
    }

    std::vector<double> z(4 * H);
    affine(p.w_x().data(), p.b().data(), x.data(), z.data(), 4 * H, I);
    if (!h0.empty()) {
        const double* wh = p.w_h().data();
        for (int r = 0; r < 4 * H; ++r) {
            const double* row = wh + static_cast<std::size_t>(r) * H;
            double s = z[r];
            for (int j = 0; j < H; ++j) s += row[j] * h0[j];
            z[r] = s;
        }
    }

    std::vector<double> gates(4 * H);
    for (int j = 0; j < H; ++j) gates[j] = sigmoid(z[j]);
    for (int j = 0; j < H; ++j) gates[H + j] = sigmoid(z[H + j]);
    for (int j = 0; j < H; ++j) gates[2 * H + j] = std::tanh(z[2 * H + j]);
    for (int j = 0; j < H; ++j) gates[3 * H + j] = sigmoid(z[3 * H + j]);

    for (int j = 0; j < H; ++j) {
        const double c_prev = c0.empty() ? 0.0 : c0[j];
        c_out[j] = gates[H + j] * c_prev + gates[j] * gates[2 * H + j];
        h_out[j] = gates[3 * H + j] * std::tanh(c_out[j]);
    }
    if (gates_out) *gates_out = std::move(gates);
}

std::vector<double> forward(const ModelParams& p, std::span<const double> x, RunMode mode,
                            std::uint64_t dropout_seed, ForwardCache* cache,
                            std::span<const double> h0, std::span<const double> c0) {
    const int H = p.dims.hidden;
    const int D = p.dims.dense;
    const int O = p.dims.output;
    if (static_cast<int>(x.size()) != p.dims.input) {
        throw Error(ErrorKind::validation,
                    fmt::format("forward expects {} features, got {}", p.dims.input, x.size()));
    }

    std::vector<double> h(H), c(H), gates;
    lstm_step(p, x, h0, c0, h, c, &gates);
    check_finite(h, "lstm");

    const double keep = 1.0 - p.dropout_rate;
    std::vector<double> mask1(H, 1.0), mask2(D, 1.0);
    if (mode == RunMode::train) {
        Rng rng(dropout_seed);
        for (double& m : mask1) m = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
        for (double& m : mask2) m = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
    }

    std::vector<double> h_drop(H);
    for (int j = 0; j < H; ++j) h_drop[j] = h[j] * mask1[j];

    std::vector<double> dense_pre(D);
    affine(p.dense_w().data(), p.dense_b().data(), h_drop.data(), dense_pre.data(), D, H);
    check_finite(dense_pre, "dense");

    std::vector<double> dense_drop(D);
    for (int d = 0; d < D; ++d) {
        dense_drop[d] = (dense_pre[d] > 0.0 ? dense_pre[d] : 0.0) * mask2[d];
    }

    std::vector<double> y(O);
    affine(p.out_w().data(), p.out_b().data(), dense_drop.data(), y.data(), O, D);
    check_finite(y, "output");

    if (cache) {
        cache->x.assign(x.begin(), x.end());
        cache->h0 = h0.empty() ? std::vector<double>(H, 0.0) : std::vector<double>(h0.begin(), h0.end());
        cache->c0 = c0.empty() ? std::vector<double>(H, 0.0) : std::vector<double>(c0.begin(), c0.end());
        cache->gates = std::move(gates);
        cache->c = std::move(c);
        cache->tanh_c.resize(H);
        for (int j = 0; j < H; ++j) cache->tanh_c[j] = std::tanh(cache->c[j]);
        cache->h = std::move(h);
        cache->mask1 = std::move(mask1);
        cache->h_drop = std::move(h_drop);
        cache->dense_pre = std::move(dense_pre);
        cache->mask2 = std::move(mask2);
        cache->dense_drop = std::move(dense_drop);
        cache->y = y;
    }
    return y;
}

double mse_loss(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size() || pred.empty()) {
        throw Error(ErrorKind::validation,
                    fmt::format("mse_loss length mismatch: {} vs {}", pred.size(), target.size()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double e = pred[i] - target[i];
        s += e * e;
    }
    return s / static_cast<double>(pred.size());
}

std::vector<double> mse_grad(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size() || pred.empty()) {
        throw Error(ErrorKind::validation,
                    fmt::format("mse_grad length mismatch: {} vs {}", pred.size(), target.size()));
    }
    std::vector<double> g(pred.size());
    const double scale = 2.0 / static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) g[i] = scale * (pred[i] - target[i]);
    return g;
}

namespace {

void backward_accumulate(const ModelParams& p, const ForwardCache& cache,
                         std::span<const double> dy, std::span<double> grad) {
    const int H = p.dims.hidden;
    const int I = p.dims.input;
    const int D = p.dims.dense;
    const int O = p.dims.output;
    const Layout l = layout_of(p.dims);
    if (static_cast<int>(dy.size()) != O || grad.size() != l.total ||
        static_cast<int>(cache.y.size()) != O || static_cast<int>(cache.h.size()) != H) {
        throw Error(ErrorKind::validation, "backward: cache or gradient size mismatch");
    }

    double* g_wx = grad.data() + l.wx;
    double* g_wh = grad.data() + l.wh;
    double* g_b = grad.data() + l.b;
    double* g_dw = grad.data() + l.dw;
    double* g_db = grad.data() + l.db;
    double* g_ow = grad.data() + l.ow;
    double* g_ob = grad.data() + l.ob;

    // Output layer.
    for (int k = 0; k < O; ++k) g_ob[k] += dy[k];
    add_outer(g_ow, dy.data(), cache.dense_drop.data(), O, D);
    std::vector<double> d_dense_drop(D, 0.0);
    add_transposed(p.out_w().data(), dy.data(), d_dense_drop.data(), O, D);

    // Dropout and ReLU around the dense layer.
    std::vector<double> d_dense_pre(D);
    for (int d = 0; d < D; ++d) {
        d_dense_pre[d] =
            cache.dense_pre[d] > 0.0 ? d_dense_drop[d] * cache.mask2[d] : 0.0;
    }
    for (int d = 0; d < D; ++d) g_db[d] += d_dense_pre[d];
    add_outer(g_dw, d_dense_pre.data(), cache.h_drop.data(), D, H);
    std::vector<double> d_h_drop(H, 0.0);
    add_transposed(p.dense_w().data(), d_dense_pre.data(), d_h_drop.data(), D, H);

    // First dropout, then the cell.
    std::vector<double> dz(4 * H);
    const double* gi = cache.gates.data();
    const double* gf = gi + H;
    const double* gg = gf + H;
    const double* go = gg + H;
    for (int j = 0; j < H; ++j) {
        const double dh = d_h_drop[j] * cache.mask1[j];
        const double d_o = dh * cache.tanh_c[j];
        const double d_tc = dh * go[j];
        const double dc = d_tc * (1.0 - cache.tanh_c[j] * cache.tanh_c[j]);
        const double d_i = dc * gg[j];
        const double d_g = dc * gi[j];
        const double d_f = dc * cache.c0[j];
        dz[j] = d_i * gi[j] * (1.0 - gi[j]);
        dz[H + j] = d_f * gf[j] * (1.0 - gf[j]);
        dz[2 * H + j] = d_g * (1.0 - gg[j] * gg[j]);
        dz[3 * H + j] = d_o * go[j] * (1.0 - go[j]);
    }
    for (int r = 0; r < 4 * H; ++r) g_b[r] += dz[r];
    add_outer(g_wx, dz.data(), cache.x.data(), 4 * H, I);
    add_outer(g_wh, dz.data(), cache.h0.data(), 4 * H, H);
}

} // namespace

std::vector<double> backward(const ModelParams& p, const ForwardCache& cache,
                             std::span<const double> loss_grad) {
    std::vector<double> grad(param_count(p.dims), 0.0);
    backward_accumulate(p, cache, loss_grad, grad);
    return grad;
}

double accumulate_sample_gradient(const ModelParams& p, std::span<const double> x,
                                  std::span<const double> target, RunMode mode,
                                  std::uint64_t dropout_seed, std::span<double> grad_accum) {
    ForwardCache cache;
    const auto y = forward(p, x, mode, dropout_seed, &cache);
    const double loss = mse_loss(y, target);
    const auto dy = mse_grad(y, target);
    backward_accumulate(p, cache, dy, grad_accum);
    return loss;
}

void validate_train_config(const TrainConfig& c) {
    std::vector<std::string> issues;
    if (!(c.learning_rate > 0.0)) issues.push_back("learning_rate must be positive");
    if (!(c.beta1 > 0.0) || c.beta1 >= 1.0) issues.push_back("beta1 must be in (0, 1)");
    if (!(c.beta2 > 0.0) || c.beta2 >= 1.0) issues.push_back("beta2 must be in (0, 1)");
    if (!(c.epsilon > 0.0)) issues.push_back("epsilon must be positive");
    if (c.batch_size < 1) issues.push_back("batch_size must be >= 1");
    if (c.max_epochs < 1) issues.push_back("max_epochs must be >= 1");
    if (c.patience < 1) issues.push_back("patience must be >= 1");
    if (!issues.empty()) throw ValidationError(std::move(issues));
    check_dims(c.dims);
}

void adam_step(std::span<double> theta, std::span<const double> grad, AdamState& state,
               std::int64_t t, const TrainConfig& cfg) {
    if (theta.size() != grad.size()) {
        throw Error(ErrorKind::validation, "adam_step size mismatch");
    }
    if (t < 1) throw Error(ErrorKind::validation, "adam_step needs t >= 1");
    if (state.m.empty()) {
        state.m.assign(theta.size(), 0.0);
        state.v.assign(theta.size(), 0.0);
    }
    const double b1 = cfg.beta1;
    const double b2 = cfg.beta2;
    const double corr1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double corr2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double g = grad[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        const double m_hat = state.m[i] / corr1;
        const double v_hat = state.v[i] / corr2;
        theta[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
    state.t = t;
}

bool EarlyStopper::update(int epoch, double val_loss) {
    improved_last_ = !has_best_ || val_loss < best_loss_;
    if (improved_last_) {
        has_best_ = true;
        best_loss_ = val_loss;
        best_epoch_ = epoch;
        since_best_ = 0;
        return false;
    }
    ++since_best_;
    return since_best_ >= patience_;
}

ModelCheckpoint train(const Dataset& data, std::span<const std::int64_t> train_idx,
                      std::span<const std::int64_t> val_idx, const TrainConfig& config,
                      const EpochCallback& on_epoch) {
    TrainConfig cfg = config;
    cfg.dims.input = kNumFeatures;
    cfg.dims.output = data.manifest.edc_len;
    validate_train_config(cfg);
    if (train_idx.empty() || val_idx.empty()) {
        throw Error(ErrorKind::validation, "training needs non-empty train and val splits");
    }

    const int n_train = static_cast<int>(train_idx.size());
    const int n_val = static_cast<int>(val_idx.size());
    const int O = cfg.dims.output;
    const FeatureScaler scaler = data.scaler;

    // Materialize scaled inputs and (optionally scaled) targets once.
    std::vector<std::vector<double>> train_x(n_train), val_x(n_val);
    std::vector<std::vector<double>> train_y(n_train), val_y(n_val);
    for (int i = 0; i < n_train; ++i) {
        const auto scaled = scaler.transform(data.feature_row(train_idx[i]));
        train_x[i].assign(scaled.begin(), scaled.end());
        train_y[i] = data.target_row(train_idx[i]);
    }
    for (int i = 0; i < n_val; ++i) {
        const auto scaled = scaler.transform(data.feature_row(val_idx[i]));
        val_x[i].assign(scaled.begin(), scaled.end());
        val_y[i] = data.target_row(val_idx[i]);
    }

    std::vector<double> tmin, tmax;
    if (cfg.scale_targets) {
        tmin.assign(O, std::numeric_limits<double>::infinity());
        tmax.assign(O, -std::numeric_limits<double>::infinity());
        for (const auto& y : train_y) {
            for (int k = 0; k < O; ++k) {
                tmin[k] = std::min(tmin[k], y[k]);
                tmax[k] = std::max(tmax[k], y[k]);
            }
        }
        const auto apply = [&](std::vector<std::vector<double>>& ys) {
            for (auto& y : ys) {
                for (int k = 0; k < O; ++k) {
                    y[k] = (y[k] - tmin[k]) / (tmax[k] - tmin[k] + kTargetScaleEps);
                }
            }
        };
        apply(train_y);
        apply(val_y);
    }

    ModelParams params = init_params(cfg.dims, cfg.seed);
    const std::size_t n_params = params.theta.size();
    AdamState adam;
    Rng shuffle_rng(cfg.seed ^ rng_tag::train);
    const std::uint64_t dropout_base = cfg.seed ^ rng_tag::dropout;
    const int threads = resolve_threads(cfg.threads);

    std::vector<int> order(n_train);
    std::iota(order.begin(), order.end(), 0);

    // Chunked gradient buffers: each chunk accumulates its strided share of
    // the batch serially, then the chunks are reduced in fixed order, so the
    // update is independent of thread count.
    std::vector<std::vector<double>> chunk_grad(kGradChunks, std::vector<double>(n_params, 0.0));
    std::array<double, kGradChunks> chunk_loss{};
    std::vector<double> grad(n_params);

    EarlyStopper stopper(cfg.patience);
    std::vector<EpochStats> history;
    std::vector<double> best_theta = params.theta;
    std::int64_t step = 0;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double train_loss_sum = 0.0;

        for (int start = 0; start < n_train; start += cfg.batch_size) {
            const int batch_n = std::min(cfg.batch_size, n_train - start);
            for (auto& g : chunk_grad) std::fill(g.begin(), g.end(), 0.0);
            chunk_loss.fill(0.0);

#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(std::min(threads, kGradChunks))
#endif
            for (int chunk = 0; chunk < kGradChunks; ++chunk) {
                for (int pos = chunk; pos < batch_n; pos += kGradChunks) {
                    const int sample = order[start + pos];
                    const std::uint64_t seed =
                        derive_seed(dropout_base, static_cast<std::uint64_t>(epoch),
                                    static_cast<std::uint64_t>(train_idx[sample]));
                    chunk_loss[chunk] += accumulate_sample_gradient(
                        params, train_x[sample], train_y[sample], RunMode::train, seed,
                        chunk_grad[chunk]);
                }
            }

            std::fill(grad.begin(), grad.end(), 0.0);
            double batch_loss = 0.0;
            for (int chunk = 0; chunk < kGradChunks; ++chunk) {
                batch_loss += chunk_loss[chunk];
                const auto& g = chunk_grad[chunk];
                for (std::size_t i = 0; i < n_params; ++i) grad[i] += g[i];
            }
            const double inv_n = 1.0 / batch_n;
            for (double& g : grad) g *= inv_n;
            train_loss_sum += batch_loss;

            ++step;
            adam_step(params.theta, grad, adam, step, cfg);
        }

        const double train_loss = train_loss_sum / n_train;

        std::vector<double> val_losses(n_val);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(threads)
#endif
        for (int i = 0; i < n_val; ++i) {
            const auto y = forward(params, val_x[i], RunMode::eval, 0);
            val_losses[i] = mse_loss(y, val_y[i]);
        }
        double val_loss = 0.0;
        for (double v : val_losses) val_loss += v;
        val_loss /= n_val;

        if (!std::isfinite(train_loss) || !std::isfinite(val_loss)) {
            throw Error(ErrorKind::numeric,
                        fmt::format("training diverged at epoch {} (train loss {:.6g}, val loss "
                                    "{:.6g}, step {}, lr {:.3g})",
                                    epoch, train_loss, val_loss, step, cfg.learning_rate));
        }

        history.push_back({epoch, train_loss, val_loss});
        if (on_epoch) on_epoch(history.back());

        const bool stop = stopper.update(epoch, val_loss);
        if (stopper.improved_last()) best_theta = params.theta;
        if (stop) break;
    }

    ModelCheckpoint ckpt;
    ckpt.params.dims = cfg.dims;
    ckpt.params.theta = std::move(best_theta);
    // The checkpoint is a float32 artifact; quantize now so saving is
    // lossless and reloaded predictions match exactly.
    for (double& v : ckpt.params.theta) v = static_cast<double>(static_cast<float>(v));
    ckpt.config = cfg;
    ckpt.scaler = scaler;
    ckpt.edc_len = data.manifest.edc_len;
    ckpt.edc_window_s = data.manifest.edc_window_s;
    ckpt.history = std::move(history);
    ckpt.best_epoch = stopper.best_epoch();
    ckpt.target_min = std::move(tmin);
    ckpt.target_max = std::move(tmax);
    return ckpt;
}

EnergyDecayCurve predict_features(const ModelCheckpoint& ckpt, const FeatureVector& raw) {
    const auto scaled = ckpt.scaler.transform(raw);
    auto y = forward(ckpt.params, scaled, RunMode::eval, 0);
    if (ckpt.config.scale_targets) {
        if (ckpt.target_min.size() != y.size() || ckpt.target_max.size() != y.size()) {
            throw Error(ErrorKind::format, "checkpoint lacks target scaling arrays");
        }
        for (std::size_t k = 0; k < y.size(); ++k) {
            y[k] = y[k] * (ckpt.target_max[k] - ckpt.target_min[k] + kTargetScaleEps) +
                   ckpt.target_min[k];
        }
    }
    for (double& v : y) v = std::clamp(v, 0.0, 1.0);
    for (std::size_t k = 1; k < y.size(); ++k) y[k] = std::min(y[k], y[k - 1]);

    EnergyDecayCurve edc;
    edc.time_step_s = ckpt.edc_window_s / (ckpt.edc_len - 1);
    edc.values = std::move(y);
    return edc;
}

EnergyDecayCurve predict(const ModelCheckpoint& ckpt, const RoomConfig& config) {
    validate_or_throw(config);
    return predict_features(ckpt, to_features(config));
}

std::vector<std::vector<double>> predict_rows(const ModelCheckpoint& ckpt,
                                              std::span<const FeatureVector> raw_rows,
                                              int threads) {
    const int n = static_cast<int>(raw_rows.size());
    std::vector<std::vector<double>> out(n);
    const int nthreads = resolve_threads(threads);
    (void)nthreads;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) num_threads(nthreads)
#endif
    for (int i = 0; i < n; ++i) {
        out[i] = predict_features(ckpt, raw_rows[i]).values;
    }
    return out;
}

namespace {

struct TensorSpec {
    std::string name;
    std::vector<std::uint32_t> shape;
    std::size_t offset;
    std::size_t count;
};

std::vector<TensorSpec> tensor_specs(const ModelDims& d) {
    const Layout l = layout_of(d);
    const auto H = static_cast<std::uint32_t>(d.hidden);
    const auto I = static_cast<std::uint32_t>(d.input);
    const auto D = static_cast<std::uint32_t>(d.dense);
    const auto O = static_cast<std::uint32_t>(d.output);
    return {
        {"lstm.w_x", {4 * H, I}, l.wx, l.n_wx},
        {"lstm.w_h", {4 * H, H}, l.wh, l.n_wh},
        {"lstm.b", {4 * H}, l.b, l.n_b},
        {"dense.w", {D, H}, l.dw, l.n_dw},
        {"dense.b", {D}, l.db, l.n_db},
        {"out.w", {O, D}, l.ow, l.n_ow},
        {"out.b", {O}, l.ob, l.n_ob},
    };
}

void append_u32(std::string& buf, std::uint32_t v) {
    buf.append(reinterpret_cast<const char*>(&v), 4);
}

void append_f32(std::string& buf, float v) {
    buf.append(reinterpret_cast<const char*>(&v), 4);
}

void append_tensor(std::string& buf, const std::string& name,
                   std::span<const std::uint32_t> shape, std::span<const double> data) {
    append_u32(buf, static_cast<std::uint32_t>(name.size()));
    buf.append(name);
    append_u32(buf, static_cast<std::uint32_t>(shape.size()));
    for (std::uint32_t dim : shape) append_u32(buf, dim);
    for (double v : data) append_f32(buf, static_cast<float>(v));
}

class Reader {
public:
    explicit Reader(const std::string& buf) : buf_(buf) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v;
        std::memcpy(&v, buf_.data() + pos_, 4);
        pos_ += 4;
        return v;
    }

    std::string str(std::size_t n) {
        need(n);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    void f32_into(std::span<double> out) {
        need(out.size() * 4);
        for (double& v : out) {
            float f;
            std::memcpy(&f, buf_.data() + pos_, 4);
            pos_ += 4;
            v = f;
        }
    }

    std::size_t pos() const { return pos_; }

private:
    void need(std::size_t n) {
        if (pos_ + n > buf_.size()) throw FormatError("truncated checkpoint file");
    }

    const std::string& buf_;
    std::size_t pos_ = 0;
};

} // namespace

void save_checkpoint(const ModelCheckpoint& ckpt, const std::string& path) {
    const Layout l = layout_of(ckpt.params.dims);
    if (ckpt.params.theta.size() != l.total) {
        throw Error(ErrorKind::validation, "checkpoint parameter vector has wrong size");
    }

    ordered_json header;
    header["config"] = {{"learning_rate", ckpt.config.learning_rate},
                        {"beta1", ckpt.config.beta1},
                        {"beta2", ckpt.config.beta2},
                        {"epsilon", ckpt.config.epsilon},
                        {"batch_size", ckpt.config.batch_size},
                        {"max_epochs", ckpt.config.max_epochs},
                        {"patience", ckpt.config.patience},
                        {"seed", ckpt.config.seed},
                        {"scale_targets", ckpt.config.scale_targets}};
    header["dims"] = {{"input", ckpt.params.dims.input},
                      {"hidden", ckpt.params.dims.hidden},
                      {"dense", ckpt.params.dims.dense},
                      {"output", ckpt.params.dims.output}};
    header["dropout_rate"] = ckpt.params.dropout_rate;
    header["scaler"] = {{"min", ckpt.scaler.min}, {"max", ckpt.scaler.max}};
    header["grid"] = {{"edc_len", ckpt.edc_len}, {"edc_window_s", ckpt.edc_window_s}};
    std::vector<double> hist_train, hist_val;
    for (const EpochStats& e : ckpt.history) {
        hist_train.push_back(e.train_loss);
        hist_val.push_back(e.val_loss);
    }
    header["history"] = {{"train", hist_train}, {"val", hist_val}, {"best_epoch", ckpt.best_epoch}};
    const std::string header_text = header.dump();

    std::string buf;
    buf.append("EDCN");
    append_u32(buf, static_cast<std::uint32_t>(ckpt.format_version));
    append_u32(buf, static_cast<std::uint32_t>(header_text.size()));
    buf.append(header_text);

    auto specs = tensor_specs(ckpt.params.dims);
    std::uint32_t n_tensors = static_cast<std::uint32_t>(specs.size());
    const bool with_target_scale = ckpt.config.scale_targets;
    if (with_target_scale) n_tensors += 2;
    append_u32(buf, n_tensors);
    for (const TensorSpec& s : specs) {
        append_tensor(buf, s.name, s.shape,
                      {ckpt.params.theta.data() + s.offset, s.count});
    }
    if (with_target_scale) {
        const auto O = static_cast<std::uint32_t>(ckpt.params.dims.output);
        if (ckpt.target_min.size() != O || ckpt.target_max.size() != O) {
            throw Error(ErrorKind::validation, "target scaling arrays have wrong size");
        }
        const std::uint32_t shape[1] = {O};
        append_tensor(buf, "target_scale.min", shape, ckpt.target_min);
        append_tensor(buf, "target_scale.max", shape, ckpt.target_max);
    }

    const std::uint32_t crc =
        crc32({reinterpret_cast<const unsigned char*>(buf.data()), buf.size()});
    append_u32(buf, crc);
    write_file_bytes(path, {reinterpret_cast<const unsigned char*>(buf.data()), buf.size()});
}

ModelCheckpoint load_checkpoint(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    const std::string buf(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    if (buf.size() < 16) throw FormatError("truncated checkpoint file");

    std::uint32_t stored_crc;
    std::memcpy(&stored_crc, buf.data() + buf.size() - 4, 4);
    const std::uint32_t actual_crc =
        crc32({reinterpret_cast<const unsigned char*>(buf.data()), buf.size() - 4});
    if (stored_crc != actual_crc) {
        throw FormatError(fmt::format("checkpoint checksum mismatch in {}", path));
    }

    Reader r(buf);
    if (r.str(4) != "EDCN") throw FormatError("not a checkpoint file: " + path);
    ModelCheckpoint ckpt;
    ckpt.format_version = static_cast<int>(r.u32());
    if (ckpt.format_version != kCheckpointVersion) {
        throw FormatError(fmt::format("checkpoint format version {} unsupported (expected {})",
                                      ckpt.format_version, kCheckpointVersion));
    }
    const std::uint32_t header_len = r.u32();
    json header;
    try {
        header = json::parse(r.str(header_len));
        const auto& cfg = header.at("config");
        ckpt.config.learning_rate = cfg.at("learning_rate").get<double>();
        ckpt.config.beta1 = cfg.at("beta1").get<double>();
        ckpt.config.beta2 = cfg.at("beta2").get<double>();
        ckpt.config.epsilon = cfg.at("epsilon").get<double>();
        ckpt.config.batch_size = cfg.at("batch_size").get<int>();
        ckpt.config.max_epochs = cfg.at("max_epochs").get<int>();
        ckpt.config.patience = cfg.at("patience").get<int>();
        ckpt.config.seed = cfg.at("seed").get<std::uint64_t>();
        ckpt.config.scale_targets = cfg.at("scale_targets").get<bool>();

        const auto& dims = header.at("dims");
        ckpt.params.dims.input = dims.at("input").get<int>();
        ckpt.params.dims.hidden = dims.at("hidden").get<int>();
        ckpt.params.dims.dense = dims.at("dense").get<int>();
        ckpt.params.dims.output = dims.at("output").get<int>();
        ckpt.config.dims = ckpt.params.dims;
        ckpt.params.dropout_rate = header.at("dropout_rate").get<double>();

        const auto mins = header.at("scaler").at("min").get<std::vector<double>>();
        const auto maxs = header.at("scaler").at("max").get<std::vector<double>>();
        if (mins.size() != kNumFeatures || maxs.size() != kNumFeatures) {
            throw FormatError("checkpoint scaler must have 16 entries per array");
        }
        std::copy(mins.begin(), mins.end(), ckpt.scaler.min.begin());
        std::copy(maxs.begin(), maxs.end(), ckpt.scaler.max.begin());

        ckpt.edc_len = header.at("grid").at("edc_len").get<int>();
        ckpt.edc_window_s = header.at("grid").at("edc_window_s").get<double>();

        const auto ht = header.at("history").at("train").get<std::vector<double>>();
        const auto hv = header.at("history").at("val").get<std::vector<double>>();
        if (ht.size() != hv.size()) throw FormatError("checkpoint history arrays disagree");
        for (std::size_t i = 0; i < ht.size(); ++i) {
            ckpt.history.push_back({static_cast<int>(i), ht[i], hv[i]});
        }
        ckpt.best_epoch = header.at("history").at("best_epoch").get<int>();
    } catch (const json::exception& e) {
        throw FormatError(fmt::format("checkpoint header: {}", e.what()));
    }
    check_dims(ckpt.params.dims);
    if (ckpt.edc_len != ckpt.params.dims.output) {
        throw FormatError("checkpoint grid length disagrees with output layer");
    }

    const Layout l = layout_of(ckpt.params.dims);
    ckpt.params.theta.assign(l.total, 0.0);
    auto specs = tensor_specs(ckpt.params.dims);

    const std::uint32_t n_tensors = r.u32();
    std::vector<bool> seen(specs.size(), false);
    bool seen_tmin = false, seen_tmax = false;
    for (std::uint32_t ti = 0; ti < n_tensors; ++ti) {
        const std::uint32_t name_len = r.u32();
        const std::string name = r.str(name_len);
        const std::uint32_t rank = r.u32();
        if (rank > 4) throw FormatError("checkpoint tensor rank out of range");
        std::vector<std::uint32_t> shape(rank);
        std::size_t count = 1;
        for (auto& dim : shape) {
            dim = r.u32();
            count *= dim;
        }

        if (name == "target_scale.min" || name == "target_scale.max") {
            if (count != static_cast<std::size_t>(ckpt.params.dims.output)) {
                throw FormatError("target scaling tensor has wrong size");
            }
            auto& dst = name == "target_scale.min" ? ckpt.target_min : ckpt.target_max;
            (name == "target_scale.min" ? seen_tmin : seen_tmax) = true;
            dst.assign(count, 0.0);
            r.f32_into(dst);
            continue;
        }

        bool matched = false;
        for (std::size_t si = 0; si < specs.size(); ++si) {
            if (specs[si].name != name) continue;
            if (shape != specs[si].shape || count != specs[si].count) {
                throw FormatError(fmt::format("tensor {} has unexpected shape", name));
            }
            r.f32_into({ckpt.params.theta.data() + specs[si].offset, specs[si].count});
            seen[si] = true;
            matched = true;
            break;
        }
        if (!matched) throw FormatError(fmt::format("unknown tensor {} in checkpoint", name));
    }
    for (std::size_t si = 0; si < specs.size(); ++si) {
        if (!seen[si]) throw FormatError(fmt::format("checkpoint missing tensor {}", specs[si].name));
    }
    if (ckpt.config.scale_targets && (!seen_tmin || !seen_tmax)) {
        throw FormatError("checkpoint expects target scaling tensors but they are absent");
    }
    if (r.pos() != buf.size() - 4) {
        throw FormatError("checkpoint has trailing bytes before checksum");
    }
    return ckpt;
}

} // namespace edcforge
