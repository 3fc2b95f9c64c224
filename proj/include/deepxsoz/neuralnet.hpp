#pragma once
// Step-1 convolutional classifier: [conv3x3(valid) -> ReLU -> maxpool2x2]*,
// dense -> ReLU -> dropout, then a sigmoid (binary) or softmax (multi-class)
// output. Trained with Adam on (optionally class-weighted) cross-entropy with
// early stopping on validation loss.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "common.hpp"

namespace deepxsoz::nn {

struct NetworkConfig {
    std::size_t height = 32;
    std::size_t width = 48;
    std::size_t channels = 1;
    std::vector<std::size_t> conv_filters{8, 8, 32};
    std::size_t kernel = 3;
    std::size_t dense_units = 64;
    double dropout_rate = 0.33;
    double learning_rate = 1e-4;
    std::size_t output_classes = 1;  // 1 -> sigmoid probability of class 1; >= 2 -> softmax
    std::vector<double> class_weights;  // per-class loss weights; empty = unweighted
    double validation_split = 0.1;
    int early_stop_patience = 2;
    int max_epochs = 5;
    std::size_t batch_size = 32;
    std::uint64_t seed = 1;

    static NetworkConfig desk_profile() { return {}; }

    static NetworkConfig paper_profile() {
        NetworkConfig c;
        c.height = 270;
        c.width = 400;
        c.channels = 3;
        c.conv_filters = {64, 64, 256};
        c.dense_units = 704;
        c.max_epochs = 50;
        c.early_stop_patience = 5;
        return c;
    }

    std::size_t label_count() const { return output_classes == 1 ? 2 : output_classes; }

    friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

inline nlohmann::json to_json(const NetworkConfig& c) {
    return {{"height", c.height},
            {"width", c.width},
            {"channels", c.channels},
            {"conv_filters", c.conv_filters},
            {"kernel", c.kernel},
            {"dense_units", c.dense_units},
            {"dropout_rate", c.dropout_rate},
            {"learning_rate", c.learning_rate},
            {"output_classes", c.output_classes},
            {"class_weights", c.class_weights},
            {"validation_split", c.validation_split},
            {"early_stop_patience", c.early_stop_patience},
            {"max_epochs", c.max_epochs},
            {"batch_size", c.batch_size},
            {"seed", c.seed}};
}

// Missing keys keep the value from `base`; unknown keys are rejected.
inline NetworkConfig network_config_from_json(const nlohmann::json& j, NetworkConfig base = {}) {
    static const std::vector<std::string> known{"height", "width", "channels", "conv_filters", "kernel",
                                                "dense_units", "dropout_rate", "learning_rate", "output_classes",
                                                "class_weights", "validation_split", "early_stop_patience",
                                                "max_epochs", "batch_size", "seed"};
    for (const auto& [k, v] : j.items())
        if (std::find(known.begin(), known.end(), k) == known.end()) throw ConfigError("unknown network key '" + k + "'");
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("height", base.height);
    get("width", base.width);
    get("channels", base.channels);
    get("conv_filters", base.conv_filters);
    get("kernel", base.kernel);
    get("dense_units", base.dense_units);
    get("dropout_rate", base.dropout_rate);
    get("learning_rate", base.learning_rate);
    get("output_classes", base.output_classes);
    get("class_weights", base.class_weights);
    get("validation_split", base.validation_split);
    get("early_stop_patience", base.early_stop_patience);
    get("max_epochs", base.max_epochs);
    get("batch_size", base.batch_size);
    get("seed", base.seed);
    return base;
}

struct StageShape {
    std::size_t cin, cout;
    std::size_t in_h, in_w;
    std::size_t conv_h, conv_w;
    std::size_t pool_h, pool_w;
};

struct Layout {
    std::vector<StageShape> stages;
    std::vector<std::size_t> conv_w_off, conv_b_off;
    std::size_t flat = 0;
    std::size_t hidden_w_off = 0, hidden_b_off = 0;
    std::size_t out_w_off = 0, out_b_off = 0;
    std::size_t n_params = 0;
};

inline Layout make_layout(const NetworkConfig& c) {
    if (c.height == 0 || c.width == 0 || c.channels == 0) throw std::invalid_argument("input dims must be positive");
    if (c.kernel == 0) throw std::invalid_argument("kernel must be positive");
    if (c.dense_units == 0) throw std::invalid_argument("dense_units must be positive");
    if (c.output_classes == 0) throw std::invalid_argument("output_classes must be positive");
    if (!(c.dropout_rate >= 0.0 && c.dropout_rate < 1.0)) throw std::invalid_argument("dropout must lie in [0,1)");
    if (!(c.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be > 0");
    if (!c.class_weights.empty() && c.class_weights.size() != c.label_count())
        throw std::invalid_argument("class_weights must have one entry per class");
    Layout L;
    std::size_t h = c.height, w = c.width, ch = c.channels;
    for (std::size_t f : c.conv_filters) {
        if (f == 0) throw std::invalid_argument("conv filter count must be positive");
        if (h < c.kernel || w < c.kernel) throw std::invalid_argument("input too small for the convolution stack");
        StageShape s{ch, f, h, w, h - c.kernel + 1, w - c.kernel + 1, (h - c.kernel + 1) / 2, (w - c.kernel + 1) / 2};
        if (s.pool_h == 0 || s.pool_w == 0) throw std::invalid_argument("spatial dims collapse to zero in the convolution stack");
        L.conv_w_off.push_back(L.n_params);
        L.n_params += f * ch * c.kernel * c.kernel;
        L.conv_b_off.push_back(L.n_params);
        L.n_params += f;
        L.stages.push_back(s);
        h = s.pool_h;
        w = s.pool_w;
        ch = f;
    }
    L.flat = h * w * ch;
    L.hidden_w_off = L.n_params;
    L.n_params += c.dense_units * L.flat;
    L.hidden_b_off = L.n_params;
    L.n_params += c.dense_units;
    L.out_w_off = L.n_params;
    L.n_params += c.output_classes * c.dense_units;
    L.out_b_off = L.n_params;
    L.n_params += c.output_classes;
    return L;
}

inline constexpr double kProbClamp = 1e-7;

// Activations of one forward pass, kept for backpropagation.
template <typename T>
struct Workspace {
    std::vector<std::vector<T>> conv;       // post-ReLU conv outputs per stage
    std::vector<std::vector<T>> pool;       // pooled outputs per stage
    std::vector<std::vector<std::uint32_t>> argmax;
    std::vector<T> hidden;                  // post-ReLU, post-dropout
    std::vector<T> dropout_scale;           // 0 or 1/(1-rate); 1 in eval mode
    std::vector<T> logits, probs;
    // gradient scratch
    std::vector<std::vector<T>> d_conv, d_pool;
    std::vector<T> d_hidden, d_flat;

    explicit Workspace(const NetworkConfig& c, const Layout& L) {
        for (const auto& s : L.stages) {
            conv.emplace_back(s.cout * s.conv_h * s.conv_w);
            pool.emplace_back(s.cout * s.pool_h * s.pool_w);
            argmax.emplace_back(s.cout * s.pool_h * s.pool_w);
            d_conv.emplace_back(s.cout * s.conv_h * s.conv_w);
            d_pool.emplace_back(s.cout * s.pool_h * s.pool_w);
        }
        hidden.resize(c.dense_units);
        dropout_scale.assign(c.dense_units, T(1));
        logits.resize(c.output_classes);
        probs.resize(c.output_classes);
        d_hidden.resize(c.dense_units);
        d_flat.resize(L.flat);
    }
};

template <typename T>
class Network {
public:
    explicit Network(NetworkConfig config) : config_(std::move(config)), layout_(make_layout(config_)), params_(layout_.n_params, T(0)) {}

    // He-uniform weights in [-sqrt(6/fan_in), sqrt(6/fan_in)], zero biases.
    static Network he_uniform(const NetworkConfig& config, std::uint64_t seed) {
        Network net(config);
        std::mt19937_64 rng(seed);
        const auto& L = net.layout_;
        auto fill = [&](std::size_t off, std::size_t count, std::size_t fan_in) {
            const double lim = std::sqrt(6.0 / static_cast<double>(fan_in));
            std::uniform_real_distribution<double> U(-lim, lim);
            for (std::size_t i = 0; i < count; ++i) net.params_[off + i] = static_cast<T>(U(rng));
        };
        const std::size_t k2 = config.kernel * config.kernel;
        for (std::size_t i = 0; i < L.stages.size(); ++i)
            fill(L.conv_w_off[i], L.stages[i].cout * L.stages[i].cin * k2, L.stages[i].cin * k2);
        fill(L.hidden_w_off, config.dense_units * L.flat, L.flat);
        fill(L.out_w_off, config.output_classes * config.dense_units, config.dense_units);
        return net;
    }

    const NetworkConfig& config() const { return config_; }
    const Layout& layout() const { return layout_; }
    std::vector<T>& params() { return params_; }
    const std::vector<T>& params() const { return params_; }
    std::size_t input_size() const { return config_.channels * config_.height * config_.width; }

    // Class probabilities: size 1 (probability of class 1) for a sigmoid head,
    // otherwise the softmax distribution. Dropout is applied only when
    // `train_mode` is set, using `rng`.
    std::vector<T> forward(std::span<const T> image, bool train_mode = false, std::mt19937_64* rng = nullptr) const {
        Workspace<T> ws(config_, layout_);
        forward_into(image, ws, train_mode, rng);
        return ws.probs;
    }

    void forward_into(std::span<const T> image, Workspace<T>& ws, bool train_mode, std::mt19937_64* rng) const {
        if (image.size() != input_size()) throw std::invalid_argument("forward: image shape mismatch");
        const std::size_t K = config_.kernel;
        std::span<const T> in = image;
        for (std::size_t si = 0; si < layout_.stages.size(); ++si) {
            const auto& s = layout_.stages[si];
            const T* W = params_.data() + layout_.conv_w_off[si];
            const T* B = params_.data() + layout_.conv_b_off[si];
            T* out = ws.conv[si].data();
            const std::size_t oh = s.conv_h, ow = s.conv_w;
            for (std::size_t co = 0; co < s.cout; ++co) {
                T* o = out + co * oh * ow;
                std::fill(o, o + oh * ow, B[co]);
                for (std::size_t ci = 0; ci < s.cin; ++ci) {
                    const T* src = in.data() + ci * s.in_h * s.in_w;
                    for (std::size_t ky = 0; ky < K; ++ky)
                        for (std::size_t kx = 0; kx < K; ++kx) {
                            const T w = W[((co * s.cin + ci) * K + ky) * K + kx];
                            for (std::size_t y = 0; y < oh; ++y) {
                                const T* srow = src + (y + ky) * s.in_w + kx;
                                T* orow = o + y * ow;
                                for (std::size_t x = 0; x < ow; ++x) orow[x] += w * srow[x];
                            }
                        }
                }
                for (std::size_t i = 0; i < oh * ow; ++i) o[i] = std::max(o[i], T(0));
            }
            // 2x2 max pool, stride 2, floor on odd dims; first maximum wins ties.
            T* pooled = ws.pool[si].data();
            auto* am = ws.argmax[si].data();
            for (std::size_t c = 0; c < s.cout; ++c)
                for (std::size_t py = 0; py < s.pool_h; ++py)
                    for (std::size_t px = 0; px < s.pool_w; ++px) {
                        std::size_t best = (c * oh + 2 * py) * ow + 2 * px;
                        for (std::size_t dy = 0; dy < 2; ++dy)
                            for (std::size_t dx = 0; dx < 2; ++dx) {
                                const std::size_t idx = (c * oh + 2 * py + dy) * ow + 2 * px + dx;
                                if (out[idx] > out[best]) best = idx;
                            }
                        const std::size_t p = (c * s.pool_h + py) * s.pool_w + px;
                        pooled[p] = out[best];
                        am[p] = static_cast<std::uint32_t>(best);
                    }
            in = ws.pool[si];
        }

        const T* Wh = params_.data() + layout_.hidden_w_off;
        const T* Bh = params_.data() + layout_.hidden_b_off;
        const std::size_t flat = layout_.flat;
        const T keep_scale = T(1) / T(1 - config_.dropout_rate);
        std::bernoulli_distribution drop(config_.dropout_rate);
        for (std::size_t u = 0; u < config_.dense_units; ++u) {
            T acc = Bh[u];
            const T* row = Wh + u * flat;
            for (std::size_t i = 0; i < flat; ++i) acc += row[i] * in[i];
            T scale = T(1);
            if (train_mode && config_.dropout_rate > 0.0) {
                if (rng == nullptr) throw std::invalid_argument("forward: train_mode requires an rng");
                scale = drop(*rng) ? T(0) : keep_scale;
            }
            ws.dropout_scale[u] = scale;
            ws.hidden[u] = std::max(acc, T(0)) * scale;
        }

        const T* Wo = params_.data() + layout_.out_w_off;
        const T* Bo = params_.data() + layout_.out_b_off;
        for (std::size_t o = 0; o < config_.output_classes; ++o) {
            T acc = Bo[o];
            for (std::size_t u = 0; u < config_.dense_units; ++u) acc += Wo[o * config_.dense_units + u] * ws.hidden[u];
            ws.logits[o] = acc;
        }
        if (config_.output_classes == 1) {
            ws.probs[0] = T(1) / (T(1) + std::exp(-ws.logits[0]));
        } else {
            const T m = *std::max_element(ws.logits.begin(), ws.logits.end());
            T z = 0;
            for (std::size_t o = 0; o < ws.logits.size(); ++o) z += (ws.probs[o] = std::exp(ws.logits[o] - m));
            for (auto& p : ws.probs) p /= z;
        }
        for (const auto& p : ws.probs)
            if (!std::isfinite(static_cast<double>(p))) throw RuntimeFailure("forward: non-finite activation");
    }

    // Weighted cross-entropy of one example given its forward pass. The loss
    // value clamps probabilities to [1e-7, 1-1e-7]; gradients are those of the
    // logistic/softmax loss in logit form.
    double example_loss(const Workspace<T>& ws, std::size_t label) const {
        const double w = config_.class_weights.empty() ? 1.0 : config_.class_weights.at(label);
        if (config_.output_classes == 1) {
            const double p = std::clamp(static_cast<double>(ws.probs[0]), kProbClamp, 1.0 - kProbClamp);
            return -w * (label == 1 ? std::log(p) : std::log(1.0 - p));
        }
        const double p = std::clamp(static_cast<double>(ws.probs[label]), kProbClamp, 1.0 - kProbClamp);
        return -w * std::log(p);
    }

    // Accumulates `scale` * d(loss)/d(params) into `grad`.
    void backward_into(std::span<const T> image, std::size_t label, Workspace<T>& ws, std::vector<T>& grad, T scale) const {
        const std::size_t K = config_.kernel;
        const T w = static_cast<T>(config_.class_weights.empty() ? 1.0 : config_.class_weights.at(label));
        std::vector<T> d_logits(config_.output_classes);
        if (config_.output_classes == 1) {
            d_logits[0] = scale * w * (ws.probs[0] - T(label == 1 ? 1 : 0));
        } else {
            for (std::size_t o = 0; o < config_.output_classes; ++o)
                d_logits[o] = scale * w * (ws.probs[o] - T(o == label ? 1 : 0));
        }

        const std::size_t U = config_.dense_units;
        const T* Wo = params_.data() + layout_.out_w_off;
        T* gWo = grad.data() + layout_.out_w_off;
        T* gBo = grad.data() + layout_.out_b_off;
        std::fill(ws.d_hidden.begin(), ws.d_hidden.end(), T(0));
        for (std::size_t o = 0; o < config_.output_classes; ++o) {
            gBo[o] += d_logits[o];
            for (std::size_t u = 0; u < U; ++u) {
                gWo[o * U + u] += d_logits[o] * ws.hidden[u];
                ws.d_hidden[u] += Wo[o * U + u] * d_logits[o];
            }
        }
        // Through dropout and ReLU: hidden = relu(pre) * scale, so the unit is
        // active iff hidden > 0.
        for (std::size_t u = 0; u < U; ++u) ws.d_hidden[u] = ws.hidden[u] > T(0) ? ws.d_hidden[u] * ws.dropout_scale[u] : T(0);

        const std::size_t flat = layout_.flat;
        const std::span<const T> flat_in = layout_.stages.empty() ? image : std::span<const T>(ws.pool.back());
        const T* Wh = params_.data() + layout_.hidden_w_off;
        T* gWh = grad.data() + layout_.hidden_w_off;
        T* gBh = grad.data() + layout_.hidden_b_off;
        std::fill(ws.d_flat.begin(), ws.d_flat.end(), T(0));
        for (std::size_t u = 0; u < U; ++u) {
            const T d = ws.d_hidden[u];
            if (d == T(0)) continue;
            gBh[u] += d;
            T* grow = gWh + u * flat;
            const T* wrow = Wh + u * flat;
            for (std::size_t i = 0; i < flat; ++i) {
                grow[i] += d * flat_in[i];
                ws.d_flat[i] += wrow[i] * d;
            }
        }

        if (layout_.stages.empty()) return;
        std::copy(ws.d_flat.begin(), ws.d_flat.end(), ws.d_pool.back().begin());
        for (std::size_t si = layout_.stages.size(); si-- > 0;) {
            const auto& s = layout_.stages[si];
            const std::size_t oh = s.conv_h, ow = s.conv_w;
            auto& dconv = ws.d_conv[si];
            std::fill(dconv.begin(), dconv.end(), T(0));
            const auto& dpool = ws.d_pool[si];
            const auto& am = ws.argmax[si];
            for (std::size_t p = 0; p < dpool.size(); ++p)
                if (ws.conv[si][am[p]] > T(0)) dconv[am[p]] += dpool[p];

            const std::span<const T> in = si == 0 ? image : std::span<const T>(ws.pool[si - 1]);
            const T* W = params_.data() + layout_.conv_w_off[si];
            T* gW = grad.data() + layout_.conv_w_off[si];
            T* gB = grad.data() + layout_.conv_b_off[si];
            T* din = si == 0 ? nullptr : ws.d_pool[si - 1].data();
            if (din != nullptr) std::fill(din, din + s.cin * s.in_h * s.in_w, T(0));
            for (std::size_t co = 0; co < s.cout; ++co) {
                const T* dO = dconv.data() + co * oh * ow;
                T bsum = 0;
                for (std::size_t i = 0; i < oh * ow; ++i) bsum += dO[i];
                gB[co] += bsum;
                for (std::size_t ci = 0; ci < s.cin; ++ci) {
                    const T* src = in.data() + ci * s.in_h * s.in_w;
                    T* dsrc = din == nullptr ? nullptr : din + ci * s.in_h * s.in_w;
                    for (std::size_t ky = 0; ky < K; ++ky)
                        for (std::size_t kx = 0; kx < K; ++kx) {
                            const std::size_t widx = ((co * s.cin + ci) * K + ky) * K + kx;
                            const T wv = W[widx];
                            T acc = 0;
                            for (std::size_t y = 0; y < oh; ++y) {
                                const T* srow = src + (y + ky) * s.in_w + kx;
                                const T* drow = dO + y * ow;
                                for (std::size_t x = 0; x < ow; ++x) acc += drow[x] * srow[x];
                                if (dsrc != nullptr) {
                                    T* dsrow = dsrc + (y + ky) * s.in_w + kx;
                                    for (std::size_t x = 0; x < ow; ++x) dsrow[x] += wv * drow[x];
                                }
                            }
                            gW[widx] += acc;
                        }
                }
            }
        }
    }

private:
    NetworkConfig config_;
    Layout layout_;
    std::vector<T> params_;
};

template <typename T>
struct LossAndGradients {
    double loss = 0.0;
    std::vector<T> gradients;
};

// Mean (weighted) cross-entropy over the batch and its gradient with respect
// to every parameter, in the network's flat parameter layout.
template <typename T>
LossAndGradients<T> loss_and_gradients(const Network<T>& net, std::span<const std::span<const T>> images,
                                       std::span<const std::size_t> labels, bool train_mode = false,
                                       std::mt19937_64* rng = nullptr) {
    if (images.empty()) throw std::invalid_argument("loss_and_gradients: empty batch");
    if (images.size() != labels.size()) throw std::invalid_argument("loss_and_gradients: label count mismatch");
    LossAndGradients<T> out;
    out.gradients.assign(net.layout().n_params, T(0));
    Workspace<T> ws(net.config(), net.layout());
    const T scale = T(1) / static_cast<T>(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (labels[i] >= net.config().label_count()) throw std::invalid_argument("loss_and_gradients: label out of range");
        net.forward_into(images[i], ws, train_mode, rng);
        out.loss += net.example_loss(ws, labels[i]);
        net.backward_into(images[i], labels[i], ws, out.gradients, scale);
    }
    out.loss /= static_cast<double>(images.size());
    return out;
}

template <typename T>
struct AdamState {
    double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
    std::uint64_t step = 0;
    std::vector<T> m, v;

    void update(std::vector<T>& params, const std::vector<T>& grad, double lr) {
        if (m.size() != params.size()) {
            m.assign(params.size(), T(0));
            v.assign(params.size(), T(0));
        }
        ++step;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        const T b1 = static_cast<T>(beta1), b2 = static_cast<T>(beta2);
        const T step_size = static_cast<T>(lr * std::sqrt(c2) / c1);
        const T eps_hat = static_cast<T>(epsilon * std::sqrt(c2));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m[i] = b1 * m[i] + (T(1) - b1) * grad[i];
            v[i] = b2 * v[i] + (T(1) - b2) * grad[i] * grad[i];
            params[i] -= step_size * m[i] / (std::sqrt(v[i]) + eps_hat);
        }
    }
};

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
    friend bool operator==(const EpochLog&, const EpochLog&) = default;
};

struct TrainingLog {
    std::vector<EpochLog> epochs;
    int best_epoch = -1;
    bool early_stopped = false;
    friend bool operator==(const TrainingLog&, const TrainingLog&) = default;
};

template <typename T>
struct ModelWeights {
    Network<T> network;
    AdamState<T> optimizer;
    TrainingLog log;
};

class TrainingDiverged : public RuntimeFailure {
public:
    TrainingDiverged(int epoch, const std::string& what) : RuntimeFailure(what), epoch_(epoch) {}
    int epoch() const { return epoch_; }

private:
    int epoch_;
};

template <typename T>
double predicted_class_accuracy(const Network<T>& net, std::span<const std::span<const T>> images, std::span<const std::size_t> labels) {
    if (images.empty()) return 0.0;
    Workspace<T> ws(net.config(), net.layout());
    std::size_t correct = 0;
    for (std::size_t i = 0; i < images.size(); ++i) {
        net.forward_into(images[i], ws, false, nullptr);
        std::size_t pred;
        if (net.config().output_classes == 1) pred = ws.probs[0] >= T(0.5) ? 1 : 0;
        else pred = static_cast<std::size_t>(std::max_element(ws.probs.begin(), ws.probs.end()) - ws.probs.begin());
        correct += pred == labels[i] ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(images.size());
}

template <typename T>
double mean_loss(const Network<T>& net, std::span<const std::span<const T>> images, std::span<const std::size_t> labels) {
    Workspace<T> ws(net.config(), net.layout());
    double total = 0.0;
    for (std::size_t i = 0; i < images.size(); ++i) {
        net.forward_into(images[i], ws, false, nullptr);
        total += net.example_loss(ws, labels[i]);
    }
    return images.empty() ? 0.0 : total / static_cast<double>(images.size());
}

// Shuffles with the config seed, holds out the last `validation_split`
// fraction, trains with Adam, and restores the best-validation weights.
// Without a validation set the training loss drives early stopping.
template <typename T>
ModelWeights<T> train(const NetworkConfig& config, std::span<const std::span<const T>> images, std::span<const std::size_t> labels) {
    if (images.size() != labels.size()) throw std::invalid_argument("train: label count mismatch");
    const std::size_t n_classes = config.label_count();
    std::vector<std::size_t> per_class(n_classes, 0);
    for (std::size_t l : labels) {
        if (l >= n_classes) throw std::invalid_argument("train: label out of range");
        ++per_class[l];
    }
    for (std::size_t c = 0; c < n_classes; ++c)
        if (per_class[c] < 2) throw std::invalid_argument("train: need at least 2 examples of every class");
    if (config.batch_size == 0) throw std::invalid_argument("train: batch_size must be positive");
    if (!(config.validation_split >= 0.0 && config.validation_split < 1.0))
        throw std::invalid_argument("train: validation_split must lie in [0,1)");

    std::mt19937_64 rng(config.seed);
    ModelWeights<T> model{Network<T>::he_uniform(config, rng()), {}, {}};
    std::vector<std::size_t> order(images.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_val = static_cast<std::size_t>(std::ceil(config.validation_split * static_cast<double>(images.size())));
    std::vector<std::size_t> train_idx(order.begin(), order.end() - static_cast<long>(n_val));
    std::vector<std::size_t> val_idx(order.end() - static_cast<long>(n_val), order.end());
    if (train_idx.empty()) throw std::invalid_argument("train: validation split leaves no training data");

    auto gather = [&](const std::vector<std::size_t>& idx, std::vector<std::span<const T>>& imgs, std::vector<std::size_t>& lbls) {
        imgs.clear();
        lbls.clear();
        for (std::size_t i : idx) {
            imgs.push_back(images[i]);
            lbls.push_back(labels[i]);
        }
    };
    std::vector<std::span<const T>> val_imgs, batch_imgs;
    std::vector<std::size_t> val_lbls, batch_lbls;
    gather(val_idx, val_imgs, val_lbls);

    auto& net = model.network;
    Workspace<T> ws(config, net.layout());
    std::vector<T> grad(net.layout().n_params);
    std::vector<T> best_params = net.params();
    double best = std::numeric_limits<double>::infinity();
    int since_best = 0;
    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::shuffle(train_idx.begin(), train_idx.end(), rng);
        double epoch_loss = 0.0;
        EpochLog log{epoch, 0.0, 0.0, 0.0};
        try {
            for (std::size_t start = 0; start < train_idx.size(); start += config.batch_size) {
                const std::size_t end = std::min(train_idx.size(), start + config.batch_size);
                std::fill(grad.begin(), grad.end(), T(0));
                const T scale = T(1) / static_cast<T>(end - start);
                for (std::size_t b = start; b < end; ++b) {
                    const std::size_t i = train_idx[b];
                    net.forward_into(images[i], ws, true, &rng);
                    epoch_loss += net.example_loss(ws, labels[i]);
                    net.backward_into(images[i], labels[i], ws, grad, scale);
                }
                model.optimizer.update(net.params(), grad, config.learning_rate);
            }
            log.train_loss = epoch_loss / static_cast<double>(train_idx.size());
            if (!val_idx.empty()) {
                log.val_loss = mean_loss(net, std::span<const std::span<const T>>(val_imgs), std::span<const std::size_t>(val_lbls));
                log.val_accuracy = predicted_class_accuracy(net, std::span<const std::span<const T>>(val_imgs), std::span<const std::size_t>(val_lbls));
            }
        } catch (const TrainingDiverged&) {
            throw;
        } catch (const RuntimeFailure& e) {
            throw TrainingDiverged(epoch, "training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
        }
        if (!std::isfinite(log.train_loss) || !std::isfinite(log.val_loss))
            throw TrainingDiverged(epoch, "training diverged (non-finite loss) at epoch " + std::to_string(epoch));
        model.log.epochs.push_back(log);
        const double monitored = val_idx.empty() ? log.train_loss : log.val_loss;
        if (monitored < best) {
            best = monitored;
            best_params = net.params();
            model.log.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best > config.early_stop_patience) {
            model.log.early_stopped = true;
            break;
        }
    }
    net.params() = best_params;
    return model;
}

// --- persistence -------------------------------------------------------------

inline constexpr std::string_view kModelMagic = "DXNN";
inline constexpr std::uint16_t kModelVersion = 1;

// Versioned container: magic, u16 version, u32 config-JSON length + JSON,
// u64 parameter count + f32 parameters, Adam step + f32 moments, training log.
template <typename T>
std::string encode_model(const ModelWeights<T>& model) {
    ByteWriter w;
    w.put_bytes(kModelMagic);
    w.put<std::uint16_t>(kModelVersion);
    const std::string cfg = to_json(model.network.config()).dump();
    w.put<std::uint32_t>(static_cast<std::uint32_t>(cfg.size()));
    w.put_bytes(cfg);
    auto put_f32 = [&](const std::vector<T>& xs) {
        w.put<std::uint64_t>(xs.size());
        for (T x : xs) w.put<float>(static_cast<float>(x));
    };
    put_f32(model.network.params());
    w.put<std::uint64_t>(model.optimizer.step);
    put_f32(model.optimizer.m);
    put_f32(model.optimizer.v);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(model.log.epochs.size()));
    for (const auto& e : model.log.epochs) {
        w.put<std::int32_t>(e.epoch);
        w.put<double>(e.train_loss);
        w.put<double>(e.val_loss);
        w.put<double>(e.val_accuracy);
    }
    w.put<std::int32_t>(model.log.best_epoch);
    w.put<std::uint8_t>(model.log.early_stopped ? 1 : 0);
    return w.take();
}

template <typename T>
ModelWeights<T> decode_model(std::string_view bytes) {
    ByteReader r(bytes, "model file");
    if (r.get_bytes(4) != kModelMagic) throw FormatError("model file: bad magic");
    const auto version = r.get<std::uint16_t>();
    if (version != kModelVersion) throw FormatError("model file: unsupported version " + std::to_string(version));
    const auto cfg_len = r.get<std::uint32_t>();
    NetworkConfig cfg;
    try {
        cfg = network_config_from_json(nlohmann::json::parse(r.get_bytes(cfg_len)));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("model file: bad config: ") + e.what());
    }
    ModelWeights<T> model{Network<T>(cfg), {}, {}};
    auto get_f32 = [&](std::vector<T>& xs, std::size_t expected, bool allow_empty) {
        const auto n = r.get<std::uint64_t>();
        if (n != expected && !(allow_empty && n == 0))
            throw FormatError("model file: parameter count " + std::to_string(n) + " does not match config (" + std::to_string(expected) + ")");
        const auto raw = r.get_array<float>(static_cast<std::size_t>(n));
        xs.assign(raw.begin(), raw.end());
    };
    const std::size_t n_params = model.network.layout().n_params;
    get_f32(model.network.params(), n_params, false);
    model.optimizer.step = r.get<std::uint64_t>();
    get_f32(model.optimizer.m, n_params, true);
    get_f32(model.optimizer.v, n_params, true);
    const auto n_epochs = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < n_epochs; ++i) {
        EpochLog e;
        e.epoch = r.get<std::int32_t>();
        e.train_loss = r.get<double>();
        e.val_loss = r.get<double>();
        e.val_accuracy = r.get<double>();
        model.log.epochs.push_back(e);
    }
    model.log.best_epoch = r.get<std::int32_t>();
    model.log.early_stopped = r.get<std::uint8_t>() != 0;
    if (r.remaining() != 0) throw FormatError("model file: trailing bytes");
    return model;
}

template <typename T>
void save_model(const ModelWeights<T>& model, const std::filesystem::path& path) {
    write_file_atomic(path, encode_model(model));
}

template <typename T>
ModelWeights<T> load_model(const std::filesystem::path& path) {
    return decode_model<T>(read_file(path));
}

}  // namespace deepxsoz::nn
