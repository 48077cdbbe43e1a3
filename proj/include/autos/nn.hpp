#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "autos/common.hpp"
#include "autos/matrix.hpp"
#include "autos/rng.hpp"

namespace autos {

struct AffineLayer {
    Matrix weight;  // out x in
    Vector bias;    // out
};

// Feature extractor: affine layers with tanh between/after, then a decision
// layer whose rows double as the class prototypes.
struct Model {
    std::vector<AffineLayer> phi;
    AffineLayer decision;  // C x hidden
    int d_in = 0;
    int hidden = 0;
    int class_count = 0;
};

struct Gradients {
    std::vector<AffineLayer> phi;
    AffineLayer decision;
};

struct ForwardCache {
    Matrix input;
    std::vector<Matrix> activations;  // post-tanh output of each phi layer
    Matrix logits;
    Matrix probs;

    const Matrix& features() const { return activations.back(); }
};

struct Hyperparams {
    double mu = 0.1;        // label smoothing
    double eta0 = 0.001;
    double momentum = 0.9;
    int batch_size = 64;
    double alpha = 1.0;     // radius multiplier (1.5 for rms metric)
    double lambda = 0.5;
    double beta = 0.003;
    double gamma = 0.5;
    double theta = 0.4;
    double delta = 1.0;
    double tau = 10.0;      // teacher logit scale
    int epochs = 30;
};

inline Gradients zero_like(const Model& m) {
    Gradients g;
    g.phi.reserve(m.phi.size());
    for (const auto& l : m.phi)
        g.phi.push_back({Matrix(l.weight.rows, l.weight.cols), Vector(l.bias.size(), 0.0)});
    g.decision = {Matrix(m.decision.weight.rows, m.decision.weight.cols),
                  Vector(m.decision.bias.size(), 0.0)};
    return g;
}

inline Model make_model(int d_in, int hidden, int class_count, std::mt19937_64& rng) {
    auto init_layer = [&](std::size_t out, std::size_t in) {
        AffineLayer l{Matrix(out, in), Vector(out, 0.0)};
        double bound = 1.0 / std::sqrt(static_cast<double>(in));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (double& w : l.weight.data) w = u(rng);
        for (double& b : l.bias) b = u(rng);
        return l;
    };
    Model m;
    m.d_in = d_in;
    m.hidden = hidden;
    m.class_count = class_count;
    m.phi.push_back(init_layer(hidden, d_in));
    m.decision = init_layer(class_count, hidden);
    return m;
}

inline void softmax_rows(Matrix& m) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        double* r = m.row(i);
        double mx = r[0];
        for (std::size_t c = 1; c < m.cols; ++c) mx = std::max(mx, r[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < m.cols; ++c) {
            r[c] = std::exp(r[c] - mx);
            sum += r[c];
        }
        for (std::size_t c = 0; c < m.cols; ++c) r[c] /= sum;
    }
}

inline ForwardCache forward(const Model& m, const Matrix& batch) {
    if (batch.cols != static_cast<std::size_t>(m.d_in)) throw ShapeError("forward: input dim mismatch");
    ForwardCache cache;
    cache.input = batch;
    Matrix cur = batch;
    for (const auto& layer : m.phi) {
        Matrix next(cur.rows, layer.weight.rows);
        for (std::size_t i = 0; i < cur.rows; ++i)
            for (std::size_t o = 0; o < layer.weight.rows; ++o)
                next(i, o) = std::tanh(dot(layer.weight.row(o), cur.row(i), cur.cols) + layer.bias[o]);
        cache.activations.push_back(next);
        cur = std::move(next);
    }
    cache.logits = Matrix(cur.rows, m.decision.weight.rows);
    for (std::size_t i = 0; i < cur.rows; ++i)
        for (std::size_t c = 0; c < m.decision.weight.rows; ++c)
            cache.logits(i, c) = dot(m.decision.weight.row(c), cur.row(i), cur.cols) + m.decision.bias[c];
    cache.probs = cache.logits;
    softmax_rows(cache.probs);
    return cache;
}

// Backprop from dL/dlogits through decision layer and the tanh stack.
inline Gradients backward_from_dlogits(const Model& m, const ForwardCache& cache, const Matrix& dlogits) {
    Gradients g = zero_like(m);
    std::size_t n = cache.input.rows;
    const Matrix& feats = cache.activations.back();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < m.decision.weight.rows; ++c) {
            double dz = dlogits(i, c);
            g.decision.bias[c] += dz;
            for (std::size_t h = 0; h < feats.cols; ++h) g.decision.weight(c, h) += dz * feats(i, h);
        }

    // d/dfeatures of the decision layer
    Matrix dact(n, feats.cols);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t h = 0; h < feats.cols; ++h) {
            double s = 0.0;
            for (std::size_t c = 0; c < m.decision.weight.rows; ++c)
                s += dlogits(i, c) * m.decision.weight(c, h);
            dact(i, h) = s;
        }

    for (std::size_t li = m.phi.size(); li-- > 0;) {
        const auto& layer = m.phi[li];
        const Matrix& act = cache.activations[li];
        const Matrix& in = li == 0 ? cache.input : cache.activations[li - 1];
        Matrix dpre(n, act.cols);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t o = 0; o < act.cols; ++o)
                dpre(i, o) = dact(i, o) * (1.0 - act(i, o) * act(i, o));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t o = 0; o < act.cols; ++o) {
                double dz = dpre(i, o);
                g.phi[li].bias[o] += dz;
                for (std::size_t j = 0; j < in.cols; ++j) g.phi[li].weight(o, j) += dz * in(i, j);
            }
        if (li > 0) {
            Matrix dnext(n, in.cols);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < in.cols; ++j) {
                    double s = 0.0;
                    for (std::size_t o = 0; o < act.cols; ++o) s += dpre(i, o) * layer.weight(o, j);
                    dnext(i, j) = s;
                }
            dact = std::move(dnext);
        }
    }
    return g;
}

// Convert dL/dprobs into dL/dlogits via the softmax Jacobian.
inline Matrix dlogits_from_dprobs(const Matrix& probs, const Matrix& dprobs) {
    Matrix dz(probs.rows, probs.cols);
    for (std::size_t i = 0; i < probs.rows; ++i) {
        double inner = 0.0;
        for (std::size_t c = 0; c < probs.cols; ++c) inner += dprobs(i, c) * probs(i, c);
        for (std::size_t c = 0; c < probs.cols; ++c)
            dz(i, c) = probs(i, c) * (dprobs(i, c) - inner);
    }
    return dz;
}

// LS(y) = (1 - mu) y + mu / C
inline Vector label_smooth(const Vector& onehot, double mu, int class_count) {
    if (mu < 0.0 || mu >= 1.0) throw ConfigError("label smoothing mu must be in [0,1)");
    Vector out(onehot.size());
    for (std::size_t c = 0; c < onehot.size(); ++c)
        out[c] = (1.0 - mu) * onehot[c] + mu / static_cast<double>(class_count);
    return out;
}

inline Matrix smooth_labels(const std::vector<int>& labels, double mu, int class_count) {
    Matrix out(labels.size(), class_count);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        Vector onehot(class_count, 0.0);
        onehot[labels[i]] = 1.0;
        Vector s = label_smooth(onehot, mu, class_count);
        std::copy(s.begin(), s.end(), out.row(i));
    }
    return out;
}

inline double smoothed_ce_value(const Matrix& probs, const Matrix& smoothed) {
    if (!probs.same_shape(smoothed)) throw ShapeError("smoothed_ce: shape mismatch");
    double loss = 0.0;
    for (std::size_t i = 0; i < probs.rows; ++i)
        for (std::size_t c = 0; c < probs.cols; ++c)
            loss -= smoothed(i, c) * std::log(std::max(probs(i, c), kProbFloor));
    return loss / static_cast<double>(probs.rows);
}

// Loss and exact analytic gradients through softmax and all layers.
inline std::pair<double, Gradients> smoothed_ce_loss(const Model& m, const ForwardCache& cache,
                                                     const Matrix& smoothed) {
    double loss = smoothed_ce_value(cache.probs, smoothed);
    // dL/dlogits = (probs - smoothed) / n  since smoothed rows sum to 1
    Matrix dz(cache.probs.rows, cache.probs.cols);
    double inv_n = 1.0 / static_cast<double>(cache.probs.rows);
    for (std::size_t i = 0; i < dz.rows; ++i)
        for (std::size_t c = 0; c < dz.cols; ++c)
            dz(i, c) = (cache.probs(i, c) - smoothed(i, c)) * inv_n;
    return {loss, backward_from_dlogits(m, cache, dz)};
}

// ---- Optimizer ------------------------------------------------------------

struct TrainState {
    Gradients velocity;
    int epoch_index = 0;
    double progress = 0.0;  // p in [0,1]
};

inline TrainState make_state(const Model& m) { return TrainState{zero_like(m), 0, 0.0}; }

// v <- momentum v + g;  w <- w - eta v
inline void sgd_step(Model& m, const Gradients& g, TrainState& st, double eta, double momentum) {
    auto step = [&](AffineLayer& layer, AffineLayer& vel, const AffineLayer& grad) {
        if (!layer.weight.same_shape(grad.weight)) throw ShapeError("sgd_step: shape mismatch");
        for (std::size_t i = 0; i < layer.weight.data.size(); ++i) {
            vel.weight.data[i] = momentum * vel.weight.data[i] + grad.weight.data[i];
            layer.weight.data[i] -= eta * vel.weight.data[i];
        }
        for (std::size_t i = 0; i < layer.bias.size(); ++i) {
            vel.bias[i] = momentum * vel.bias[i] + grad.bias[i];
            layer.bias[i] -= eta * vel.bias[i];
        }
    };
    for (std::size_t li = 0; li < m.phi.size(); ++li) step(m.phi[li], st.velocity.phi[li], g.phi[li]);
    step(m.decision, st.velocity.decision, g.decision);
}

// eta = eta0 / (1 + 10 p)^0.75 ; sigma = 1 / (2 epoch_index), epoch 1-based.
inline std::pair<double, double> schedules(double eta0, double p, int epoch_index) {
    if (p < 0.0 || p > 1.0) throw ConfigError("schedule progress p must be in [0,1]");
    if (epoch_index < 1) throw ConfigError("schedule epoch_index must be >= 1");
    double eta = eta0 / std::pow(1.0 + 10.0 * p, 0.75);
    double sigma = 1.0 / (2.0 * static_cast<double>(epoch_index));
    return {eta, sigma};
}

// ---- Parameter flattening / finite differences ----------------------------

inline std::vector<double*> param_ptrs(Model& m) {
    std::vector<double*> out;
    for (auto& l : m.phi) {
        for (double& w : l.weight.data) out.push_back(&w);
        for (double& b : l.bias) out.push_back(&b);
    }
    for (double& w : m.decision.weight.data) out.push_back(&w);
    for (double& b : m.decision.bias) out.push_back(&b);
    return out;
}

inline std::vector<double> flatten(const Gradients& g) {
    std::vector<double> out;
    for (const auto& l : g.phi) {
        out.insert(out.end(), l.weight.data.begin(), l.weight.data.end());
        out.insert(out.end(), l.bias.begin(), l.bias.end());
    }
    out.insert(out.end(), g.decision.weight.data.begin(), g.decision.weight.data.end());
    out.insert(out.end(), g.decision.bias.begin(), g.decision.bias.end());
    return out;
}

// Central differences over an arbitrary parameter vector (test oracle).
inline std::vector<double> finite_diff_grad(const std::function<double()>& loss_fn,
                                            const std::vector<double*>& params, double eps) {
    if (!(eps > 0.0)) throw ConfigError("finite_diff_grad: eps must be > 0");
    std::vector<double> grads(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        double saved = *params[i];
        *params[i] = saved + eps;
        double plus = loss_fn();
        *params[i] = saved - eps;
        double minus = loss_fn();
        *params[i] = saved;
        if (!std::isfinite(plus) || !std::isfinite(minus))
            throw NumericError("finite_diff_grad: non-finite loss");
        grads[i] = (plus - minus) / (2.0 * eps);
    }
    return grads;
}

// ---- Checkpoint -----------------------------------------------------------

inline nlohmann::json model_to_json(const Model& m) {
    nlohmann::json j;
    j["dims"] = {m.d_in, m.hidden, m.class_count};
    auto layer_json = [](const AffineLayer& l) {
        nlohmann::json lj;
        lj["rows"] = l.weight.rows;
        lj["cols"] = l.weight.cols;
        lj["weight"] = l.weight.data;
        lj["bias"] = l.bias;
        return lj;
    };
    j["phi"] = nlohmann::json::array();
    for (const auto& l : m.phi) j["phi"].push_back(layer_json(l));
    j["decision"] = layer_json(m.decision);
    return j;
}

inline Model model_from_json(const nlohmann::json& j) {
    Model m;
    m.d_in = j.at("dims")[0];
    m.hidden = j.at("dims")[1];
    m.class_count = j.at("dims")[2];
    auto layer_from = [](const nlohmann::json& lj) {
        AffineLayer l;
        l.weight = Matrix(lj.at("rows").get<std::size_t>(), lj.at("cols").get<std::size_t>());
        l.weight.data = lj.at("weight").get<std::vector<double>>();
        l.bias = lj.at("bias").get<Vector>();
        if (l.weight.data.size() != l.weight.rows * l.weight.cols) throw DataError("checkpoint: bad layer size");
        return l;
    };
    for (const auto& lj : j.at("phi")) m.phi.push_back(layer_from(lj));
    m.decision = layer_from(j.at("decision"));
    return m;
}

}  // namespace autos
