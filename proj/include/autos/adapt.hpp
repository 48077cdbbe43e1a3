#pragma once

#include <cmath>
#include <vector>

#include "autos/common.hpp"
#include "autos/data.hpp"
#include "autos/matrix.hpp"
#include "autos/nn.hpp"

namespace autos {

// Frozen joint-embedding encoder with learnable class prompts. Stand-in for a
// frozen vision-language model: only the prompts ever receive gradients.
struct Teacher {
    Matrix vis_encoder;  // d_joint x d_in, frozen
    Matrix prompts;      // C x d_joint, learnable
    double tau = 10.0;
};

struct TeacherCache {
    Matrix vis_unit;      // n x d_joint, row-normalized embeddings
    Matrix prompt_unit;   // C x d_joint
    Vector prompt_norms;  // C
    Matrix probs;         // P_FM
};

namespace detail {

inline void normalize_rows(Matrix& m, Vector* norms = nullptr) {
    for (std::size_t i = 0; i < m.rows; ++i) {
        double n = norm2(m.row(i), m.cols);
        if (n <= 1e-300) throw NumericError("zero embedding row");
        if (norms) (*norms)[i] = n;
        for (std::size_t j = 0; j < m.cols; ++j) m(i, j) /= n;
    }
}

}  // namespace detail

// Gaussian rows orthonormalized where the dimension allows.
inline Matrix make_frozen_encoder(int d_joint, int d_in, std::mt19937_64& rng) {
    Matrix enc(d_joint, d_in);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (double& v : enc.data) v = gauss(rng);
    for (std::size_t i = 0; i < enc.rows; ++i) {
        for (std::size_t j = 0; j < std::min(i, enc.cols); ++j) {
            double proj = dot(enc.row(i), enc.row(j), enc.cols);
            for (std::size_t p = 0; p < enc.cols; ++p) enc(i, p) -= proj * enc(j, p);
        }
        double n = norm2(enc.row(i), enc.cols);
        if (n <= 1e-12) {
            for (std::size_t p = 0; p < enc.cols; ++p) enc(i, p) = gauss(rng);
            n = norm2(enc.row(i), enc.cols);
        }
        for (std::size_t p = 0; p < enc.cols; ++p) enc(i, p) /= n;
    }
    return enc;
}

// Prompts start at the class-mean embeddings of a labeled "pretraining" split,
// giving the teacher above-chance zero-shot accuracy.
inline Matrix init_prompts(const Matrix& vis_encoder, const Matrix& x, const std::vector<int>& labels,
                           int class_count) {
    Matrix prompts(class_count, vis_encoder.rows);
    std::vector<int> counts(class_count, 0);
    for (std::size_t i = 0; i < x.rows; ++i) {
        Vector emb(vis_encoder.rows);
        for (std::size_t r = 0; r < vis_encoder.rows; ++r)
            emb[r] = dot(vis_encoder.row(r), x.row(i), x.cols);
        double n = norm2(emb.data(), emb.size());
        if (n <= 1e-300) continue;
        int c = labels[i];
        for (std::size_t r = 0; r < emb.size(); ++r) prompts(c, r) += emb[r] / n;
        counts[c] += 1;
    }
    for (int c = 0; c < class_count; ++c) {
        if (counts[c] == 0) throw DataError("prompt init: class " + std::to_string(c) + " absent");
        for (std::size_t r = 0; r < prompts.cols; ++r) prompts(c, r) /= counts[c];
    }
    return prompts;
}

// P_FM = softmax(tau * unit(vis) . unit(prompts)^T)
inline TeacherCache teacher_predict(const Teacher& t, const Matrix& x_t) {
    if (x_t.cols != t.vis_encoder.cols) throw ShapeError("teacher_predict: input dim mismatch");
    TeacherCache cache;
    cache.vis_unit = Matrix(x_t.rows, t.vis_encoder.rows);
    for (std::size_t i = 0; i < x_t.rows; ++i)
        for (std::size_t r = 0; r < t.vis_encoder.rows; ++r)
            cache.vis_unit(i, r) = dot(t.vis_encoder.row(r), x_t.row(i), x_t.cols);
    detail::normalize_rows(cache.vis_unit);
    cache.prompt_unit = t.prompts;
    cache.prompt_norms.assign(t.prompts.rows, 0.0);
    detail::normalize_rows(cache.prompt_unit, &cache.prompt_norms);
    cache.probs = mul_abt(cache.vis_unit, cache.prompt_unit);
    for (double& v : cache.probs.data) v *= t.tau;
    softmax_rows(cache.probs);
    return cache;
}

// Positive per-class rescale followed by row renormalization; identity at
// g = 1 and bijective on the open simplex.
inline Matrix g_transform(const Matrix& p, const Vector& g_scale) {
    if (p.cols != g_scale.size()) throw ShapeError("g_transform dims");
    for (double g : g_scale)
        if (!(g > 0.0)) throw ConfigError("g_transform: g_scale must be positive");
    Matrix out(p.rows, p.cols);
    for (std::size_t i = 0; i < p.rows; ++i) {
        double s = 0.0;
        for (std::size_t c = 0; c < p.cols; ++c) {
            out(i, c) = g_scale[c] * p(i, c);
            s += out(i, c);
        }
        for (std::size_t c = 0; c < p.cols; ++c) out(i, c) /= s;
    }
    return out;
}

inline double kl_rows_mean(const Matrix& q, const Matrix& p) {
    if (!q.same_shape(p)) throw ShapeError("kl dims");
    double total = 0.0;
    for (std::size_t i = 0; i < q.rows; ++i)
        for (std::size_t c = 0; c < q.cols; ++c) {
            double qc = std::max(q(i, c), kProbFloor);
            total += qc * std::log(qc / std::max(p(i, c), kProbFloor));
        }
    return total / static_cast<double>(q.rows);
}

// Mean cross-entropy of student rows against teacher rows.
inline double teacher_student_ce(const Matrix& p_fm, const Matrix& p_t) {
    if (!p_fm.same_shape(p_t)) throw ShapeError("ce dims");
    double total = 0.0;
    for (std::size_t i = 0; i < p_fm.rows; ++i)
        for (std::size_t c = 0; c < p_fm.cols; ++c)
            total -= p_fm(i, c) * std::log(std::max(p_t(i, c), kProbFloor));
    return total / static_cast<double>(p_fm.rows);
}

struct ExternalLossResult {
    double loss = 0.0;
    Matrix d_prompts;  // C x d_joint
    Vector d_g_scale;  // C
};

// L_ex = (1/n) sum_i beta [ sum_c (P_FM - P_t)^2 / diag + sum_c log diag
//                           + gamma KL(g(P'_V) || P_V) ]
// P_t and P_V enter as constants; gradients reach prompts (through P_FM and
// P'_V, which share the teacher forward pass) and g_scale only. When
// gauss_diag_student is set the diagonal is diag(P_t) instead of diag(P_FM).
inline ExternalLossResult external_loss(const Teacher& teacher, const Matrix& x_t, const Matrix& p_t,
                                        const Matrix& p_v, const Vector& g_scale, double beta,
                                        double gamma, bool gauss_diag_student = false) {
    TeacherCache cache = teacher_predict(teacher, x_t);
    const Matrix& p = cache.probs;  // P_FM == P'_V numerically
    if (!p.same_shape(p_t) || !p.same_shape(p_v)) throw ShapeError("external_loss dims");
    std::size_t n = p.rows, C = p.cols;
    double inv_n = 1.0 / static_cast<double>(n);

    Matrix q = g_transform(p, g_scale);

    double loss = 0.0;
    Matrix dP(n, C);  // direct dL/dP_FM before softmax jacobian
    Vector dG(C, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double gs_sum = 0.0;
        for (std::size_t c = 0; c < C; ++c) gs_sum += g_scale[c] * p(i, c);
        double kl_inner = 0.0;
        Vector a(C);
        for (std::size_t c = 0; c < C; ++c) {
            double qc = std::max(q(i, c), kProbFloor);
            double pvc = std::max(p_v(i, c), kProbFloor);
            a[c] = std::log(qc / pvc) + 1.0;
            kl_inner += q(i, c) * a[c];
            loss += beta * gamma * inv_n * qc * std::log(qc / pvc);
        }
        for (std::size_t c = 0; c < C; ++c) {
            double pfm = std::max(p(i, c), kProbFloor);
            double diag = gauss_diag_student ? std::max(p_t(i, c), kProbFloor) : pfm;
            double diff = p(i, c) - p_t(i, c);
            loss += beta * inv_n * (diff * diff / diag + std::log(diag));
            double dgauss;
            if (gauss_diag_student) {
                dgauss = 2.0 * diff / diag;  // diag constant
            } else {
                dgauss = 2.0 * diff / diag - diff * diff / (diag * diag) + 1.0 / diag;
            }
            double dkl_dp = (g_scale[c] / gs_sum) * (a[c] - kl_inner);
            dP(i, c) = beta * inv_n * (dgauss + gamma * dkl_dp);
            dG[c] += beta * gamma * inv_n * (p(i, c) / gs_sum) * (a[c] - kl_inner);
        }
    }

    // through softmax, then through prompt normalization
    Matrix dz = dlogits_from_dprobs(p, dP);
    ExternalLossResult out;
    out.loss = loss;
    out.d_g_scale = std::move(dG);
    out.d_prompts = Matrix(C, teacher.prompts.cols);
    for (std::size_t c = 0; c < C; ++c) {
        Vector du(teacher.prompts.cols, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double w = teacher.tau * dz(i, c);
            for (std::size_t j = 0; j < du.size(); ++j) du[j] += w * cache.vis_unit(i, j);
        }
        double proj = dot(cache.prompt_unit.row(c), du.data(), du.size());
        double inv_norm = 1.0 / cache.prompt_norms[c];
        for (std::size_t j = 0; j < du.size(); ++j)
            out.d_prompts(c, j) = inv_norm * (du[j] - proj * cache.prompt_unit(c, j));
    }
    return out;
}

struct InternalLossResult {
    double loss = 0.0;
    Gradients grads;
};

// L_in = -(1/n) sum theta P_FM log P_t + delta sum Pbar log Pbar
//        + sum_c KL(Pbar_c || 1/C)
inline InternalLossResult internal_loss(const Model& model, const ForwardCache& cache,
                                        const Matrix& p_fm, double theta, double delta) {
    const Matrix& p_t = cache.probs;
    if (!p_t.same_shape(p_fm)) throw ShapeError("internal_loss dims");
    std::size_t n = p_t.rows, C = p_t.cols;
    double inv_n = 1.0 / static_cast<double>(n);

    Vector pbar(C, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < C; ++c) pbar[c] += p_t(i, c) * inv_n;

    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < C; ++c)
            loss -= inv_n * theta * p_fm(i, c) * std::log(std::max(p_t(i, c), kProbFloor));
    for (std::size_t c = 0; c < C; ++c) {
        double pb = std::max(pbar[c], kProbFloor);
        loss += delta * pb * std::log(pb);
        loss += pb * std::log(pb * static_cast<double>(C));
    }

    Matrix dprobs(n, C);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < C; ++c) {
            double pb = std::max(pbar[c], kProbFloor);
            double d = -theta * inv_n * p_fm(i, c) / std::max(p_t(i, c), kProbFloor);
            d += delta * inv_n * (std::log(pb) + 1.0);
            d += inv_n * (std::log(pb * static_cast<double>(C)) + 1.0);
            dprobs(i, c) = d;
        }
    Matrix dz = dlogits_from_dprobs(p_t, dprobs);
    InternalLossResult out;
    out.loss = loss;
    out.grads = backward_from_dlogits(model, cache, dz);
    return out;
}

// argmax per row; ties break to the lowest class.
inline std::vector<int> final_labels(const Model& m, const Matrix& x_t) {
    Matrix probs = forward(m, x_t).probs;
    std::vector<int> out(probs.rows);
    for (std::size_t i = 0; i < probs.rows; ++i) {
        int best = 0;
        for (std::size_t c = 1; c < probs.cols; ++c)
            if (probs(i, c) > probs(i, best)) best = static_cast<int>(c);
        out[i] = best;
    }
    return out;
}

struct AdaptEpochTrace {
    double mean_l_ex = 0.0;
    double mean_l_in = 0.0;
};

// One pass over target batches: prompt + g step via L_ex, then a model step
// via L_in on freshly recomputed P_FM. The vis encoder is never touched.
inline AdaptEpochTrace adapt_epoch(Model& model, TrainState& model_state, Teacher& teacher,
                                   Vector& g_scale, const Matrix& x_t,
                                   const std::vector<std::size_t>& order, int batch_size, double eta,
                                   const Hyperparams& hp, bool update_prompts, bool update_model,
                                   bool gauss_diag_student = false) {
    AdaptEpochTrace trace;
    std::size_t n = order.size();
    if (n == 0) return trace;
    int batches = 0;
    for (std::size_t start = 0; start < n; start += batch_size, ++batches) {
        std::size_t end = std::min(n, start + batch_size);
        Matrix xb(end - start, x_t.cols);
        for (std::size_t i = start; i < end; ++i)
            std::copy(x_t.row(order[i]), x_t.row(order[i]) + x_t.cols, xb.row(i - start));

        if (update_prompts) {
            Matrix p_t = forward(model, xb).probs;
            Matrix p_v = teacher_predict(teacher, xb).probs;  // gradient-blocked copy
            ExternalLossResult ex =
                external_loss(teacher, xb, p_t, p_v, g_scale, hp.beta, hp.gamma, gauss_diag_student);
            trace.mean_l_ex += ex.loss;
            for (std::size_t i = 0; i < teacher.prompts.data.size(); ++i)
                teacher.prompts.data[i] -= eta * ex.d_prompts.data[i];
            for (std::size_t c = 0; c < g_scale.size(); ++c)
                g_scale[c] = std::max(g_scale[c] - eta * ex.d_g_scale[c], 1e-3);
        }
        if (update_model) {
            Matrix p_fm = teacher_predict(teacher, xb).probs;
            ForwardCache cache = forward(model, xb);
            InternalLossResult in = internal_loss(model, cache, p_fm, hp.theta, hp.delta);
            trace.mean_l_in += in.loss;
            if (!std::isfinite(in.loss)) throw NumericError("internal loss non-finite");
            sgd_step(model, in.grads, model_state, eta, hp.momentum);
        }
    }
    if (batches > 0) {
        trace.mean_l_ex /= batches;
        trace.mean_l_in /= batches;
    }
    return trace;
}

}  // namespace autos
