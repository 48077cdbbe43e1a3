#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "autos/adapt.hpp"
#include "autos/matrix.hpp"
#include "autos/nn.hpp"
#include "autos/rng.hpp"

namespace autos {

inline double relative_error(const std::vector<double>& analytic, const std::vector<double>& fd) {
    double diff = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        diff += (analytic[i] - fd[i]) * (analytic[i] - fd[i]);
        ref += fd[i] * fd[i];
    }
    return std::sqrt(diff) / std::max(std::sqrt(ref), 1e-10);
}

namespace gradcheck {

struct TinyInstance {
    Model model;
    Matrix x;
    std::vector<int> labels;
};

inline TinyInstance random_instance(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> d_in_d(2, 8), hid_d(2, 8), c_d(2, 4), n_d(1, 5);
    int d_in = d_in_d(rng), hidden = hid_d(rng), C = c_d(rng), n = n_d(rng);
    TinyInstance inst;
    inst.model = make_model(d_in, hidden, C, rng);
    inst.x = Matrix(n, d_in);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (double& v : inst.x.data) v = gauss(rng);
    std::uniform_int_distribution<int> lab(0, C - 1);
    inst.labels.resize(n);
    for (int& l : inst.labels) l = lab(rng);
    return inst;
}

// smoothed-CE loss: analytic model gradients vs central differences.
inline double check_source_loss(std::mt19937_64& rng, double eps = 1e-4) {
    TinyInstance inst = random_instance(rng);
    Matrix smoothed = smooth_labels(inst.labels, 0.1, inst.model.class_count);
    ForwardCache cache = forward(inst.model, inst.x);
    auto [loss, grads] = smoothed_ce_loss(inst.model, cache, smoothed);
    (void)loss;
    auto params = param_ptrs(inst.model);
    auto fd = finite_diff_grad(
        [&] { return smoothed_ce_value(forward(inst.model, inst.x).probs, smoothed); }, params, eps);
    return relative_error(flatten(grads), fd);
}

// External loss: gradients wrt prompts and g_scale. P_t and P_V are held at
// their baseline values while prompts are perturbed (stop-gradient contract).
inline double check_external_loss(std::mt19937_64& rng, double eps = 1e-4,
                                  bool gauss_diag_student = false) {
    std::uniform_int_distribution<int> n_d(1, 4), c_d(2, 4), d_d(3, 6);
    int n = n_d(rng), C = c_d(rng), d_in = d_d(rng), d_joint = d_d(rng);
    Teacher teacher;
    teacher.tau = 3.0;
    teacher.vis_encoder = make_frozen_encoder(d_joint, d_in, rng);
    teacher.prompts = Matrix(C, d_joint);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (double& v : teacher.prompts.data) v = gauss(rng);
    Matrix x(n, d_in);
    for (double& v : x.data) v = gauss(rng);
    Matrix p_t(n, C);
    std::uniform_real_distribution<double> u(0.2, 1.0);
    for (std::size_t i = 0; i < p_t.rows; ++i) {
        double s = 0.0;
        for (std::size_t c = 0; c < p_t.cols; ++c) {
            p_t(i, c) = u(rng);
            s += p_t(i, c);
        }
        for (std::size_t c = 0; c < p_t.cols; ++c) p_t(i, c) /= s;
    }
    Vector g_scale(C);
    for (double& g : g_scale) g = u(rng) + 0.5;

    Matrix p_v = teacher_predict(teacher, x).probs;  // frozen baseline
    double beta = 0.003, gamma = 0.5;
    ExternalLossResult res = external_loss(teacher, x, p_t, p_v, g_scale, beta, gamma, gauss_diag_student);

    std::vector<double*> params;
    for (double& v : teacher.prompts.data) params.push_back(&v);
    for (double& g : g_scale) params.push_back(&g);
    auto fd = finite_diff_grad(
        [&] {
            return external_loss(teacher, x, p_t, p_v, g_scale, beta, gamma, gauss_diag_student).loss;
        },
        params, eps);
    std::vector<double> analytic = res.d_prompts.data;
    analytic.insert(analytic.end(), res.d_g_scale.begin(), res.d_g_scale.end());
    return relative_error(analytic, fd);
}

// Internal loss: gradients wrt the target model, teacher constant.
inline double check_internal_loss(std::mt19937_64& rng, double eps = 1e-4) {
    TinyInstance inst = random_instance(rng);
    int C = inst.model.class_count;
    Matrix p_fm(inst.x.rows, C);
    std::uniform_real_distribution<double> u(0.2, 1.0);
    for (std::size_t i = 0; i < p_fm.rows; ++i) {
        double s = 0.0;
        for (int c = 0; c < C; ++c) {
            p_fm(i, c) = u(rng);
            s += p_fm(i, c);
        }
        for (int c = 0; c < C; ++c) p_fm(i, c) /= s;
    }
    ForwardCache cache = forward(inst.model, inst.x);
    InternalLossResult res = internal_loss(inst.model, cache, p_fm, 0.4, 1.0);
    auto params = param_ptrs(inst.model);
    auto fd = finite_diff_grad(
        [&] {
            ForwardCache c2 = forward(inst.model, inst.x);
            return internal_loss(inst.model, c2, p_fm, 0.4, 1.0).loss;
        },
        params, eps);
    return relative_error(flatten(res.grads), fd);
}

struct SuiteResult {
    double max_source = 0.0, max_external = 0.0, max_internal = 0.0;
    bool pass(double tol) const {
        return max_source <= tol && max_external <= tol && max_internal <= tol;
    }
};

inline SuiteResult run_suite(std::uint64_t seed, int trials) {
    SuiteResult out;
    auto rng = make_stream(seed, "gradcheck");
    for (int t = 0; t < trials; ++t) {
        out.max_source = std::max(out.max_source, check_source_loss(rng));
        out.max_external = std::max(out.max_external, check_external_loss(rng));
        out.max_internal = std::max(out.max_internal, check_internal_loss(rng));
    }
    return out;
}

}  // namespace gradcheck
}  // namespace autos
