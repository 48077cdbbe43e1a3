#pragma once

#include <vector>

#include "autos/common.hpp"
#include "autos/matrix.hpp"
#include "autos/nn.hpp"

namespace autos {

// Renormalize weights over kept domains so the aggregate stays in the convex
// hull of the source models even after drops.
inline Vector renormalize_weights(const Vector& omega, const std::vector<bool>& keep) {
    if (omega.size() != keep.size()) throw ShapeError("renormalize_weights dims");
    double sum = 0.0;
    for (std::size_t k = 0; k < omega.size(); ++k)
        if (keep[k]) sum += omega[k];
    if (!(sum > 0.0)) throw NumericError("aggregate: no kept domain with positive weight");
    Vector out(omega.size(), 0.0);
    for (std::size_t k = 0; k < omega.size(); ++k)
        if (keep[k]) out[k] = omega[k] / sum;
    return out;
}

inline Model aggregate(const std::vector<Model>& models, const Vector& omega,
                       const std::vector<bool>& keep) {
    if (models.empty() || models.size() != omega.size() || models.size() != keep.size())
        throw ShapeError("aggregate: mismatched inputs");
    bool any = false;
    for (bool k : keep) any = any || k;
    if (!any) throw ConfigError("aggregate: zero kept domains");

    Vector w = renormalize_weights(omega, keep);
    Model out = models.front();
    auto zero_layer = [](AffineLayer& l) {
        std::fill(l.weight.data.begin(), l.weight.data.end(), 0.0);
        std::fill(l.bias.begin(), l.bias.end(), 0.0);
    };
    for (auto& l : out.phi) zero_layer(l);
    zero_layer(out.decision);

    for (std::size_t k = 0; k < models.size(); ++k) {
        if (!keep[k] || w[k] == 0.0) continue;
        const Model& m = models[k];
        if (m.d_in != out.d_in || m.hidden != out.hidden || m.class_count != out.class_count ||
            m.phi.size() != out.phi.size())
            throw ShapeError("aggregate: model dims differ");
        for (std::size_t li = 0; li < out.phi.size(); ++li) {
            axpy(w[k], m.phi[li].weight.data, out.phi[li].weight.data);
            axpy(w[k], m.phi[li].bias, out.phi[li].bias);
        }
        axpy(w[k], m.decision.weight.data, out.decision.weight.data);
        axpy(w[k], m.decision.bias, out.decision.bias);
    }
    return out;
}

// P^t = softmax(P(Phi(x^t)))
inline Matrix predict_target(const Model& m, const Matrix& x_t) {
    return forward(m, x_t).probs;
}

}  // namespace autos
