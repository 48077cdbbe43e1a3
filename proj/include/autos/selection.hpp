#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "autos/common.hpp"
#include "autos/data.hpp"
#include "autos/matrix.hpp"
#include "autos/nn.hpp"

namespace autos {

enum class RadiusMetric { Mean, Rms, Max };

inline RadiusMetric radius_metric_from_string(const std::string& s) {
    if (s == "mean") return RadiusMetric::Mean;
    if (s == "rms") return RadiusMetric::Rms;
    if (s == "max") return RadiusMetric::Max;
    throw ConfigError("unknown radius metric '" + s + "'");
}

// Per-(domain, class) statistics driving selection. Cells with no source
// samples of a class are marked invalid and skipped downstream.
struct ClusterStats {
    Matrix centers;                          // C x hidden, unit rows
    std::vector<double> radius_s;            // per class
    std::vector<double> radius_t;
    std::vector<double> d_s;
    std::vector<double> d_t;
    std::vector<int> target_counts;          // confident targets per class
    std::vector<double> density;
    std::vector<bool> valid;                 // source class non-empty
};

struct SelectionOutcome {
    std::vector<std::vector<int>> assignments;          // per domain: target class indices
    std::vector<std::vector<std::size_t>> confident_src;
    std::vector<std::vector<std::size_t>> confident_tgt;
    std::vector<std::vector<int>> confident_tgt_labels;
    std::vector<LabeledDomain> renewed_domains;
    Vector omega1, omega2, omega;
    std::vector<bool> keep;
    int kept_count = 0;
};

// Rows of the decision layer, L2-normalized: one prototype per class.
inline Matrix cluster_centers(const Matrix& decision_weights) {
    Matrix centers = decision_weights;
    for (std::size_t c = 0; c < centers.rows; ++c) {
        double n = norm2(centers.row(c), centers.cols);
        if (n <= 1e-300) throw NumericError("degenerate classifier: zero weight row " + std::to_string(c));
        for (std::size_t j = 0; j < centers.cols; ++j) centers(c, j) /= n;
    }
    return centers;
}

// 1 - cos(a, b): 0 for parallel, 1 orthogonal, 2 opposite.
inline double cosine_distance(const double* a, const double* b, std::size_t n) {
    double na = norm2(a, n), nb = norm2(b, n);
    if (na <= 1e-300 || nb <= 1e-300) throw NumericError("cosine_distance: zero vector");
    return 1.0 - dot(a, b, n) / (na * nb);
}

inline double cosine_distance(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) throw ShapeError("cosine_distance dims");
    return cosine_distance(a.data(), b.data(), a.size());
}

// Nearest center per sample; ties break to the lowest class index.
inline std::vector<int> assign_targets(const Matrix& features, const Matrix& centers) {
    if (features.cols != centers.cols) throw ShapeError("assign_targets dims");
    std::vector<int> out(features.rows);
    for (std::size_t i = 0; i < features.rows; ++i) {
        int best = 0;
        double best_d = cosine_distance(features.row(i), centers.row(0), features.cols);
        for (std::size_t c = 1; c < centers.rows; ++c) {
            double d = cosine_distance(features.row(i), centers.row(c), features.cols);
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(c);
            }
        }
        out[i] = best;
    }
    return out;
}

inline double cluster_radius(const std::vector<double>& distances, RadiusMetric metric) {
    if (distances.empty()) throw EmptyCluster("cluster_radius on empty distance list");
    switch (metric) {
        case RadiusMetric::Mean: {
            double s = 0.0;
            for (double d : distances) s += d;
            return s / static_cast<double>(distances.size());
        }
        case RadiusMetric::Rms: {
            double s = 0.0;
            for (double d : distances) s += d * d;
            return std::sqrt(s / static_cast<double>(distances.size()));
        }
        case RadiusMetric::Max:
            return *std::max_element(distances.begin(), distances.end());
    }
    throw ConfigError("bad radius metric");
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw EmptyCluster("median of empty list");
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// s_adj = median within-class source-to-center distance; t_adj = r_s / 3.
inline std::pair<double, double> compute_adjustments(const std::vector<double>& source_dists, double r_s) {
    return {median(source_dists), r_s / 3.0};
}

// d_s = alpha r_s + s_adj ; d_t = max(alpha r_s - t_adj, 0)
inline std::pair<double, double> thresholds(double r_s, double alpha, double s_adj, double t_adj) {
    return {alpha * r_s + s_adj, std::max(alpha * r_s - t_adj, 0.0)};
}

// rho = n / ((pi^{d/2} / Gamma(d/2 + 1)) r^e), evaluated in log space.
// e = 1 is the printed form; e = d the true ball volume.
inline double target_density(int count, double radius, int dim, int exponent) {
    if (count < 0) throw ConfigError("target_density: negative count");
    if (count == 0) return 0.0;
    if (!(radius > 0.0)) throw NumericError("target_density: positive count with zero radius");
    double log_coeff = 0.5 * dim * std::log(M_PI) - std::lgamma(0.5 * dim + 1.0) +
                       static_cast<double>(exponent) * std::log(radius);
    double log_rho = std::log(static_cast<double>(count)) - log_coeff;
    double rho = std::exp(log_rho);
    if (!std::isfinite(rho)) throw NumericError("target_density: overflow");
    return rho;
}

inline double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

// omega1 = confident-target fraction, omega2 = mean sigmoid(rho)
// over valid classes, omega = lambda omega1 + (1 - lambda) omega2.
struct DomainWeights {
    Vector omega1, omega2, omega;
};

inline DomainWeights domain_weights(const std::vector<int>& n_t_k, int n,
                                    const std::vector<std::vector<double>>& rho,
                                    const std::vector<std::vector<bool>>& valid, double lambda) {
    if (n <= 0) throw ConfigError("domain_weights: target count must be positive");
    if (lambda < 0.0 || lambda > 1.0) throw ConfigError("domain_weights: lambda must be in [0,1]");
    std::size_t K = n_t_k.size();
    DomainWeights w{Vector(K), Vector(K), Vector(K)};
    for (std::size_t k = 0; k < K; ++k) {
        w.omega1[k] = static_cast<double>(n_t_k[k]) / static_cast<double>(n);
        double sum = 0.0;
        int cnt = 0;
        for (std::size_t c = 0; c < rho[k].size(); ++c) {
            if (!valid[k][c]) continue;
            sum += stable_sigmoid(rho[k][c]);
            ++cnt;
        }
        w.omega2[k] = cnt > 0 ? sum / cnt : 0.0;
        w.omega[k] = lambda * w.omega1[k] + (1.0 - lambda) * w.omega2[k];
    }
    return w;
}

// Keep iff omega_k >= 1/K - sigma.
inline std::vector<bool> keep_rule(const Vector& omega, int live_count, double sigma) {
    if (live_count < 1) throw ConfigError("keep_rule: K must be >= 1");
    if (sigma < 0.0) throw ConfigError("keep_rule: sigma must be >= 0");
    double threshold = 1.0 / static_cast<double>(live_count) - sigma;
    std::vector<bool> keep(omega.size());
    for (std::size_t k = 0; k < omega.size(); ++k) keep[k] = omega[k] >= threshold;
    return keep;
}

// Per-domain selection against one source model. Confidence is strict "<".
struct DomainSelection {
    ClusterStats stats;
    std::vector<int> assignments;
    std::vector<std::size_t> confident_src;
    std::vector<std::size_t> confident_tgt;
    std::vector<int> confident_tgt_labels;
};

inline DomainSelection select_domain(const Model& model, const LabeledDomain& source,
                                     const Matrix& source_x, const Matrix& target_x,
                                     RadiusMetric metric, double alpha, int density_exponent_dim,
                                     bool literal_exponent) {
    DomainSelection sel;
    int C = model.class_count;
    sel.stats.centers = cluster_centers(model.decision.weight);

    Matrix fs = forward(model, source_x).features();
    Matrix ft = forward(model, target_x).features();
    sel.assignments = assign_targets(ft, sel.stats.centers);

    sel.stats.radius_s.assign(C, 0.0);
    sel.stats.radius_t.assign(C, 0.0);
    sel.stats.d_s.assign(C, 0.0);
    sel.stats.d_t.assign(C, 0.0);
    sel.stats.target_counts.assign(C, 0);
    sel.stats.density.assign(C, 0.0);
    sel.stats.valid.assign(C, false);

    std::vector<std::vector<double>> src_dists(C), tgt_dists(C);
    std::vector<double> sample_src_dist(source.size());
    for (std::size_t i = 0; i < source.size(); ++i) {
        int c = *source.samples[i].label;
        double d = cosine_distance(fs.row(i), sel.stats.centers.row(c), fs.cols);
        src_dists[c].push_back(d);
        sample_src_dist[i] = d;
    }
    std::vector<double> sample_tgt_dist(target_x.rows);
    for (std::size_t i = 0; i < target_x.rows; ++i) {
        int c = sel.assignments[i];
        double d = cosine_distance(ft.row(i), sel.stats.centers.row(c), ft.cols);
        tgt_dists[c].push_back(d);
        sample_tgt_dist[i] = d;
    }

    int feature_dim = static_cast<int>(fs.cols);
    for (int c = 0; c < C; ++c) {
        if (src_dists[c].empty()) continue;  // EmptyCluster: cell skipped
        sel.stats.valid[c] = true;
        sel.stats.radius_s[c] = cluster_radius(src_dists[c], metric);
        auto [s_adj, t_adj] = compute_adjustments(src_dists[c], sel.stats.radius_s[c]);
        auto [d_s, d_t] = thresholds(sel.stats.radius_s[c], alpha, s_adj, t_adj);
        sel.stats.d_s[c] = d_s;
        sel.stats.d_t[c] = d_t;
        if (!tgt_dists[c].empty()) sel.stats.radius_t[c] = cluster_radius(tgt_dists[c], metric);
    }

    for (std::size_t i = 0; i < source.size(); ++i) {
        int c = *source.samples[i].label;
        if (sel.stats.valid[c] && sample_src_dist[i] < sel.stats.d_s[c]) sel.confident_src.push_back(i);
    }
    for (std::size_t i = 0; i < target_x.rows; ++i) {
        int c = sel.assignments[i];
        if (sel.stats.valid[c] && sample_tgt_dist[i] < sel.stats.d_t[c]) {
            sel.confident_tgt.push_back(i);
            sel.confident_tgt_labels.push_back(c);
            sel.stats.target_counts[c] += 1;
        }
    }

    int exponent = literal_exponent ? 1 : (density_exponent_dim > 0 ? density_exponent_dim : feature_dim);
    for (int c = 0; c < C; ++c) {
        if (!sel.stats.valid[c]) continue;
        if (sel.stats.target_counts[c] > 0 && sel.stats.radius_t[c] > 0.0)
            sel.stats.density[c] =
                target_density(sel.stats.target_counts[c], sel.stats.radius_t[c], feature_dim, exponent);
    }
    return sel;
}

// D'^s_k: confident sources plus pseudo-labeled confident targets.
inline LabeledDomain renew_domain(const LabeledDomain& source, const UnlabeledDomain& target,
                                  const std::vector<std::size_t>& confident_src,
                                  const std::vector<std::size_t>& confident_tgt,
                                  const std::vector<int>& tgt_labels) {
    if (confident_src.empty() && confident_tgt.empty())
        throw EmptyDomain("renewal of " + source.name + " is empty");
    LabeledDomain out;
    out.name = source.name;
    out.class_count = source.class_count;
    out.samples.reserve(confident_src.size() + confident_tgt.size());
    std::set<std::string> present;
    for (std::size_t i : confident_src) {
        out.samples.push_back(source.samples[i]);
        present.insert(source.samples[i].id);
    }
    // target rows pulled in by an earlier renewal keep their ids; the renewed
    // domain is a set, so they must not be added twice
    for (std::size_t j = 0; j < confident_tgt.size(); ++j) {
        SampleRecord rec = target.samples[confident_tgt[j]];
        if (!present.insert(rec.id).second) continue;
        rec.label = tgt_labels[j];
        out.samples.push_back(std::move(rec));
    }
    if (out.samples.empty()) throw EmptyDomain("renewal of " + source.name + " is empty");
    return out;
}

}  // namespace autos
