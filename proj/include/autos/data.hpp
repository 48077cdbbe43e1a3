#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "autos/common.hpp"
#include "autos/matrix.hpp"
#include "autos/rng.hpp"

namespace autos {

struct SampleRecord {
    std::string id;
    Vector features;
    std::optional<int> label;  // class index in [0, C)
};

struct LabeledDomain {
    std::string name;
    std::vector<SampleRecord> samples;  // every sample carries a label
    int class_count = 0;

    std::size_t size() const { return samples.size(); }
    std::size_t dim() const { return samples.empty() ? 0 : samples.front().features.size(); }
};

struct UnlabeledDomain {
    std::string name;
    std::vector<SampleRecord> samples;  // labels absent
    // Evaluation-only ground truth; the pipeline never reads it during training.
    std::optional<std::vector<int>> hidden_labels;

    std::size_t size() const { return samples.size(); }
    std::size_t dim() const { return samples.empty() ? 0 : samples.front().features.size(); }
};

struct SyntheticSpec {
    int source_count = 3;        // K
    int class_count = 2;         // C
    int dim = 8;                 // d
    double separation = 3.0;     // per-class mean separation scale
    double noise_sigma = 1.0;
    std::vector<int> irrelevant_domains;  // class means re-drawn, label-feature link broken
    int samples_per_class = 50;

    void validate() const {
        if (source_count < 1) throw ConfigError("synthetic K must be >= 1");
        if (class_count < 2) throw ConfigError("synthetic C must be >= 2");
        if (dim < 2) throw ConfigError("synthetic d must be >= 2");
        if (samples_per_class < 1) throw ConfigError("synthetic samples_per_class must be >= 1");
        if (!(noise_sigma > 0.0) || !std::isfinite(noise_sigma))
            throw ConfigError("synthetic noise_sigma must be positive");
        for (int k : irrelevant_domains)
            if (k < 0 || k >= source_count) throw ConfigError("irrelevant domain index out of range");
    }
};

namespace detail {

inline Matrix draw_class_means(const SyntheticSpec& spec, std::mt19937_64& rng) {
    Matrix means(static_cast<std::size_t>(spec.class_count), static_cast<std::size_t>(spec.dim));
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (double& v : means.data) v = spec.separation * gauss(rng);
    return means;
}

inline std::vector<SampleRecord> draw_domain_samples(const SyntheticSpec& spec, const Matrix& means,
                                                     const std::string& prefix, bool with_labels,
                                                     std::mt19937_64& rng, std::vector<int>* labels_out) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<SampleRecord> out;
    out.reserve(static_cast<std::size_t>(spec.class_count) * spec.samples_per_class);
    int idx = 0;
    for (int c = 0; c < spec.class_count; ++c) {
        for (int i = 0; i < spec.samples_per_class; ++i, ++idx) {
            SampleRecord rec;
            rec.id = prefix + std::to_string(idx);
            rec.features.resize(spec.dim);
            for (int j = 0; j < spec.dim; ++j)
                rec.features[j] = means(c, j) + spec.noise_sigma * gauss(rng);
            if (with_labels) rec.label = c;
            if (labels_out) labels_out->push_back(c);
            out.push_back(std::move(rec));
        }
    }
    return out;
}

}  // namespace detail

// K labeled sources plus one target sharing the relevant class-mean layout.
// Irrelevant sources get independently re-drawn means: internally learnable,
// misaligned with the target.
inline std::pair<std::vector<LabeledDomain>, UnlabeledDomain> generate_synthetic(
    const SyntheticSpec& spec, std::uint64_t seed) {
    spec.validate();

    auto means_rng = make_stream(seed, "data/means");
    Matrix shared_means = detail::draw_class_means(spec, means_rng);

    std::vector<LabeledDomain> sources;
    sources.reserve(spec.source_count);
    for (int k = 0; k < spec.source_count; ++k) {
        bool irrelevant = std::find(spec.irrelevant_domains.begin(), spec.irrelevant_domains.end(), k) !=
                          spec.irrelevant_domains.end();
        Matrix means = shared_means;
        if (irrelevant) {
            auto rng = make_stream(seed, "data/means/irrelevant/" + std::to_string(k));
            means = detail::draw_class_means(spec, rng);
        }
        auto rng = make_stream(seed, "data/source/" + std::to_string(k));
        LabeledDomain dom;
        dom.name = "source" + std::to_string(k);
        dom.class_count = spec.class_count;
        dom.samples = detail::draw_domain_samples(spec, means, "s" + std::to_string(k) + "_", true, rng, nullptr);
        sources.push_back(std::move(dom));
    }

    auto trng = make_stream(seed, "data/target");
    UnlabeledDomain target;
    target.name = "target";
    std::vector<int> hidden;
    target.samples = detail::draw_domain_samples(spec, shared_means, "t_", false, trng, &hidden);
    target.hidden_labels = std::move(hidden);
    return {std::move(sources), std::move(target)};
}

// Small disjoint labeled split from the same relevant layout, used only to
// seed the teacher's class prompts (its stand-in "pretraining" corpus).
inline LabeledDomain generate_pretrain_split(const SyntheticSpec& spec, std::uint64_t seed,
                                             int samples_per_class) {
    spec.validate();
    auto means_rng = make_stream(seed, "data/means");
    Matrix shared_means = detail::draw_class_means(spec, means_rng);
    SyntheticSpec small = spec;
    small.samples_per_class = samples_per_class;
    auto rng = make_stream(seed, "data/pretrain");
    LabeledDomain dom;
    dom.name = "pretrain";
    dom.class_count = spec.class_count;
    dom.samples = detail::draw_domain_samples(small, shared_means, "p_", true, rng, nullptr);
    return dom;
}

// ---- CSV feature tables --------------------------------------------------
// Schema: header "id,label,f0,f1,...,f{d-1}"; label empty for unlabeled rows.

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

inline std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace detail

struct FeatureTable {
    std::vector<SampleRecord> samples;
    bool has_labels = false;
    int max_label = -1;
};

inline FeatureTable load_feature_table_rows(const std::string& path, bool has_labels) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty file " + path);
    auto header = detail::split_csv_line(line);
    if (header.size() < 3 || header[0] != "id" || header[1] != "label")
        throw DataError(path + ": header must be id,label,f0,...");
    std::size_t d = header.size() - 2;

    FeatureTable table;
    table.has_labels = has_labels;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw DataError(path + " row " + std::to_string(row) + ": ragged row");
        SampleRecord rec;
        rec.id = cells[0];
        if (has_labels) {
            if (cells[1].empty())
                throw DataError(path + " row " + std::to_string(row) + ": missing label");
            try {
                rec.label = std::stoi(cells[1]);
            } catch (const std::exception&) {
                throw DataError(path + " row " + std::to_string(row) + ": bad label '" + cells[1] + "'");
            }
            if (*rec.label < 0)
                throw DataError(path + " row " + std::to_string(row) + ": negative label");
            table.max_label = std::max(table.max_label, *rec.label);
        }
        rec.features.resize(d);
        for (std::size_t j = 0; j < d; ++j) {
            try {
                rec.features[j] = std::stod(cells[2 + j]);
            } catch (const std::exception&) {
                throw DataError(path + " row " + std::to_string(row) + ": bad value '" + cells[2 + j] + "'");
            }
            if (!std::isfinite(rec.features[j]))
                throw DataError(path + " row " + std::to_string(row) + ": non-finite feature");
        }
        table.samples.push_back(std::move(rec));
    }
    return table;
}

inline LabeledDomain load_labeled_domain(const std::string& path, const std::string& name) {
    auto table = load_feature_table_rows(path, true);
    LabeledDomain dom;
    dom.name = name;
    dom.samples = std::move(table.samples);
    dom.class_count = table.max_label + 1;
    if (dom.samples.empty()) throw DataError(path + ": no rows");
    return dom;
}

inline UnlabeledDomain load_unlabeled_domain(const std::string& path, const std::string& name) {
    auto table = load_feature_table_rows(path, false);
    UnlabeledDomain dom;
    dom.name = name;
    dom.samples = std::move(table.samples);
    if (dom.samples.empty()) throw DataError(path + ": no rows");
    return dom;
}

inline void save_feature_table(const std::vector<SampleRecord>& samples, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    std::size_t d = samples.empty() ? 0 : samples.front().features.size();
    out << "id,label";
    for (std::size_t j = 0; j < d; ++j) out << ",f" << j;
    out << "\n";
    for (const auto& rec : samples) {
        out << rec.id << ",";
        if (rec.label) out << *rec.label;
        for (double v : rec.features) out << "," << detail::format_double(v);
        out << "\n";
    }
}

// ---- Standardization -----------------------------------------------------

struct Standardizer {
    Vector mean;
    Vector inv_std;

    Vector apply(const Vector& x) const {
        Vector out(x.size());
        for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - mean[j]) * inv_std[j];
        return out;
    }
};

// Per-feature z-scoring with statistics pooled over all initial source domains.
inline Standardizer fit_standardizer(const std::vector<LabeledDomain>& sources) {
    std::size_t d = 0, n = 0;
    for (const auto& dom : sources) {
        if (d == 0) d = dom.dim();
        n += dom.size();
    }
    if (n == 0 || d == 0) throw DataError("no source samples to standardize");
    Standardizer st;
    st.mean.assign(d, 0.0);
    for (const auto& dom : sources)
        for (const auto& rec : dom.samples) axpy(1.0, rec.features, st.mean);
    for (double& m : st.mean) m /= static_cast<double>(n);
    Vector var(d, 0.0);
    for (const auto& dom : sources)
        for (const auto& rec : dom.samples)
            for (std::size_t j = 0; j < d; ++j) {
                double delta = rec.features[j] - st.mean[j];
                var[j] += delta * delta;
            }
    st.inv_std.resize(d);
    for (std::size_t j = 0; j < d; ++j) {
        double s = std::sqrt(var[j] / static_cast<double>(n));
        st.inv_std[j] = s > 1e-12 ? 1.0 / s : 1.0;
    }
    return st;
}

inline Matrix feature_matrix(const std::vector<SampleRecord>& samples, const Standardizer* st = nullptr) {
    if (samples.empty()) return {};
    Matrix x(samples.size(), samples.front().features.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        Vector f = st ? st->apply(samples[i].features) : samples[i].features;
        if (f.size() != x.cols) throw ShapeError("inconsistent feature dims");
        std::copy(f.begin(), f.end(), x.row(i));
    }
    return x;
}

}  // namespace autos
