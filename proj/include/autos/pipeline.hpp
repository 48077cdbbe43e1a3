#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "autos/adapt.hpp"
#include "autos/config.hpp"
#include "autos/data.hpp"
#include "autos/federate.hpp"
#include "autos/nn.hpp"
#include "autos/selection.hpp"

namespace autos {

struct EpochRecord {
    int epoch = 0;
    std::vector<bool> kept;        // per original domain, ratcheted
    Vector omega1, omega2, omega;  // zero for dropped domains
    std::vector<int> n_confident_src, n_confident_tgt;
    double l_src = 0.0, l_ex = 0.0, l_in = 0.0;
    double accuracy = -1.0;  // -1 when hidden labels are absent
};

struct RunReport {
    std::map<std::string, std::string> config_echo;
    std::uint64_t seed = 0;
    std::vector<std::string> domain_names;
    std::vector<EpochRecord> epochs;
    int final_kept_count = 0;
    double final_accuracy = -1.0;
    double ce_teacher_before = 0.0;
    double ce_teacher_after = 0.0;
    Vector final_agg_weights;
    std::vector<std::string> prediction_ids;
    std::vector<int> predictions;
    Vector prediction_max_prob;
    Model final_model;
};

inline double evaluate(const std::vector<int>& preds, const std::vector<int>& hidden) {
    if (preds.size() != hidden.size()) throw DataError("evaluate: length mismatch");
    if (preds.empty()) throw DataError("evaluate: empty inputs");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (preds[i] == hidden[i]) ++hit;
    return static_cast<double>(hit) / static_cast<double>(preds.size());
}

namespace detail {

inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    return idx;
}

// One pass of minibatch SGD with the smoothed cross-entropy loss.
inline double train_source_pass(Model& model, const LabeledDomain& domain, const Standardizer& st,
                                const Hyperparams& hp, double eta, std::mt19937_64& rng) {
    Matrix x = feature_matrix(domain.samples, &st);
    std::vector<int> labels(domain.size());
    for (std::size_t i = 0; i < domain.size(); ++i) labels[i] = *domain.samples[i].label;
    auto order = shuffled_indices(domain.size(), rng);
    TrainState state = make_state(model);
    double total = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += hp.batch_size, ++batches) {
        std::size_t end = std::min(order.size(), start + hp.batch_size);
        Matrix xb(end - start, x.cols);
        std::vector<int> lb(end - start);
        for (std::size_t i = start; i < end; ++i) {
            std::copy(x.row(order[i]), x.row(order[i]) + x.cols, xb.row(i - start));
            lb[i - start] = labels[order[i]];
        }
        ForwardCache cache = forward(model, xb);
        Matrix smoothed = smooth_labels(lb, hp.mu, model.class_count);
        auto [loss, grads] = smoothed_ce_loss(model, cache, smoothed);
        if (!std::isfinite(loss)) throw NumericError("source loss non-finite");
        total += loss;
        sgd_step(model, grads, state, eta, hp.momentum);
    }
    return batches > 0 ? total / batches : 0.0;
}

}  // namespace detail

inline RunReport run_pipeline(const RunConfig& cfg) {
    RunReport report;
    report.seed = cfg.seed;
    report.config_echo = cfg.echo;
    report.config_echo["seed"] = std::to_string(cfg.seed);

    // ---- data ----
    std::vector<LabeledDomain> sources;
    UnlabeledDomain target;
    if (cfg.use_synthetic) {
        auto [src, tgt] = generate_synthetic(cfg.synthetic, cfg.seed);
        sources = std::move(src);
        target = std::move(tgt);
    } else {
        for (std::size_t k = 0; k < cfg.source_paths.size(); ++k)
            sources.push_back(load_labeled_domain(cfg.source_paths[k], "source" + std::to_string(k)));
        target = load_unlabeled_domain(cfg.target_path, "target");
        int C = 0;
        for (auto& s : sources) C = std::max(C, s.class_count);
        for (auto& s : sources) s.class_count = C;
    }
    const int K = static_cast<int>(sources.size());
    const int C = sources.front().class_count;
    const int d_in = static_cast<int>(sources.front().dim());
    for (const auto& s : sources)
        if (static_cast<int>(s.dim()) != d_in) throw DataError("source feature dims differ");
    if (static_cast<int>(target.dim()) != d_in) throw DataError("target feature dim differs from sources");
    const std::size_t n_target = target.size();

    Standardizer st = fit_standardizer(sources);
    Matrix x_t = feature_matrix(target.samples, &st);

    // ---- models & teacher ----
    auto init_rng = make_stream(cfg.seed, "init");
    Model global = make_model(d_in, cfg.hidden_width, C, init_rng);

    auto teacher_rng = make_stream(cfg.seed, "teacher");
    Teacher teacher;
    teacher.tau = cfg.hp.tau;
    teacher.vis_encoder = make_frozen_encoder(cfg.d_joint, d_in, teacher_rng);
    if (cfg.use_synthetic) {
        LabeledDomain pretrain = generate_pretrain_split(cfg.synthetic, cfg.seed, 10);
        Matrix px = feature_matrix(pretrain.samples, &st);
        std::vector<int> pl(pretrain.size());
        for (std::size_t i = 0; i < pretrain.size(); ++i) pl[i] = *pretrain.samples[i].label;
        teacher.prompts = init_prompts(teacher.vis_encoder, px, pl, C);
    } else {
        // no pretraining split available: pooled source class means
        std::vector<int> pl;
        std::vector<SampleRecord> pooled;
        for (const auto& s : sources)
            for (const auto& rec : s.samples) {
                pooled.push_back(rec);
                pl.push_back(*rec.label);
            }
        Matrix px = feature_matrix(pooled, &st);
        teacher.prompts = init_prompts(teacher.vis_encoder, px, pl, C);
    }
    Vector g_scale(C, 1.0);

    // ---- epoch loop ----
    std::vector<bool> live(K, true);  // ratchet: drops are permanent
    std::vector<LabeledDomain> current(sources);
    std::vector<Model> domain_models(K, global);
    std::vector<DomainSelection> cached_sel(K);  // reused by the source-free mode
    bool sf_cached = false;
    std::vector<bool> prev_kept = live;

    const bool selection_on = cfg.mode != RunMode::Fedavg;
    const bool lex_on = cfg.mode != RunMode::WoLex;
    const bool lin_on = cfg.mode != RunMode::WoLin;
    const double alpha = cfg.effective_alpha();

    for (int epoch = 1; epoch <= cfg.hp.epochs; ++epoch) {
        double p = static_cast<double>(epoch - 1) / static_cast<double>(cfg.hp.epochs);
        auto [eta, sigma] = schedules(cfg.hp.eta0, p, epoch);
        if (cfg.sigma_mode == SigmaMode::Never) sigma = std::numeric_limits<double>::infinity();

        EpochRecord rec;
        rec.epoch = epoch;
        rec.omega1.assign(K, 0.0);
        rec.omega2.assign(K, 0.0);
        rec.omega.assign(K, 0.0);
        rec.n_confident_src.assign(K, 0);
        rec.n_confident_tgt.assign(K, 0);

        // source training: one pass per live domain, from the shared global
        bool train_sources =
            cfg.mode != RunMode::WoL && (cfg.mode != RunMode::AutosSf || epoch == 1);
        double l_src_sum = 0.0;
        int l_src_count = 0;
        for (int k = 0; k < K; ++k) {
            if (!live[k]) continue;
            if (train_sources) {
                domain_models[k] = global;
                auto rng = make_stream(cfg.seed, "train/epoch" + std::to_string(epoch) + "/k" +
                                                     std::to_string(k));
                l_src_sum +=
                    detail::train_source_pass(domain_models[k], current[k], st, cfg.hp, eta, rng);
                ++l_src_count;
            } else if (cfg.mode == RunMode::WoL) {
                domain_models[k] = global;
            }
        }
        rec.l_src = l_src_count > 0 ? l_src_sum / l_src_count : 0.0;

        // selection and renewal
        std::vector<bool> kept = live;
        Vector omega_for_agg(K, 0.0);
        if (selection_on) {
            std::vector<int> n_t_k(K, 0);
            std::vector<std::vector<double>> rho(K);
            std::vector<std::vector<bool>> valid(K);
            std::vector<DomainSelection> sels(K);
            for (int k = 0; k < K; ++k) {
                if (!live[k]) {
                    rho[k].assign(C, 0.0);
                    valid[k].assign(C, false);
                    continue;
                }
                if (cfg.mode == RunMode::AutosSf && sf_cached) {
                    sels[k] = cached_sel[k];
                } else {
                    Matrix sx = feature_matrix(current[k].samples, &st);
                    sels[k] = select_domain(domain_models[k], current[k], sx, x_t, cfg.radius_metric,
                                            alpha, 0, cfg.density_exponent_literal);
                }
                n_t_k[k] = static_cast<int>(sels[k].confident_tgt.size());
                rho[k] = sels[k].stats.density;
                valid[k].assign(sels[k].stats.valid.begin(), sels[k].stats.valid.end());
                rec.n_confident_src[k] = static_cast<int>(sels[k].confident_src.size());
                rec.n_confident_tgt[k] = n_t_k[k];
            }
            if (cfg.mode == RunMode::AutosSf && !sf_cached) {
                cached_sel = sels;
                sf_cached = true;
            }

            DomainWeights w =
                domain_weights(n_t_k, static_cast<int>(n_target), rho, valid, cfg.hp.lambda);
            Vector omega_live(K, 0.0);
            for (int k = 0; k < K; ++k) omega_live[k] = live[k] ? w.omega[k] : 0.0;
            // the 1/K floor always refers to the original domain count
            std::vector<bool> keep_now = keep_rule(omega_live, K, sigma);
            for (int k = 0; k < K; ++k) kept[k] = live[k] && keep_now[k];
            // never drop everything: fall back to the argmax-omega domain
            if (std::count(kept.begin(), kept.end(), true) == 0) {
                int best = -1;
                for (int k = 0; k < K; ++k)
                    if (live[k] && (best < 0 || omega_live[k] > omega_live[best])) best = k;
                if (best < 0) throw NumericError("all source domains dropped");
                kept[best] = true;
            }
            for (int k = 0; k < K; ++k) {
                if (!live[k]) continue;
                rec.omega1[k] = w.omega1[k];
                rec.omega2[k] = w.omega2[k];
                rec.omega[k] = w.omega[k];
                omega_for_agg[k] = w.omega[k];
            }

            // renew domains for the next epoch's training pass
            if (cfg.mode != RunMode::AutosSf) {
                for (int k = 0; k < K; ++k) {
                    if (!kept[k]) continue;
                    const auto& s = sels[k];
                    std::vector<std::size_t> tgt_idx = s.confident_tgt;
                    std::vector<int> tgt_lab = s.confident_tgt_labels;
                    if (cfg.mode == RunMode::WoTarcof) {
                        tgt_idx.clear();
                        tgt_lab.clear();
                    }
                    try {
                        current[k] = renew_domain(current[k], target, s.confident_src, tgt_idx, tgt_lab);
                    } catch (const EmptyDomain&) {
                        kept[k] = false;  // nothing confident left: droppable
                    }
                }
                if (std::count(kept.begin(), kept.end(), true) == 0) {
                    int best = -1;
                    for (int k = 0; k < K; ++k)
                        if (live[k] && (best < 0 || omega_for_agg[k] > omega_for_agg[best])) best = k;
                    kept[best] = true;
                }
            }
            live = kept;
        } else {
            for (int k = 0; k < K; ++k) omega_for_agg[k] = live[k] ? 1.0 : 0.0;
            for (int k = 0; k < K; ++k) {
                double eq = live[k] ? 1.0 / std::count(live.begin(), live.end(), true) : 0.0;
                rec.omega1[k] = rec.omega2[k] = rec.omega[k] = eq;
            }
        }
        rec.kept = live;

        // aggregation. The source-free mode keeps its adapted global
        // unless the kept set changed, since its per-domain models are frozen.
        bool do_aggregate = true;
        if (cfg.mode == RunMode::AutosSf && epoch > 1 && live == prev_kept) do_aggregate = false;
        if (do_aggregate) {
            if (!selection_on)
                for (int k = 0; k < K; ++k) omega_for_agg[k] = live[k] ? 1.0 : 0.0;
            global = aggregate(domain_models, omega_for_agg, live);
            report.final_agg_weights = renormalize_weights(omega_for_agg, live);
        }
        prev_kept = live;

        // teacher-guided adaptation
        if (epoch == 1)
            report.ce_teacher_before =
                teacher_student_ce(teacher_predict(teacher, x_t).probs, predict_target(global, x_t));
        auto adapt_rng = make_stream(cfg.seed, "adapt/epoch" + std::to_string(epoch));
        auto order = detail::shuffled_indices(n_target, adapt_rng);
        TrainState adapt_state = make_state(global);
        AdaptEpochTrace trace =
            adapt_epoch(global, adapt_state, teacher, g_scale, x_t, order, cfg.hp.batch_size, eta,
                        cfg.hp, lex_on, lin_on, cfg.gauss_diag_student);
        rec.l_ex = trace.mean_l_ex;
        rec.l_in = trace.mean_l_in;

        if (target.hidden_labels)
            rec.accuracy = evaluate(final_labels(global, x_t), *target.hidden_labels);
        report.epochs.push_back(std::move(rec));
    }

    // ---- final labeling ----
    report.ce_teacher_after =
        teacher_student_ce(teacher_predict(teacher, x_t).probs, predict_target(global, x_t));
    Matrix probs = predict_target(global, x_t);
    report.predictions = final_labels(global, x_t);
    report.prediction_ids.reserve(n_target);
    report.prediction_max_prob.resize(n_target);
    for (std::size_t i = 0; i < n_target; ++i) {
        report.prediction_ids.push_back(target.samples[i].id);
        report.prediction_max_prob[i] = probs(i, report.predictions[i]);
    }
    if (target.hidden_labels) report.final_accuracy = evaluate(report.predictions, *target.hidden_labels);
    report.final_kept_count = static_cast<int>(std::count(live.begin(), live.end(), true));
    for (int k = 0; k < K; ++k) report.domain_names.push_back(sources[k].name);
    report.final_model = global;
    return report;
}

// ---- report serialization -------------------------------------------------

inline nlohmann::json report_to_json(const RunReport& r) {
    nlohmann::json j;
    j["config"] = r.config_echo;
    j["seed"] = r.seed;
    j["domains"] = r.domain_names;
    j["epochs"] = nlohmann::json::array();
    for (const auto& e : r.epochs) {
        nlohmann::json ej;
        ej["epoch"] = e.epoch;
        ej["kept"] = e.kept;
        ej["omega1"] = e.omega1;
        ej["omega2"] = e.omega2;
        ej["omega"] = e.omega;
        ej["n_confident_src"] = e.n_confident_src;
        ej["n_confident_tgt"] = e.n_confident_tgt;
        ej["l_src"] = e.l_src;
        ej["l_ex"] = e.l_ex;
        ej["l_in"] = e.l_in;
        ej["accuracy"] = e.accuracy;
        j["epochs"].push_back(std::move(ej));
    }
    j["final"] = {{"kept_count", r.final_kept_count},
                  {"accuracy", r.final_accuracy},
                  {"ce_teacher_before", r.ce_teacher_before},
                  {"ce_teacher_after", r.ce_teacher_after},
                  {"agg_weights", r.final_agg_weights}};
    return j;
}

struct EmittedFiles {
    std::string report_json, selection_csv, losses_csv, predictions_csv, model_json;
};

inline EmittedFiles emit_report(const RunReport& r, const RunConfig& cfg) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    std::string stem = (fs::path(cfg.out_dir) / ("run_" + config_hash(cfg))).string();
    EmittedFiles files{stem + "_report.json", stem + "_selection.csv", stem + "_losses.csv",
                       stem + "_predictions.csv", stem + "_model.json"};

    {
        std::ofstream out(files.report_json);
        if (!out) throw DataError("cannot write " + files.report_json);
        out << report_to_json(r).dump(2) << "\n";
    }
    {
        std::ofstream out(files.selection_csv);
        if (!out) throw DataError("cannot write " + files.selection_csv);
        out << "epoch,domain,omega1,omega2,omega,kept,n_confident_src,n_confident_tgt\n";
        std::vector<bool> was_live(r.domain_names.size(), true);
        for (const auto& e : r.epochs) {
            for (std::size_t k = 0; k < r.domain_names.size(); ++k) {
                if (!was_live[k]) continue;  // one row per live domain per epoch
                out << e.epoch << "," << r.domain_names[k] << ","
                    << detail::format_double(e.omega1[k]) << ","
                    << detail::format_double(e.omega2[k]) << "," << detail::format_double(e.omega[k])
                    << "," << (e.kept[k] ? 1 : 0) << "," << e.n_confident_src[k] << ","
                    << e.n_confident_tgt[k] << "\n";
            }
            for (std::size_t k = 0; k < was_live.size(); ++k) was_live[k] = e.kept[k];
        }
    }
    {
        std::ofstream out(files.losses_csv);
        if (!out) throw DataError("cannot write " + files.losses_csv);
        out << "epoch,L_src,L_ex,L_in,target_accuracy\n";
        for (const auto& e : r.epochs) {
            out << e.epoch << "," << detail::format_double(e.l_src) << ","
                << detail::format_double(e.l_ex) << "," << detail::format_double(e.l_in) << ",";
            if (e.accuracy >= 0.0) out << detail::format_double(e.accuracy);
            out << "\n";
        }
    }
    {
        std::ofstream out(files.predictions_csv);
        if (!out) throw DataError("cannot write " + files.predictions_csv);
        out << "id,pred_label,max_prob\n";
        for (std::size_t i = 0; i < r.predictions.size(); ++i)
            out << r.prediction_ids[i] << "," << r.predictions[i] << ","
                << detail::format_double(r.prediction_max_prob[i]) << "\n";
    }
    {
        std::ofstream out(files.model_json);
        if (!out) throw DataError("cannot write " + files.model_json);
        nlohmann::json j = model_to_json(r.final_model);
        j["seed"] = r.seed;
        j["agg_weights"] = r.final_agg_weights;
        out << j.dump(2) << "\n";
    }
    return files;
}

}  // namespace autos
