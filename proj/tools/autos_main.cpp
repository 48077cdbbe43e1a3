#include <chrono>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "autos/data.hpp"
#include "autos/gradcheck.hpp"
#include "autos/pipeline.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

int cmd_gen(const std::string& config_path, std::uint64_t seed, bool seed_set,
            const std::string& out_dir) {
    autos::RunConfig cfg = autos::load_config(config_path);
    if (seed_set) cfg.seed = seed;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (!cfg.use_synthetic) throw autos::ConfigError("gen requires a data.synthetic.* config");
    auto [sources, target] = autos::generate_synthetic(cfg.synthetic, cfg.seed);
    std::filesystem::create_directories(cfg.out_dir);
    for (std::size_t k = 0; k < sources.size(); ++k) {
        std::string path =
            (std::filesystem::path(cfg.out_dir) / (sources[k].name + ".csv")).string();
        autos::save_feature_table(sources[k].samples, path);
        std::cout << path << "\n";
    }
    std::string tpath = (std::filesystem::path(cfg.out_dir) / "target.csv").string();
    autos::save_feature_table(target.samples, tpath);
    std::cout << tpath << "\n";
    if (target.hidden_labels) {
        auto labeled = target.samples;
        for (std::size_t i = 0; i < labeled.size(); ++i)
            labeled[i].label = (*target.hidden_labels)[i];
        std::string hpath =
            (std::filesystem::path(cfg.out_dir) / "target_hidden_labels.csv").string();
        autos::save_feature_table(labeled, hpath);
        std::cout << hpath << "\n";
    }
    return 0;
}

int cmd_run(const std::string& config_path, std::uint64_t seed, bool seed_set,
            const std::string& out_dir) {
    autos::RunConfig cfg = autos::load_config(config_path);
    if (seed_set) cfg.seed = seed;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    auto t0 = std::chrono::steady_clock::now();
    autos::RunReport report = autos::run_pipeline(cfg);
    auto files = autos::emit_report(report, cfg);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "report: " << files.report_json << "\n"
              << "kept domains: " << report.final_kept_count << "/" << report.domain_names.size()
              << "\n";
    if (report.final_accuracy >= 0.0) std::cout << "target accuracy: " << report.final_accuracy << "\n";
    std::cout << "wall time: " << secs << " s\n";
    return 0;
}

int cmd_eval(const std::string& preds_path, const std::string& truth_path) {
    std::ifstream in(preds_path);
    if (!in) throw autos::DataError("cannot open " + preds_path);
    std::string line;
    if (!std::getline(in, line)) throw autos::DataError(preds_path + ": empty");
    std::vector<int> preds;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto cells = autos::detail::split_csv_line(line);
        if (cells.size() < 2) throw autos::DataError(preds_path + ": bad row");
        preds.push_back(std::stoi(cells[1]));
    }
    auto truth = autos::load_labeled_domain(truth_path, "truth");
    std::vector<int> labels(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) labels[i] = *truth.samples[i].label;
    std::cout << "accuracy: " << autos::evaluate(preds, labels) << "\n";
    return 0;
}

int cmd_gradcheck(std::uint64_t seed, int trials) {
    auto res = autos::gradcheck::run_suite(seed, trials);
    std::cout << "source loss   max rel err: " << res.max_source << "\n"
              << "external loss max rel err: " << res.max_external << "\n"
              << "internal loss max rel err: " << res.max_internal << "\n";
    bool ok = res.pass(1e-4);
    std::cout << (ok ? "PASS" : "FAIL") << " (tolerance 1e-4)\n";
    return ok ? 0 : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"AutoS multi-source domain adaptation engine"};
    app.require_subcommand(1);

    std::string config_path, out_dir, preds_path, truth_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int trials = 20;

    auto add_common = [&](CLI::App* sub, bool need_config) {
        if (need_config) sub->add_option("--config", config_path, "config file")->required();
        sub->add_option("--seed", seed, "master seed override")->each([&](const std::string&) {
            seed_set = true;
        });
        sub->add_option("--out", out_dir, "output directory override");
    };

    auto* gen = app.add_subcommand("gen", "generate a synthetic benchmark as CSV files");
    add_common(gen, true);
    auto* run = app.add_subcommand("run", "run the full pipeline from a config");
    add_common(run, true);
    auto* ev = app.add_subcommand("eval", "score a predictions file against labeled truth");
    ev->add_option("--preds", preds_path, "predictions CSV (id,pred_label,max_prob)")->required();
    ev->add_option("--truth", truth_path, "labeled feature table with ground truth")->required();
    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of all loss gradients");
    gc->add_option("--seed", seed, "seed");
    gc->add_option("--trials", trials, "randomized instances per loss");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen(config_path, seed, seed_set, out_dir);
        if (run->parsed()) return cmd_run(config_path, seed, seed_set, out_dir);
        if (ev->parsed()) return cmd_eval(preds_path, truth_path);
        if (gc->parsed()) return cmd_gradcheck(seed, trials);
    } catch (const autos::ConfigError& e) {
        std::cerr << e.what() << "\n";
        return kExitConfig;
    } catch (const autos::DataError& e) {
        std::cerr << e.what() << "\n";
        return kExitData;
    } catch (const autos::NumericError& e) {
        std::cerr << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 1;
    }
    return 0;
}
