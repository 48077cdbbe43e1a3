#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "autos/common.hpp"
#include "autos/data.hpp"
#include "autos/nn.hpp"
#include "autos/rng.hpp"
#include "autos/selection.hpp"

namespace autos {

enum class RunMode { Autos, AutosSf, Fedavg, WoL, WoLin, WoLex, WoTarcof };

inline RunMode run_mode_from_string(const std::string& s) {
    if (s == "autos") return RunMode::Autos;
    if (s == "autos_sf") return RunMode::AutosSf;
    if (s == "fedavg") return RunMode::Fedavg;
    if (s == "wo_L") return RunMode::WoL;
    if (s == "wo_Lin") return RunMode::WoLin;
    if (s == "wo_Lex") return RunMode::WoLex;
    if (s == "wo_tarcof") return RunMode::WoTarcof;
    throw ConfigError("unknown mode '" + s + "'");
}

inline std::string to_string(RunMode m) {
    switch (m) {
        case RunMode::Autos: return "autos";
        case RunMode::AutosSf: return "autos_sf";
        case RunMode::Fedavg: return "fedavg";
        case RunMode::WoL: return "wo_L";
        case RunMode::WoLin: return "wo_Lin";
        case RunMode::WoLex: return "wo_Lex";
        case RunMode::WoTarcof: return "wo_tarcof";
    }
    return "?";
}

enum class SigmaMode { Epoch, Never };

struct RunConfig {
    // data: exactly one of (source_paths + target_path) / synthetic
    std::vector<std::string> source_paths;
    std::string target_path;
    bool use_synthetic = true;
    SyntheticSpec synthetic;

    int hidden_width = 64;
    int d_joint = 16;
    Hyperparams hp;
    RadiusMetric radius_metric = RadiusMetric::Mean;
    bool alpha_explicit = false;
    SigmaMode sigma_mode = SigmaMode::Epoch;
    bool density_exponent_literal = true;  // printed r^1 form; false = r^d ball volume
    bool gauss_diag_student = false;       // diag(P_t) variant of the external loss
    RunMode mode = RunMode::Autos;
    std::uint64_t seed = 0;
    std::string out_dir = "out";

    std::map<std::string, std::string> echo;  // canonical key/value view

    // Default alpha per radius metric when not set explicitly.
    double effective_alpha() const {
        if (alpha_explicit) return hp.alpha;
        return radius_metric == RadiusMetric::Rms ? 1.5 : 1.0;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline int to_int(const std::string& key, const std::string& v) {
    try {
        return std::stoi(v);
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected integer, got '" + v + "'");
    }
}

inline double to_double(const std::string& key, const std::string& v) {
    try {
        return std::stod(v);
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected number, got '" + v + "'");
    }
}

}  // namespace detail

// Flat dotted-key "key = value" files; '#' starts a comment.
inline std::map<std::string, std::string> parse_flat_config(std::istream& in) {
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t ln = 0;
    while (std::getline(in, line)) {
        ++ln;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(ln) + ": expected key = value");
        std::string key = detail::trim(line.substr(0, eq));
        std::string val = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("line " + std::to_string(ln) + ": empty key");
        kv[key] = val;
    }
    return kv;
}

inline RunConfig config_from_map(const std::map<std::string, std::string>& kv) {
    RunConfig cfg;
    cfg.echo = kv;
    bool has_paths = false, has_synth = false;
    for (const auto& [key, val] : kv) {
        if (key == "data.sources") {
            cfg.source_paths = detail::split_list(val);
            has_paths = true;
        } else if (key == "data.target") {
            cfg.target_path = val;
            has_paths = true;
        } else if (key == "data.synthetic.sources") {
            cfg.synthetic.source_count = detail::to_int(key, val);
            has_synth = true;
        } else if (key == "data.synthetic.classes") {
            cfg.synthetic.class_count = detail::to_int(key, val);
            has_synth = true;
        } else if (key == "data.synthetic.dim") {
            cfg.synthetic.dim = detail::to_int(key, val);
            has_synth = true;
        } else if (key == "data.synthetic.separation") {
            cfg.synthetic.separation = detail::to_double(key, val);
            has_synth = true;
        } else if (key == "data.synthetic.noise_sigma") {
            cfg.synthetic.noise_sigma = detail::to_double(key, val);
            has_synth = true;
        } else if (key == "data.synthetic.irrelevant") {
            for (const auto& item : detail::split_list(val))
                cfg.synthetic.irrelevant_domains.push_back(detail::to_int(key, item));
            has_synth = true;
        } else if (key == "data.synthetic.per_class") {
            cfg.synthetic.samples_per_class = detail::to_int(key, val);
            has_synth = true;
        } else if (key == "train.epochs") {
            cfg.hp.epochs = detail::to_int(key, val);
        } else if (key == "train.eta0") {
            cfg.hp.eta0 = detail::to_double(key, val);
        } else if (key == "train.momentum") {
            cfg.hp.momentum = detail::to_double(key, val);
        } else if (key == "train.batch_size") {
            cfg.hp.batch_size = detail::to_int(key, val);
        } else if (key == "train.mu") {
            cfg.hp.mu = detail::to_double(key, val);
        } else if (key == "train.hidden_width") {
            cfg.hidden_width = detail::to_int(key, val);
        } else if (key == "select.radius_metric") {
            cfg.radius_metric = radius_metric_from_string(val);
        } else if (key == "select.alpha") {
            cfg.hp.alpha = detail::to_double(key, val);
            cfg.alpha_explicit = true;
        } else if (key == "select.lambda") {
            cfg.hp.lambda = detail::to_double(key, val);
        } else if (key == "select.sigma_mode") {
            if (val == "epoch")
                cfg.sigma_mode = SigmaMode::Epoch;
            else if (val == "never")
                cfg.sigma_mode = SigmaMode::Never;
            else
                throw ConfigError("select.sigma_mode: expected epoch|never, got '" + val + "'");
        } else if (key == "select.density_exponent") {
            if (val == "1")
                cfg.density_exponent_literal = true;
            else if (val == "d")
                cfg.density_exponent_literal = false;
            else
                throw ConfigError("select.density_exponent: expected 1|d, got '" + val + "'");
        } else if (key == "adapt.beta") {
            cfg.hp.beta = detail::to_double(key, val);
        } else if (key == "adapt.gamma") {
            cfg.hp.gamma = detail::to_double(key, val);
        } else if (key == "adapt.theta") {
            cfg.hp.theta = detail::to_double(key, val);
        } else if (key == "adapt.delta") {
            cfg.hp.delta = detail::to_double(key, val);
        } else if (key == "adapt.tau") {
            cfg.hp.tau = detail::to_double(key, val);
        } else if (key == "adapt.d_joint") {
            cfg.d_joint = detail::to_int(key, val);
        } else if (key == "adapt.mode") {
            cfg.mode = run_mode_from_string(val);
        } else if (key == "adapt.gauss_diag") {
            if (val == "pfm")
                cfg.gauss_diag_student = false;
            else if (val == "pt")
                cfg.gauss_diag_student = true;
            else
                throw ConfigError("adapt.gauss_diag: expected pfm|pt, got '" + val + "'");
        } else if (key == "seed") {
            cfg.seed = static_cast<std::uint64_t>(std::stoull(val));
        } else if (key == "out_dir") {
            cfg.out_dir = val;
        } else {
            throw ConfigError("unknown key '" + key + "'");
        }
    }
    if (has_paths && has_synth)
        throw ConfigError("config must give either data.sources/data.target or data.synthetic.*, not both");
    if (has_paths) {
        if (cfg.source_paths.empty()) throw ConfigError("data.sources is empty");
        if (cfg.target_path.empty()) throw ConfigError("data.target is missing");
        cfg.use_synthetic = false;
    } else {
        cfg.use_synthetic = true;
        cfg.synthetic.validate();
    }
    if (cfg.hp.epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (!(cfg.hp.eta0 > 0.0)) throw ConfigError("train.eta0 must be positive");
    if (cfg.hp.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    return config_from_map(parse_flat_config(in));
}

// Stable hash of the canonical key/value view; names every emitted file.
inline std::string config_hash(const RunConfig& cfg) {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& [k, v] : cfg.echo) {
        h = fnv1a(k, h);
        h = fnv1a("=", h);
        h = fnv1a(v, h);
        h = fnv1a("\n", h);
    }
    h = fnv1a("seed=" + std::to_string(cfg.seed), h);
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

}  // namespace autos
