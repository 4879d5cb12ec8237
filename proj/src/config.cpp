#include "caee/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "caee/errors.hpp"

namespace caee {
namespace {

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& expected) {
    throw ConfigError("invalid value '" + value + "' for " + key + " (expected " + expected + ")");
}

std::uint64_t parse_u64(const std::string& key, const std::string& text) {
    const std::string v = trim(text);
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty()) bad_value(key, text, "a nonnegative integer");
    return out;
}

std::size_t parse_size(const std::string& key, const std::string& text) {
    return static_cast<std::size_t>(parse_u64(key, text));
}

double parse_double(const std::string& key, const std::string& text) {
    const std::string v = trim(text);
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size() || v.empty() || !std::isfinite(out))
        bad_value(key, text, "a finite number");
    return out;
}

bool parse_bool(const std::string& key, const std::string& text) {
    std::string v = trim(text);
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    bad_value(key, text, "true or false");
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

template <class T, class F>
std::vector<T> parse_list(const std::string& key, const std::string& text, F parse_one) {
    std::vector<T> out;
    for (const auto& item : split_list(text)) out.push_back(parse_one(key, item));
    if (out.empty()) bad_value(key, text, "a comma-separated list");
    return out;
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"data.train", [](RunConfig& c, auto&, auto& v) { c.train = trim(v); }},
        {"data.test", [](RunConfig& c, auto&, auto& v) { c.test = trim(v); }},
        {"data.scores", [](RunConfig& c, auto&, auto& v) { c.scores = trim(v); }},
        {"data.hyperparameters", [](RunConfig& c, auto&, auto& v) { c.hyperparameters = trim(v); }},
        {"data.checkpoints",
         [](RunConfig& c, auto&, auto& v) {
             c.checkpoints.clear();
             for (const auto& p : split_list(v)) c.checkpoints.emplace_back(p);
         }},

        {"output.dir", [](RunConfig& c, auto&, auto& v) { c.out = trim(v); }},
        {"output.log", [](RunConfig& c, auto&, auto& v) { c.log = trim(v); }},
        {"output.per_model", [](RunConfig& c, auto& k, auto& v) { c.per_model = parse_bool(k, v); }},

        {"cae.window", [](RunConfig& c, auto& k, auto& v) { c.cae.window = parse_size(k, v); }},
        {"cae.embed_dim", [](RunConfig& c, auto& k, auto& v) { c.cae.embed_dim = parse_size(k, v); }},
        {"cae.layers", [](RunConfig& c, auto& k, auto& v) { c.cae.layers = parse_size(k, v); }},
        {"cae.kernel", [](RunConfig& c, auto& k, auto& v) { c.cae.kernel = parse_size(k, v); }},
        {"cae.attention", [](RunConfig& c, auto& k, auto& v) { c.cae.attention = parse_bool(k, v); }},

        {"ensemble.models", [](RunConfig& c, auto& k, auto& v) { c.ensemble.models = parse_size(k, v); }},
        {"ensemble.epochs", [](RunConfig& c, auto& k, auto& v) { c.ensemble.epochs_per_model = parse_size(k, v); }},
        {"ensemble.beta", [](RunConfig& c, auto& k, auto& v) { c.ensemble.beta = parse_double(k, v); }},
        {"ensemble.lambda", [](RunConfig& c, auto& k, auto& v) { c.ensemble.lambda = parse_double(k, v); }},
        {"ensemble.batch_size", [](RunConfig& c, auto& k, auto& v) { c.ensemble.batch_size = parse_size(k, v); }},
        {"ensemble.seed", [](RunConfig& c, auto& k, auto& v) { c.ensemble.seed = parse_u64(k, v); }},
        {"ensemble.transfer", [](RunConfig& c, auto& k, auto& v) { c.ensemble.transfer = parse_bool(k, v); }},
        {"ensemble.workers", [](RunConfig& c, auto& k, auto& v) { c.ensemble.workers = parse_size(k, v); }},
        {"ensemble.learning_rate", [](RunConfig& c, auto& k, auto& v) { c.ensemble.adam.lr = parse_double(k, v); }},

        {"tuner.windows",
         [](RunConfig& c, auto& k, auto& v) { c.grid.windows = parse_list<std::size_t>(k, v, parse_size); }},
        {"tuner.betas", [](RunConfig& c, auto& k, auto& v) { c.grid.betas = parse_list<double>(k, v, parse_double); }},
        {"tuner.lambdas",
         [](RunConfig& c, auto& k, auto& v) { c.grid.lambdas = parse_list<double>(k, v, parse_double); }},
        {"tuner.budget", [](RunConfig& c, auto& k, auto& v) { c.grid.budget = parse_size(k, v); }},
        {"tuner.validation_ratio", [](RunConfig& c, auto& k, auto& v) { c.validation_ratio = parse_double(k, v); }},

        {"ablation.no_attention", [](RunConfig& c, auto& k, auto& v) { c.ablation.no_attention = parse_bool(k, v); }},
        {"ablation.no_diversity", [](RunConfig& c, auto& k, auto& v) { c.ablation.no_diversity = parse_bool(k, v); }},
        {"ablation.no_ensemble", [](RunConfig& c, auto& k, auto& v) { c.ablation.no_ensemble = parse_bool(k, v); }},
        {"ablation.no_rescaling", [](RunConfig& c, auto& k, auto& v) { c.ablation.no_rescaling = parse_bool(k, v); }},

        {"evaluate.threshold_rule", [](RunConfig& c, auto&, auto& v) { c.threshold_rule = parse_threshold_rule(v); }},
        {"evaluate.k_percent", [](RunConfig& c, auto& k, auto& v) { c.k_percent = parse_double(k, v); }},
        {"evaluate.k_sweep_max", [](RunConfig& c, auto& k, auto& v) { c.k_sweep_max = parse_size(k, v); }},
        {"evaluate.mas_window", [](RunConfig& c, auto& k, auto& v) { c.mas_window = parse_size(k, v); }},

        {"synth.seed", [](RunConfig& c, auto& k, auto& v) { c.synth.seed = parse_u64(k, v); }},
        {"synth.length", [](RunConfig& c, auto& k, auto& v) { c.synth.length = parse_size(k, v); }},
        {"synth.dims", [](RunConfig& c, auto& k, auto& v) { c.synth.dims = parse_size(k, v); }},
        {"synth.contamination", [](RunConfig& c, auto& k, auto& v) { c.synth.contamination = parse_double(k, v); }},
        {"synth.spike_magnitude",
         [](RunConfig& c, auto& k, auto& v) { c.synth.spike_magnitude = parse_double(k, v); }},
        {"synth.noise_std", [](RunConfig& c, auto& k, auto& v) { c.synth.noise_std = parse_double(k, v); }},
        {"synth.train_fraction",
         [](RunConfig& c, auto& k, auto& v) { c.synth_train_fraction = parse_double(k, v); }},

        {"diversity.checkpoints",
         [](RunConfig& c, auto&, auto& v) {
             c.checkpoints.clear();
             for (const auto& p : split_list(v)) c.checkpoints.emplace_back(p);
         }},
    };
    return table;
}

}  // namespace

CaeConfig RunConfig::effective_cae() const {
    CaeConfig c = cae;
    if (ablation.no_attention) c.attention = false;
    return c;
}

EnsembleConfig RunConfig::effective_ensemble() const {
    EnsembleConfig e = ensemble;
    if (ablation.no_diversity) {
        e.lambda = 0.0;
        e.transfer = false;
    }
    if (ablation.no_ensemble) e.models = 1;
    return e;
}

nlohmann::json RunConfig::to_json() const {
    auto paths = [](const std::vector<std::filesystem::path>& ps) {
        std::vector<std::string> out;
        for (const auto& p : ps) out.push_back(p.string());
        return out;
    };
    return {{"data",
             {{"train", train.string()},
              {"test", test.string()},
              {"scores", scores.string()},
              {"checkpoints", paths(checkpoints)},
              {"hyperparameters", hyperparameters.string()}}},
            {"cae", effective_cae().to_json()},
            {"ensemble", effective_ensemble().to_json()},
            {"tuner",
             {{"windows", grid.windows},
              {"betas", grid.betas},
              {"lambdas", grid.lambdas},
              {"budget", grid.budget},
              {"validation_ratio", validation_ratio}}},
            {"ablation",
             {{"no_attention", ablation.no_attention},
              {"no_diversity", ablation.no_diversity},
              {"no_ensemble", ablation.no_ensemble},
              {"no_rescaling", ablation.no_rescaling}}},
            {"evaluate",
             {{"threshold_rule", to_string(threshold_rule)}, {"k_percent", k_percent}, {"mas_window", mas_window}}}};
}

void apply_setting(RunConfig& config, const std::string& section, const std::string& key, const std::string& value) {
    const std::string full = section + "." + key;
    const auto& table = setters();
    auto it = table.find(full);
    if (it == table.end()) throw ConfigError("unknown configuration key '" + full + "'");
    it->second(config, full, value);
    config.explicit_keys.insert(full);
}

void apply_assignment(RunConfig& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    const auto dot = assignment.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
        throw ConfigError("expected section.key=value, got '" + assignment + "'");
    apply_setting(config, trim(assignment.substr(0, dot)), trim(assignment.substr(dot + 1, eq - dot - 1)),
                  assignment.substr(eq + 1));
}

void load_config_file(RunConfig& config, const std::filesystem::path& path) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::read_ini(path.string(), tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError("cannot read config file: " + std::string(e.what()));
    }
    for (const auto& [section, body] : tree) {
        if (body.empty()) throw ConfigError(path.string() + ": key '" + section + "' is outside any section");
        for (const auto& [key, node] : body) {
            try {
                apply_setting(config, section, key, node.get_value<std::string>());
            } catch (const ConfigError& e) {
                throw ConfigError(path.string() + ": " + e.what());
            }
        }
    }
}

ThresholdRule parse_threshold_rule(const std::string& text) {
    const std::string v = trim(text);
    if (v == "best-f1" || v == "best_f1") return ThresholdRule::best_f1;
    if (v == "top-k" || v == "top_k") return ThresholdRule::top_k;
    throw ConfigError("threshold rule must be best-f1 or top-k, got '" + text + "'");
}

std::string to_string(ThresholdRule rule) {
    return rule == ThresholdRule::best_f1 ? "best-f1" : "top-k";
}

}  // namespace caee
