#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "caee/cae.hpp"
#include "caee/data_io.hpp"
#include "caee/ensemble.hpp"
#include "caee/metrics.hpp"
#include "caee/tuner.hpp"

namespace caee {

struct AblationFlags {
    bool no_attention = false;
    bool no_diversity = false;
    bool no_ensemble = false;
    bool no_rescaling = false;
};

/// Everything a subcommand may need. Sections of the config file map to the
/// nested groups: [data] [output] [cae] [ensemble] [tuner] [ablation]
/// [evaluate] [synth] [diversity].
struct RunConfig {
    // [data]
    std::filesystem::path train;
    std::filesystem::path test;
    std::filesystem::path scores;
    std::vector<std::filesystem::path> checkpoints;
    std::filesystem::path hyperparameters;  // selected.json written by tune

    // [output]
    std::filesystem::path out = "caee_out";
    std::filesystem::path log;  // empty logs to stderr
    bool per_model = false;

    // [cae]; `window` comes from the tuned or explicit triple
    CaeConfig cae{};
    // [ensemble]
    EnsembleConfig ensemble{};
    // [tuner]
    HyperGrid grid{};
    double validation_ratio = 0.3;
    // [ablation]
    AblationFlags ablation{};
    // [evaluate]
    ThresholdRule threshold_rule = ThresholdRule::best_f1;
    double k_percent = 1.0;
    std::size_t k_sweep_max = 20;
    std::size_t mas_window = 0;  // nonzero scores with the moving-average baseline
    // [synth]
    SynthConfig synth{};
    double synth_train_fraction = 0.5;

    /// Keys set from a file or the command line, as "section.key".
    std::set<std::string> explicit_keys;

    /// The ensemble and CAE settings after ablation flags are applied.
    CaeConfig effective_cae() const;
    EnsembleConfig effective_ensemble() const;

    nlohmann::json to_json() const;
};

/// Sets `section.key` from text. Throws ConfigError on unknown keys or bad values.
void apply_setting(RunConfig& config, const std::string& section, const std::string& key, const std::string& value);

/// Parses "section.key=value".
void apply_assignment(RunConfig& config, const std::string& assignment);

/// Reads an INI file into `config`, overriding only the keys present.
void load_config_file(RunConfig& config, const std::filesystem::path& path);

ThresholdRule parse_threshold_rule(const std::string& text);
std::string to_string(ThresholdRule rule);

}  // namespace caee
