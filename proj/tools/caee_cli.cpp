#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "caee/commands.hpp"
#include "caee/errors.hpp"

namespace {

struct Flags {
    std::string config_file;
    std::vector<std::string> assignments;
    std::map<std::string, std::string> settings;  // section.key -> text, from named flags
    std::vector<std::string> checkpoints;
    bool no_attention = false, no_diversity = false, no_ensemble = false, no_rescaling = false;
    bool per_model = false;
    bool quiet = false;
};

// A flag that forwards its text to a config key.
void forward(CLI::App& app, Flags& flags, const std::string& name, const std::string& key, const std::string& help) {
    app.add_option_function<std::string>(
        name, [&flags, key](const std::string& v) { flags.settings[key] = v; }, help);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Convolutional autoencoder ensembles for time series outlier detection"};
    app.require_subcommand(1, 1);
    Flags flags;

    app.add_option("--config", flags.config_file, "INI config file")->check(CLI::ExistingFile);
    app.add_option("--set", flags.assignments, "Override any config key, as section.key=value");
    app.add_option_function<std::string>(
        "--seed",
        [&](const std::string& v) {
            flags.settings["ensemble.seed"] = v;
            flags.settings["synth.seed"] = v;
        },
        "Seed for training, tuning and synthesis");
    forward(app, flags, "--out", "output.dir", "Output directory");
    forward(app, flags, "--log", "output.log", "Append progress messages to this file instead of stderr");
    forward(app, flags, "--workers", "ensemble.workers", "Worker threads");
    forward(app, flags, "--train", "data.train", "Training CSV");
    forward(app, flags, "--test", "data.test", "Test CSV");
    forward(app, flags, "--scores", "data.scores", "Scores CSV written by `score`");
    forward(app, flags, "--hyperparameters", "data.hyperparameters", "selected.json written by `tune`");
    app.add_option("--checkpoint", flags.checkpoints, "Ensemble directory (repeat for diversity comparisons)");
    forward(app, flags, "--window", "cae.window", "Window length w");
    forward(app, flags, "--embed-dim", "cae.embed_dim", "Embedding size");
    forward(app, flags, "--layers", "cae.layers", "Encoder and decoder layers");
    forward(app, flags, "--kernel", "cae.kernel", "Convolution kernel size");
    forward(app, flags, "--models", "ensemble.models", "Ensemble size M");
    forward(app, flags, "--epochs", "ensemble.epochs", "Epochs per model");
    forward(app, flags, "--batch-size", "ensemble.batch_size", "Windows per batch");
    forward(app, flags, "--beta", "ensemble.beta", "Parameter transfer probability");
    forward(app, flags, "--lambda", "ensemble.lambda", "Diversity weight");
    forward(app, flags, "--budget", "tuner.budget", "Random search trials");
    forward(app, flags, "--k-percent", "evaluate.k_percent", "K for top-K thresholding, in percent");
    forward(app, flags, "--threshold-rule", "evaluate.threshold_rule", "best-f1 or top-k");
    forward(app, flags, "--mas-window", "evaluate.mas_window", "Score with the moving-average baseline instead");
    app.add_flag("--no-attention", flags.no_attention, "Remove the attention module");
    app.add_flag("--no-diversity", flags.no_diversity, "lambda = 0 and independent members");
    app.add_flag("--no-ensemble", flags.no_ensemble, "A single model");
    app.add_flag("--no-rescaling", flags.no_rescaling, "Skip z-score rescaling");
    app.add_flag("--per-model", flags.per_model, "Also write per-model scores");
    app.add_flag("-q,--quiet", flags.quiet, "No progress messages");

    std::map<std::string, CLI::App*> subs;
    subs["tune"] = app.add_subcommand("tune", "Select (w, beta, lambda) on a train/validation split");
    subs["train"] = app.add_subcommand("train", "Train an ensemble and save it to --out");
    subs["score"] = app.add_subcommand("score", "Write per-observation outlier scores");
    subs["evaluate"] = app.add_subcommand("evaluate", "Metrics, curves and the top-K sweep for a score file");
    subs["diversity"] = app.add_subcommand("diversity", "Ensemble diversity of one or two checkpoints");
    subs["synth"] = app.add_subcommand("synth", "Generate a labeled synthetic series");
    for (auto& [name, sub] : subs) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        caee::RunConfig config;
        if (!flags.config_file.empty()) caee::load_config_file(config, flags.config_file);
        for (const auto& a : flags.assignments) caee::apply_assignment(config, a);
        for (const auto& [key, value] : flags.settings) caee::apply_assignment(config, key + "=" + value);
        if (!flags.checkpoints.empty()) {
            config.checkpoints.assign(flags.checkpoints.begin(), flags.checkpoints.end());
        }
        if (flags.no_attention) config.ablation.no_attention = true;
        if (flags.no_diversity) config.ablation.no_diversity = true;
        if (flags.no_ensemble) config.ablation.no_ensemble = true;
        if (flags.no_rescaling) config.ablation.no_rescaling = true;
        if (flags.per_model) config.per_model = true;

        caee::Log log(config.log, flags.quiet);
        if (subs["tune"]->parsed()) caee::cmd_tune(config, log);
        else if (subs["train"]->parsed()) caee::cmd_train(config, log);
        else if (subs["score"]->parsed()) caee::cmd_score(config, log);
        else if (subs["evaluate"]->parsed()) caee::cmd_evaluate(config, log);
        else if (subs["diversity"]->parsed()) caee::cmd_diversity(config, log);
        else if (subs["synth"]->parsed()) caee::cmd_synth(config, log);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return caee::exit_code_for(e);
    }
    return 0;
}
