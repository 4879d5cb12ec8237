#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

#include "caee/commands.hpp"
#include "caee/errors.hpp"
#include "support.hpp"

using namespace caee;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(CAEE_CLI_PATH) + " " + args + " -q >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::size_t line_count(const fs::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    std::string line;
    while (std::getline(in, line)) ++n;
    return n;
}

// Small but complete configuration on a generated series.
RunConfig small_config(const fs::path& root) {
    RunConfig c;
    c.synth.length = 160;
    c.synth.dims = 2;
    c.synth.contamination = 0.05;
    c.out = root / "data";
    Log quiet({}, true);
    cmd_synth(c, quiet);
    c.train = root / "data" / "train.csv";
    c.test = root / "data" / "test.csv";
    c.cae.window = 8;
    c.cae.embed_dim = 3;
    c.cae.layers = 1;
    c.ensemble.models = 2;
    c.ensemble.epochs_per_model = 2;
    c.ensemble.batch_size = 16;
    c.ensemble.lambda = 1.0;
    return c;
}

}  // namespace

TEST_CASE("ini files and overrides") {
    auto dir = testing::temp_dir("cli_ini");
    {
        std::ofstream f(dir / "run.ini");
        f << "[cae]\nwindow = 32\nlayers=3\n[ensemble]\nmodels = 5\nbeta = 0.25\n[tuner]\nlambdas = 1, 4, 16\n"
             "[ablation]\nno_attention = true\n[evaluate]\nthreshold_rule = top-k\n";
    }
    RunConfig c;
    load_config_file(c, dir / "run.ini");
    CHECK(c.cae.window == 32);
    CHECK(c.cae.layers == 3);
    CHECK(c.ensemble.models == 5);
    CHECK(c.ensemble.beta == 0.25);
    CHECK(c.grid.lambdas == std::vector<double>{1, 4, 16});
    CHECK(c.threshold_rule == ThresholdRule::top_k);
    CHECK_FALSE(c.effective_cae().attention);
    CHECK(c.explicit_keys.contains("cae.window"));

    apply_assignment(c, "ensemble.models=7");
    CHECK(c.ensemble.models == 7);
    CHECK_THROWS_AS(apply_assignment(c, "ensemble.nope=1"), ConfigError);
    CHECK_THROWS_AS(apply_assignment(c, "ensemble.models=-1"), ConfigError);
    CHECK_THROWS_AS(apply_assignment(c, "ensemble.beta=abc"), ConfigError);
    CHECK_THROWS_AS(apply_assignment(c, "no-equals"), ConfigError);

    {
        std::ofstream f(dir / "bad.ini");
        f << "[cae]\nwindw = 3\n";
    }
    CHECK_THROWS_AS(load_config_file(c, dir / "bad.ini"), ConfigError);
}

TEST_CASE("ablation flags compose") {
    RunConfig c;
    c.ensemble.lambda = 4;
    c.ablation.no_diversity = true;
    c.ablation.no_ensemble = true;
    auto e = c.effective_ensemble();
    CHECK(e.lambda == 0.0);
    CHECK_FALSE(e.transfer);
    CHECK(e.models == 1);
    CHECK(c.effective_cae().attention);
}

TEST_CASE("train, score, evaluate and diversity through the command layer") {
    auto root = testing::temp_dir("cli_flow");
    RunConfig c = small_config(root);
    Log quiet({}, true);
    CHECK(line_count(c.test) == 81);

    c.out = root / "ens";
    auto state = cmd_train(c, quiet);
    CHECK(fs::exists(root / "ens" / "manifest.json"));
    CHECK(fs::exists(root / "ens" / "losses.csv"));
    auto reloaded = load_ensemble(root / "ens");
    CHECK(reloaded.models[1] == state.models[1]);
    REQUIRE(reloaded.scale);

    c.checkpoints = {root / "ens"};
    c.per_model = true;
    c.out = root / "score";
    auto scores = cmd_score(c, quiet);
    CHECK(line_count(root / "score" / "scores.csv") == 81);
    const std::string head = "index,score,score_model_1,score_model_2\n0," + format_double(scores.scores[0]) + ",";
    CHECK(testing::read_file(root / "score" / "scores.csv").substr(0, head.size()) == head);
    for (double v : scores.scores) CHECK(std::isfinite(v));

    c.scores = root / "score" / "scores.csv";
    c.out = root / "eval";
    c.k_percent = 5;
    auto ev = cmd_evaluate(c, quiet);
    for (const char* f : {"report.csv", "report.txt", "pr_curve.csv", "roc_curve.csv", "k_sweep.csv"})
        CHECK(fs::exists(root / "eval" / f));
    CHECK(line_count(root / "eval" / "k_sweep.csv") == 21);
    CHECK(ev.top_k.k_percent == 5.0);
    CHECK(ev.best_f1.f1 >= ev.top_k.f1);

    c.out = root / "div";
    auto div = cmd_diversity(c, quiet);
    REQUIRE(div.size() == 1);
    CHECK(div[0] > 0.0);
}

TEST_CASE("perfect scores evaluate to PR = ROC = 1 and recall curves are monotone") {
    auto root = testing::temp_dir("cli_perfect");
    RunConfig c = small_config(root);
    auto test = load_series(c.test);
    {
        std::ofstream f(root / "perfect.csv");
        f << "score\n";
        for (int l : *test.labels) f << (l ? 10 : 1) << '\n';
    }
    c.scores = root / "perfect.csv";
    c.out = root / "eval";
    Log quiet({}, true);
    auto ev = cmd_evaluate(c, quiet);
    CHECK(ev.best_f1.pr_auc == 1.0);
    CHECK(ev.best_f1.roc_auc == 1.0);

    // Score files are read by header, and a file without a score column is rejected.
    {
        std::ofstream f(root / "named.csv");
        f << "index,other,score\n";
        for (std::size_t t = 0; t < test.length(); ++t) f << t << ",-1," << ((*test.labels)[t] ? 10 : 1) << '\n';
    }
    c.scores = root / "named.csv";
    CHECK(cmd_evaluate(c, quiet).best_f1.pr_auc == 1.0);
    {
        std::ofstream f(root / "unnamed.csv");
        f << "a,b\n1,2\n";
    }
    c.scores = root / "unnamed.csv";
    CHECK_THROWS_AS(cmd_evaluate(c, quiet), DataError);

    std::ifstream pr(root / "eval" / "pr_curve.csv");
    std::string line;
    std::getline(pr, line);
    double prev = -1;
    while (std::getline(pr, line)) {
        const double recall = std::stod(line.substr(line.find(',') + 1));
        CHECK(recall >= prev);
        prev = recall;
    }
}

TEST_CASE("ablation checkpoints record their settings") {
    auto root = testing::temp_dir("cli_ablation");
    RunConfig c = small_config(root);
    Log quiet({}, true);
    c.ablation.no_diversity = true;
    c.ablation.no_rescaling = true;
    c.out = root / "nd";
    auto state = cmd_train(c, quiet);
    CHECK(state.config.lambda == 0.0);
    CHECK_FALSE(state.config.transfer);
    CHECK_FALSE(load_ensemble(root / "nd").scale);

    c = small_config(root);
    c.ablation.no_ensemble = true;
    c.ablation.no_attention = true;
    c.out = root / "ne";
    state = cmd_train(c, quiet);
    CHECK(state.models.size() == 1);
    CHECK_FALSE(state.cae.attention);
    c.checkpoints = {root / "ne"};
    CHECK_THROWS_AS(cmd_diversity(c, quiet), ConfigError);
}

TEST_CASE("a checkpoint with duplicated members has zero diversity") {
    auto root = testing::temp_dir("cli_dup");
    RunConfig c = small_config(root);
    Log quiet({}, true);
    c.out = root / "ens";
    auto state = cmd_train(c, quiet);
    state.models[1] = state.models[0];
    save_ensemble(root / "dup", state);
    c.checkpoints = {root / "dup"};
    c.out = root / "div";
    CHECK(cmd_diversity(c, quiet).at(0) == 0.0);
}

TEST_CASE("tuning report arity and determinism") {
    auto root = testing::temp_dir("cli_tune");
    RunConfig c = small_config(root);
    c.grid.windows = {4, 8};
    c.grid.betas = {0.1, 0.5, 0.9};
    c.grid.lambdas = {1, 2};
    c.grid.budget = 3;
    Log quiet({}, true);
    c.out = root / "t1";
    auto r = cmd_tune(c, quiet);
    c.out = root / "t2";
    c.ensemble.workers = 3;
    cmd_tune(c, quiet);
    const auto a = testing::read_file(root / "t1" / "tune_trials.csv");
    CHECK(a == testing::read_file(root / "t2" / "tune_trials.csv"));
    CHECK(testing::read_file(root / "t1" / "selected.json") == testing::read_file(root / "t2" / "selected.json"));
    // header + budget + (2-1) + (3-1) + (2-1) trials + one selected row
    CHECK(line_count(root / "t1" / "tune_trials.csv") == 1 + 3 + 1 + 2 + 1 + 1);
    CHECK(std::count(a.begin(), a.end(), '\n') == 9);
    CHECK(a.find("\nselected,") != std::string::npos);

    // Train from the tuned triple.
    c.hyperparameters = root / "t1" / "selected.json";
    c.out = root / "trained";
    auto st = cmd_train(c, quiet);
    CHECK(st.cae.window == r.selected.window);
    CHECK(st.config.beta == r.selected.beta);
    CHECK(st.config.lambda == r.selected.lambda);
}

TEST_CASE("command-line exit codes and byte-identical reruns") {
    auto root = testing::temp_dir("cli_exit");
    const std::string r = root.string();
    CHECK(run_cli("synth --set synth.length=120 --set synth.contamination=0.05 --out " + r + "/data") == 0);
    const std::string tiny = " --window 8 --embed-dim 3 --layers 1 --models 2 --epochs 2 --batch-size 16";
    CHECK(run_cli("train --train " + r + "/data/train.csv --out " + r + "/e1" + tiny) == 0);
    CHECK(run_cli("train --train " + r + "/data/train.csv --out " + r + "/e2 --workers 3" + tiny) == 0);
    CHECK(run_cli("score --test " + r + "/data/test.csv --checkpoint " + r + "/e1 --out " + r + "/s1") == 0);
    CHECK(run_cli("score --test " + r + "/data/test.csv --checkpoint " + r + "/e2 --out " + r + "/s2 --workers 2") == 0);
    CHECK(testing::read_file(root / "s1" / "scores.csv") == testing::read_file(root / "s2" / "scores.csv"));
    CHECK(testing::read_file(root / "e1" / "model_2.ckpt") == testing::read_file(root / "e2" / "model_2.ckpt"));

    CHECK(run_cli("evaluate --test " + r + "/data/test.csv --scores " + r + "/s1/scores.csv --out " + r +
                  "/ev --threshold-rule top-k --k-percent 2") == 0);
    CHECK(run_cli("evaluate --test " + r + "/s1/scores.csv --scores " + r + "/s1/scores.csv --out " + r + "/ev2") == 3);
    CHECK(run_cli("train --train " + r + "/missing.csv --out " + r + "/x") == 3);
    CHECK(run_cli("train --train " + r + "/data/train.csv --set cae.kernel=4 --out " + r + "/x") == 2);
    CHECK(run_cli("score --test " + r + "/data/test.csv --checkpoint " + r + "/e1 --window 16 --out " + r + "/x") == 2);
    CHECK(run_cli("train --train " + r + "/data/train.csv --set ensemble.learning_rate=1e308" + tiny + " --out " + r +
                  "/x") == 4);
    CHECK(run_cli("bogus") == 2);
    CHECK(run_cli("--help") == 0);
}
