#include <doctest.h>

#include <cmath>
#include <limits>

#include "caee/ensemble.hpp"
#include "caee/errors.hpp"
#include "support.hpp"

using namespace caee;

namespace {

CaeConfig tiny_cae(std::size_t w = 6, std::size_t d = 2) {
    CaeConfig c;
    c.window = w;
    c.input_dim = d;
    c.embed_dim = 4;
    c.layers = 1;
    c.kernel = 3;
    return c;
}

EnsembleConfig tiny_ens(std::size_t m = 3) {
    EnsembleConfig e;
    e.models = m;
    e.epochs_per_model = 2;
    e.batch_size = 8;
    e.lambda = 0.5;
    e.seed = 42;
    return e;
}

LabeledSeries tiny_series(std::size_t c = 60, std::uint64_t seed = 1) {
    SynthConfig s;
    s.length = c;
    s.dims = 2;
    s.seed = seed;
    auto series = synth_generate(s);
    series.labels.reset();
    return series;
}

double l2(const Tensor& a, const Tensor& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("diversity is a pseudometric on outputs") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor a = testing::random_tensor({5, 3}, rng), b = testing::random_tensor({5, 3}, rng),
               c = testing::random_tensor({5, 3}, rng);
        CHECK(diversity_pair(a, a) == 0.0);
        CHECK(diversity_pair(a, b) == diversity_pair(b, a));
        CHECK(diversity_pair(a, b) >= 0.0);
        CHECK(diversity_pair(a, c) <= diversity_pair(a, b) + diversity_pair(b, c) + 1e-12);
        CHECK(diversity_pair(a, b) == doctest::Approx(l2(a, b)).epsilon(1e-14));
    }
}

TEST_CASE("ensemble diversity averages all unordered pairs") {
    std::mt19937_64 rng(2);
    std::vector<Tensor> two{testing::random_tensor({4, 2}, rng), testing::random_tensor({4, 2}, rng)};
    CHECK(diversity_ensemble(two) == diversity_pair(two[0], two[1]));
    std::vector<Tensor> three{two[0], two[1], testing::random_tensor({4, 2}, rng)};
    const double brute = (l2(three[0], three[1]) + l2(three[0], three[2]) + l2(three[1], three[2])) / 3.0;
    CHECK(std::abs(diversity_ensemble(three) - brute) < 1e-12);
    std::vector<Tensor> same(4, two[0]);
    CHECK(diversity_ensemble(same) == 0.0);
    CHECK_THROWS_AS(diversity_ensemble(std::span<const Tensor>(two.data(), 1)), std::invalid_argument);
}

TEST_CASE("ensemble average is the elementwise mean") {
    std::vector<Tensor> outs{Tensor({2}, std::vector<double>{1, 2}), Tensor({2}, std::vector<double>{3, 6}),
                             Tensor({2}, std::vector<double>{5, 1})};
    Tensor avg = ensemble_average(outs);
    CHECK(avg[0] == doctest::Approx(3.0));
    CHECK(avg[1] == doctest::Approx(3.0));
}

TEST_CASE("batch losses match hand formulas") {
    std::mt19937_64 rng(3);
    const std::size_t b = 3, w = 4, dp = 5;
    std::vector<Tensor> x, xh, f;
    for (std::size_t i = 0; i < b; ++i) {
        x.push_back(testing::random_tensor({w, dp}, rng));
        xh.push_back(testing::random_tensor({w, dp}, rng));
        f.push_back(testing::random_tensor({w, dp}, rng));
    }
    double j = 0, k = 0;
    for (std::size_t i = 0; i < b; ++i) {
        j += l2(x[i], xh[i]) * l2(x[i], xh[i]);
        k += l2(xh[i], f[i]) * l2(xh[i], f[i]);
    }
    CHECK(loss_first(x, xh) == doctest::Approx(j / (b * w)).epsilon(1e-13));
    const double lambda = 2.0;
    CHECK(loss_diverse(x, xh, f, lambda) == doctest::Approx((j - lambda * k / dp) / (b * w)).epsilon(1e-13));
    CHECK(loss_diverse(x, xh, f, 0.0) == doctest::Approx(loss_first(x, xh)).epsilon(1e-15));

    // The per-window graph terms add up to the batch loss.
    double graph_total = 0;
    for (std::size_t i = 0; i < b; ++i) {
        Graph g;
        NodeId fa = g.constant(f[i]);
        graph_total += g.value(window_loss(g, g.constant(x[i]), g.leaf(xh[i]), &fa, lambda, b)).item();
    }
    CHECK(graph_total == doctest::Approx(loss_diverse(x, xh, f, lambda)).epsilon(1e-13));
}

TEST_CASE("transfer copies each tensor with probability beta") {
    std::mt19937_64 rng(4);
    CaeConfig c = tiny_cae();
    ParamSet prev = init_cae_params(c, rng), fresh = init_cae_params(c, rng);
    auto all = transfer_params(prev, fresh, 1.0, 7);
    CHECK(all.params == prev);
    CHECK(all.copied.size() == prev.size());
    auto none = transfer_params(prev, fresh, 0.0, 7);
    CHECK(none.params == fresh);
    CHECK(none.copied.empty());

    auto half = transfer_params(prev, fresh, 0.5, 9);
    for (std::size_t i = 0; i < prev.size(); ++i) {
        const bool copied = std::find(half.copied.begin(), half.copied.end(), prev.name(i)) != half.copied.end();
        CHECK(half.params[i].value == (copied ? prev[i].value : fresh[i].value));
    }
    CHECK_THROWS_AS(transfer_params(prev, fresh, 1.5, 1), ConfigError);
}

TEST_CASE("median and stitching") {
    CHECK(median({3, 1, 2}) == 2.0);
    CHECK(median({4, 1, 3, 2}) == 2.5);
    CHECK(median({5}) == 5.0);
    CHECK_THROWS(median({}));
    std::vector<std::vector<double>> per{{1, 2, 3}, {9, 9, 4}, {9, 9, 5}};
    CHECK(stitch_window_errors(per) == std::vector<double>{1, 2, 3, 4, 5});
}

TEST_CASE("training is deterministic and independent of the worker count") {
    const auto series = tiny_series();
    EnsembleConfig e = tiny_ens();
    auto a = train_ensemble(series, tiny_cae(), e);
    e.workers = 3;
    auto b = train_ensemble(series, tiny_cae(), e);
    REQUIRE(a.models.size() == 3);
    CHECK(a.embedding == b.embedding);
    for (std::size_t i = 0; i < 3; ++i) CHECK(a.models[i] == b.models[i]);
    CHECK(a.history[2].loss == b.history[2].loss);
    CHECK(a.history[0].loss.size() == 2);
    CHECK(a.history[0].diversity == std::vector<double>{0.0, 0.0});
    CHECK(a.history[0].transferred.empty());

    e.seed = 43;
    auto c = train_ensemble(series, tiny_cae(), e);
    CHECK_FALSE(c.models[0] == a.models[0]);
}

TEST_CASE("members differ, and the no-transfer ablation starts each from scratch") {
    const auto series = tiny_series();
    EnsembleConfig e = tiny_ens();
    e.beta = 1.0;
    auto full = train_ensemble(series, tiny_cae(), e);
    CHECK(full.history[1].transferred.size() == full.models[0].size());
    CHECK_FALSE(full.models[0] == full.models[1]);

    e.transfer = false;
    e.lambda = 0.0;
    auto indep = train_ensemble(series, tiny_cae(), e);
    CHECK(indep.history[1].transferred.empty());
    CHECK(indep.history[1].diversity.size() == 2);
}

TEST_CASE("a non-finite loss aborts with the model and epoch") {
    EnsembleConfig e = tiny_ens();
    e.adam.lr = std::numeric_limits<double>::quiet_NaN();
    try {
        train_ensemble(tiny_series(), tiny_cae(), e);
        FAIL("expected divergence");
    } catch (const DivergenceError& err) {
        CHECK(err.model() == 1);
        CHECK(err.epoch() >= 1);
    }
}

TEST_CASE("score_series matches a direct assembly") {
    const auto series = tiny_series(40, 3);
    for (std::size_t m : {1, 2, 3}) {
        auto state = train_ensemble(series, tiny_cae(), tiny_ens(m));
        auto scored = score_series(state, series, true);
        REQUIRE(scored.scores.size() == 40);
        REQUIRE(scored.per_model);
        const std::size_t w = 6;
        for (std::size_t t = 0; t < 40; ++t) {
            const std::size_t start = t < w ? 0 : t - w + 1;
            const std::size_t pos = t - start;
            Tensor win({w, 2});
            for (std::size_t r = 0; r < w; ++r)
                for (std::size_t d = 0; d < 2; ++d) win(r, d) = series.values(start + r, d);
            std::vector<double> errs;
            for (std::size_t i = 0; i < m; ++i) {
                auto out = cae_forward(win, state.embedding, state.models[i], state.cae);
                double e = 0;
                for (std::size_t j = 0; j < 4; ++j) e += (out.x(pos, j) - out.x_hat(pos, j)) * (out.x(pos, j) - out.x_hat(pos, j));
                errs.push_back(e);
                CHECK((*scored.per_model)(i, t) == e);
            }
            CHECK(scored.scores[t] == testing::median_oracle(errs));
        }
    }
}

TEST_CASE("saved ensembles reload bit for bit and score identically") {
    const auto series = tiny_series();
    auto state = train_ensemble(series, tiny_cae(), tiny_ens(2));
    state.scale = ScaleParams{{0.5, -1.0}, {2.0, 3.0}};
    auto dir = testing::temp_dir("ensemble_rt");
    save_ensemble(dir, state);
    auto back = load_ensemble(dir);
    CHECK(back.cae == state.cae);
    CHECK(back.embedding == state.embedding);
    REQUIRE(back.models.size() == 2);
    CHECK(back.models[1] == state.models[1]);
    CHECK(back.scale->std == state.scale->std);
    CHECK(back.history[1].loss == state.history[1].loss);
    CHECK(score_series(back, series).scores == score_series(state, series).scores);

    std::filesystem::remove(dir / "model_2.ckpt");
    CHECK_THROWS_AS(load_ensemble(dir), DataError);
}

TEST_CASE("series diversity needs two models and is zero for clones") {
    const auto series = tiny_series();
    auto one = train_ensemble(series, tiny_cae(), tiny_ens(1));
    CHECK_THROWS_AS(series_diversity(one, series), ConfigError);
    one.models.push_back(one.models[0]);
    CHECK(series_diversity(one, series) == 0.0);
}
