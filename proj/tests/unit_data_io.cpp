#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "caee/data_io.hpp"
#include "caee/errors.hpp"
#include "support.hpp"

using namespace caee;

namespace {
LabeledSeries parse(const std::string& text) {
    std::istringstream in(text);
    return parse_series(in, "mem.csv");
}

LabeledSeries make_series(std::vector<std::vector<double>> rows) {
    LabeledSeries s;
    s.name = "rows";
    s.values = Tensor({rows.size(), rows.front().size()});
    for (std::size_t t = 0; t < rows.size(); ++t)
        for (std::size_t j = 0; j < rows[t].size(); ++j) s.values(t, j) = rows[t][j];
    return s;
}
}  // namespace

TEST_CASE("csv parsing keeps values and an optional label column") {
    auto s = parse("a,b,label\n1,2,0\n3.5,-4,1\n");
    CHECK(s.length() == 2);
    CHECK(s.dims() == 2);
    CHECK(s.values(1, 0) == 3.5);
    CHECK(s.values(1, 1) == -4.0);
    REQUIRE(s.labels);
    CHECK(*s.labels == std::vector<int>{0, 1});

    auto u = parse("x\n1\n2\n3\n");
    CHECK_FALSE(u.labels);
    CHECK(u.length() == 3);
}

TEST_CASE("csv errors name the row") {
    CHECK_THROWS_AS(parse(""), DataError);
    CHECK_THROWS_AS(parse("a,b\n"), DataError);
    CHECK_THROWS_WITH_AS(parse("a,b\n1,2\n1\n"), doctest::Contains("row 3"), DataError);
    CHECK_THROWS_WITH_AS(parse("a,label\n1,2\n"), doctest::Contains("row 2"), DataError);
    CHECK_THROWS_AS(parse("a\nabc\n"), DataError);
    CHECK_THROWS_AS(parse("a\nnan\n"), DataError);
    CHECK_THROWS_AS(parse("a\ninf\n"), DataError);
    CHECK_THROWS_AS(load_series("/nonexistent/file.csv"), DataError);
}

TEST_CASE("write and load round trip exactly") {
    std::mt19937_64 rng(3);
    LabeledSeries s;
    s.name = "rt";
    s.values = testing::random_tensor({17, 3}, rng, -1e6, 1e6);
    s.labels = std::vector<int>(17, 0);
    (*s.labels)[4] = 1;
    auto dir = testing::temp_dir("dataio_rt");
    write_series(dir / "s.csv", s);
    auto back = load_series(dir / "s.csv");
    CHECK(back.values == s.values);
    CHECK(*back.labels == *s.labels);
}

TEST_CASE("z-score maps each training dimension to mean 0 and std 1") {
    auto s = make_series({{1, 10}, {2, 20}, {3, 30}, {4, 40}});
    auto p = zscore_fit(s);
    CHECK(p.mean[0] == doctest::Approx(2.5));
    CHECK(p.std[0] == doctest::Approx(std::sqrt(1.25)));
    auto z = zscore_apply(s, p);
    for (std::size_t j = 0; j < 2; ++j) {
        double m = 0, v = 0;
        for (std::size_t t = 0; t < 4; ++t) m += z.values(t, j) / 4;
        for (std::size_t t = 0; t < 4; ++t) v += (z.values(t, j) - m) * (z.values(t, j) - m) / 4;
        CHECK(m == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(v == doctest::Approx(1.0));
    }
}

TEST_CASE("z-score of a constant dimension leaves unit spread") {
    auto s = make_series({{5, 1}, {5, 2}, {5, 3}});
    auto p = zscore_fit(s);
    CHECK(p.std[0] == 1.0);
    auto z = zscore_apply(s, p);
    CHECK(z.values(0, 0) == 0.0);
    CHECK(z.values(2, 0) == 0.0);
}

TEST_CASE("windows have stride one and the expected count") {
    std::mt19937_64 rng(1);
    LabeledSeries s;
    s.values = testing::random_tensor({10, 2}, rng);
    auto b = make_windows(s, 4);
    CHECK(b.count() == 7);
    CHECK(b.window() == 4);
    CHECK(b.start_indices.back() == 6);
    for (std::size_t j = 0; j < b.count(); ++j)
        for (std::size_t t = 0; t < 4; ++t)
            for (std::size_t d = 0; d < 2; ++d) CHECK(b.windows(j, t, d) == s.values(j + t, d));
    CHECK(make_windows(s, 10).count() == 1);
    CHECK_THROWS_AS(make_windows(s, 11), DataError);
    CHECK_THROWS_AS(make_windows(s, 1), DataError);
}

TEST_CASE("train/validation split is contiguous and drops labels") {
    std::mt19937_64 rng(2);
    LabeledSeries s;
    s.values = testing::random_tensor({100, 1}, rng);
    s.labels = std::vector<int>(100, 0);
    auto [tr, va] = split_train_validation(s, 0.3, 8);
    CHECK(tr.length() == 70);
    CHECK(va.length() == 30);
    CHECK(va.values(0, 0) == s.values(70, 0));
    CHECK_FALSE(tr.labels);
    CHECK_FALSE(va.labels);
    CHECK_THROWS_AS(split_train_validation(s, 0.3, 40), DataError);
    CHECK_THROWS_AS(split_train_validation(s, 1.0, 1), ConfigError);
}

TEST_CASE("synthetic series has the requested spikes and is seed-determined") {
    SynthConfig cfg;
    cfg.length = 2000;
    cfg.dims = 3;
    cfg.contamination = 0.01;
    auto a = synth_generate(cfg);
    auto b = synth_generate(cfg);
    CHECK(a.values == b.values);
    REQUIRE(a.labels);
    int count = 0;
    for (int l : *a.labels) count += l;
    CHECK(count == 20);
    cfg.seed = 8;
    CHECK_FALSE(synth_generate(cfg).values == a.values);
}
