#include <doctest.h>

#include <atomic>
#include <cmath>
#include <sstream>

#include "caee/adam.hpp"
#include "caee/checkpoint.hpp"
#include "caee/errors.hpp"
#include "caee/grad_check.hpp"
#include "caee/graph.hpp"
#include "caee/ops.hpp"
#include "caee/parallel.hpp"
#include "support.hpp"

using namespace caee;

namespace {

// Checks d(sum(f(inputs) * probe))/d(inputs) for a random probe.
GradCheckReport check_op(ParamSet& ps, const std::function<NodeId(Graph&, const BoundParams&)>& f,
                         std::uint64_t seed = 1) {
    std::mt19937_64 rng(seed);
    Tensor probe;
    LossBuilder build = [&](Graph& g, std::vector<GradBuffer>* sinks) {
        BoundParams p(g, ps, sinks ? &(*sinks)[0] : nullptr);
        NodeId out = f(g, p);
        if (probe.empty()) probe = testing::random_tensor(g.value(out).shape(), rng);
        return ops::sum(g, ops::mul(g, out, g.constant(probe)));
    };
    return grad_check(build, {&ps}, {});
}

}  // namespace

TEST_CASE("conv1d matches a direct convolution for both paddings") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        std::uniform_int_distribution<std::size_t> dw(1, 12), dc(1, 5), dk(0, 3);
        const std::size_t w = dw(rng), cin = dc(rng), cout = dc(rng), k = 2 * dk(rng) + 1;
        Tensor x = testing::random_tensor({w, cin}, rng);
        Tensor kern = testing::random_tensor({cout, cin, k}, rng);
        Tensor bias = testing::random_tensor({cout}, rng);
        for (bool causal : {false, true}) {
            Graph g;
            NodeId y = ops::conv1d(g, g.constant(x), g.constant(kern), g.constant(bias),
                                   causal ? ops::Padding::causal : ops::Padding::same);
            Tensor expect = testing::conv_oracle(x, kern, bias, causal);
            for (std::size_t i = 0; i < expect.size(); ++i) CHECK(g.value(y)[i] == doctest::Approx(expect[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("same padding rejects even kernels, causal accepts them") {
    Graph g;
    NodeId x = g.constant(Tensor({4, 1}, 1.0));
    NodeId k = g.constant(Tensor({1, 1, 2}, 1.0));
    NodeId b = g.constant(Tensor({1}));
    CHECK_THROWS_AS(ops::conv1d(g, x, k, b, ops::Padding::same), ShapeError);
    NodeId y = ops::conv1d(g, x, k, b, ops::Padding::causal);
    CHECK(g.value(y)(0, 0) == 1.0);
    CHECK(g.value(y)(1, 0) == 2.0);
}

TEST_CASE("op gradients match finite differences") {
    std::mt19937_64 rng(5);
    ParamSet ps;
    ps.add("a", testing::random_tensor({4, 3}, rng));
    ps.add("b", testing::random_tensor({4, 3}, rng));
    ps.add("m", testing::random_tensor({3, 5}, rng));
    ps.add("n", testing::random_tensor({6, 3}, rng));
    ps.add("k", testing::random_tensor({2, 3, 3}, rng));
    ps.add("kb", testing::random_tensor({2}, rng));
    ps.add("w", testing::random_tensor({2, 3}, rng));
    ps.add("wb", testing::random_tensor({2}, rng));

    SUBCASE("elementwise and activations") {
        auto r = check_op(ps, [](Graph& g, const BoundParams& p) {
            NodeId s = ops::mul(g, ops::sigmoid(g, p["a"]), ops::tanh(g, p["b"]));
            return ops::sub(g, ops::add(g, s, ops::scale(g, p["a"], 0.7)), p["b"]);
        });
        CHECK(r.passed);
    }
    SUBCASE("matmul variants") {
        auto r = check_op(ps, [](Graph& g, const BoundParams& p) {
            return ops::add(g, ops::matmul(g, p["a"], p["m"]), ops::matmul(g, ops::matmul_nt(g, p["b"], p["n"]), ops::matmul(g, p["n"], p["m"])));
        });
        CHECK(r.passed);
    }
    SUBCASE("softmax") {
        auto r = check_op(ps, [](Graph& g, const BoundParams& p) { return ops::softmax_rows(g, ops::scale(g, p["a"], 3.0)); });
        CHECK(r.passed);
    }
    SUBCASE("linear") {
        auto r = check_op(ps, [](Graph& g, const BoundParams& p) { return ops::linear(g, p["a"], p["w"], p["wb"]); });
        CHECK(r.passed);
    }
    SUBCASE("conv1d same and causal") {
        auto r = check_op(ps, [](Graph& g, const BoundParams& p) {
            NodeId s = ops::conv1d(g, p["a"], p["k"], p["kb"], ops::Padding::same);
            NodeId c = ops::conv1d(g, p["b"], p["k"], p["kb"], ops::Padding::causal);
            return ops::mul(g, s, c);
        });
        CHECK(r.passed);
    }
    SUBCASE("squared error reductions") {
        for (auto red : {ops::Reduce::sum, ops::Reduce::mean, ops::Reduce::per_row}) {
            auto r = check_op(ps, [red](Graph& g, const BoundParams& p) { return ops::sq_error(g, p["a"], p["b"], red); });
            CHECK(r.passed);
        }
    }
}

TEST_CASE("softmax rows sum to one even for large inputs") {
    Graph g;
    NodeId y = ops::softmax_rows(g, g.constant(Tensor({2, 3}, std::vector<double>{1000, 1001, 1002, -5, 0, 5})));
    for (std::size_t i = 0; i < 2; ++i) {
        double s = 0;
        for (double v : g.value(y).row(i)) s += v;
        CHECK(s == doctest::Approx(1.0).epsilon(1e-15));
    }
    CHECK(g.value(y).all_finite());
}

TEST_CASE("graph semantics") {
    Graph g;
    NodeId c = g.constant(Tensor::scalar(2.0));
    NodeId x = g.leaf(Tensor::scalar(3.0));
    NodeId y = ops::mul(g, ops::mul(g, x, x), c);
    g.backward(y);
    CHECK(g.grad(x).item() == doctest::Approx(12.0));
    CHECK_FALSE(g.requires_grad(c));
    CHECK_THROWS_AS(g.backward(y), std::logic_error);

    Graph h;
    NodeId v = h.leaf(Tensor({2}, 1.0));
    CHECK_THROWS_AS(h.backward(v), ShapeError);
}

TEST_CASE("parameters accumulate into their sinks") {
    ParamSet ps;
    ps.add("w", Tensor({2}, std::vector<double>{1, 2}));
    GradBuffer buf = ps.make_grad_buffer();
    for (int rep = 0; rep < 2; ++rep) {
        Graph g;
        BoundParams p(g, ps, &buf);
        g.backward(ops::sum(g, ops::mul(g, p["w"], p["w"])));
    }
    CHECK(buf[0][0] == doctest::Approx(4.0));
    CHECK(buf[0][1] == doctest::Approx(8.0));
}

TEST_CASE("adam first step moves each coordinate by about lr against the gradient") {
    ParamSet ps;
    ps.add("w", Tensor({3}, std::vector<double>{1, 1, 1}));
    ps[0].grad = Tensor({3}, std::vector<double>{0.5, -2.0, 0.0});
    auto st = make_adam_state(ps);
    adam_step(ps, st);
    CHECK(ps[0].value[0] == doctest::Approx(1 - 1e-3).epsilon(1e-9));
    CHECK(ps[0].value[1] == doctest::Approx(1 + 1e-3).epsilon(1e-9));
    CHECK(ps[0].value[2] == 1.0);
    CHECK(ps[0].grad[1] == -2.0);

    // Oracle for step 2 with gradient g2.
    ps[0].grad = Tensor({3}, std::vector<double>{1.0, 1.0, 1.0});
    adam_step(ps, st);
    const double g1 = 0.5, g2 = 1.0;
    const double m = 0.9 * (0.1 * g1) + 0.1 * g2, v = 0.999 * (0.001 * g1 * g1) + 0.001 * g2 * g2;
    const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
    const double first = 1e-3 * 0.5 / (0.5 + 1e-8);
    CHECK(ps[0].value[0] == doctest::Approx(1 - first - 1e-3 * mh / (std::sqrt(vh) + 1e-8)).epsilon(1e-14));
}

TEST_CASE("checkpoint round trip is bit exact") {
    std::mt19937_64 rng(9);
    ParamSet ps;
    ps.add("enc/kernel", testing::random_tensor({3, 2, 3}, rng));
    ps.add("enc/bias", testing::random_tensor({3}, rng));
    ps.add("scalar", Tensor::scalar(-0.0));
    ps.add("tiny", Tensor({1}, std::vector<double>{5e-324}));
    std::stringstream buf;
    write_checkpoint(buf, ps, {{"note", "x"}});
    auto back = read_checkpoint(buf);
    CHECK(back.params == ps);
    CHECK(back.metadata["note"] == "x");
    CHECK(std::signbit(back.params.at("scalar").value.item()));

    std::string bytes = buf.str();
    std::stringstream bad(std::string("NOTACKPT") + bytes.substr(8));
    CHECK_THROWS_AS(read_checkpoint(bad), DataError);
    std::stringstream cut(bytes.substr(0, bytes.size() - 3));
    CHECK_THROWS_AS(read_checkpoint(cut), DataError);
}

TEST_CASE("parallel_for runs each index once and rethrows") {
    std::vector<std::atomic<int>> hits(100);
    parallel_for(100, 4, [&](std::size_t i) { hits[i]++; });
    for (auto& h : hits) CHECK(h.load() == 1);
    CHECK_THROWS_AS(parallel_for(10, 3,
                                 [](std::size_t i) {
                                     if (i == 7) throw std::runtime_error("boom");
                                 }),
                    std::runtime_error);
}
