#include "caee/cae.hpp"

#include <cmath>

#include "caee/errors.hpp"

namespace caee {

using ops::Padding;

void CaeConfig::validate() const {
    if (window < 2) throw ConfigError("window size must be at least 2");
    if (input_dim < 1) throw ConfigError("input dimension must be at least 1");
    if (embed_dim < 1) throw ConfigError("embedding dimension must be at least 1");
    if (layers < 1) throw ConfigError("need at least one convolution layer");
    if (kernel < 1 || kernel % 2 == 0) throw ConfigError("kernel size must be odd");
}

nlohmann::json CaeConfig::to_json() const {
    return {{"window", window}, {"input_dim", input_dim}, {"embed_dim", embed_dim},
            {"layers", layers}, {"kernel", kernel},       {"attention", attention}};
}

CaeConfig CaeConfig::from_json(const nlohmann::json& j) {
    CaeConfig c;
    c.window = j.at("window").get<std::size_t>();
    c.input_dim = j.at("input_dim").get<std::size_t>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.layers = j.at("layers").get<std::size_t>();
    c.kernel = j.at("kernel").get<std::size_t>();
    c.attention = j.at("attention").get<bool>();
    c.validate();
    return c;
}

Tensor glorot_uniform(const Shape& shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-a, a);
    Tensor t(shape);
    for (auto& v : t.data()) v = dist(rng);
    return t;
}

std::string encoder_prefix(std::size_t layer) { return "encoder/layer" + std::to_string(layer) + "/"; }
std::string decoder_prefix(std::size_t layer) { return "decoder/layer" + std::to_string(layer) + "/"; }

namespace {

void add_conv(ParamSet& p, const std::string& prefix, std::size_t channels, std::size_t k, std::mt19937_64& rng) {
    p.add(prefix + "kernel", glorot_uniform({channels, channels, k}, channels * k, channels * k, rng));
    p.add(prefix + "bias", Tensor({channels}));
}

void add_glu_conv_block(ParamSet& p, const std::string& prefix, std::size_t channels, std::size_t k,
                        std::mt19937_64& rng) {
    add_conv(p, prefix + "glu_a/", channels, k, rng);
    add_conv(p, prefix + "glu_b/", channels, k, rng);
    add_conv(p, prefix + "conv/", channels, k, rng);
}

}  // namespace

ParamSet init_embedding(const CaeConfig& config, std::mt19937_64& rng) {
    config.validate();
    const std::size_t dp = config.embed_dim;
    ParamSet p;
    p.add("embedding/observation/weight", glorot_uniform({dp, config.input_dim}, config.input_dim, dp, rng));
    p.add("embedding/observation/bias", Tensor({dp}));
    p.add("embedding/position/weight", glorot_uniform({dp, 1}, 1, dp, rng));
    p.add("embedding/position/bias", Tensor({dp}));
    return p;
}

ParamSet init_cae_params(const CaeConfig& config, std::mt19937_64& rng) {
    config.validate();
    const std::size_t dp = config.embed_dim;
    const std::size_t k = config.kernel;
    ParamSet p;
    for (std::size_t l = 0; l < config.layers; ++l) add_glu_conv_block(p, encoder_prefix(l), dp, k, rng);
    for (std::size_t l = 0; l < config.layers; ++l) {
        const auto prefix = decoder_prefix(l);
        add_glu_conv_block(p, prefix, dp, k, rng);
        p.add(prefix + "attention/weight", glorot_uniform({dp, dp}, dp, dp, rng));
        p.add(prefix + "attention/bias", Tensor({dp}));
    }
    add_glu_conv_block(p, kReconstructionPrefix, dp, k, rng);
    return p;
}

NodeId embed(Graph& g, NodeId window, const BoundParams& emb) {
    const Tensor& s = g.value(window);
    if (s.rank() != 2) throw ShapeError("embed: window must be [w x D], got " + shape_str(s.shape()));
    const std::size_t w = s.dim(0);
    Tensor positions({w, 1});
    for (std::size_t t = 0; t < w; ++t) positions[t] = static_cast<double>(t + 1) / static_cast<double>(w);
    NodeId pos = g.constant(std::move(positions));

    NodeId v = ops::tanh(g, ops::linear(g, window, emb["embedding/observation/weight"], emb["embedding/observation/bias"]));
    NodeId p = ops::tanh(g, ops::linear(g, pos, emb["embedding/position/weight"], emb["embedding/position/bias"]));
    return ops::add(g, v, p);
}

NodeId glu(Graph& g, NodeId x, const BoundParams& p, const std::string& prefix, Padding padding) {
    NodeId a1 = ops::conv1d(g, x, p[prefix + "glu_a/kernel"], p[prefix + "glu_a/bias"], padding);
    NodeId a2 = ops::conv1d(g, x, p[prefix + "glu_b/kernel"], p[prefix + "glu_b/bias"], padding);
    return ops::mul(g, a1, ops::sigmoid(g, a2));
}

std::vector<NodeId> encode(Graph& g, NodeId x, const BoundParams& p, const CaeConfig& config) {
    std::vector<NodeId> states{x};
    states.reserve(config.layers + 1);
    for (std::size_t l = 0; l < config.layers; ++l) {
        const auto prefix = encoder_prefix(l);
        NodeId gated = glu(g, states.back(), p, prefix, Padding::same);
        NodeId conv = ops::conv1d(g, gated, p[prefix + "conv/kernel"], p[prefix + "conv/bias"], Padding::same);
        states.push_back(ops::add(g, ops::tanh(g, conv), states.back()));
    }
    return states;
}

NodeId decoder_conv(Graph& g, NodeId d, const BoundParams& p, std::size_t layer) {
    const auto prefix = decoder_prefix(layer);
    NodeId gated = glu(g, d, p, prefix, Padding::causal);
    return ops::conv1d(g, gated, p[prefix + "conv/kernel"], p[prefix + "conv/bias"], Padding::causal);
}

AttentionNodes attend(Graph& g, NodeId d, NodeId e, NodeId wz, NodeId bz) {
    const Tensor& dv = g.value(d);
    const Tensor& ev = g.value(e);
    if (dv.rank() != 2 || !dv.same_shape(ev)) {
        throw ShapeError("attend: decoder " + shape_str(dv.shape()) + " vs encoder " + shape_str(ev.shape()));
    }
    NodeId z = ops::linear(g, d, wz, bz);
    NodeId alpha = ops::softmax_rows(g, ops::matmul_nt(g, z, e));
    NodeId context = ops::matmul(g, alpha, e);
    return {ops::add(g, d, context), alpha};
}

NodeId decode(Graph& g, NodeId x, const std::vector<NodeId>& encoded, const BoundParams& p,
              const CaeConfig& config) {
    if (encoded.size() != config.layers + 1) {
        throw ShapeError("decode: expected " + std::to_string(config.layers + 1) + " encoder states, got " +
                         std::to_string(encoded.size()));
    }
    NodeId d = x;
    for (std::size_t l = 0; l < config.layers; ++l) {
        NodeId pre = ops::add(g, decoder_conv(g, d, p, l), encoded[l]);
        NodeId next = ops::add(g, ops::tanh(g, pre), d);
        if (config.attention) {
            const auto prefix = decoder_prefix(l);
            next = attend(g, next, encoded[l + 1], p[prefix + "attention/weight"], p[prefix + "attention/bias"]).updated;
        }
        d = next;
    }
    return d;
}

NodeId reconstruct(Graph& g, NodeId d, const BoundParams& p) {
    NodeId gated = glu(g, d, p, kReconstructionPrefix, Padding::same);
    NodeId conv = ops::conv1d(g, gated, p[kReconstructionPrefix + "conv/kernel"],
                              p[kReconstructionPrefix + "conv/bias"], Padding::same);
    return ops::tanh(g, conv);
}

NodeId autoencode(Graph& g, NodeId x, const BoundParams& p, const CaeConfig& config) {
    auto encoded = encode(g, x, p, config);
    return reconstruct(g, decode(g, x, encoded, p, config), p);
}

Tensor embed_window(const Tensor& window, const ParamSet& emb) {
    Graph g;
    BoundParams bound(g, emb, nullptr);
    return g.value(embed(g, g.constant(window), bound));
}

Tensor reconstruct_embedded(const Tensor& x, const ParamSet& params, const CaeConfig& config) {
    Graph g;
    BoundParams bound(g, params, nullptr);
    return g.value(autoencode(g, g.constant(x), bound, config));
}

CaeOutput cae_forward(const Tensor& window, const ParamSet& emb, const ParamSet& params, const CaeConfig& config) {
    if (window.rank() != 2 || window.dim(1) != config.input_dim) {
        throw ShapeError("cae_forward: window " + shape_str(window.shape()) + " does not match input dimension " +
                         std::to_string(config.input_dim));
    }
    CaeOutput out;
    out.x = embed_window(window, emb);
    out.x_hat = reconstruct_embedded(out.x, params, config);
    return out;
}

std::vector<double> window_errors(const Tensor& x, const Tensor& x_hat) {
    if (x.rank() != 2 || !x.same_shape(x_hat)) {
        throw ShapeError("window_errors: " + shape_str(x.shape()) + " vs " + shape_str(x_hat.shape()));
    }
    std::vector<double> errors(x.dim(0), 0.0);
    for (std::size_t t = 0; t < x.dim(0); ++t) {
        for (std::size_t c = 0; c < x.dim(1); ++c) {
            const double d = x(t, c) - x_hat(t, c);
            errors[t] += d * d;
        }
    }
    return errors;
}

}  // namespace caee
