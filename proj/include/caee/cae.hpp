#pragma once

#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "caee/graph.hpp"
#include "caee/ops.hpp"

namespace caee {

/// Architecture constants of one convolutional sequence-to-sequence autoencoder.
struct CaeConfig {
    std::size_t window = 16;
    std::size_t input_dim = 1;
    std::size_t embed_dim = 256;
    std::size_t layers = 10;
    std::size_t kernel = 3;
    bool attention = true;

    void validate() const;
    nlohmann::json to_json() const;
    static CaeConfig from_json(const nlohmann::json& j);

    friend bool operator==(const CaeConfig&, const CaeConfig&) = default;
};

/// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(const Shape& shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng);

/// Observation and position embedding: `embedding/{observation,position}/{weight,bias}`.
ParamSet init_embedding(const CaeConfig& config, std::mt19937_64& rng);

/// Encoder, decoder (with per-layer attention) and reconstruction head.
ParamSet init_cae_params(const CaeConfig& config, std::mt19937_64& rng);

std::string encoder_prefix(std::size_t layer);
std::string decoder_prefix(std::size_t layer);
inline const std::string kReconstructionPrefix = "reconstruction/";

// Graph builders. All stages map w x D' to w x D' except embed (w x D -> w x D').

/// x_t = tanh(W_v s_t + b_v) + tanh(W_p (t / w) + b_p), t = 1..w.
NodeId embed(Graph& g, NodeId window, const BoundParams& emb);

/// A1 * sigmoid(A2) with A_i = conv(x; prefix + "glu_a"/"glu_b").
NodeId glu(Graph& g, NodeId x, const BoundParams& p, const std::string& prefix, ops::Padding padding);

/// E^(0) = X and E^(l+1) = tanh(W_E (*) GLU(E^(l)) + b_E) + E^(l).
std::vector<NodeId> encode(Graph& g, NodeId x, const BoundParams& p, const CaeConfig& config);

/// Causal W_D (*) GLU(D) + b_D of decoder layer `layer`, before encoder injection.
NodeId decoder_conv(Graph& g, NodeId d, const BoundParams& p, std::size_t layer);

struct AttentionNodes {
    NodeId updated;  // D + C
    NodeId weights;  // w x w, row-stochastic
};

/// z_t = W_z d_t + b_z, alpha = softmax_rows(Z E^T), C = alpha E.
AttentionNodes attend(Graph& g, NodeId d, NodeId e, NodeId wz, NodeId bz);

/// D^(0) = X and D^(l+1) = tanh(decoder_conv(D^(l)) + E^(l)) + D^(l), followed
/// by the attention update against encoder output E^(l+1).
NodeId decode(Graph& g, NodeId x, const std::vector<NodeId>& encoded, const BoundParams& p,
              const CaeConfig& config);

/// X_hat = tanh(W_R (*) GLU(D) + b_R) with `same` padding.
NodeId reconstruct(Graph& g, NodeId d, const BoundParams& p);

/// reconstruct(decode(x, encode(x))).
NodeId autoencode(Graph& g, NodeId x, const BoundParams& p, const CaeConfig& config);

// Tensor-level evaluation without gradients.

Tensor embed_window(const Tensor& window, const ParamSet& emb);
Tensor reconstruct_embedded(const Tensor& x, const ParamSet& params, const CaeConfig& config);

struct CaeOutput {
    Tensor x;
    Tensor x_hat;
};

CaeOutput cae_forward(const Tensor& window, const ParamSet& emb, const ParamSet& params, const CaeConfig& config);

/// e_t = ||x_t - x_hat_t||^2 per row.
std::vector<double> window_errors(const Tensor& x, const Tensor& x_hat);

}  // namespace caee
