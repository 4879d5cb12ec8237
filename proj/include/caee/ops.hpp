#pragma once

#include "caee/graph.hpp"

namespace caee::ops {

enum class Padding { same, causal };
enum class Elementwise { add, mul };
enum class Reduce { sum, mean, per_row };

/// out = x W^T + b along the last axis. x is [n_in] or [rows x n_in], W is [n_out x n_in].
NodeId linear(Graph& g, NodeId x, NodeId weight, NodeId bias);

/// 1-D cross-correlation over time. x is [w x c_in], kernel [c_out x c_in x k],
/// bias [c_out]; output [w x c_out]. `same` zero-pads (k-1)/2 on both sides
/// (k odd); `causal` zero-pads k-1 before the first step only.
NodeId conv1d(Graph& g, NodeId x, NodeId kernel, NodeId bias, Padding padding);

NodeId sigmoid(Graph& g, NodeId x);
NodeId tanh(Graph& g, NodeId x);

/// Row-wise softmax of a rank-2 tensor with max subtraction.
NodeId softmax_rows(Graph& g, NodeId x);

NodeId elementwise(Graph& g, NodeId a, NodeId b, Elementwise kind);
inline NodeId add(Graph& g, NodeId a, NodeId b) { return elementwise(g, a, b, Elementwise::add); }
inline NodeId mul(Graph& g, NodeId a, NodeId b) { return elementwise(g, a, b, Elementwise::mul); }
NodeId sub(Graph& g, NodeId a, NodeId b);
NodeId scale(Graph& g, NodeId x, double factor);

/// [m x n] * [n x p]
NodeId matmul(Graph& g, NodeId a, NodeId b);
/// [m x n] * [p x n]^T
NodeId matmul_nt(Graph& g, NodeId a, NodeId b);

/// Squared difference reduced to a scalar (sum or mean) or to one value per row.
NodeId sq_error(Graph& g, NodeId a, NodeId b, Reduce reduce);
NodeId sum(Graph& g, NodeId x);

}  // namespace caee::ops
