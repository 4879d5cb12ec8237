#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "caee/tensor.hpp"

namespace caee {

struct NodeId {
    std::size_t index = 0;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so insertion
/// order is a topological order and backward walks it in reverse.
///
/// Parameter leaves borrow their value and, if given a sink, add their
/// gradient into it when backward() runs. Sinks accumulate; callers zero them.
class Graph {
public:
    using BackwardFn = std::function<void(Graph&, NodeId)>;

    NodeId constant(Tensor value);
    NodeId leaf(Tensor value, bool requires_grad = true);
    NodeId parameter(const Tensor& value, Tensor* grad_sink);

    /// Append an op result. `backward` is dropped when no input needs a gradient.
    NodeId record(Tensor value, const std::vector<NodeId>& inputs, BackwardFn backward);

    const Tensor& value(NodeId id) const;
    bool requires_grad(NodeId id) const { return nodes_.at(id.index).requires_grad; }

    /// Gradient of the last backward() target with respect to `id`.
    const Tensor& grad(NodeId id) const;
    /// Gradient buffer of `id`, zero-allocated on first use. For backward rules.
    Tensor& grad_mut(NodeId id);

    /// Seeds d(loss)/d(loss) = 1 and propagates. Runs at most once per graph.
    void backward(NodeId loss);

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Tensor owned;
        const Tensor* borrowed = nullptr;
        Tensor grad;
        Tensor* sink = nullptr;
        bool requires_grad = false;
        BackwardFn backward;
    };

    std::vector<Node> nodes_;
    bool finalized_ = false;
};

struct Parameter {
    Tensor value;
    Tensor grad;
};

/// Gradient buffers aligned with a ParamSet's entry order.
using GradBuffer = std::vector<Tensor>;

/// Named parameter tensors in a fixed insertion order. Names are paths such
/// as `encoder/layer3/conv/kernel`.
class ParamSet {
public:
    Parameter& add(const std::string& name, Tensor value);

    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    Parameter& at(const std::string& name);
    const Parameter& at(const std::string& name) const;
    std::size_t index_of(const std::string& name) const;

    std::size_t size() const noexcept { return params_.size(); }
    const std::string& name(std::size_t i) const { return names_.at(i); }
    Parameter& operator[](std::size_t i) { return params_.at(i); }
    const Parameter& operator[](std::size_t i) const { return params_.at(i); }
    const std::vector<std::string>& names() const noexcept { return names_; }

    std::size_t scalar_count() const;
    void zero_grad();
    GradBuffer make_grad_buffer() const;
    void add_to_grad(const GradBuffer& buffer, double scale = 1.0);

    /// True when names, shapes and values all match bit for bit.
    friend bool operator==(const ParamSet& a, const ParamSet& b);

private:
    std::vector<std::string> names_;
    std::vector<Parameter> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Parameter nodes of one ParamSet inside one Graph.
class BoundParams {
public:
    BoundParams() = default;
    /// `sinks` null binds the set frozen (no gradient).
    BoundParams(Graph& graph, const ParamSet& params, GradBuffer* sinks);

    NodeId operator[](const std::string& name) const;

private:
    const ParamSet* params_ = nullptr;
    std::vector<NodeId> nodes_;
};

void zero_buffer(GradBuffer& buffer);

}  // namespace caee
