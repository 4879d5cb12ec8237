#include "caee/graph.hpp"

#include <stdexcept>

#include "caee/errors.hpp"

namespace caee {

NodeId Graph::constant(Tensor value) {
    Node node;
    node.owned = std::move(value);
    nodes_.push_back(std::move(node));
    return {nodes_.size() - 1};
}

NodeId Graph::leaf(Tensor value, bool requires_grad) {
    Node node;
    node.owned = std::move(value);
    node.requires_grad = requires_grad;
    nodes_.push_back(std::move(node));
    return {nodes_.size() - 1};
}

NodeId Graph::parameter(const Tensor& value, Tensor* grad_sink) {
    if (grad_sink && !grad_sink->same_shape(value)) {
        throw ShapeError("gradient sink " + shape_str(grad_sink->shape()) + " does not match parameter " +
                         shape_str(value.shape()));
    }
    Node node;
    node.borrowed = &value;
    node.sink = grad_sink;
    node.requires_grad = grad_sink != nullptr;
    nodes_.push_back(std::move(node));
    return {nodes_.size() - 1};
}

NodeId Graph::record(Tensor value, const std::vector<NodeId>& inputs, BackwardFn backward) {
    Node node;
    node.owned = std::move(value);
    for (auto in : inputs) {
        if (nodes_.at(in.index).requires_grad) {
            node.requires_grad = true;
            break;
        }
    }
    if (node.requires_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return {nodes_.size() - 1};
}

const Tensor& Graph::value(NodeId id) const {
    const Node& node = nodes_.at(id.index);
    return node.borrowed ? *node.borrowed : node.owned;
}

const Tensor& Graph::grad(NodeId id) const {
    const Node& node = nodes_.at(id.index);
    if (node.grad.empty() && !value(id).empty()) {
        throw std::logic_error("no gradient recorded for node " + std::to_string(id.index));
    }
    return node.grad;
}

Tensor& Graph::grad_mut(NodeId id) {
    Node& node = nodes_.at(id.index);
    if (node.grad.empty()) node.grad = Tensor(value(id).shape());
    return node.grad;
}

void Graph::backward(NodeId loss) {
    if (finalized_) throw std::logic_error("backward already ran on this graph");
    if (loss.index >= nodes_.size()) throw std::logic_error("loss node is not part of the graph");
    if (value(loss).size() != 1) throw ShapeError("loss must be scalar, got " + shape_str(value(loss).shape()));
    finalized_ = true;
    if (!nodes_[loss.index].requires_grad) return;

    grad_mut(loss).fill(1.0);
    for (std::size_t i = loss.index + 1; i-- > 0;) {
        Node& node = nodes_[i];
        if (!node.requires_grad || node.grad.empty()) continue;
        if (node.backward) {
            node.backward(*this, NodeId{i});
        } else if (node.sink) {
            auto dst = node.sink->data();
            auto src = node.grad.data();
            for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
        }
    }
}

Parameter& ParamSet::add(const std::string& name, Tensor value) {
    if (contains(name)) throw std::invalid_argument("duplicate parameter " + name);
    index_.emplace(name, params_.size());
    names_.push_back(name);
    Tensor grad = Tensor::zeros_like(value);
    params_.push_back({std::move(value), std::move(grad)});
    return params_.back();
}

std::size_t ParamSet::index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter " + name);
    return it->second;
}

Parameter& ParamSet::at(const std::string& name) { return params_[index_of(name)]; }
const Parameter& ParamSet::at(const std::string& name) const { return params_[index_of(name)]; }

std::size_t ParamSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

void ParamSet::zero_grad() {
    for (auto& p : params_) {
        if (!p.grad.same_shape(p.value)) p.grad = Tensor::zeros_like(p.value);
        p.grad.fill(0.0);
    }
}

GradBuffer ParamSet::make_grad_buffer() const {
    GradBuffer buffer;
    buffer.reserve(params_.size());
    for (const auto& p : params_) buffer.push_back(Tensor::zeros_like(p.value));
    return buffer;
}

void ParamSet::add_to_grad(const GradBuffer& buffer, double scale) {
    if (buffer.size() != params_.size()) throw ShapeError("gradient buffer does not match parameter set");
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto dst = params_[i].grad.data();
        auto src = buffer[i].data();
        if (dst.size() != src.size()) throw ShapeError("gradient buffer shape mismatch for " + names_[i]);
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += scale * src[k];
    }
}

bool operator==(const ParamSet& a, const ParamSet& b) {
    if (a.names_ != b.names_) return false;
    for (std::size_t i = 0; i < a.params_.size(); ++i) {
        if (!(a.params_[i].value == b.params_[i].value)) return false;
    }
    return true;
}

BoundParams::BoundParams(Graph& graph, const ParamSet& params, GradBuffer* sinks) : params_(&params) {
    if (sinks && sinks->size() != params.size()) throw ShapeError("gradient buffer does not match parameter set");
    nodes_.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        nodes_.push_back(graph.parameter(params[i].value, sinks ? &(*sinks)[i] : nullptr));
    }
}

NodeId BoundParams::operator[](const std::string& name) const { return nodes_[params_->index_of(name)]; }

void zero_buffer(GradBuffer& buffer) {
    for (auto& t : buffer) t.fill(0.0);
}

}  // namespace caee
