#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dualvq/numerics/tensor.hpp"

namespace dualvq {

/// A named trainable tensor. Gradients accumulate into `grad` on every
/// backward pass until zero_grad() is called; frozen parameters never
/// receive a gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool frozen = false;

  void zero_grad() { grad = Tensor::zeros_like(value); }
};

/// Name-ordered parameter registry. Iteration order is lexicographic, which
/// keeps checkpoints and optimizer state independent of construction order.
class ParameterSet {
 public:
  Parameter& add(std::string name, Tensor init) {
    auto [it, inserted] = params_.try_emplace(name);
    if (!inserted) throw std::invalid_argument("duplicate parameter '" + name + "'");
    it->second.name = std::move(name);
    it->second.value = std::move(init);
    it->second.zero_grad();
    return it->second;
  }

  Parameter& at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("no parameter '" + name + "'");
    return it->second;
  }
  const Parameter& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("no parameter '" + name + "'");
    return it->second;
  }
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  std::size_t size() const { return params_.size(); }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad() {
    for (auto& [_, p] : params_) p.zero_grad();
  }

  /// Sets the frozen flag on every parameter whose name starts with `prefix`.
  std::size_t set_frozen(std::string_view prefix, bool frozen) {
    std::size_t n = 0;
    for (auto& [name, p] : params_) {
      if (name.starts_with(prefix)) {
        p.frozen = frozen;
        ++n;
      }
    }
    return n;
  }

 private:
  std::map<std::string, Parameter, std::less<>> params_;
};

class Graph;

/// Handle to a node recorded on a Graph.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so reverse
/// insertion order is a valid topological order for backpropagation.
class Graph {
 public:
  using Backward = std::function<void(Graph&, std::size_t)>;

  /// With tracking disabled no node requires a gradient and no backward
  /// closures are kept; used for inference.
  explicit Graph(bool track_gradients = true) : track_(track_gradients) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value) { return push("constant", std::move(value), false, nullptr, {}); }

  /// Leaf that records its own gradient without being bound to a Parameter.
  Var variable(Tensor value) { return push("variable", std::move(value), track_, nullptr, {}); }

  bool tracking() const { return track_; }

  Var parameter(Parameter& p) {
    Var v = push("parameter", p.value, track_ && !p.frozen, nullptr, {});
    if (track_) nodes_[v.id].param = &p;
    return v;
  }

  /// Records an op output. The node requires a gradient iff any parent does.
  Var record(const char* op, Tensor value, std::initializer_list<Var> parents, Backward backward) {
    bool needs = false;
    for (const Var& p : parents) {
      check_owner(p, op);
      needs = needs || nodes_[p.id].requires_grad;
    }
    if (!value.all_finite()) {
      throw std::domain_error(std::string(op) + " (node " + std::to_string(nodes_.size()) +
                              "): non-finite output");
    }
    return push(op, std::move(value), needs, needs ? std::move(backward) : Backward{}, parents);
  }

  const Tensor& value(Var v) const {
    check_owner(v, "value");
    return nodes_[v.id].value;
  }
  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const char* op_name(std::size_t id) const { return nodes_[id].op; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient of the last backward() loss with respect to `v` (zeros if none flowed).
  Tensor grad(Var v) const {
    check_owner(v, "grad");
    const Node& n = nodes_[v.id];
    return n.grad.empty() ? Tensor::zeros_like(n.value) : n.grad;
  }

  /// Upstream gradient of node `id`; only valid inside a Backward callback.
  const Tensor& upstream(std::size_t id) const { return nodes_[id].grad; }

  /// Gradient accumulator of node `id`, allocated on first use.
  Tensor& grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty() && !n.value.empty()) n.grad = Tensor::zeros_like(n.value);
    return n.grad;
  }

  /// Backpropagates from a scalar loss and accumulates into Parameter::grad.
  void backward(Var loss) {
    check_owner(loss, "backward");
    if (nodes_[loss.id].value.size() != 1) {
      throw ShapeError("backward: loss node " + std::to_string(loss.id) + " (" + nodes_[loss.id].op +
                       ") is not scalar: " + nodes_[loss.id].value.shape_string());
    }
    for (Node& n : nodes_) n.grad = Tensor();
    grad_buffer(loss.id)[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.backward) n.backward(*this, i);
      if (n.param != nullptr && !n.param->frozen) {
        if (n.param->grad.empty()) n.param->zero_grad();
        n.param->grad += n.grad;
      }
    }
  }

  /// Parent ids of node `id`, for reachability audits.
  const std::vector<std::size_t>& parents(std::size_t id) const { return nodes_[id].parents; }

  /// Parameters bound on this tape that do not influence `loss`.
  std::vector<const Parameter*> unreached_parameters(Var loss) const {
    std::vector<char> reach(nodes_.size(), 0);
    reach[loss.id] = 1;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      if (!reach[i]) continue;
      for (std::size_t p : nodes_[i].parents) reach[p] = 1;
    }
    std::vector<const Parameter*> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].param != nullptr && !reach[i]) out.push_back(nodes_[i].param);
    }
    return out;
  }

 private:
  struct Node {
    const char* op = "";
    Tensor value;
    Tensor grad;
    Backward backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
    std::vector<std::size_t> parents;
  };

  Var push(const char* op, Tensor value, bool needs, Backward backward, std::initializer_list<Var> parents) {
    Node n;
    n.op = op;
    n.value = std::move(value);
    n.requires_grad = needs;
    n.backward = std::move(backward);
    n.parents.reserve(parents.size());
    for (const Var& p : parents) n.parents.push_back(p.id);
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
  }

  void check_owner(Var v, const char* op) const {
    if (v.graph != this || v.id >= nodes_.size()) {
      throw std::invalid_argument(std::string(op) + ": variable does not belong to this graph");
    }
  }

  std::deque<Node> nodes_;
  bool track_ = true;
};

}  // namespace dualvq
