#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "bimind/numerics/tensor.hpp"

namespace bimind::num {

/// A named trainable tensor. Lives in a model; tapes reference it by address
/// and accumulate into `grad` on backward.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros_like(value)) {}

    void zero_grad() { grad = Tensor::zeros_like(value); }
};

using ParameterList = std::vector<Parameter*>;

void zero_grads(const ParameterList& params);

/// NaN/Inf detection after every forward primitive. On by default.
void set_finite_checks(bool enabled) noexcept;
bool finite_checks_enabled() noexcept;

class Tape;

/// Handle to a node recorded on a tape. Cheap to copy; valid as long as the
/// tape is alive.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape& tape() const { return *tape_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }

    const Tensor& value() const;
    const Tensor& grad() const;
    const Shape& shape() const { return value().shape(); }
    bool requires_grad() const;
    /// Value of a single-entry node.
    double item() const;

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// Reverse-mode recording tape.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order; backward walks it once in reverse. A tape and the Vars
/// it hands out belong to a single thread.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    Var leaf(Tensor value, bool requires_grad = true);
    /// Leaf bound to a model parameter; memoized, so one node per parameter.
    Var param(Parameter& p);

    /// Seeds d(root)/d(root) = 1 and propagates. Gradients of parameter leaves
    /// are added into `Parameter::grad`.
    void backward(Var root);

    std::size_t size() const noexcept { return nodes_.size(); }

    // Recording interface used by the primitives in ops.cpp.
    std::size_t record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward, const char* op);
    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    /// Gradient buffer, allocated as zeros on first access.
    Tensor& grad(std::size_t id);
    const Tensor& grad_or_empty(std::size_t id) const { return nodes_[id].grad; }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
        Parameter* param = nullptr;
    };

    std::vector<Node> nodes_;
    std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

} // namespace bimind::num
