#include "bimind/numerics/autodiff.hpp"

#include <atomic>

#include "bimind/errors.hpp"

namespace bimind::num {

namespace {
std::atomic<bool> g_finite_checks{true};
} // namespace

void set_finite_checks(bool enabled) noexcept { g_finite_checks.store(enabled, std::memory_order_relaxed); }
bool finite_checks_enabled() noexcept { return g_finite_checks.load(std::memory_order_relaxed); }

void zero_grads(const ParameterList& params) {
    for (auto* p : params) p->zero_grad();
}

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad_or_empty(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

double Var::item() const {
    const auto& v = value();
    if (v.numel() != 1) throw DimensionError("item() on tensor of shape " + shape_string(v.shape()));
    return v[0];
}

Var Tape::constant(Tensor value) { return leaf(std::move(value), false); }

Var Tape::leaf(Tensor value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

Var Tape::param(Parameter& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return {this, it->second};
    Var v = leaf(p.value, true);
    nodes_[v.id()].param = &p;
    param_nodes_.emplace(&p, v.id());
    return v;
}

std::size_t Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward, const char* op) {
    if (finite_checks_enabled() && !value.all_finite()) {
        throw NonFiniteError(std::string("non-finite output from ") + op);
    }
    Node n;
    n.value = std::move(value);
    for (auto i : inputs) n.requires_grad = n.requires_grad || nodes_[i].requires_grad;
    if (n.requires_grad) n.backward = std::move(backward);
    n.inputs = std::move(inputs);
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
}

Tensor& Tape::grad(std::size_t id) {
    auto& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor::zeros_like(n.value);
    return n.grad;
}

void Tape::backward(Var root) {
    if (!root.valid() || &root.tape() != this) throw Error("backward root belongs to another tape");
    if (root.value().numel() != 1) {
        throw DimensionError("backward root must hold a single value, got " + shape_string(root.shape()));
    }
    grad(root.id()).fill(1.0);
    for (std::size_t i = root.id() + 1; i-- > 0;) {
        auto& n = nodes_[i];
        if (!n.requires_grad || n.grad.empty()) continue;
        if (n.backward) n.backward(*this, i);
        if (n.param) n.param->grad.accumulate(nodes_[i].grad);
    }
}

} // namespace bimind::num
