#include "ssmdg/diff/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace ssmdg::diff {

namespace {

thread_local bool g_grad_enabled = true;

std::atomic<OpKind> g_corrupted{OpKind::leaf};
std::atomic<double> g_corrupt_factor{0.0};

}  // namespace

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (auto extent : shape) n *= extent;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ',';
        out << shape[i];
    }
    out << ']';
    return out.str();
}

const char* op_name(OpKind kind) {
    switch (kind) {
        case OpKind::leaf: return "leaf";
        case OpKind::matmul: return "matmul";
        case OpKind::add: return "add";
        case OpKind::relu: return "relu";
        case OpKind::concat_last_axis: return "concat_last_axis";
        case OpKind::softmax_last_axis: return "softmax_last_axis";
        case OpKind::log: return "log";
        case OpKind::pow_scalar: return "pow_scalar";
        case OpKind::mean_all: return "mean_all";
        case OpKind::sq_l2_dist: return "sq_l2_dist";
        case OpKind::scale: return "scale";
        case OpKind::gather_index: return "gather_index";
        case OpKind::clamp_min: return "clamp_min";
        case OpKind::select_rows: return "select_rows";
        case OpKind::sum_all: return "sum_all";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------

namespace {

std::shared_ptr<detail::TensorImpl> make_impl(Shape shape, std::vector<Real> data) {
    for (auto extent : shape) {
        if (extent == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
    }
    if (data.size() != shape_size(shape)) {
        throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_str(shape));
    }
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    return impl;
}

}  // namespace

Tensor Tensor::zeros(Shape shape) {
    const auto n = shape_size(shape);
    return Tensor(make_impl(std::move(shape), std::vector<Real>(n, Real(0))));
}

Tensor Tensor::constant(Shape shape, std::vector<Real> data) {
    return Tensor(make_impl(std::move(shape), std::move(data)));
}

Tensor Tensor::scalar(Real value) { return constant({1}, {value}); }

Tensor Tensor::parameter(std::string name, Shape shape, std::vector<Real> data) {
    if (name.empty()) throw std::invalid_argument("parameter requires a non-empty name");
    auto impl = make_impl(std::move(shape), std::move(data));
    impl->requires_grad = true;
    impl->name = std::move(name);
    return Tensor(std::move(impl));
}

const Shape& Tensor::shape() const {
    if (!impl_) throw std::logic_error("undefined tensor");
    return impl_->shape;
}

std::size_t Tensor::rows() const {
    const auto& s = shape();
    return s.size() == 2 ? s[0] : 1;
}

std::size_t Tensor::cols() const { return shape().back(); }

Real Tensor::item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
}

Real Tensor::at(std::size_t row, std::size_t col) const { return impl_->data[row * cols() + col]; }

Tensor Tensor::detach() const { return Tensor(make_impl(impl_->shape, impl_->data)); }

Tensor Tensor::clone() const {
    auto impl = make_impl(impl_->shape, impl_->data);
    impl->requires_grad = impl_->requires_grad && impl_->node == nullptr;
    impl->name = impl_->name;
    return Tensor(std::move(impl));
}

// ---------------------------------------------------------------------------

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_mode_enabled() noexcept { return g_grad_enabled; }

// ---------------------------------------------------------------------------

void ParameterSet::add(Tensor param) {
    if (!param.requires_grad() || param.name().empty()) {
        throw std::invalid_argument("ParameterSet accepts named grad-requiring leaves only");
    }
    if (contains(param.name())) throw std::invalid_argument("duplicate parameter " + param.name());
    index_.emplace(param.name(), params_.size());
    params_.push_back(std::move(param));
}

const Tensor& ParameterSet::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter " + name);
    return params_[it->second];
}

Tensor& ParameterSet::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter " + name);
    return params_[it->second];
}

std::size_t ParameterSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
}

// ---------------------------------------------------------------------------

GradientMap backward(const Tensor& scalar_loss) {
    using detail::TensorImpl;
    if (!scalar_loss.defined()) throw GraphError("backward on undefined tensor");
    if (scalar_loss.shape() != Shape{1}) {
        throw ShapeError("backward requires a scalar loss of shape [1], got " + shape_str(scalar_loss.shape()));
    }
    const auto& root = scalar_loss.impl();
    if (!root->node) throw GraphError("backward on a tensor with no recorded graph");
    if (root->node->consumed) throw GraphError("graph already consumed by a previous backward");

    // Post-order DFS gives a topological order (inputs before outputs).
    std::vector<TensorImpl*> order;
    std::unordered_set<TensorImpl*> visited;
    std::vector<std::pair<TensorImpl*, std::size_t>> stack{{root.get(), 0}};
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [impl, next] = stack.back();
        if (impl->node && impl->node->consumed) {
            throw GraphError("graph shares a node already consumed by a previous backward");
        }
        if (impl->node && next < impl->node->inputs.size()) {
            TensorImpl* child = impl->node->inputs[next++].get();
            if (child->requires_grad && !visited.count(child)) {
                visited.insert(child);
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(impl);
            stack.pop_back();
        }
    }

    std::unordered_map<TensorImpl*, std::vector<Real>> grads;
    grads[root.get()] = {Real(1)};

    const OpKind corrupted = g_corrupted.load();
    const Real corrupt_scale = Real(1) + static_cast<Real>(g_corrupt_factor.load());

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl* impl = *it;
        if (!impl->node) continue;
        auto found = grads.find(impl);
        if (found == grads.end()) continue;
        std::vector<Real> grad_out = std::move(found->second);
        if (impl->node->kind == corrupted) {
            for (auto& g : grad_out) g *= corrupt_scale;
        }
        std::vector<std::span<Real>> grad_in;
        grad_in.reserve(impl->node->inputs.size());
        for (const auto& input : impl->node->inputs) {
            if (input->requires_grad) {
                auto& buf = grads[input.get()];
                if (buf.empty()) buf.assign(input->data.size(), Real(0));
                grad_in.emplace_back(buf);
            } else {
                grad_in.emplace_back();
            }
        }
        impl->node->backward(grad_out, grad_in);
        // intermediate buffers are not needed once propagated
        if (impl != root.get()) grads.erase(impl);
    }

    GradientMap out;
    for (TensorImpl* impl : order) {
        if (impl->node || !impl->requires_grad || impl->name.empty()) continue;
        Tensor g = Tensor::zeros(impl->shape);
        if (auto found = grads.find(impl); found != grads.end()) {
            std::copy(found->second.begin(), found->second.end(), g.mutable_data().begin());
        }
        out.emplace(impl->name, std::move(g));
    }

    for (TensorImpl* impl : order) {
        if (!impl->node) continue;
        impl->node->consumed = true;
        impl->node->inputs.clear();
        impl->node->backward = nullptr;
    }
    return out;
}

GradientMap backward(const Tensor& scalar_loss, const ParameterSet& params) {
    GradientMap grads = backward(scalar_loss);
    for (const auto& p : params) {
        if (!grads.count(p.name())) grads.emplace(p.name(), Tensor::zeros(p.shape()));
    }
    return grads;
}

std::vector<OpKind> recorded_kernels(const Tensor& root) {
    using detail::TensorImpl;
    std::set<OpKind> kinds;
    std::unordered_set<const TensorImpl*> seen;
    std::vector<const TensorImpl*> stack;
    if (root.defined()) stack.push_back(root.impl().get());
    while (!stack.empty()) {
        const TensorImpl* t = stack.back();
        stack.pop_back();
        if (!seen.insert(t).second || !t->node) continue;
        kinds.insert(t->node->kind);
        for (const auto& in : t->node->inputs) stack.push_back(in.get());
    }
    return {kinds.begin(), kinds.end()};
}

namespace testing {

void corrupt_backward(OpKind kind, Real factor) {
    g_corrupt_factor.store(static_cast<double>(factor));
    g_corrupted.store(kind);
}

OpKind corrupted_kernel() noexcept { return g_corrupted.load(); }

}  // namespace testing

}  // namespace ssmdg::diff
