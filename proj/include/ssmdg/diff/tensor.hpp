#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ssmdg::diff {

#ifdef SSMDG_FLOAT32
using Real = float;
#else
using Real = double;
#endif

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class GraphError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

enum class OpKind {
    leaf,
    matmul,
    add,
    relu,
    concat_last_axis,
    softmax_last_axis,
    log,
    pow_scalar,
    mean_all,
    sq_l2_dist,
    scale,
    gather_index,
    clamp_min,
    select_rows,
    sum_all,
};

const char* op_name(OpKind kind);

namespace detail {

struct TensorImpl;

// Backward closure: receives the output gradient and writes into the
// gradient buffers of its inputs (empty spans for inputs without grad).
using BackwardFn = std::function<void(std::span<const Real> grad_out,
                                      std::vector<std::span<Real>>& grad_in)>;

struct Node {
    OpKind kind = OpKind::leaf;
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    BackwardFn backward;
    bool consumed = false;
};

struct TensorImpl {
    Shape shape;
    std::vector<Real> data;
    bool requires_grad = false;
    std::string name;
    std::shared_ptr<Node> node;
};

}  // namespace detail

/// Dense row-major array that optionally participates in a define-by-run
/// differentiation graph. Copies share storage; use `clone()` for a deep copy.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor constant(Shape shape, std::vector<Real> data);
    static Tensor scalar(Real value);
    /// Named leaf that receives gradients.
    static Tensor parameter(std::string name, Shape shape, std::vector<Real> data);

    bool defined() const noexcept { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t size() const { return impl_->data.size(); }
    std::size_t rank() const { return shape().size(); }
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const Real> data() const { return impl_->data; }
    std::span<Real> mutable_data() { return impl_->data; }
    Real item() const;
    Real at(std::size_t row, std::size_t col) const;

    bool requires_grad() const noexcept { return impl_ && impl_->requires_grad; }
    const std::string& name() const { return impl_->name; }
    bool has_graph() const noexcept { return impl_ && impl_->node != nullptr; }

    /// Value copy with no graph attached.
    Tensor detach() const;
    Tensor clone() const;

    const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_mode_enabled() noexcept;

using GradientMap = std::map<std::string, Tensor>;

/// Ordered collection of named trainable leaves.
class ParameterSet {
public:
    void add(Tensor param);
    const Tensor& at(const std::string& name) const;
    Tensor& at(const std::string& name);
    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    std::size_t size() const noexcept { return params_.size(); }
    std::size_t scalar_count() const;
    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    std::vector<Tensor> params_;
    std::map<std::string, std::size_t> index_;
};

/// Gradients of a scalar loss with respect to every named leaf reachable
/// from it. Consumes the graph: a second call on the same loss throws.
GradientMap backward(const Tensor& scalar_loss);

/// As above, with zero gradients filled in for members of `params` that the
/// loss does not reach.
GradientMap backward(const Tensor& scalar_loss, const ParameterSet& params);

/// Distinct kernels recorded in the graph below `root`, in OpKind order.
std::vector<OpKind> recorded_kernels(const Tensor& root);

namespace testing {
/// Scales the backward pass of one kernel by (1 + factor); used to verify
/// that the gradient checks catch a broken kernel. `OpKind::leaf` disables.
void corrupt_backward(OpKind kind, Real factor = Real(0.05));
OpKind corrupted_kernel() noexcept;
}  // namespace testing

}  // namespace ssmdg::diff
