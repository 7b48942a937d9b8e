#include "ssmdg/diff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ssmdg::diff {

namespace {

using detail::BackwardFn;
using detail::Node;
using detail::TensorImpl;

Tensor make_result(OpKind kind, Shape shape, std::vector<Real> data,
                   std::vector<std::shared_ptr<TensorImpl>> inputs, BackwardFn backward) {
    Tensor out = Tensor::constant(std::move(shape), std::move(data));
    const bool needs_grad = grad_mode_enabled() &&
                            std::any_of(inputs.begin(), inputs.end(),
                                        [](const auto& in) { return in->requires_grad; });
    if (needs_grad) {
        auto node = std::make_shared<Node>();
        node->kind = kind;
        node->inputs = std::move(inputs);
        node->backward = std::move(backward);
        out.impl()->requires_grad = true;
        out.impl()->node = std::move(node);
    }
    return out;
}

void require_defined(const Tensor& t, const char* what) {
    if (!t.defined()) throw std::invalid_argument(std::string(what) + ": undefined operand");
}

void require_finite(const Tensor& t, const char* what) {
    for (Real v : t.data()) {
        if (!std::isfinite(v)) {
            throw NonFiniteError(std::string(what) + ": non-finite input in tensor of shape " +
                                 shape_str(t.shape()));
        }
    }
}

[[noreturn]] void mismatch(const char* what, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(what) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

// Rows/cols view for rank-1 (one row) and rank-2 tensors.
struct Matrix {
    std::size_t rows;
    std::size_t cols;
};

Matrix as_matrix(const Tensor& t, const char* what) {
    const auto& s = t.shape();
    if (s.size() == 1) return {1, s[0]};
    if (s.size() == 2) return {s[0], s[1]};
    throw ShapeError(std::string(what) + ": expected rank 1 or 2, got " + shape_str(s));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_defined(a, "matmul");
    require_defined(b, "matmul");
    if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) mismatch("matmul", a.shape(), b.shape());
    const std::size_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
    std::vector<Real> out(n * m, Real(0));
    const Real* pa = a.data().data();
    const Real* pb = b.data().data();
    for (std::size_t i = 0; i < n; ++i) {
        Real* row = out.data() + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const Real av = pa[i * k + p];
            if (av == Real(0)) continue;
            const Real* brow = pb + p * m;
            for (std::size_t j = 0; j < m; ++j) row[j] += av * brow[j];
        }
    }
    TensorImpl* ia = a.impl().get();
    TensorImpl* ib = b.impl().get();
    return make_result(OpKind::matmul, {n, m}, std::move(out), {a.impl(), b.impl()},
                       [ia, ib, n, k, m](std::span<const Real> g, std::vector<std::span<Real>>& gin) {
                           if (!gin[0].empty()) {
                               // dA = G B^T
                               const Real* pb = ib->data.data();
                               for (std::size_t i = 0; i < n; ++i) {
                                   const Real* grow = g.data() + i * m;
                                   Real* darow = gin[0].data() + i * k;
                                   for (std::size_t p = 0; p < k; ++p) {
                                       const Real* brow = pb + p * m;
                                       Real acc = 0;
                                       for (std::size_t j = 0; j < m; ++j) acc += grow[j] * brow[j];
                                       darow[p] += acc;
                                   }
                               }
                           }
                           if (!gin[1].empty()) {
                               // dB = A^T G
                               const Real* pa = ia->data.data();
                               for (std::size_t i = 0; i < n; ++i) {
                                   const Real* grow = g.data() + i * m;
                                   for (std::size_t p = 0; p < k; ++p) {
                                       const Real av = pa[i * k + p];
                                       if (av == Real(0)) continue;
                                       Real* dbrow = gin[1].data() + p * m;
                                       for (std::size_t j = 0; j < m; ++j) dbrow[j] += av * grow[j];
                                   }
                               }
                           }
                       });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_defined(a, "add");
    require_defined(b, "add");
    if (a.shape() == b.shape()) {
        std::vector<Real> out(a.data().begin(), a.data().end());
        auto bd = b.data();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
        return make_result(OpKind::add, a.shape(), std::move(out), {a.impl(), b.impl()},
                           [](std::span<const Real> g, std::vector<std::span<Real>>& gin) {
                               for (auto& dst : gin) {
                                   if (dst.empty()) continue;
                                   for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
                               }
                           });
    }
    if (a.rank() == 2 && b.rank() == 1 && a.shape()[1] == b.shape()[0]) {
        const std::size_t n = a.shape()[0], m = a.shape()[1];
        std::vector<Real> out(a.data().begin(), a.data().end());
        auto bd = b.data();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) out[i * m + j] += bd[j];
        return make_result(OpKind::add, a.shape(), std::move(out), {a.impl(), b.impl()},
                           [n, m](std::span<const Real> g, std::vector<std::span<Real>>& gin) {
                               if (!gin[0].empty())
                                   for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i];
                               if (!gin[1].empty())
                                   for (std::size_t i = 0; i < n; ++i)
                                       for (std::size_t j = 0; j < m; ++j) gin[1][j] += g[i * m + j];
                           });
    }
    mismatch("add", a.shape(), b.shape());
}

Tensor relu(const Tensor& x) {
    require_defined(x, "relu");
    std::vector<Real> out(x.data().begin(), x.data().end());
    for (auto& v : out) v = v > Real(0) ? v : Real(0);
    TensorImpl* ix = x.impl().get();
    return make_result(OpKind::relu, x.shape(), std::move(out), {x.impl()},
                       [ix](std::span<const Real> g, std::vector<std::span<Real>>& gin) {
                           const auto& xd = ix->data;
                           for (std::size_t i = 0; i < g.size(); ++i)
                               if (xd[i] > Real(0)) gin[0][i] += g[i];
                       });
}

Tensor concat_last_axis(std::span<const Tensor> parts) {
    if (parts.empty()) throw std::invalid_argument("concat_last_axis: no operands");
    for (const auto& p : parts) require_defined(p, "concat_last_axis");
    const std::size_t rank = parts[0].rank();
    const std::size_t n = parts[0].rows();
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p.rank() != rank || (rank != 1 && rank != 2) || p.rows() != n) {
            mismatch("concat_last_axis", parts[0].shape(), p.shape());
        }
        widths.push_back(p.cols());
        total += p.cols();
    }
    std::vector<Real> out(n * total);
    std::size_t offset = 0;
    for (std::size_t t = 0; t < parts.size(); ++t) {
        auto d = parts[t].data();
        for (std::size_t i = 0; i < n; ++i)
            std::copy_n(d.begin() + i * widths[t], widths[t], out.begin() + i * total + offset);
        offset += widths[t];
    }
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    for (const auto& p : parts) inputs.push_back(p.impl());
    Shape shape = rank == 1 ? Shape{total} : Shape{n, total};
    return make_result(OpKind::concat_last_axis, std::move(shape), std::move(out), std::move(inputs),
                       [widths, n, total](std::span<const Real> g, std::vector<std::span<Real>>& gin) {
                           std::size_t off = 0;
                           for (std::size_t t = 0; t < widths.size(); ++t) {
                               if (!gin[t].empty()) {
                                   for (std::size_t i = 0; i < n; ++i)
                                       for (std::size_t j = 0; j < widths[t]; ++j)
                                           gin[t][i * widths[t] + j] += g[i * total + off + j];
                               }
                               off += widths[t];
                           }
                       });
}

Tensor softmax_last_axis(const Tensor& x) {
    require_defined(x, "softmax_last_axis");
    require_finite(x, "softmax_last_axis");
    const auto [n, c] = as_matrix(x, "softmax_last_axis");
    std::vector<Real> out(x.size());
    auto xd = x.data();
    for (std::size_t i = 0; i < n; ++i) {
        const Real* row = xd.data() + i * c;
        Real* orow = out.data() + i * c;
        const Real mx = *std::max_element(row, row + c);
        Real sum = 0;
        for (std::size_t j = 0; j < c; ++j) {
            orow[j] = std::exp(row[j] - mx);
            sum += orow[j];
        }
        for (std::size_t j = 0; j < c; ++j) orow[j] /= sum;
    }
    std::vector<Real> y = out;
    return make_result(OpKind::softmax_last_axis, x.shape(), std::move(out), {x.impl()},
                       [y = std::move(y), n = n, c = c](std::span<const Real> g, std::vector<std::span<Real>>& gin) {
                           for (std::size_t i = 0; i < n; ++i) {
                               const Real* yr = y.data() + i * c;
                               const Real* gr = g.data() + i * c;
                               Real dot = 0;
                               for (std::size_t j = 0; j < c; ++j) dot += gr[j] * yr[j];
                               for (std::size_t j = 0; j < c; ++j) gin[0][i * c + j] += yr[j] * (gr[j] - dot);
                           }
                       });
}

Tensor log(const Tensor& x) {
    require_defined(x, "log");
    require_finite(x, "log");
    std::vector<Real> out(x.size());
    auto xd = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!(xd[i] > Real(0))) {
            throw DomainError("log: non-positive input " + std::to_string(xd[i]) + " at flat index " +
                              std::to_string(i));
        }
        out[i] = std::log(xd[i]);
    }
    TensorImpl* ix = x.impl().get();
    return make_result(OpKind::log, x.shape(), std::move(out), {x.impl()},
                       [ix](std::span<const Real> g, std::vector<std::span<Real>>& gin) {
                           for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += g[i] / ix->data[i];
                       });
}

Tensor pow_scalar(const Tensor& x, Real exponent) {
    require_defined(x, "pow_scalar");
    require_finite(x, "pow_scalar");
    const bool integral = exponent >= Real(1) && std::floor(exponent) == exponent;
    std::vector<Real> out(x.size());
    auto xd = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!integral && !(xd[i] > Real(0))) {
            throw DomainError("pow_scalar: non-positive base " + std::to_string(xd[i]) +
                              " with non-integral exponent " + std::to_string(exponent));
        }
        out[i] = std::pow(xd[i], exponent);
    }
    TensorImpl* ix = x.impl().get();
    return make_result(OpKind::pow_scalar, x.shape(), std::move(out), {x.impl()},
                       [ix, exponent](std::span<const Real> g, std::vector<std::span<Real>>& gin) {
                           for (std::size_t i = 0; i < g.size(); ++i)
                               gin[0][i] += g[i] * exponent * std::pow(ix->data[i], exponent - Real(1));
                       });
}

Tensor mean_all(const Tensor& x) {
    require_defined(x, "mean_all");
    Real sum = 0;
    for (Real v : x.data()) sum += v;
    const auto n = static_cast<Real>(x.size());
    return make_result(OpKind::mean_all, {1}, {sum / n}, {x.impl()},
                       [n](std::span<const Real> g, std::vector<std::span<Real>>& gin) {
                           for (auto& d : gin[0]) d += g[0] / n;
                       });
}

Tensor sum_all(const Tensor& x) {
    require_defined(x, "sum_all");
    Real sum = 0;
    for (Real v : x.data()) sum += v;
    return make_result(OpKind::sum_all, {1}, {sum}, {x.impl()},
                       [](std::span<const Real> g, std::vector<std::span<Real>>& gin) {
                           for (auto& d : gin[0]) d += g[0];
                       });
}

Tensor sq_l2_dist(const Tensor& a, const Tensor& b) {
    require_defined(a, "sq_l2_dist");
    require_defined(b, "sq_l2_dist");
    if (a.shape() != b.shape() || (a.rank() != 1 && a.rank() != 2)) mismatch("sq_l2_dist", a.shape(), b.shape());
    const auto [n, d] = as_matrix(a, "sq_l2_dist");
    std::vector<Real> out(n, Real(0));
    auto ad = a.data(), bd = b.data();
    for (std::size_t i = 0; i < n; ++i) {
        Real acc = 0;
        for (std::size_t j = 0; j < d; ++j) {
            const Real diff = ad[i * d + j] - bd[i * d + j];
            acc += diff * diff;
        }
        out[i] = acc;
    }
    TensorImpl* ia = a.impl().get();
    TensorImpl* ib = b.impl().get();
    return make_result(OpKind::sq_l2_dist, {n}, std::move(out), {a.impl(), b.impl()},
                       [ia, ib, n = n, d = d](std::span<const Real> g, std::vector<std::span<Real>>& gin) {
                           for (std::size_t i = 0; i < n; ++i) {
                               for (std::size_t j = 0; j < d; ++j) {
                                   const std::size_t idx = i * d + j;
                                   const Real v = Real(2) * (ia->data[idx] - ib->data[idx]) * g[i];
                                   if (!gin[0].empty()) gin[0][idx] += v;
                                   if (!gin[1].empty()) gin[1][idx] -= v;
                               }
                           }
                       });
}

Tensor scale(const Tensor& x, Real factor) {
    require_defined(x, "scale");
    std::vector<Real> out(x.data().begin(), x.data().end());
    for (auto& v : out) v *= factor;
    return make_result(OpKind::scale, x.shape(), std::move(out), {x.impl()},
                       [factor](std::span<const Real> g, std::vector<std::span<Real>>& gin) {
                           for (std::size_t i = 0; i < g.size(); ++i) gin[0][i] += factor * g[i];
                       });
}

Tensor gather_index(const Tensor& x, std::span<const std::size_t> index) {
    require_defined(x, "gather_index");
    const auto [n, c] = as_matrix(x, "gather_index");
    if (index.size() != n) {
        throw ShapeError("gather_index: " + std::to_string(index.size()) + " indices for tensor of shape " +
                         shape_str(x.shape()));
    }
    std::vector<Real> out(n);
    std::vector<std::size_t> flat(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (index[i] >= c) {
            throw std::out_of_range("gather_index: index " + std::to_string(index[i]) + " out of range for " +
                                    std::to_string(c) + " classes");
        }
        flat[i] = i * c + index[i];
        out[i] = x.data()[flat[i]];
    }
    return make_result(OpKind::gather_index, {n}, std::move(out), {x.impl()},
                       [flat = std::move(flat)](std::span<const Real> g, std::vector<std::span<Real>>& gin) {
                           for (std::size_t i = 0; i < flat.size(); ++i) gin[0][flat[i]] += g[i];
                       });
}

Tensor clamp_min(const Tensor& x, Real floor) {
    require_defined(x, "clamp_min");
    std::vector<Real> out(x.data().begin(), x.data().end());
    for (auto& v : out) v = std::max(v, floor);
    TensorImpl* ix = x.impl().get();
    return make_result(OpKind::clamp_min, x.shape(), std::move(out), {x.impl()},
                       [ix, floor](std::span<const Real> g, std::vector<std::span<Real>>& gin) {
                           for (std::size_t i = 0; i < g.size(); ++i)
                               if (ix->data[i] > floor) gin[0][i] += g[i];
                       });
}

Tensor select_rows(const Tensor& x, std::span<const std::size_t> rows) {
    require_defined(x, "select_rows");
    if (rows.empty()) throw ShapeError("select_rows: empty row selection from " + shape_str(x.shape()));
    const bool vector = x.rank() == 1;
    if (!vector && x.rank() != 2) throw ShapeError("select_rows: expected rank 1 or 2, got " + shape_str(x.shape()));
    const std::size_t n = x.shape()[0];
    const std::size_t width = vector ? 1 : x.shape()[1];
    std::vector<Real> out(rows.size() * width);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] >= n) {
            throw std::out_of_range("select_rows: row " + std::to_string(rows[r]) + " of " + std::to_string(n));
        }
        std::copy_n(x.data().begin() + rows[r] * width, width, out.begin() + r * width);
    }
    Shape shape = vector ? Shape{rows.size()} : Shape{rows.size(), width};
    return make_result(OpKind::select_rows, std::move(shape), std::move(out), {x.impl()},
                       [sel = std::vector<std::size_t>(rows.begin(), rows.end()), width](
                           std::span<const Real> g, std::vector<std::span<Real>>& gin) {
                           for (std::size_t r = 0; r < sel.size(); ++r)
                               for (std::size_t j = 0; j < width; ++j) gin[0][sel[r] * width + j] += g[r * width + j];
                       });
}

Tensor forward_op(OpKind kind, std::span<const Tensor> operands, std::optional<Real> scalar_arg,
                  std::span<const std::size_t> index_arg) {
    auto need = [&](std::size_t count) {
        if (operands.size() != count) {
            throw std::invalid_argument(std::string("forward_op ") + op_name(kind) + ": expected " +
                                        std::to_string(count) + " operands, got " +
                                        std::to_string(operands.size()));
        }
    };
    auto need_scalar = [&]() -> Real {
        if (!scalar_arg) throw std::invalid_argument(std::string("forward_op ") + op_name(kind) + ": missing scalar");
        return *scalar_arg;
    };
    switch (kind) {
        case OpKind::matmul: need(2); return matmul(operands[0], operands[1]);
        case OpKind::add: need(2); return add(operands[0], operands[1]);
        case OpKind::relu: need(1); return relu(operands[0]);
        case OpKind::concat_last_axis: return concat_last_axis(operands);
        case OpKind::softmax_last_axis: need(1); return softmax_last_axis(operands[0]);
        case OpKind::log: need(1); return log(operands[0]);
        case OpKind::pow_scalar: need(1); return pow_scalar(operands[0], need_scalar());
        case OpKind::mean_all: need(1); return mean_all(operands[0]);
        case OpKind::sum_all: need(1); return sum_all(operands[0]);
        case OpKind::sq_l2_dist: need(2); return sq_l2_dist(operands[0], operands[1]);
        case OpKind::scale: need(1); return scale(operands[0], need_scalar());
        case OpKind::gather_index: need(1); return gather_index(operands[0], index_arg);
        case OpKind::clamp_min: need(1); return clamp_min(operands[0], need_scalar());
        case OpKind::select_rows: need(1); return select_rows(operands[0], index_arg);
        case OpKind::leaf: break;
    }
    throw std::invalid_argument("forward_op: leaf is not a kernel");
}

}  // namespace ssmdg::diff
