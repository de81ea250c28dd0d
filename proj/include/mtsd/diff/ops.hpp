#pragma once

#include "mtsd/diff/array.hpp"
#include "mtsd/diff/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mtsd::diff {

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

enum class ElementwiseKind { add, sub, mul, div, relu, tanh, neg, recip_plus_one };

namespace detail {

/// Unary map with derivative `df(x, y)`. Exposed so tests can build deliberately broken primitives.
template <class F, class D>
Array unary(const char* name, const Array& x, F f, D df) {
    std::vector<double> y(x.size());
    auto xv = x.values();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(xv[i]);
    auto xn = x.node_ptr();
    auto yv = std::make_shared<std::vector<double>>(y);
    return finish(name, x.shape(), std::move(y), tracks(x), [xn, yv, df](std::span<const double> g) {
        auto gx = grad_sink(xn);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xn->value[i], (*yv)[i]);
    });
}

inline void require_same_or_scalar(const Array& a, const Array& b, const char* op) {
    if (a.shape() == b.shape() || a.size() == 1 || b.size() == 1) return;
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

} // namespace detail

inline Array binary(ElementwiseKind kind, const Array& a, const Array& b) {
    const char* name = kind == ElementwiseKind::add   ? "add"
                       : kind == ElementwiseKind::sub ? "sub"
                       : kind == ElementwiseKind::mul ? "mul"
                       : kind == ElementwiseKind::div ? "div"
                                                      : nullptr;
    if (!name) throw UsageError("binary: not a binary elementwise kind");
    detail::require_same_or_scalar(a, b, name);
    const bool a_scalar = a.size() == 1 && b.size() != 1;
    const bool b_scalar = b.size() == 1 && a.size() != 1;
    const Shape shape = a_scalar ? b.shape() : a.shape();
    const std::size_t n = numel(shape);
    auto av = a.values();
    auto bv = b.values();
    auto at = [&](std::size_t i) { return a_scalar ? av[0] : av[i]; };
    auto bt = [&](std::size_t i) { return b_scalar ? bv[0] : bv[i]; };
    if (kind == ElementwiseKind::div) {
        for (double d : bv)
            if (d == 0.0) throw NumericError("div: division by zero");
    }
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        switch (kind) {
        case ElementwiseKind::add: y[i] = at(i) + bt(i); break;
        case ElementwiseKind::sub: y[i] = at(i) - bt(i); break;
        case ElementwiseKind::mul: y[i] = at(i) * bt(i); break;
        default: y[i] = at(i) / bt(i); break;
        }
    }
    auto an = a.node_ptr();
    auto bn = b.node_ptr();
    return detail::finish(name, shape, std::move(y), detail::tracks(a) || detail::tracks(b),
                          [an, bn, kind, a_scalar, b_scalar](std::span<const double> g) {
                              auto ga = detail::grad_sink(an);
                              auto gb = detail::grad_sink(bn);
                              const auto& av = an->value;
                              const auto& bv = bn->value;
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                  const std::size_t ia = a_scalar ? 0 : i;
                                  const std::size_t ib = b_scalar ? 0 : i;
                                  double da = 0.0, db = 0.0;
                                  switch (kind) {
                                  case ElementwiseKind::add: da = 1.0; db = 1.0; break;
                                  case ElementwiseKind::sub: da = 1.0; db = -1.0; break;
                                  case ElementwiseKind::mul: da = bv[ib]; db = av[ia]; break;
                                  default:
                                      da = 1.0 / bv[ib];
                                      db = -av[ia] / (bv[ib] * bv[ib]);
                                      break;
                                  }
                                  if (!ga.empty()) ga[ia] += g[i] * da;
                                  if (!gb.empty()) gb[ib] += g[i] * db;
                              }
                          });
}

inline Array add(const Array& a, const Array& b) { return binary(ElementwiseKind::add, a, b); }
inline Array sub(const Array& a, const Array& b) { return binary(ElementwiseKind::sub, a, b); }
inline Array mul(const Array& a, const Array& b) { return binary(ElementwiseKind::mul, a, b); }
inline Array div(const Array& a, const Array& b) { return binary(ElementwiseKind::div, a, b); }

inline Array operator+(const Array& a, const Array& b) { return add(a, b); }
inline Array operator-(const Array& a, const Array& b) { return sub(a, b); }
inline Array operator*(const Array& a, const Array& b) { return mul(a, b); }
inline Array operator/(const Array& a, const Array& b) { return div(a, b); }

/// relu'(0) is 0.
inline Array relu(const Array& x) {
    return detail::unary(
        "relu", x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Array tanh(const Array& x) {
    return detail::unary(
        "tanh", x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

inline Array neg(const Array& x) {
    return detail::unary("neg", x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

/// 1 / (x + 1)
inline Array recip_plus_one(const Array& x) {
    for (double v : x.values())
        if (v == -1.0) throw NumericError("recip_plus_one: division by zero at x = -1");
    return detail::unary(
        "recip_plus_one", x, [](double v) { return 1.0 / (v + 1.0); },
        [](double v, double) { return -1.0 / ((v + 1.0) * (v + 1.0)); });
}

/// abs'(0) is 0.
inline Array abs(const Array& x) {
    return detail::unary(
        "abs", x, [](double v) { return std::fabs(v); },
        [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

inline Array sqrt(const Array& x) {
    for (double v : x.values())
        if (!(v > 0.0)) throw NumericError("sqrt: argument must be positive");
    return detail::unary(
        "sqrt", x, [](double v) { return std::sqrt(v); }, [](double, double y) { return 0.5 / y; });
}

inline Array scale(const Array& x, double c) {
    return detail::unary("scale", x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

inline Array shift(const Array& x, double c) {
    return detail::unary("shift", x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

/// Dispatcher over the named elementwise kinds; binary kinds take two operands.
inline Array elementwise(ElementwiseKind kind, std::span<const Array> operands) {
    const bool is_binary = kind == ElementwiseKind::add || kind == ElementwiseKind::sub ||
                           kind == ElementwiseKind::mul || kind == ElementwiseKind::div;
    if (operands.size() != (is_binary ? 2u : 1u)) throw UsageError("elementwise: wrong operand count");
    switch (kind) {
    case ElementwiseKind::relu: return relu(operands[0]);
    case ElementwiseKind::tanh: return tanh(operands[0]);
    case ElementwiseKind::neg: return neg(operands[0]);
    case ElementwiseKind::recip_plus_one: return recip_plus_one(operands[0]);
    default: return binary(kind, operands[0], operands[1]);
    }
}

// ---------------------------------------------------------------------------
// Shape manipulation
// ---------------------------------------------------------------------------

inline Array reshape(const Array& x, Shape shape) {
    if (numel(shape) != x.size()) {
        throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
    }
    std::vector<double> y(x.values().begin(), x.values().end());
    auto xn = x.node_ptr();
    return detail::finish("reshape", std::move(shape), std::move(y), detail::tracks(x),
                          [xn](std::span<const double> g) {
                              auto gx = detail::grad_sink(xn);
                              for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                          });
}

/// out.shape[i] = x.shape[perm[i]]
inline Array permute(const Array& x, const std::vector<std::size_t>& perm) {
    const auto& in_shape = x.shape();
    const std::size_t r = in_shape.size();
    if (perm.size() != r) throw ShapeError("permute: permutation rank mismatch");
    std::vector<bool> seen(r, false);
    for (auto p : perm) {
        if (p >= r || seen[p]) throw UsageError("permute: invalid permutation");
        seen[p] = true;
    }
    Shape out_shape(r);
    for (std::size_t i = 0; i < r; ++i) out_shape[i] = in_shape[perm[i]];
    std::vector<std::size_t> in_strides(r, 1);
    for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
    // source flat index for every destination position
    auto src = std::make_shared<std::vector<std::size_t>>(x.size());
    std::vector<std::size_t> idx(r, 0);
    for (std::size_t o = 0; o < x.size(); ++o) {
        std::size_t s = 0;
        for (std::size_t i = 0; i < r; ++i) s += idx[i] * in_strides[perm[i]];
        (*src)[o] = s;
        for (std::size_t i = r; i-- > 0;) {
            if (++idx[i] < out_shape[i]) break;
            idx[i] = 0;
        }
    }
    auto xv = x.values();
    std::vector<double> y(x.size());
    for (std::size_t o = 0; o < y.size(); ++o) y[o] = xv[(*src)[o]];
    auto xn = x.node_ptr();
    return detail::finish("permute", std::move(out_shape), std::move(y), detail::tracks(x),
                          [xn, src](std::span<const double> g) {
                              auto gx = detail::grad_sink(xn);
                              for (std::size_t o = 0; o < g.size(); ++o) gx[(*src)[o]] += g[o];
                          });
}

/// Swap the last two axes.
inline Array transpose_last(const Array& x) {
    if (x.rank() < 2) throw ShapeError("transpose_last: rank must be at least 2");
    std::vector<std::size_t> perm(x.rank());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::swap(perm[perm.size() - 1], perm[perm.size() - 2]);
    return permute(x, perm);
}

/// Append a trailing axis of length n by repetition: out[..., j] = x[...].
inline Array tile_last(const Array& x, std::size_t n) {
    if (n == 0) throw ShapeError("tile_last: repeat count must be positive");
    Shape shape = x.shape();
    shape.push_back(n);
    auto xv = x.values();
    std::vector<double> y(x.size() * n);
    for (std::size_t i = 0; i < x.size(); ++i) std::fill_n(y.begin() + static_cast<std::ptrdiff_t>(i * n), n, xv[i]);
    auto xn = x.node_ptr();
    return detail::finish("tile_last", std::move(shape), std::move(y), detail::tracks(x),
                          [xn, n](std::span<const double> g) {
                              auto gx = detail::grad_sink(xn);
                              for (std::size_t i = 0; i < gx.size(); ++i) {
                                  double s = 0.0;
                                  for (std::size_t j = 0; j < n; ++j) s += g[i * n + j];
                                  gx[i] += s;
                              }
                          });
}

/// Concatenate along the last axis; leading dimensions must agree.
inline Array concat_last(const std::vector<Array>& parts) {
    if (parts.empty()) throw UsageError("concat_last: no operands");
    Shape lead = parts[0].shape();
    lead.pop_back();
    std::vector<std::size_t> widths;
    std::size_t total = 0;
    bool tracked = false;
    for (const auto& p : parts) {
        Shape l = p.shape();
        widths.push_back(l.back());
        l.pop_back();
        if (l != lead) throw ShapeError("concat_last: leading dimensions differ");
        total += widths.back();
        tracked = tracked || detail::tracks(p);
    }
    const std::size_t rows = numel(lead);
    std::vector<double> y(rows * total);
    std::size_t offset = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        auto v = parts[p].values();
        for (std::size_t r = 0; r < rows; ++r)
            std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(r * widths[p]), widths[p],
                        y.begin() + static_cast<std::ptrdiff_t>(r * total + offset));
        offset += widths[p];
    }
    Shape shape = lead;
    shape.push_back(total);
    std::vector<std::shared_ptr<detail::Node>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node_ptr());
    return detail::finish("concat_last", std::move(shape), std::move(y), tracked,
                          [nodes, widths, rows, total](std::span<const double> g) {
                              std::size_t offset = 0;
                              for (std::size_t p = 0; p < nodes.size(); ++p) {
                                  auto gp = detail::grad_sink(nodes[p]);
                                  if (!gp.empty()) {
                                      for (std::size_t r = 0; r < rows; ++r)
                                          for (std::size_t j = 0; j < widths[p]; ++j)
                                              gp[r * widths[p] + j] += g[r * total + offset + j];
                                  }
                                  offset += widths[p];
                              }
                          });
}

/// Flat element i as a one-element array.
inline Array select(const Array& x, std::size_t i) {
    if (i >= x.size()) throw ShapeError("select: index out of range");
    auto xn = x.node_ptr();
    return detail::finish("select", {1}, {x[i]}, detail::tracks(x), [xn, i](std::span<const double> g) {
        auto gx = detail::grad_sink(xn);
        gx[i] += g[0];
    });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

enum class ReduceKind { sum, mean, min, max, var };

/// Reduce over `axes` (removed from the result; a full reduction yields shape [1]).
/// var is the population variance. min/max route gradient to the first attaining element.
inline Array reduce(ReduceKind kind, const Array& x, std::vector<std::size_t> axes) {
    const auto& shape = x.shape();
    const std::size_t r = shape.size();
    if (axes.empty()) throw UsageError("reduce: empty axis list");
    std::sort(axes.begin(), axes.end());
    axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
    std::vector<bool> reduced(r, false);
    for (auto a : axes) {
        if (a >= r) throw UsageError("reduce: axis " + std::to_string(a) + " out of range for " + to_string(shape));
        reduced[a] = true;
    }
    Shape out_shape;
    for (std::size_t i = 0; i < r; ++i)
        if (!reduced[i]) out_shape.push_back(shape[i]);
    if (out_shape.empty()) out_shape.push_back(1);
    const std::size_t out_n = numel(out_shape);
    const std::size_t count = x.size() / out_n;
    if (count == 0) throw UsageError("reduce: empty reduction");

    // destination index of every source element, row-major traversal
    std::vector<std::size_t> out_strides(r, 0);
    {
        std::size_t s = 1;
        for (std::size_t i = r; i-- > 0;) {
            if (!reduced[i]) {
                out_strides[i] = s;
                s *= shape[i];
            }
        }
    }
    auto dest = std::make_shared<std::vector<std::size_t>>(x.size());
    {
        std::vector<std::size_t> idx(r, 0);
        for (std::size_t f = 0; f < x.size(); ++f) {
            std::size_t o = 0;
            for (std::size_t i = 0; i < r; ++i) o += idx[i] * out_strides[i];
            (*dest)[f] = o;
            for (std::size_t i = r; i-- > 0;) {
                if (++idx[i] < shape[i]) break;
                idx[i] = 0;
            }
        }
    }

    auto xv = x.values();
    std::vector<double> y(out_n, 0.0);
    auto arg = std::make_shared<std::vector<std::size_t>>();
    auto means = std::make_shared<std::vector<double>>();
    switch (kind) {
    case ReduceKind::sum:
    case ReduceKind::mean:
        for (std::size_t f = 0; f < x.size(); ++f) y[(*dest)[f]] += xv[f];
        if (kind == ReduceKind::mean)
            for (auto& v : y) v /= static_cast<double>(count);
        break;
    case ReduceKind::min:
    case ReduceKind::max: {
        arg->assign(out_n, std::numeric_limits<std::size_t>::max());
        for (std::size_t f = 0; f < x.size(); ++f) {
            auto& a = (*arg)[(*dest)[f]];
            if (a == std::numeric_limits<std::size_t>::max() ||
                (kind == ReduceKind::min ? xv[f] < xv[a] : xv[f] > xv[a])) {
                a = f;
            }
        }
        for (std::size_t o = 0; o < out_n; ++o) y[o] = xv[(*arg)[o]];
        break;
    }
    case ReduceKind::var: {
        means->assign(out_n, 0.0);
        for (std::size_t f = 0; f < x.size(); ++f) (*means)[(*dest)[f]] += xv[f];
        for (auto& m : *means) m /= static_cast<double>(count);
        for (std::size_t f = 0; f < x.size(); ++f) {
            const double d = xv[f] - (*means)[(*dest)[f]];
            y[(*dest)[f]] += d * d;
        }
        for (auto& v : y) v /= static_cast<double>(count);
        break;
    }
    }
    auto xn = x.node_ptr();
    const double inv_count = 1.0 / static_cast<double>(count);
    const char* name = kind == ReduceKind::sum    ? "reduce_sum"
                       : kind == ReduceKind::mean ? "reduce_mean"
                       : kind == ReduceKind::min  ? "reduce_min"
                       : kind == ReduceKind::max  ? "reduce_max"
                                                  : "reduce_var";
    return detail::finish(name, std::move(out_shape), std::move(y), detail::tracks(x),
                          [xn, dest, arg, means, kind, inv_count](std::span<const double> g) {
                              auto gx = detail::grad_sink(xn);
                              const auto& xv = xn->value;
                              switch (kind) {
                              case ReduceKind::sum:
                                  for (std::size_t f = 0; f < gx.size(); ++f) gx[f] += g[(*dest)[f]];
                                  break;
                              case ReduceKind::mean:
                                  for (std::size_t f = 0; f < gx.size(); ++f) gx[f] += g[(*dest)[f]] * inv_count;
                                  break;
                              case ReduceKind::min:
                              case ReduceKind::max:
                                  for (std::size_t o = 0; o < g.size(); ++o) gx[(*arg)[o]] += g[o];
                                  break;
                              case ReduceKind::var:
                                  for (std::size_t f = 0; f < gx.size(); ++f) {
                                      const std::size_t o = (*dest)[f];
                                      gx[f] += g[o] * 2.0 * (xv[f] - (*means)[o]) * inv_count;
                                  }
                                  break;
                              }
                          });
}

inline Array sum(const Array& x) {
    std::vector<std::size_t> axes(x.rank());
    std::iota(axes.begin(), axes.end(), std::size_t{0});
    return reduce(ReduceKind::sum, x, axes);
}

inline Array mean(const Array& x) {
    std::vector<std::size_t> axes(x.rank());
    std::iota(axes.begin(), axes.end(), std::size_t{0});
    return reduce(ReduceKind::mean, x, axes);
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

/// a[..., M, N] x b[N, P] -> [..., M, P]
inline Array matmul(const Array& a, const Array& b) {
    if (a.rank() < 2 || b.rank() != 2) throw ShapeError("matmul: expected a[..,M,N] and b[N,P]");
    const std::size_t N = a.shape().back();
    if (b.dim(0) != N) {
        throw ShapeError("matmul: inner dimensions disagree, " + to_string(a.shape()) + " x " + to_string(b.shape()));
    }
    const std::size_t P = b.dim(1);
    const std::size_t rows = a.size() / N;
    Shape shape = a.shape();
    shape.back() = P;
    std::vector<double> y(rows * P, 0.0);
    kernels::gemm_nn(rows, N, P, a.values().data(), b.values().data(), y.data());
    auto an = a.node_ptr();
    auto bn = b.node_ptr();
    return detail::finish("matmul", std::move(shape), std::move(y), detail::tracks(a) || detail::tracks(b),
                          [an, bn, rows, N, P](std::span<const double> g) {
                              auto ga = detail::grad_sink(an);
                              auto gb = detail::grad_sink(bn);
                              if (!ga.empty()) kernels::gemm_nt(rows, P, N, g.data(), bn->value.data(), ga.data());
                              if (!gb.empty()) kernels::gemm_tn(rows, N, P, an->value.data(), g.data(), gb.data());
                          });
}

/// Affine map over rows: x[B, in] -> x W^T + b, W[out, in], b[out].
inline Array linear(const Array& x, const Array& weight, const Array& bias) {
    if (x.rank() != 2 || weight.rank() != 2 || bias.rank() != 1) throw ShapeError("linear: expected x[B,in], W[out,in], b[out]");
    const std::size_t B = x.dim(0), in = x.dim(1), out = weight.dim(0);
    if (weight.dim(1) != in || bias.dim(0) != out) {
        throw ShapeError("linear: weight " + to_string(weight.shape()) + " incompatible with input " + to_string(x.shape()));
    }
    std::vector<double> y(B * out, 0.0);
    kernels::gemm_nt(B, in, out, x.values().data(), weight.values().data(), y.data());
    auto bv = bias.values();
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t o = 0; o < out; ++o) y[i * out + o] += bv[o];
    auto xn = x.node_ptr(), wn = weight.node_ptr(), bn = bias.node_ptr();
    return detail::finish("linear", {B, out}, std::move(y),
                          detail::tracks(x) || detail::tracks(weight) || detail::tracks(bias),
                          [xn, wn, bn, B, in, out](std::span<const double> g) {
                              auto gx = detail::grad_sink(xn);
                              auto gw = detail::grad_sink(wn);
                              auto gb = detail::grad_sink(bn);
                              if (!gx.empty()) kernels::gemm_nn(B, out, in, g.data(), wn->value.data(), gx.data());
                              if (!gw.empty()) kernels::gemm_tn(B, out, in, g.data(), xn->value.data(), gw.data());
                              if (!gb.empty())
                                  for (std::size_t i = 0; i < B; ++i)
                                      for (std::size_t o = 0; o < out; ++o) gb[o] += g[i * out + o];
                          });
}

/// Pointwise convolution over feature axis F at every position k:
/// y[b, o, k] = sum_f W[o, f] x[b, f, k] + bias[o]. The same weights serve every position.
inline Array conv1x1(const Array& x, const Array& weight, const Array& bias) {
    if (x.rank() != 3 || weight.rank() != 2 || bias.rank() != 1) {
        throw ShapeError("conv1x1: expected x[B,F,K], W[F_out,F], b[F_out]");
    }
    const std::size_t B = x.dim(0), F = x.dim(1), K = x.dim(2), Fo = weight.dim(0);
    if (weight.dim(1) != F || bias.dim(0) != Fo) {
        throw ShapeError("conv1x1: weight " + to_string(weight.shape()) + " incompatible with input " + to_string(x.shape()));
    }
    const std::size_t BK = B * K;
    // columns are (b, k) positions: xp[f, b*K + k]
    auto xp = std::make_shared<std::vector<double>>(F * BK);
    auto xv = x.values();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t f = 0; f < F; ++f)
            for (std::size_t k = 0; k < K; ++k) (*xp)[f * BK + b * K + k] = xv[(b * F + f) * K + k];
    std::vector<double> yp(Fo * BK, 0.0);
    kernels::gemm_nn(Fo, F, BK, weight.values().data(), xp->data(), yp.data());
    auto bv = bias.values();
    std::vector<double> y(B * Fo * K);
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < Fo; ++o)
            for (std::size_t k = 0; k < K; ++k) y[(b * Fo + o) * K + k] = yp[o * BK + b * K + k] + bv[o];
    auto xn = x.node_ptr(), wn = weight.node_ptr(), bn = bias.node_ptr();
    return detail::finish("conv1x1", {B, Fo, K}, std::move(y),
                          detail::tracks(x) || detail::tracks(weight) || detail::tracks(bias),
                          [xn, wn, bn, xp, B, F, K, Fo, BK](std::span<const double> g) {
                              std::vector<double> gp(Fo * BK);
                              for (std::size_t b = 0; b < B; ++b)
                                  for (std::size_t o = 0; o < Fo; ++o)
                                      for (std::size_t k = 0; k < K; ++k) gp[o * BK + b * K + k] = g[(b * Fo + o) * K + k];
                              auto gx = detail::grad_sink(xn);
                              auto gw = detail::grad_sink(wn);
                              auto gb = detail::grad_sink(bn);
                              if (!gw.empty()) kernels::gemm_nt(Fo, BK, F, gp.data(), xp->data(), gw.data());
                              if (!gb.empty())
                                  for (std::size_t o = 0; o < Fo; ++o)
                                      for (std::size_t j = 0; j < BK; ++j) gb[o] += gp[o * BK + j];
                              if (!gx.empty()) {
                                  std::vector<double> gxp(F * BK, 0.0);
                                  kernels::gemm_tn(Fo, F, BK, wn->value.data(), gp.data(), gxp.data());
                                  for (std::size_t b = 0; b < B; ++b)
                                      for (std::size_t f = 0; f < F; ++f)
                                          for (std::size_t k = 0; k < K; ++k)
                                              gx[(b * F + f) * K + k] += gxp[f * BK + b * K + k];
                              }
                          });
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

struct BatchNormStats {
    std::vector<double> mean;
    std::vector<double> var;

    static BatchNormStats identity(std::size_t features) {
        return {std::vector<double>(features, 0.0), std::vector<double>(features, 1.0)};
    }
};

inline constexpr double batchnorm_eps = 1e-5;
inline constexpr double batchnorm_momentum = 0.1;

/// x[B, F, K]; statistics per feature f over (B, K). Training mode uses batch
/// statistics (population variance) and updates `running`; eval mode uses `running`.
inline Array batchnorm(const Array& x, const Array& gamma, const Array& beta, BatchNormStats& running, bool training) {
    if (x.rank() != 3) throw ShapeError("batchnorm: expected x[B,F,K]");
    const std::size_t B = x.dim(0), F = x.dim(1), K = x.dim(2);
    if (B == 0) throw UsageError("batchnorm: empty batch");
    if (gamma.size() != F || beta.size() != F || running.mean.size() != F || running.var.size() != F) {
        throw ShapeError("batchnorm: parameter length does not match feature count " + std::to_string(F));
    }
    const double n = static_cast<double>(B * K);
    auto xv = x.values();
    std::vector<double> mu(F, 0.0), var(F, 0.0);
    if (training) {
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t f = 0; f < F; ++f)
                for (std::size_t k = 0; k < K; ++k) mu[f] += xv[(b * F + f) * K + k];
        for (auto& m : mu) m /= n;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t f = 0; f < F; ++f)
                for (std::size_t k = 0; k < K; ++k) {
                    const double d = xv[(b * F + f) * K + k] - mu[f];
                    var[f] += d * d;
                }
        for (auto& v : var) v /= n;
        for (std::size_t f = 0; f < F; ++f) {
            running.mean[f] = (1.0 - batchnorm_momentum) * running.mean[f] + batchnorm_momentum * mu[f];
            running.var[f] = (1.0 - batchnorm_momentum) * running.var[f] + batchnorm_momentum * var[f];
        }
    } else {
        mu = running.mean;
        var = running.var;
    }
    auto inv_std = std::make_shared<std::vector<double>>(F);
    for (std::size_t f = 0; f < F; ++f) (*inv_std)[f] = 1.0 / std::sqrt(var[f] + batchnorm_eps);
    auto xhat = std::make_shared<std::vector<double>>(x.size());
    std::vector<double> y(x.size());
    auto gv = gamma.values(), bv = beta.values();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t f = 0; f < F; ++f)
            for (std::size_t k = 0; k < K; ++k) {
                const std::size_t i = (b * F + f) * K + k;
                (*xhat)[i] = (xv[i] - mu[f]) * (*inv_std)[f];
                y[i] = gv[f] * (*xhat)[i] + bv[f];
            }
    auto xn = x.node_ptr(), gn = gamma.node_ptr(), bn = beta.node_ptr();
    return detail::finish(
        "batchnorm", x.shape(), std::move(y), detail::tracks(x) || detail::tracks(gamma) || detail::tracks(beta),
        [xn, gn, bn, xhat, inv_std, B, F, K, n, training](std::span<const double> g) {
            auto gx = detail::grad_sink(xn);
            auto gg = detail::grad_sink(gn);
            auto gb = detail::grad_sink(bn);
            std::vector<double> sum_g(F, 0.0), sum_gx(F, 0.0);
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t f = 0; f < F; ++f)
                    for (std::size_t k = 0; k < K; ++k) {
                        const std::size_t i = (b * F + f) * K + k;
                        sum_g[f] += g[i];
                        sum_gx[f] += g[i] * (*xhat)[i];
                    }
            if (!gg.empty())
                for (std::size_t f = 0; f < F; ++f) gg[f] += sum_gx[f];
            if (!gb.empty())
                for (std::size_t f = 0; f < F; ++f) gb[f] += sum_g[f];
            if (gx.empty()) return;
            const auto& gam = gn->value;
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t f = 0; f < F; ++f)
                    for (std::size_t k = 0; k < K; ++k) {
                        const std::size_t i = (b * F + f) * K + k;
                        if (training) {
                            gx[i] += gam[f] * (*inv_std)[f] / n * (n * g[i] - sum_g[f] - (*xhat)[i] * sum_gx[f]);
                        } else {
                            gx[i] += gam[f] * (*inv_std)[f] * g[i];
                        }
                    }
        });
}

// ---------------------------------------------------------------------------
// Clamp, softmax, loss
// ---------------------------------------------------------------------------

/// Elementwise clamp to [lo, hi] with array bounds of x's shape. Gradient goes to x
/// inside the bounds and to the active bound outside them.
inline Array clamp(const Array& x, const Array& lo, const Array& hi) {
    if (lo.shape() != x.shape() || hi.shape() != x.shape()) throw ShapeError("clamp: bound shapes must match input");
    auto xv = x.values(), lv = lo.values(), hv = hi.values();
    auto where = std::make_shared<std::vector<signed char>>(x.size());
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (lv[i] > hv[i]) throw UsageError("clamp: lower bound exceeds upper bound");
        if (xv[i] < lv[i]) {
            y[i] = lv[i];
            (*where)[i] = -1;
        } else if (xv[i] > hv[i]) {
            y[i] = hv[i];
            (*where)[i] = 1;
        } else {
            y[i] = xv[i];
            (*where)[i] = 0;
        }
    }
    auto xn = x.node_ptr(), ln = lo.node_ptr(), hn = hi.node_ptr();
    return detail::finish("clamp", x.shape(), std::move(y), detail::tracks(x) || detail::tracks(lo) || detail::tracks(hi),
                          [xn, ln, hn, where](std::span<const double> g) {
                              auto gx = detail::grad_sink(xn);
                              auto gl = detail::grad_sink(ln);
                              auto gh = detail::grad_sink(hn);
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                  const auto w = (*where)[i];
                                  if (w == 0 && !gx.empty()) gx[i] += g[i];
                                  if (w < 0 && !gl.empty()) gl[i] += g[i];
                                  if (w > 0 && !gh.empty()) gh[i] += g[i];
                              }
                          });
}

/// Clamp to constant bounds; zero gradient outside.
inline Array clamp(const Array& x, double lo, double hi) {
    if (lo > hi) throw UsageError("clamp: lower bound exceeds upper bound");
    return detail::unary(
        "clamp", x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
        [lo, hi](double v, double) { return (v < lo || v > hi) ? 0.0 : 1.0; });
}

/// Softmax over the last axis.
inline Array softmax(const Array& x) {
    const std::size_t C = x.shape().back();
    const std::size_t rows = x.size() / C;
    auto xv = x.values();
    std::vector<double> y(x.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* z = xv.data() + r * C;
        const double m = *std::max_element(z, z + C);
        double s = 0.0;
        for (std::size_t c = 0; c < C; ++c) s += (y[r * C + c] = std::exp(z[c] - m));
        for (std::size_t c = 0; c < C; ++c) y[r * C + c] /= s;
    }
    auto xn = x.node_ptr();
    auto yv = std::make_shared<std::vector<double>>(y);
    return detail::finish("softmax", x.shape(), std::move(y), detail::tracks(x),
                          [xn, yv, rows, C](std::span<const double> g) {
                              auto gx = detail::grad_sink(xn);
                              for (std::size_t r = 0; r < rows; ++r) {
                                  double dot = 0.0;
                                  for (std::size_t c = 0; c < C; ++c) dot += g[r * C + c] * (*yv)[r * C + c];
                                  for (std::size_t c = 0; c < C; ++c)
                                      gx[r * C + c] += (*yv)[r * C + c] * (g[r * C + c] - dot);
                              }
                          });
}

/// Mean over the batch of w[y_b] * -log softmax(logits_b)[y_b]. The weighted form
/// still divides by the batch size B, not by the sum of weights.
inline Array softmax_cross_entropy(const Array& logits, std::span<const std::size_t> labels,
                                   std::optional<std::span<const double>> class_weights = std::nullopt) {
    if (logits.rank() != 2) throw ShapeError("softmax_cross_entropy: expected logits[B,C]");
    const std::size_t B = logits.dim(0), C = logits.dim(1);
    if (labels.size() != B) throw ShapeError("softmax_cross_entropy: label count does not match batch");
    for (auto y : labels)
        if (y >= C) throw UsageError("softmax_cross_entropy: label " + std::to_string(y) + " out of range");
    std::vector<double> w(C, 1.0);
    if (class_weights) {
        if (class_weights->size() != C) throw ShapeError("softmax_cross_entropy: weight vector length must equal C");
        for (std::size_t c = 0; c < C; ++c) {
            if (!((*class_weights)[c] >= 0.0)) throw UsageError("softmax_cross_entropy: negative class weight");
            w[c] = (*class_weights)[c];
        }
    }
    auto zv = logits.values();
    auto probs = std::make_shared<std::vector<double>>(B * C);
    double loss = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        const double* z = zv.data() + b * C;
        const double m = *std::max_element(z, z + C);
        double s = 0.0;
        for (std::size_t c = 0; c < C; ++c) s += ((*probs)[b * C + c] = std::exp(z[c] - m));
        for (std::size_t c = 0; c < C; ++c) (*probs)[b * C + c] /= s;
        loss += w[labels[b]] * (m + std::log(s) - z[labels[b]]);
    }
    loss /= static_cast<double>(B);
    auto zn = logits.node_ptr();
    std::vector<std::size_t> ys(labels.begin(), labels.end());
    return detail::finish("softmax_cross_entropy", {1}, {loss}, detail::tracks(logits),
                          [zn, probs, ys, w, B, C](std::span<const double> g) {
                              auto gz = detail::grad_sink(zn);
                              for (std::size_t b = 0; b < B; ++b) {
                                  const double s = g[0] * w[ys[b]] / static_cast<double>(B);
                                  for (std::size_t c = 0; c < C; ++c)
                                      gz[b * C + c] += s * ((*probs)[b * C + c] - (c == ys[b] ? 1.0 : 0.0));
                              }
                          });
}

} // namespace mtsd::diff
