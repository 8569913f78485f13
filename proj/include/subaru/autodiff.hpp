#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <deque>
#include <vector>

#include "subaru/tensor.hpp"

namespace subaru {

// Reverse-mode autodiff on a linear tape. Forward runs eagerly; every
// recording op pushes a closure that pulls the output gradient into its
// inputs. Granularity is one node per layer-level op, so the closure
// overhead is irrelevant next to the arithmetic. Everything is double
// precision and sequential — gradients are bit-reproducible run to run.
class Tape {
  public:
    struct Value {
        int id = -1;
        bool valid() const { return id >= 0; }
    };

    struct Node {
        Tensor value;
        Tensor grad;               // allocated on demand in backward()
        bool requires_grad = false;
        bool grad_ready = false;
        int param_index = -1;      // >= 0 when this leaf mirrors a stored parameter
        std::function<void()> back;
    };

    Value input(Tensor v, bool requires_grad = false) {
        return push(std::move(v), requires_grad, -1);
    }

    Value param(Tensor v, int param_index) {
        return push(std::move(v), true, param_index);
    }

    const Tensor& val(Value v) const { return nodes_[check(v)].value; }
    bool needs_grad(Value v) const { return nodes_[check(v)].requires_grad; }

    Tensor& grad_buf(Value v) {
        Node& n = nodes_[check(v)];
        if (!n.grad_ready) {
            n.grad = Tensor(n.value.shape);
            n.grad_ready = true;
        }
        return n.grad;
    }
    const Tensor& grad(Value v) const {
        const Node& n = nodes_[check(v)];
        if (!n.grad_ready) throw std::logic_error("Tape: gradient not computed for this value");
        return n.grad;
    }
    bool has_grad(Value v) const { return nodes_[check(v)].grad_ready; }

    // Runs the recorded closures newest-first, seeding d(root)/d(root) = 1.
    void backward(Value root) {
        Node& r = nodes_[check(root)];
        if (r.value.numel() != 1)
            throw std::invalid_argument("Tape::backward: root must be a scalar");
        grad_buf(root)[0] = 1.0;
        for (int64_t i = static_cast<int64_t>(nodes_.size()) - 1; i >= 0; --i) {
            Node& n = nodes_[static_cast<size_t>(i)];
            if (n.back && n.grad_ready) n.back();
        }
    }

    // Gradient sums per parameter index (a parameter may appear as several
    // leaves if a forward reuses it). Empty slots are allocated to match.
    void export_param_grads(std::vector<Tensor>& slots) const {
        for (const Node& n : nodes_) {
            if (n.param_index < 0 || !n.grad_ready) continue;
            auto idx = static_cast<size_t>(n.param_index);
            if (idx >= slots.size()) throw std::logic_error("export_param_grads: slot out of range");
            if (slots[idx].numel() == 0) slots[idx] = Tensor(n.value.shape);
            for (int64_t i = 0; i < n.grad.numel(); ++i) slots[idx][i] += n.grad[i];
        }
    }

    size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    // ---- generic op construction -------------------------------------------
    // Two-phase: the node is pushed first so the backward closure can capture
    // the final handle of its own output.

    Value make(Tensor out, std::initializer_list<Value> parents) {
        bool rg = false;
        for (Value p : parents) rg = rg || nodes_[check(p)].requires_grad;
        return push(std::move(out), rg, -1);
    }

    void set_back(Value v, std::function<void()> back) {
        Node& n = nodes_[check(v)];
        if (n.requires_grad) n.back = std::move(back);
    }

    // ---- elementwise -------------------------------------------------------

    Value add(Value a, Value b) {
        const Tensor& ta = val(a);
        const Tensor& tb = val(b);
        if (!ta.same_shape(tb)) throw std::invalid_argument("add: shape mismatch");
        Tensor out(ta.shape);
        for (int64_t i = 0; i < out.numel(); ++i) out[i] = ta[i] + tb[i];
        Value r = make(std::move(out), {a, b});
        set_back(r, [this, a, b, r] {
            const Tensor& g = grad(r);
            if (needs_grad(a)) {
                Tensor& ga = grad_buf(a);
                for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
            }
            if (needs_grad(b)) {
                Tensor& gb = grad_buf(b);
                for (int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i];
            }
        });
        return r;
    }

    Value sub(Value a, Value b) {
        const Tensor& ta = val(a);
        const Tensor& tb = val(b);
        if (!ta.same_shape(tb)) throw std::invalid_argument("sub: shape mismatch");
        Tensor out(ta.shape);
        for (int64_t i = 0; i < out.numel(); ++i) out[i] = ta[i] - tb[i];
        Value r = make(std::move(out), {a, b});
        set_back(r, [this, a, b, r] {
            const Tensor& g = grad(r);
            if (needs_grad(a)) {
                Tensor& ga = grad_buf(a);
                for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
            }
            if (needs_grad(b)) {
                Tensor& gb = grad_buf(b);
                for (int64_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
            }
        });
        return r;
    }

    Value mul(Value a, Value b) {
        const Tensor& ta = val(a);
        const Tensor& tb = val(b);
        if (!ta.same_shape(tb)) throw std::invalid_argument("mul: shape mismatch");
        Tensor out(ta.shape);
        for (int64_t i = 0; i < out.numel(); ++i) out[i] = ta[i] * tb[i];
        Value r = make(std::move(out), {a, b});
        set_back(r, [this, a, b, r] {
            const Tensor& g = grad(r);
            const Tensor& va = val(a);
            const Tensor& vb = val(b);
            if (needs_grad(a)) {
                Tensor& ga = grad_buf(a);
                for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * vb[i];
            }
            if (needs_grad(b)) {
                Tensor& gb = grad_buf(b);
                for (int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * va[i];
            }
        });
        return r;
    }

    Value scale(Value a, double c) {
        const Tensor& ta = val(a);
        Tensor out(ta.shape);
        for (int64_t i = 0; i < out.numel(); ++i) out[i] = ta[i] * c;
        Value r = make(std::move(out), {a});
        set_back(r, [this, a, c, r] {
            if (!needs_grad(a)) return;
            const Tensor& g = grad(r);
            Tensor& ga = grad_buf(a);
            for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * c;
        });
        return r;
    }

    Value add_scalar(Value a, double c) {
        const Tensor& ta = val(a);
        Tensor out(ta.shape);
        for (int64_t i = 0; i < out.numel(); ++i) out[i] = ta[i] + c;
        Value r = make(std::move(out), {a});
        set_back(r, [this, a, r] {
            if (!needs_grad(a)) return;
            const Tensor& g = grad(r);
            Tensor& ga = grad_buf(a);
            for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
        });
        return r;
    }

    // Shared scaffold for y = f(x) with dy/dx expressible from (x, y).
    template <class F, class DF>
    Value unary(Value a, F f, DF df) {
        const Tensor& ta = val(a);
        Tensor out(ta.shape);
        for (int64_t i = 0; i < out.numel(); ++i) out[i] = f(ta[i]);
        Value r = make(std::move(out), {a});
        set_back(r, [this, a, r, df] {
            if (!needs_grad(a)) return;
            const Tensor& g = grad(r);
            const Tensor& vx = val(a);
            const Tensor& vy = val(r);
            Tensor& ga = grad_buf(a);
            for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * df(vx[i], vy[i]);
        });
        return r;
    }

    Value exp_(Value a) {
        return unary(a, [](double x) { return std::exp(x); },
                     [](double, double y) { return y; });
    }
    Value log_eps(Value a, double eps) {
        return unary(a, [eps](double x) { return std::log(x + eps); },
                     [eps](double x, double) { return 1.0 / (x + eps); });
    }
    Value sqrt_guard(Value a) {
        return unary(a, [](double x) { return std::sqrt(std::max(x, 0.0)); },
                     [](double x, double y) { return x > 1e-24 ? 0.5 / y : 0.0; });
    }
    Value tanh_(Value a) {
        return unary(a, [](double x) { return std::tanh(x); },
                     [](double, double y) { return 1.0 - y * y; });
    }
    Value sigmoid_(Value a) {
        return unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                     [](double, double y) { return y * (1.0 - y); });
    }
    Value silu_(Value a) {
        return unary(a,
                     [](double x) { return x / (1.0 + std::exp(-x)); },
                     [](double x, double) {
                         const double s = 1.0 / (1.0 + std::exp(-x));
                         return s * (1.0 + x * (1.0 - s));
                     });
    }
    /* exact gelu: x * Phi(x); derivative Phi(x) + x * phi(x) */
    Value gelu_(Value a) {
        return unary(a,
                     [](double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); },
                     [](double x, double) {
                         const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
                         const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
                         return cdf + x * pdf;
                     });
    }
    Value softplus_(Value a) {
        return unary(a,
                     [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); },
                     [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
    }
    Value leaky_relu_(Value a, double slope) {
        return unary(a, [slope](double x) { return x >= 0.0 ? x : slope * x; },
                     [slope](double x, double) { return x >= 0.0 ? 1.0 : slope; });
    }
    Value abs_(Value a) {
        return unary(a, [](double x) { return std::fabs(x); },
                     [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
    }
    Value sin_(Value a) {
        return unary(a, [](double x) { return std::sin(x); },
                     [](double x, double) { return std::cos(x); });
    }
    Value cos_(Value a) {
        return unary(a, [](double x) { return std::cos(x); },
                     [](double x, double) { return -std::sin(x); });
    }
    // Distance to the nearest multiple of 2 pi; the derivative is the sign of
    // the wrapped residue (zero exactly at the wrap point).
    Value anti_wrap_(Value a) {
        return unary(a,
                     [](double x) {
                         return std::fabs(x - 2.0 * M_PI * std::round(x / (2.0 * M_PI)));
                     },
                     [](double x, double) {
                         const double w = x - 2.0 * M_PI * std::round(x / (2.0 * M_PI));
                         return w > 0.0 ? 1.0 : (w < 0.0 ? -1.0 : 0.0);
                     });
    }

    // Elementwise atan2(y-part, x-part), principal value in (-pi, pi].
    Value atan2_(Value y, Value x) {
        const Tensor& ty = val(y);
        const Tensor& tx = val(x);
        if (!ty.same_shape(tx)) throw std::invalid_argument("atan2: shape mismatch");
        Tensor out(ty.shape);
        for (int64_t i = 0; i < out.numel(); ++i) {
            double p = std::atan2(ty[i], tx[i]);
            if (p <= -M_PI) p += 2.0 * M_PI;
            out[i] = p;
        }
        Value r = make(std::move(out), {y, x});
        set_back(r, [this, y, x, r] {
            const Tensor& g = grad(r);
            const Tensor& vy = val(y);
            const Tensor& vx = val(x);
            const bool ny = needs_grad(y), nx = needs_grad(x);
            Tensor* gy = ny ? &grad_buf(y) : nullptr;
            Tensor* gx = nx ? &grad_buf(x) : nullptr;
            for (int64_t i = 0; i < g.numel(); ++i) {
                const double r2 = vx[i] * vx[i] + vy[i] * vy[i];
                if (r2 < 1e-24) continue;
                if (ny) (*gy)[i] += g[i] * (vx[i] / r2);
                if (nx) (*gx)[i] += g[i] * (-vy[i] / r2);
            }
        });
        return r;
    }

    // ---- reductions --------------------------------------------------------

    Value sum_all(Value a) {
        const Tensor& ta = val(a);
        double acc = 0.0;
        for (int64_t i = 0; i < ta.numel(); ++i) acc += ta[i];
        Value r = make(Tensor({1}, {acc}), {a});
        set_back(r, [this, a, r] {
            if (!needs_grad(a)) return;
            const double g = grad(r)[0];
            Tensor& ga = grad_buf(a);
            for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += g;
        });
        return r;
    }

    Value mean_all(Value a) {
        const int64_t n = val(a).numel();
        if (n == 0) throw std::invalid_argument("mean_all: empty tensor");
        return scale(sum_all(a), 1.0 / static_cast<double>(n));
    }

    // Sum over the innermost axis: {..., K} -> {...}.
    Value sum_last(Value a) {
        const Tensor& ta = val(a);
        if (ta.rank() < 1) throw std::invalid_argument("sum_last: rank 0");
        const int64_t k = ta.shape.back();
        const int64_t rows = ta.numel() / k;
        std::vector<int64_t> out_shape(ta.shape.begin(), ta.shape.end() - 1);
        if (out_shape.empty()) out_shape = {1};
        Tensor out(out_shape);
        for (int64_t rw = 0; rw < rows; ++rw) {
            const double* src = ta.ptr() + rw * k;
            double acc = 0.0;
            for (int64_t i = 0; i < k; ++i) acc += src[i];
            out[rw] = acc;
        }
        Value r = make(std::move(out), {a});
        set_back(r, [this, a, r, k, rows] {
            if (!needs_grad(a)) return;
            const Tensor& g = grad(r);
            Tensor& ga = grad_buf(a);
            for (int64_t rw = 0; rw < rows; ++rw) {
                double* dst = ga.ptr() + rw * k;
                const double gv = g[rw];
                for (int64_t i = 0; i < k; ++i) dst[i] += gv;
            }
        });
        return r;
    }

    // ---- shape plumbing ----------------------------------------------------

    Value reshape(Value a, std::vector<int64_t> shape) {
        const Tensor& ta = val(a);
        if (Tensor::numel_of(shape) != ta.numel())
            throw std::invalid_argument("reshape: element count mismatch");
        Tensor out(std::move(shape), ta.data);
        Value r = make(std::move(out), {a});
        set_back(r, [this, a, r] {
            if (!needs_grad(a)) return;
            const Tensor& g = grad(r);
            Tensor& ga = grad_buf(a);
            for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
        });
        return r;
    }

    // {N, A, B} -> {N, B, A}
    Value transpose12(Value a) {
        const Tensor& ta = val(a);
        if (ta.rank() != 3) throw std::invalid_argument("transpose12: need rank 3");
        const int64_t n = ta.dim(0), A = ta.dim(1), B = ta.dim(2);
        Tensor out({n, B, A});
        for (int64_t nn = 0; nn < n; ++nn)
            for (int64_t i = 0; i < A; ++i)
                for (int64_t j = 0; j < B; ++j)
                    out[(nn * B + j) * A + i] = ta[(nn * A + i) * B + j];
        Value r = make(std::move(out), {a});
        set_back(r, [this, a, r, n, A, B] {
            if (!needs_grad(a)) return;
            const Tensor& g = grad(r);
            Tensor& ga = grad_buf(a);
            for (int64_t nn = 0; nn < n; ++nn)
                for (int64_t i = 0; i < A; ++i)
                    for (int64_t j = 0; j < B; ++j)
                        ga[(nn * A + i) * B + j] += g[(nn * B + j) * A + i];
        });
        return r;
    }

    // Concatenate along axis 1 of {N, C, rest} tensors with equal N and rest.
    Value concat_ch(Value a, Value b) {
        const Tensor& ta = val(a);
        const Tensor& tb = val(b);
        if (ta.rank() != tb.rank() || ta.rank() < 2)
            throw std::invalid_argument("concat_ch: rank mismatch");
        if (ta.dim(0) != tb.dim(0)) throw std::invalid_argument("concat_ch: batch mismatch");
        int64_t rest = 1;
        for (size_t i = 2; i < ta.rank(); ++i) {
            if (ta.dim(i) != tb.dim(i))
                throw std::invalid_argument("concat_ch: trailing dims differ");
            rest *= ta.dim(i);
        }
        const int64_t n = ta.dim(0), ca = ta.dim(1), cb = tb.dim(1);
        std::vector<int64_t> shape = ta.shape;
        shape[1] = ca + cb;
        Tensor out(shape);
        for (int64_t nn = 0; nn < n; ++nn) {
            std::copy(ta.ptr() + nn * ca * rest, ta.ptr() + (nn + 1) * ca * rest,
                      out.ptr() + nn * (ca + cb) * rest);
            std::copy(tb.ptr() + nn * cb * rest, tb.ptr() + (nn + 1) * cb * rest,
                      out.ptr() + nn * (ca + cb) * rest + ca * rest);
        }
        Value r = make(std::move(out), {a, b});
        set_back(r, [this, a, b, r, n, ca, cb, rest] {
            const Tensor& g = grad(r);
            if (needs_grad(a)) {
                Tensor& ga = grad_buf(a);
                for (int64_t nn = 0; nn < n; ++nn)
                    for (int64_t i = 0; i < ca * rest; ++i)
                        ga[nn * ca * rest + i] += g[nn * (ca + cb) * rest + i];
            }
            if (needs_grad(b)) {
                Tensor& gb = grad_buf(b);
                for (int64_t nn = 0; nn < n; ++nn)
                    for (int64_t i = 0; i < cb * rest; ++i)
                        gb[nn * cb * rest + i] += g[nn * (ca + cb) * rest + ca * rest + i];
            }
        });
        return r;
    }

    // Channel slice [from, to) along axis 1 of {N, C, rest}.
    Value slice_ch(Value a, int64_t from, int64_t to) {
        const Tensor& ta = val(a);
        if (ta.rank() < 2) throw std::invalid_argument("slice_ch: rank < 2");
        const int64_t n = ta.dim(0), c = ta.dim(1);
        if (!(0 <= from && from < to && to <= c))
            throw std::invalid_argument("slice_ch: bad range");
        int64_t rest = 1;
        for (size_t i = 2; i < ta.rank(); ++i) rest *= ta.dim(i);
        std::vector<int64_t> shape = ta.shape;
        shape[1] = to - from;
        const int64_t cs = to - from;
        Tensor out(shape);
        for (int64_t nn = 0; nn < n; ++nn)
            std::copy(ta.ptr() + (nn * c + from) * rest, ta.ptr() + (nn * c + to) * rest,
                      out.ptr() + nn * cs * rest);
        Value r = make(std::move(out), {a});
        set_back(r, [this, a, r, n, c, from, cs, rest] {
            if (!needs_grad(a)) return;
            const Tensor& g = grad(r);
            Tensor& ga = grad_buf(a);
            for (int64_t nn = 0; nn < n; ++nn)
                for (int64_t i = 0; i < cs * rest; ++i)
                    ga[(nn * c + from) * rest + i] += g[nn * cs * rest + i];
        });
        return r;
    }

    // Broadcast add of a per-channel bias over {N, C, rest}.
    Value add_bias(Value x, Value b) {
        const Tensor& tx = val(x);
        const Tensor& tb = val(b);
        if (tx.rank() < 2 || tb.rank() != 1 || tb.dim(0) != tx.dim(1))
            throw std::invalid_argument("add_bias: bias must be {channels}");
        const int64_t n = tx.dim(0), c = tx.dim(1);
        int64_t rest = 1;
        for (size_t i = 2; i < tx.rank(); ++i) rest *= tx.dim(i);
        Tensor out = tx;
        for (int64_t nn = 0; nn < n; ++nn)
            for (int64_t cc = 0; cc < c; ++cc) {
                double* dst = out.ptr() + (nn * c + cc) * rest;
                const double bv = tb[cc];
                for (int64_t i = 0; i < rest; ++i) dst[i] += bv;
            }
        Value r = make(std::move(out), {x, b});
        set_back(r, [this, x, b, r, n, c, rest] {
            const Tensor& g = grad(r);
            if (needs_grad(x)) {
                Tensor& gx = grad_buf(x);
                for (int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
            }
            if (needs_grad(b)) {
                Tensor& gb = grad_buf(b);
                for (int64_t nn = 0; nn < n; ++nn)
                    for (int64_t cc = 0; cc < c; ++cc) {
                        const double* src = g.ptr() + (nn * c + cc) * rest;
                        double acc = 0.0;
                        for (int64_t i = 0; i < rest; ++i) acc += src[i];
                        gb[cc] += acc;
                    }
            }
        });
        return r;
    }

    // Per-channel affine y = gamma * x + beta over {N, C, rest}.
    Value scale_bias(Value x, Value gamma, Value beta) {
        const Tensor& tx = val(x);
        const Tensor& tg = val(gamma);
        const Tensor& tbt = val(beta);
        if (tg.rank() != 1 || tbt.rank() != 1 || tg.dim(0) != tx.dim(1) ||
            tbt.dim(0) != tx.dim(1))
            throw std::invalid_argument("scale_bias: gamma/beta must be {channels}");
        const int64_t n = tx.dim(0), c = tx.dim(1);
        int64_t rest = 1;
        for (size_t i = 2; i < tx.rank(); ++i) rest *= tx.dim(i);
        Tensor out(tx.shape);
        for (int64_t nn = 0; nn < n; ++nn)
            for (int64_t cc = 0; cc < c; ++cc) {
                const double* src = tx.ptr() + (nn * c + cc) * rest;
                double* dst = out.ptr() + (nn * c + cc) * rest;
                const double gv = tg[cc], bv = tbt[cc];
                for (int64_t i = 0; i < rest; ++i) dst[i] = gv * src[i] + bv;
            }
        Value r = make(std::move(out), {x, gamma, beta});
        set_back(r, [this, x, gamma, beta, r, n, c, rest] {
            const Tensor& g = grad(r);
            const Tensor& vx = val(x);
            const Tensor& vg = val(gamma);
            const bool nx = needs_grad(x), ng = needs_grad(gamma), nb = needs_grad(beta);
            Tensor* gx = nx ? &grad_buf(x) : nullptr;
            Tensor* gg = ng ? &grad_buf(gamma) : nullptr;
            Tensor* gb = nb ? &grad_buf(beta) : nullptr;
            for (int64_t nn = 0; nn < n; ++nn)
                for (int64_t cc = 0; cc < c; ++cc) {
                    const int64_t base = (nn * c + cc) * rest;
                    const double gv = vg[cc];
                    double acc_g = 0.0, acc_b = 0.0;
                    for (int64_t i = 0; i < rest; ++i) {
                        const double go = g[base + i];
                        if (nx) (*gx)[base + i] += go * gv;
                        acc_g += go * vx[base + i];
                        acc_b += go;
                    }
                    if (ng) (*gg)[cc] += acc_g;
                    if (nb) (*gb)[cc] += acc_b;
                }
        });
        return r;
    }

    // Forward difference along the innermost axis, last column replicated:
    // y[..., f] = x[..., f+1] - x[..., f] for f < F-1, y[..., F-1] = y[..., F-2].
    Value freq_diff(Value a) {
        const Tensor& ta = val(a);
        const int64_t f = ta.shape.back();
        if (f < 2) throw std::invalid_argument("freq_diff: need at least 2 columns");
        const int64_t rows = ta.numel() / f;
        Tensor out(ta.shape);
        for (int64_t rw = 0; rw < rows; ++rw) {
            const double* src = ta.ptr() + rw * f;
            double* dst = out.ptr() + rw * f;
            for (int64_t i = 0; i + 1 < f; ++i) dst[i] = src[i + 1] - src[i];
            dst[f - 1] = dst[f - 2];
        }
        Value r = make(std::move(out), {a});
        set_back(r, [this, a, r, rows, f] {
            if (!needs_grad(a)) return;
            const Tensor& g = grad(r);
            Tensor& ga = grad_buf(a);
            for (int64_t rw = 0; rw < rows; ++rw) {
                const double* gs = g.ptr() + rw * f;
                double* gd = ga.ptr() + rw * f;
                for (int64_t i = 0; i + 1 < f; ++i) {
                    gd[i + 1] += gs[i];
                    gd[i] -= gs[i];
                }
                // replicated column is another copy of the F-2 difference
                gd[f - 1] += gs[f - 1];
                gd[f - 2] -= gs[f - 1];
            }
        });
        return r;
    }

  private:
    std::deque<Node> nodes_;  // deque: references returned by val()/grad() stay valid as ops are added

    int check(Value v) const {
        if (!v.valid() || static_cast<size_t>(v.id) >= nodes_.size())
            throw std::logic_error("Tape: invalid value handle");
        return v.id;
    }

    Value push(Tensor v, bool rg, int pidx) {
        Node n;
        n.value = std::move(v);
        n.requires_grad = rg;
        n.param_index = pidx;
        nodes_.push_back(std::move(n));
        return Value{static_cast<int>(nodes_.size()) - 1};
    }
};

using Value = Tape::Value;

}  // namespace subaru
