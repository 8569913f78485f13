#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "subaru/autodiff.hpp"

namespace subaru {

// Layer-level ops over the tape. Layouts follow the channels-first
// convention: {N, C, L} for sequences, {N, C, H, W} for grids. Weight
// layouts: conv {Cout, Cin, K...}, transposed conv {Cin, Cout, K...},
// linear {Dout, Din} applied over the innermost axis.

namespace conv_detail {

// Valid output range [t_lo, t_hi) such that 0 <= t*stride + off < len.
inline void trange(int64_t len, int64_t out_len, int64_t stride, int64_t off,
                   int64_t& t_lo, int64_t& t_hi) {
    t_lo = 0;
    if (off < 0) t_lo = (-off + stride - 1) / stride;
    int64_t last = len - 1 - off;
    t_hi = last < 0 ? 0 : std::min(out_len, last / stride + 1);
    if (t_hi < t_lo) t_hi = t_lo;
}

inline int64_t conv_out_len(int64_t in, int64_t k, int64_t stride, int64_t dil,
                            int64_t pl, int64_t pr) {
    const int64_t eff = (k - 1) * dil + 1;
    const int64_t span = in + pl + pr - eff;
    if (span < 0) throw std::invalid_argument("conv: kernel larger than padded input");
    return span / stride + 1;
}

// "Same" padding split for stride 1: total = effective_kernel - 1, slightly
// heavier on the right for even kernels.
inline void same_pad(int64_t k, int64_t dil, int64_t& pl, int64_t& pr) {
    const int64_t total = (k - 1) * dil;
    pl = total / 2;
    pr = total - pl;
}

}  // namespace conv_detail

// ---- 1-d convolution -------------------------------------------------------

inline Value conv1d(Tape& t, Value x, Value w, Value bias, int64_t stride,
                    int64_t dil, int64_t pl, int64_t pr) {
    using conv_detail::trange;
    const Tensor& tx = t.val(x);
    const Tensor& tw = t.val(w);
    if (tx.rank() != 3 || tw.rank() != 3) throw std::invalid_argument("conv1d: bad ranks");
    const int64_t n = tx.dim(0), ci = tx.dim(1), L = tx.dim(2);
    const int64_t co = tw.dim(0), k = tw.dim(2);
    if (tw.dim(1) != ci) throw std::invalid_argument("conv1d: channel mismatch");
    const int64_t lo = conv_detail::conv_out_len(L, k, stride, dil, pl, pr);

    Tensor out({n, co, lo});
    for (int64_t nn = 0; nn < n; ++nn)
        for (int64_t oc = 0; oc < co; ++oc) {
            double* yrow = out.ptr() + (nn * co + oc) * lo;
            for (int64_t icc = 0; icc < ci; ++icc) {
                const double* xrow = tx.ptr() + (nn * ci + icc) * L;
                const double* wrow = tw.ptr() + (oc * ci + icc) * k;
                for (int64_t kk = 0; kk < k; ++kk) {
                    const double wv = wrow[kk];
                    if (wv == 0.0) continue;
                    const int64_t off = kk * dil - pl;
                    int64_t t_lo, t_hi;
                    trange(L, lo, stride, off, t_lo, t_hi);
                    if (stride == 1) {
                        const double* src = xrow + t_lo + off;
                        for (int64_t tt = t_lo; tt < t_hi; ++tt) yrow[tt] += wv * *src++;
                    } else {
                        for (int64_t tt = t_lo; tt < t_hi; ++tt)
                            yrow[tt] += wv * xrow[tt * stride + off];
                    }
                }
            }
        }
    Value r = t.make(std::move(out), {x, w});
    t.set_back(r, [&t, x, w, r, n, ci, co, L, k, lo, stride, dil, pl] {
        const Tensor& g = t.grad(r);
        const Tensor& tx = t.val(x);
        const Tensor& tw = t.val(w);
        const bool nx = t.needs_grad(x), nw = t.needs_grad(w);
        Tensor* gx = nx ? &t.grad_buf(x) : nullptr;
        Tensor* gw = nw ? &t.grad_buf(w) : nullptr;
        for (int64_t nn = 0; nn < n; ++nn)
            for (int64_t oc = 0; oc < co; ++oc) {
                const double* grow = g.ptr() + (nn * co + oc) * lo;
                for (int64_t icc = 0; icc < ci; ++icc) {
                    const double* xrow = tx.ptr() + (nn * ci + icc) * L;
                    const double* wrow = tw.ptr() + (oc * ci + icc) * k;
                    double* gxrow = nx ? gx->ptr() + (nn * ci + icc) * L : nullptr;
                    double* gwrow = nw ? gw->ptr() + (oc * ci + icc) * k : nullptr;
                    for (int64_t kk = 0; kk < k; ++kk) {
                        const int64_t off = kk * dil - pl;
                        int64_t t_lo, t_hi;
                        conv_detail::trange(L, lo, stride, off, t_lo, t_hi);
                        double acc = 0.0;
                        const double wv = wrow[kk];
                        if (stride == 1) {
                            const double* xs = xrow + t_lo + off;
                            double* gxs = nx ? gxrow + t_lo + off : nullptr;
                            for (int64_t tt = t_lo; tt < t_hi; ++tt) {
                                const double gv = grow[tt];
                                if (nx) *gxs++ += wv * gv;
                                acc += gv * *xs++;
                            }
                        } else {
                            for (int64_t tt = t_lo; tt < t_hi; ++tt) {
                                const double gv = grow[tt];
                                const int64_t p = tt * stride + off;
                                if (nx) gxrow[p] += wv * gv;
                                acc += gv * xrow[p];
                            }
                        }
                        if (nw) gwrow[kk] += acc;
                    }
                }
            }
    });
    if (bias.valid()) r = t.add_bias(r, bias);
    return r;
}

inline Value conv1d_same(Tape& t, Value x, Value w, Value bias, int64_t dil = 1) {
    int64_t pl, pr;
    conv_detail::same_pad(t.val(w).dim(2), dil, pl, pr);
    return conv1d(t, x, w, bias, 1, dil, pl, pr);
}

// ---- 2-d convolution -------------------------------------------------------

inline Value conv2d(Tape& t, Value x, Value w, Value bias, int64_t stride,
                    int64_t dil, int64_t ph_l, int64_t ph_r, int64_t pw_l, int64_t pw_r) {
    const Tensor& tx = t.val(x);
    const Tensor& tw = t.val(w);
    if (tx.rank() != 4 || tw.rank() != 4) throw std::invalid_argument("conv2d: bad ranks");
    const int64_t n = tx.dim(0), ci = tx.dim(1), H = tx.dim(2), W = tx.dim(3);
    const int64_t co = tw.dim(0), kh = tw.dim(2), kw = tw.dim(3);
    if (tw.dim(1) != ci) throw std::invalid_argument("conv2d: channel mismatch");
    const int64_t ho = conv_detail::conv_out_len(H, kh, stride, dil, ph_l, ph_r);
    const int64_t wo = conv_detail::conv_out_len(W, kw, stride, dil, pw_l, pw_r);

    Tensor out({n, co, ho, wo});
    for (int64_t nn = 0; nn < n; ++nn)
        for (int64_t oc = 0; oc < co; ++oc) {
            double* ybase = out.ptr() + (nn * co + oc) * ho * wo;
            for (int64_t icc = 0; icc < ci; ++icc) {
                const double* xbase = tx.ptr() + (nn * ci + icc) * H * W;
                const double* wbase = tw.ptr() + (oc * ci + icc) * kh * kw;
                for (int64_t ky = 0; ky < kh; ++ky) {
                    const int64_t oy = ky * dil - ph_l;
                    int64_t y_lo, y_hi;
                    conv_detail::trange(H, ho, stride, oy, y_lo, y_hi);
                    for (int64_t kx = 0; kx < kw; ++kx) {
                        const double wv = wbase[ky * kw + kx];
                        if (wv == 0.0) continue;
                        const int64_t ox = kx * dil - pw_l;
                        int64_t x_lo, x_hi;
                        conv_detail::trange(W, wo, stride, ox, x_lo, x_hi);
                        for (int64_t ty = y_lo; ty < y_hi; ++ty) {
                            const double* xrow = xbase + (ty * stride + oy) * W + ox;
                            double* yrow = ybase + ty * wo;
                            if (stride == 1) {
                                for (int64_t txx = x_lo; txx < x_hi; ++txx)
                                    yrow[txx] += wv * xrow[txx];
                            } else {
                                for (int64_t txx = x_lo; txx < x_hi; ++txx)
                                    yrow[txx] += wv * xrow[txx * stride];
                            }
                        }
                    }
                }
            }
        }
    Value r = t.make(std::move(out), {x, w});
    t.set_back(r, [&t, x, w, r, n, ci, co, H, W, kh, kw, ho, wo, stride, dil, ph_l, pw_l] {
        const Tensor& g = t.grad(r);
        const Tensor& tx = t.val(x);
        const Tensor& tw = t.val(w);
        const bool nx = t.needs_grad(x), nw = t.needs_grad(w);
        Tensor* gx = nx ? &t.grad_buf(x) : nullptr;
        Tensor* gw = nw ? &t.grad_buf(w) : nullptr;
        for (int64_t nn = 0; nn < n; ++nn)
            for (int64_t oc = 0; oc < co; ++oc) {
                const double* gbase = g.ptr() + (nn * co + oc) * ho * wo;
                for (int64_t icc = 0; icc < ci; ++icc) {
                    const double* xbase = tx.ptr() + (nn * ci + icc) * H * W;
                    const double* wbase = tw.ptr() + (oc * ci + icc) * kh * kw;
                    double* gxbase = nx ? gx->ptr() + (nn * ci + icc) * H * W : nullptr;
                    double* gwbase = nw ? gw->ptr() + (oc * ci + icc) * kh * kw : nullptr;
                    for (int64_t ky = 0; ky < kh; ++ky) {
                        const int64_t oy = ky * dil - ph_l;
                        int64_t y_lo, y_hi;
                        conv_detail::trange(H, ho, stride, oy, y_lo, y_hi);
                        for (int64_t kx = 0; kx < kw; ++kx) {
                            const int64_t ox = kx * dil - pw_l;
                            int64_t x_lo, x_hi;
                            conv_detail::trange(W, wo, stride, ox, x_lo, x_hi);
                            const double wv = wbase[ky * kw + kx];
                            double acc = 0.0;
                            for (int64_t ty = y_lo; ty < y_hi; ++ty) {
                                const double* grow = gbase + ty * wo;
                                const double* xrow = xbase + (ty * stride + oy) * W + ox;
                                double* gxrow =
                                    nx ? gxbase + (ty * stride + oy) * W + ox : nullptr;
                                for (int64_t txx = x_lo; txx < x_hi; ++txx) {
                                    const double gv = grow[txx];
                                    const int64_t p = txx * stride;
                                    if (nx) gxrow[p] += wv * gv;
                                    acc += gv * xrow[p];
                                }
                            }
                            if (nw) gwbase[ky * kw + kx] += acc;
                        }
                    }
                }
            }
    });
    if (bias.valid()) r = t.add_bias(r, bias);
    return r;
}

inline Value conv2d_same(Tape& t, Value x, Value w, Value bias, int64_t dil = 1) {
    int64_t pl, pr;
    conv_detail::same_pad(t.val(w).dim(2), dil, pl, pr);
    int64_t ql, qr;
    conv_detail::same_pad(t.val(w).dim(3), dil, ql, qr);
    return conv2d(t, x, w, bias, 1, dil, pl, pr, ql, qr);
}

// ---- transposed convolutions ----------------------------------------------

inline Value tconv1d(Tape& t, Value x, Value w, Value bias, int64_t stride, int64_t pad) {
    const Tensor& tx = t.val(x);
    const Tensor& tw = t.val(w);
    if (tx.rank() != 3 || tw.rank() != 3) throw std::invalid_argument("tconv1d: bad ranks");
    const int64_t n = tx.dim(0), ci = tx.dim(1), L = tx.dim(2);
    const int64_t co = tw.dim(1), k = tw.dim(2);
    if (tw.dim(0) != ci) throw std::invalid_argument("tconv1d: channel mismatch");
    const int64_t lo = (L - 1) * stride + k - 2 * pad;
    if (lo <= 0) throw std::invalid_argument("tconv1d: non-positive output length");

    Tensor out({n, co, lo});
    for (int64_t nn = 0; nn < n; ++nn)
        for (int64_t icc = 0; icc < ci; ++icc) {
            const double* xrow = tx.ptr() + (nn * ci + icc) * L;
            for (int64_t oc = 0; oc < co; ++oc) {
                double* yrow = out.ptr() + (nn * co + oc) * lo;
                const double* wrow = tw.ptr() + (icc * co + oc) * k;
                for (int64_t kk = 0; kk < k; ++kk) {
                    const double wv = wrow[kk];
                    if (wv == 0.0) continue;
                    const int64_t off = kk - pad;  // out pos = j*stride + off
                    int64_t j_lo, j_hi;
                    conv_detail::trange(lo, L, stride, off, j_lo, j_hi);
                    for (int64_t j = j_lo; j < j_hi; ++j)
                        yrow[j * stride + off] += wv * xrow[j];
                }
            }
        }
    Value r = t.make(std::move(out), {x, w});
    t.set_back(r, [&t, x, w, r, n, ci, co, L, k, lo, stride, pad] {
        const Tensor& g = t.grad(r);
        const Tensor& tx = t.val(x);
        const Tensor& tw = t.val(w);
        const bool nx = t.needs_grad(x), nw = t.needs_grad(w);
        Tensor* gx = nx ? &t.grad_buf(x) : nullptr;
        Tensor* gw = nw ? &t.grad_buf(w) : nullptr;
        for (int64_t nn = 0; nn < n; ++nn)
            for (int64_t icc = 0; icc < ci; ++icc) {
                const double* xrow = tx.ptr() + (nn * ci + icc) * L;
                double* gxrow = nx ? gx->ptr() + (nn * ci + icc) * L : nullptr;
                for (int64_t oc = 0; oc < co; ++oc) {
                    const double* grow = g.ptr() + (nn * co + oc) * lo;
                    const double* wrow = tw.ptr() + (icc * co + oc) * k;
                    double* gwrow = nw ? gw->ptr() + (icc * co + oc) * k : nullptr;
                    for (int64_t kk = 0; kk < k; ++kk) {
                        const int64_t off = kk - pad;
                        int64_t j_lo, j_hi;
                        conv_detail::trange(lo, L, stride, off, j_lo, j_hi);
                        const double wv = wrow[kk];
                        double acc = 0.0;
                        for (int64_t j = j_lo; j < j_hi; ++j) {
                            const double gv = grow[j * stride + off];
                            if (nx) gxrow[j] += wv * gv;
                            acc += gv * xrow[j];
                        }
                        if (nw) gwrow[kk] += acc;
                    }
                }
            }
    });
    if (bias.valid()) r = t.add_bias(r, bias);
    return r;
}

inline Value tconv2d(Tape& t, Value x, Value w, Value bias, int64_t stride, int64_t pad) {
    const Tensor& tx = t.val(x);
    const Tensor& tw = t.val(w);
    if (tx.rank() != 4 || tw.rank() != 4) throw std::invalid_argument("tconv2d: bad ranks");
    const int64_t n = tx.dim(0), ci = tx.dim(1), H = tx.dim(2), W = tx.dim(3);
    const int64_t co = tw.dim(1), kh = tw.dim(2), kw = tw.dim(3);
    if (tw.dim(0) != ci) throw std::invalid_argument("tconv2d: channel mismatch");
    const int64_t ho = (H - 1) * stride + kh - 2 * pad;
    const int64_t wo = (W - 1) * stride + kw - 2 * pad;
    if (ho <= 0 || wo <= 0) throw std::invalid_argument("tconv2d: non-positive output");

    Tensor out({n, co, ho, wo});
    for (int64_t nn = 0; nn < n; ++nn)
        for (int64_t icc = 0; icc < ci; ++icc) {
            const double* xbase = tx.ptr() + (nn * ci + icc) * H * W;
            for (int64_t oc = 0; oc < co; ++oc) {
                double* ybase = out.ptr() + (nn * co + oc) * ho * wo;
                const double* wbase = tw.ptr() + (icc * co + oc) * kh * kw;
                for (int64_t ky = 0; ky < kh; ++ky) {
                    const int64_t oy = ky - pad;
                    int64_t jy_lo, jy_hi;
                    conv_detail::trange(ho, H, stride, oy, jy_lo, jy_hi);
                    for (int64_t kx = 0; kx < kw; ++kx) {
                        const double wv = wbase[ky * kw + kx];
                        if (wv == 0.0) continue;
                        const int64_t ox = kx - pad;
                        int64_t jx_lo, jx_hi;
                        conv_detail::trange(wo, W, stride, ox, jx_lo, jx_hi);
                        for (int64_t jy = jy_lo; jy < jy_hi; ++jy) {
                            const double* xrow = xbase + jy * W;
                            double* yrow = ybase + (jy * stride + oy) * wo + ox;
                            for (int64_t jx = jx_lo; jx < jx_hi; ++jx)
                                yrow[jx * stride] += wv * xrow[jx];
                        }
                    }
                }
            }
        }
    Value r = t.make(std::move(out), {x, w});
    t.set_back(r, [&t, x, w, r, n, ci, co, H, W, kh, kw, ho, wo, stride, pad] {
        const Tensor& g = t.grad(r);
        const Tensor& tx = t.val(x);
        const Tensor& tw = t.val(w);
        const bool nx = t.needs_grad(x), nw = t.needs_grad(w);
        Tensor* gx = nx ? &t.grad_buf(x) : nullptr;
        Tensor* gw = nw ? &t.grad_buf(w) : nullptr;
        for (int64_t nn = 0; nn < n; ++nn)
            for (int64_t icc = 0; icc < ci; ++icc) {
                const double* xbase = tx.ptr() + (nn * ci + icc) * H * W;
                double* gxbase = nx ? gx->ptr() + (nn * ci + icc) * H * W : nullptr;
                for (int64_t oc = 0; oc < co; ++oc) {
                    const double* gbase = g.ptr() + (nn * co + oc) * ho * wo;
                    const double* wbase = tw.ptr() + (icc * co + oc) * kh * kw;
                    double* gwbase = nw ? gw->ptr() + (icc * co + oc) * kh * kw : nullptr;
                    for (int64_t ky = 0; ky < kh; ++ky) {
                        const int64_t oy = ky - pad;
                        int64_t jy_lo, jy_hi;
                        conv_detail::trange(ho, H, stride, oy, jy_lo, jy_hi);
                        for (int64_t kx = 0; kx < kw; ++kx) {
                            const int64_t ox = kx - pad;
                            int64_t jx_lo, jx_hi;
                            conv_detail::trange(wo, W, stride, ox, jx_lo, jx_hi);
                            const double wv = wbase[ky * kw + kx];
                            double acc = 0.0;
                            for (int64_t jy = jy_lo; jy < jy_hi; ++jy) {
                                const double* xrow = xbase + jy * W;
                                double* gxrow = nx ? gxbase + jy * W : nullptr;
                                const double* grow = gbase + (jy * stride + oy) * wo + ox;
                                for (int64_t jx = jx_lo; jx < jx_hi; ++jx) {
                                    const double gv = grow[jx * stride];
                                    if (nx) gxrow[jx] += wv * gv;
                                    acc += gv * xrow[jx];
                                }
                            }
                            if (nw) gwbase[ky * kw + kx] += acc;
                        }
                    }
                }
            }
    });
    if (bias.valid()) r = t.add_bias(r, bias);
    return r;
}

// ---- depthwise conv (same length) ------------------------------------------

// x {N, C, L}, w {C, K}: per-channel conv with zero padding, output length L.
// causal=true pads K-1 on the left (tap K-1 hits the current sample);
// causal=false centers the kernel.
inline Value depthwise_conv1d(Tape& t, Value x, Value w, Value bias, bool causal) {
    const Tensor& tx = t.val(x);
    const Tensor& tw = t.val(w);
    if (tx.rank() != 3 || tw.rank() != 2 || tw.dim(0) != tx.dim(1))
        throw std::invalid_argument("depthwise_conv1d: bad shapes");
    const int64_t n = tx.dim(0), c = tx.dim(1), L = tx.dim(2), k = tw.dim(1);
    const int64_t lpad = causal ? k - 1 : (k - 1) / 2;
    Tensor out({n, c, L});
    for (int64_t nn = 0; nn < n; ++nn)
        for (int64_t cc = 0; cc < c; ++cc) {
            const double* xrow = tx.ptr() + (nn * c + cc) * L;
            double* yrow = out.ptr() + (nn * c + cc) * L;
            const double* wrow = tw.ptr() + cc * k;
            for (int64_t kk = 0; kk < k; ++kk) {
                const double wv = wrow[kk];
                const int64_t off = kk - lpad;
                const int64_t lo = std::max<int64_t>(0, -off);
                const int64_t hi = std::min(L, L - off);
                for (int64_t tt = lo; tt < hi; ++tt) yrow[tt] += wv * xrow[tt + off];
            }
        }
    Value r = t.make(std::move(out), {x, w});
    t.set_back(r, [&t, x, w, r, n, c, L, k, lpad] {
        const Tensor& g = t.grad(r);
        const Tensor& tx = t.val(x);
        const Tensor& tw = t.val(w);
        const bool nx = t.needs_grad(x), nw = t.needs_grad(w);
        Tensor* gx = nx ? &t.grad_buf(x) : nullptr;
        Tensor* gw = nw ? &t.grad_buf(w) : nullptr;
        for (int64_t nn = 0; nn < n; ++nn)
            for (int64_t cc = 0; cc < c; ++cc) {
                const double* xrow = tx.ptr() + (nn * c + cc) * L;
                const double* grow = g.ptr() + (nn * c + cc) * L;
                const double* wrow = tw.ptr() + cc * k;
                double* gxrow = nx ? gx->ptr() + (nn * c + cc) * L : nullptr;
                double* gwrow = nw ? gw->ptr() + cc * k : nullptr;
                for (int64_t kk = 0; kk < k; ++kk) {
                    const int64_t off = kk - lpad;
                    const int64_t lo = std::max<int64_t>(0, -off);
                    const int64_t hi = std::min(L, L - off);
                    const double wv = wrow[kk];
                    double acc = 0.0;
                    for (int64_t tt = lo; tt < hi; ++tt) {
                        const double gv = grow[tt];
                        if (nx) gxrow[tt + off] += wv * gv;
                        acc += gv * xrow[tt + off];
                    }
                    if (nw) gwrow[kk] += acc;
                }
            }
    });
    if (bias.valid()) r = t.add_bias(r, bias);
    return r;
}

// ---- linear over the innermost axis ---------------------------------------

inline Value linear(Tape& t, Value x, Value w, Value bias) {
    const Tensor& tx = t.val(x);
    const Tensor& tw = t.val(w);
    if (tw.rank() != 2) throw std::invalid_argument("linear: weight must be {out, in}");
    const int64_t din = tw.dim(1), dout = tw.dim(0);
    if (tx.shape.back() != din) throw std::invalid_argument("linear: inner dim mismatch");
    const int64_t m = tx.numel() / din;
    std::vector<int64_t> shape = tx.shape;
    shape.back() = dout;

    Tensor out(shape);
    for (int64_t mm = 0; mm < m; ++mm) {
        const double* xrow = tx.ptr() + mm * din;
        double* yrow = out.ptr() + mm * dout;
        for (int64_t o = 0; o < dout; ++o) {
            const double* wrow = tw.ptr() + o * din;
            double acc = 0.0;
            for (int64_t i = 0; i < din; ++i) acc += wrow[i] * xrow[i];
            yrow[o] = acc;
        }
    }
    Value r = t.make(std::move(out), {x, w});
    t.set_back(r, [&t, x, w, r, m, din, dout] {
        const Tensor& g = t.grad(r);
        const Tensor& tx = t.val(x);
        const Tensor& tw = t.val(w);
        const bool nx = t.needs_grad(x), nw = t.needs_grad(w);
        Tensor* gx = nx ? &t.grad_buf(x) : nullptr;
        Tensor* gw = nw ? &t.grad_buf(w) : nullptr;
        for (int64_t mm = 0; mm < m; ++mm) {
            const double* grow = g.ptr() + mm * dout;
            const double* xrow = tx.ptr() + mm * din;
            double* gxrow = nx ? gx->ptr() + mm * din : nullptr;
            for (int64_t o = 0; o < dout; ++o) {
                const double gv = grow[o];
                if (gv == 0.0) continue;
                const double* wrow = tw.ptr() + o * din;
                double* gwrow = nw ? gw->ptr() + o * din : nullptr;
                for (int64_t i = 0; i < din; ++i) {
                    if (nx) gxrow[i] += gv * wrow[i];
                    if (nw) gwrow[i] += gv * xrow[i];
                }
            }
        }
    });
    if (bias.valid()) {
        // innermost-axis bias: reuse add_bias by viewing rows as batch
        const Tensor& ty = t.val(r);
        std::vector<int64_t> orig = ty.shape;
        Value flat = t.reshape(r, {m, dout});
        Value flat3 = t.reshape(flat, {m, dout, 1});
        flat3 = t.add_bias(flat3, bias);
        r = t.reshape(flat3, orig);
    }
    return r;
}

// ---- normalization ---------------------------------------------------------

// Standard batch norm over {N, C, rest}, statistics per channel. Running
// statistics live outside the tape (non-trainable store entries) and are
// updated in place during training: new batch weighted by `momentum`, running
// variance kept unbiased.
inline Value batch_norm(Tape& t, Value x, Value gamma, Value beta, Tensor& running_mean,
                        Tensor& running_var, bool training, double momentum = 0.1,
                        double eps = 1e-5) {
    const Tensor& tx = t.val(x);
    if (tx.rank() < 2) throw std::invalid_argument("batch_norm: rank < 2");
    const int64_t n = tx.dim(0), c = tx.dim(1);
    int64_t rest = 1;
    for (size_t i = 2; i < tx.rank(); ++i) rest *= tx.dim(i);
    const int64_t m = n * rest;
    if (running_mean.numel() != c || running_var.numel() != c)
        throw std::invalid_argument("batch_norm: running stats size");

    if (!training) {
        // affine transform with frozen statistics
        Tensor out(tx.shape);
        std::vector<double> scl(c), sft(c);
        const Tensor& tg = t.val(gamma);
        const Tensor& tb = t.val(beta);
        for (int64_t cc = 0; cc < c; ++cc) {
            const double inv = 1.0 / std::sqrt(running_var[cc] + eps);
            scl[cc] = tg[cc] * inv;
            sft[cc] = tb[cc] - tg[cc] * inv * running_mean[cc];
        }
        for (int64_t nn = 0; nn < n; ++nn)
            for (int64_t cc = 0; cc < c; ++cc) {
                const double* src = tx.ptr() + (nn * c + cc) * rest;
                double* dst = out.ptr() + (nn * c + cc) * rest;
                for (int64_t i = 0; i < rest; ++i) dst[i] = scl[cc] * src[i] + sft[cc];
            }
        Value r = t.make(std::move(out), {x, gamma, beta});
        auto inv_std = std::make_shared<std::vector<double>>(c);
        for (int64_t cc = 0; cc < c; ++cc)
            (*inv_std)[cc] = 1.0 / std::sqrt(running_var[cc] + eps);
        auto mean = std::make_shared<std::vector<double>>(running_mean.data.begin(),
                                                          running_mean.data.end());
        t.set_back(r, [&t, x, gamma, beta, r, n, c, rest, inv_std, mean] {
            const Tensor& g = t.grad(r);
            const Tensor& tx = t.val(x);
            const Tensor& tg = t.val(gamma);
            const bool nx = t.needs_grad(x), ng = t.needs_grad(gamma), nb = t.needs_grad(beta);
            Tensor* gx = nx ? &t.grad_buf(x) : nullptr;
            Tensor* gg = ng ? &t.grad_buf(gamma) : nullptr;
            Tensor* gb = nb ? &t.grad_buf(beta) : nullptr;
            for (int64_t nn = 0; nn < n; ++nn)
                for (int64_t cc = 0; cc < c; ++cc) {
                    const int64_t base = (nn * c + cc) * rest;
                    const double inv = (*inv_std)[cc], mu = (*mean)[cc];
                    double acc_g = 0.0, acc_b = 0.0;
                    for (int64_t i = 0; i < rest; ++i) {
                        const double gv = g[base + i];
                        if (nx) (*gx)[base + i] += gv * tg[cc] * inv;
                        acc_g += gv * (tx[base + i] - mu) * inv;
                        acc_b += gv;
                    }
                    if (ng) (*gg)[cc] += acc_g;
                    if (nb) (*gb)[cc] += acc_b;
                }
        });
        return r;
    }

    auto mean = std::make_shared<std::vector<double>>(c, 0.0);
    auto inv_std = std::make_shared<std::vector<double>>(c, 0.0);
    for (int64_t cc = 0; cc < c; ++cc) {
        double s = 0.0, s2 = 0.0;
        for (int64_t nn = 0; nn < n; ++nn) {
            const double* src = tx.ptr() + (nn * c + cc) * rest;
            for (int64_t i = 0; i < rest; ++i) {
                s += src[i];
                s2 += src[i] * src[i];
            }
        }
        const double mu = s / m;
        double var = s2 / m - mu * mu;
        if (var < 0.0) var = 0.0;
        (*mean)[cc] = mu;
        (*inv_std)[cc] = 1.0 / std::sqrt(var + eps);
        const double unbiased = m > 1 ? var * m / (m - 1.0) : var;
        running_mean[cc] = (1.0 - momentum) * running_mean[cc] + momentum * mu;
        running_var[cc] = (1.0 - momentum) * running_var[cc] + momentum * unbiased;
    }

    Tensor out(tx.shape);
    const Tensor& tg = t.val(gamma);
    const Tensor& tb = t.val(beta);
    for (int64_t nn = 0; nn < n; ++nn)
        for (int64_t cc = 0; cc < c; ++cc) {
            const double* src = tx.ptr() + (nn * c + cc) * rest;
            double* dst = out.ptr() + (nn * c + cc) * rest;
            const double mu = (*mean)[cc], inv = (*inv_std)[cc];
            const double gv = tg[cc], bv = tb[cc];
            for (int64_t i = 0; i < rest; ++i) dst[i] = gv * (src[i] - mu) * inv + bv;
        }
    Value r = t.make(std::move(out), {x, gamma, beta});
    t.set_back(r, [&t, x, gamma, beta, r, n, c, rest, m, mean, inv_std] {
        const Tensor& g = t.grad(r);
        const Tensor& tx = t.val(x);
        const Tensor& tg = t.val(gamma);
        const bool nx = t.needs_grad(x), ng = t.needs_grad(gamma), nb = t.needs_grad(beta);
        Tensor* gx = nx ? &t.grad_buf(x) : nullptr;
        Tensor* gg = ng ? &t.grad_buf(gamma) : nullptr;
        Tensor* gb = nb ? &t.grad_buf(beta) : nullptr;
        for (int64_t cc = 0; cc < c; ++cc) {
            const double mu = (*mean)[cc], inv = (*inv_std)[cc], gscale = tg[cc];
            // first pass: reductions over the channel
            double sum_g = 0.0, sum_gx = 0.0;
            for (int64_t nn = 0; nn < n; ++nn) {
                const int64_t base = (nn * c + cc) * rest;
                for (int64_t i = 0; i < rest; ++i) {
                    const double gv = g[base + i];
                    sum_g += gv;
                    sum_gx += gv * (tx[base + i] - mu) * inv;
                }
            }
            if (ng) (*gg)[cc] += sum_gx;
            if (nb) (*gb)[cc] += sum_g;
            if (nx) {
                for (int64_t nn = 0; nn < n; ++nn) {
                    const int64_t base = (nn * c + cc) * rest;
                    for (int64_t i = 0; i < rest; ++i) {
                        const double xh = (tx[base + i] - mu) * inv;
                        (*gx)[base + i] += gscale * inv / m *
                                           (m * g[base + i] - sum_g - xh * sum_gx);
                    }
                }
            }
        }
    });
    return r;
}

// Layer norm over the innermost axis; gamma/beta sized to that axis.
inline Value layer_norm(Tape& t, Value x, Value gamma, Value beta, double eps = 1e-6) {
    const Tensor& tx = t.val(x);
    const int64_t d = tx.shape.back();
    const int64_t m = tx.numel() / d;
    const Tensor& tg = t.val(gamma);
    const Tensor& tb = t.val(beta);
    if (tg.numel() != d || tb.numel() != d)
        throw std::invalid_argument("layer_norm: gamma/beta must match inner axis");

    auto mean = std::make_shared<std::vector<double>>(m);
    auto inv_std = std::make_shared<std::vector<double>>(m);
    Tensor out(tx.shape);
    for (int64_t mm = 0; mm < m; ++mm) {
        const double* src = tx.ptr() + mm * d;
        double s = 0.0, s2 = 0.0;
        for (int64_t i = 0; i < d; ++i) {
            s += src[i];
            s2 += src[i] * src[i];
        }
        const double mu = s / d;
        double var = s2 / d - mu * mu;
        if (var < 0.0) var = 0.0;
        const double inv = 1.0 / std::sqrt(var + eps);
        (*mean)[mm] = mu;
        (*inv_std)[mm] = inv;
        double* dst = out.ptr() + mm * d;
        for (int64_t i = 0; i < d; ++i) dst[i] = tg[i] * (src[i] - mu) * inv + tb[i];
    }
    Value r = t.make(std::move(out), {x, gamma, beta});
    t.set_back(r, [&t, x, gamma, beta, r, m, d, mean, inv_std] {
        const Tensor& g = t.grad(r);
        const Tensor& tx = t.val(x);
        const Tensor& tg = t.val(gamma);
        const bool nx = t.needs_grad(x), ng = t.needs_grad(gamma), nb = t.needs_grad(beta);
        Tensor* gx = nx ? &t.grad_buf(x) : nullptr;
        Tensor* gg = ng ? &t.grad_buf(gamma) : nullptr;
        Tensor* gb = nb ? &t.grad_buf(beta) : nullptr;
        for (int64_t mm = 0; mm < m; ++mm) {
            const double* src = tx.ptr() + mm * d;
            const double* grow = g.ptr() + mm * d;
            const double mu = (*mean)[mm], inv = (*inv_std)[mm];
            double sum_g = 0.0, sum_gx = 0.0;
            for (int64_t i = 0; i < d; ++i) {
                const double gh = grow[i] * tg[i];
                const double xh = (src[i] - mu) * inv;
                sum_g += gh;
                sum_gx += gh * xh;
                if (ng) (*gg)[i] += grow[i] * xh;
                if (nb) (*gb)[i] += grow[i];
            }
            if (nx) {
                double* gxrow = gx->ptr() + mm * d;
                for (int64_t i = 0; i < d; ++i) {
                    const double gh = grow[i] * tg[i];
                    const double xh = (src[i] - mu) * inv;
                    gxrow[i] += inv / d * (d * gh - sum_g - xh * sum_gx);
                }
            }
        }
    });
    return r;
}

// ---- pooling and length adjustment ----------------------------------------

// Non-overlapping max pool over the innermost axis (kernel == stride).
inline Value maxpool_last(Tape& t, Value x, int64_t k) {
    const Tensor& tx = t.val(x);
    const int64_t L = tx.shape.back();
    const int64_t lo = L / k;
    if (lo < 1) throw std::invalid_argument("maxpool_last: input shorter than kernel");
    const int64_t rows = tx.numel() / L;
    std::vector<int64_t> shape = tx.shape;
    shape.back() = lo;
    Tensor out(shape);
    auto arg = std::make_shared<std::vector<int64_t>>(rows * lo);
    for (int64_t rw = 0; rw < rows; ++rw) {
        const double* src = tx.ptr() + rw * L;
        double* dst = out.ptr() + rw * lo;
        for (int64_t o = 0; o < lo; ++o) {
            int64_t best = o * k;
            double bv = src[best];
            for (int64_t i = 1; i < k; ++i)
                if (src[o * k + i] > bv) {
                    bv = src[o * k + i];
                    best = o * k + i;
                }
            dst[o] = bv;
            (*arg)[rw * lo + o] = best;
        }
    }
    Value r = t.make(std::move(out), {x});
    t.set_back(r, [&t, x, r, rows, lo, L, arg] {
        if (!t.needs_grad(x)) return;
        const Tensor& g = t.grad(r);
        Tensor& gx = t.grad_buf(x);
        for (int64_t rw = 0; rw < rows; ++rw)
            for (int64_t o = 0; o < lo; ++o)
                gx[rw * L + (*arg)[rw * lo + o]] += g[rw * lo + o];
    });
    return r;
}

// Crop or zero-pad the innermost axis to `target` (keeps the head).
inline Value crop_pad_last(Tape& t, Value x, int64_t target) {
    const Tensor& tx = t.val(x);
    const int64_t L = tx.shape.back();
    if (L == target) return x;
    const int64_t rows = tx.numel() / L;
    std::vector<int64_t> shape = tx.shape;
    shape.back() = target;
    Tensor out(shape);
    const int64_t keep = std::min(L, target);
    for (int64_t rw = 0; rw < rows; ++rw)
        std::copy(tx.ptr() + rw * L, tx.ptr() + rw * L + keep, out.ptr() + rw * target);
    Value r = t.make(std::move(out), {x});
    t.set_back(r, [&t, x, r, rows, L, target, keep] {
        if (!t.needs_grad(x)) return;
        const Tensor& g = t.grad(r);
        Tensor& gx = t.grad_buf(x);
        for (int64_t rw = 0; rw < rows; ++rw)
            for (int64_t i = 0; i < keep; ++i) gx[rw * L + i] += g[rw * target + i];
    });
    return r;
}

// Crop or zero-pad the trailing two axes of {N, C, H, W}.
inline Value crop_pad_hw(Tape& t, Value x, int64_t th, int64_t tw_) {
    const Tensor& tx = t.val(x);
    if (tx.rank() != 4) throw std::invalid_argument("crop_pad_hw: need rank 4");
    const int64_t n = tx.dim(0), c = tx.dim(1), H = tx.dim(2), W = tx.dim(3);
    if (H == th && W == tw_) return x;
    Tensor out({n, c, th, tw_});
    const int64_t kh = std::min(H, th), kw = std::min(W, tw_);
    for (int64_t p = 0; p < n * c; ++p)
        for (int64_t y = 0; y < kh; ++y)
            std::copy(tx.ptr() + (p * H + y) * W, tx.ptr() + (p * H + y) * W + kw,
                      out.ptr() + (p * th + y) * tw_);
    Value r = t.make(std::move(out), {x});
    t.set_back(r, [&t, x, r, n, c, H, W, th, tw_, kh, kw] {
        if (!t.needs_grad(x)) return;
        const Tensor& g = t.grad(r);
        Tensor& gx = t.grad_buf(x);
        for (int64_t p = 0; p < n * c; ++p)
            for (int64_t y = 0; y < kh; ++y)
                for (int64_t z = 0; z < kw; ++z)
                    gx[(p * H + y) * W + z] += g[(p * th + y) * tw_ + z];
    });
    return r;
}

// Reflect-pad the innermost axis up to `target` (mirror without repeating the
// edge sample). Needs target - L <= L - 1.
inline Value reflect_pad_last(Tape& t, Value x, int64_t target) {
    const Tensor& tx = t.val(x);
    const int64_t L = tx.shape.back();
    if (target == L) return x;
    if (target < L || target - L > L - 1)
        throw std::invalid_argument("reflect_pad_last: target out of range");
    const int64_t rows = tx.numel() / L;
    std::vector<int64_t> shape = tx.shape;
    shape.back() = target;
    Tensor out(shape);
    for (int64_t rw = 0; rw < rows; ++rw) {
        const double* src = tx.ptr() + rw * L;
        double* dst = out.ptr() + rw * target;
        std::copy(src, src + L, dst);
        for (int64_t j = 0; j < target - L; ++j) dst[L + j] = src[L - 2 - j];
    }
    Value r = t.make(std::move(out), {x});
    t.set_back(r, [&t, x, r, rows, L, target] {
        if (!t.needs_grad(x)) return;
        const Tensor& g = t.grad(r);
        Tensor& gx = t.grad_buf(x);
        for (int64_t rw = 0; rw < rows; ++rw) {
            const double* gs = g.ptr() + rw * target;
            double* gd = gx.ptr() + rw * L;
            for (int64_t i = 0; i < L; ++i) gd[i] += gs[i];
            for (int64_t j = 0; j < target - L; ++j) gd[L - 2 - j] += gs[L + j];
        }
    });
    return r;
}

// ---- selective state-space scan --------------------------------------------

// Diagonal input-dependent scan:
//   h[t] = exp(delta[t] (.) A) * h[t-1] + (delta[t] * u[t]) (.) B[t]
//   y[t] = <h[t], C[t]> + D (.) u[t]
// Shapes: u/delta {N, L, D}, A {D, S}, B/C {N, L, S}, D {D} -> y {N, L, D}.
// The full hidden trajectory is kept for the reverse-time backward pass.
inline Value selective_scan(Tape& t, Value u, Value delta, Value A, Value B, Value C,
                            Value Dskip) {
    const Tensor& tu = t.val(u);
    const Tensor& td = t.val(delta);
    const Tensor& tA = t.val(A);
    const Tensor& tB = t.val(B);
    const Tensor& tC = t.val(C);
    const Tensor& tD = t.val(Dskip);
    if (tu.rank() != 3 || !tu.same_shape(td)) throw std::invalid_argument("scan: u/delta");
    const int64_t n = tu.dim(0), L = tu.dim(1), d = tu.dim(2);
    if (tA.rank() != 2 || tA.dim(0) != d) throw std::invalid_argument("scan: A");
    const int64_t s = tA.dim(1);
    if (tB.rank() != 3 || tB.dim(0) != n || tB.dim(1) != L || tB.dim(2) != s ||
        !tB.same_shape(tC))
        throw std::invalid_argument("scan: B/C");
    if (tD.numel() != d) throw std::invalid_argument("scan: D");

    auto htraj = std::make_shared<std::vector<double>>(
        static_cast<size_t>(n) * L * d * s, 0.0);
    Tensor out({n, L, d});
    std::vector<double> h(static_cast<size_t>(s));
    for (int64_t nn = 0; nn < n; ++nn)
        for (int64_t dd = 0; dd < d; ++dd) {
            std::fill(h.begin(), h.end(), 0.0);
            const double* arow = tA.ptr() + dd * s;
            const double dskip = tD[dd];
            for (int64_t tt = 0; tt < L; ++tt) {
                const int64_t idx = (nn * L + tt) * d + dd;
                const double dt = td[idx], uv = tu[idx];
                const double* brow = tB.ptr() + (nn * L + tt) * s;
                const double* crow = tC.ptr() + (nn * L + tt) * s;
                double y = dskip * uv;
                double* hsave = htraj->data() + ((nn * L + tt) * d + dd) * s;
                for (int64_t ss = 0; ss < s; ++ss) {
                    const double da = std::exp(dt * arow[ss]);
                    h[ss] = da * h[ss] + dt * uv * brow[ss];
                    hsave[ss] = h[ss];
                    y += h[ss] * crow[ss];
                }
                out[idx] = y;
            }
        }
    Value r = t.make(std::move(out), {u, delta, A, B, C, Dskip});
    t.set_back(r, [&t, u, delta, A, B, C, Dskip, r, n, L, d, s, htraj] {
        const Tensor& g = t.grad(r);
        const Tensor& tu = t.val(u);
        const Tensor& td = t.val(delta);
        const Tensor& tA = t.val(A);
        const Tensor& tB = t.val(B);
        const Tensor& tC = t.val(C);
        const Tensor& tD = t.val(Dskip);
        Tensor& gu = t.grad_buf(u);
        Tensor& gd = t.grad_buf(delta);
        Tensor& gA = t.grad_buf(A);
        Tensor& gB = t.grad_buf(B);
        Tensor& gC = t.grad_buf(C);
        Tensor& gD = t.grad_buf(Dskip);
        std::vector<double> dh(static_cast<size_t>(s));
        for (int64_t nn = 0; nn < n; ++nn)
            for (int64_t dd = 0; dd < d; ++dd) {
                std::fill(dh.begin(), dh.end(), 0.0);
                const double* arow = tA.ptr() + dd * s;
                double* garow = gA.ptr() + dd * s;
                const double dskip = tD[dd];
                for (int64_t tt = L - 1; tt >= 0; --tt) {
                    const int64_t idx = (nn * L + tt) * d + dd;
                    const double gy = g[idx];
                    const double dt = td[idx], uv = tu[idx];
                    const double* brow = tB.ptr() + (nn * L + tt) * s;
                    const double* crow = tC.ptr() + (nn * L + tt) * s;
                    double* gbrow = gB.ptr() + (nn * L + tt) * s;
                    double* gcrow = gC.ptr() + (nn * L + tt) * s;
                    const double* hcur = htraj->data() + ((nn * L + tt) * d + dd) * s;
                    const double* hprev =
                        tt > 0 ? htraj->data() + ((nn * L + tt - 1) * d + dd) * s : nullptr;
                    gD[dd] += gy * uv;
                    double gu_acc = gy * dskip;
                    double gdt_acc = 0.0;
                    for (int64_t ss = 0; ss < s; ++ss) {
                        gcrow[ss] += gy * hcur[ss];
                        double dhv = dh[ss] + gy * crow[ss];
                        const double da = std::exp(dt * arow[ss]);
                        const double hp = hprev ? hprev[ss] : 0.0;
                        gdt_acc += dhv * (da * hp * arow[ss] + uv * brow[ss]);
                        garow[ss] += dhv * da * hp * dt;
                        gbrow[ss] += dhv * dt * uv;
                        gu_acc += dhv * dt * brow[ss];
                        dh[ss] = dhv * da;
                    }
                    gu[idx] += gu_acc;
                    gd[idx] += gdt_acc;
                }
            }
    });
    return r;
}

}  // namespace subaru
