#pragma once

#include <cmath>
#include <complex>
#include <memory>
#include <stdexcept>
#include <vector>

#include "subaru/autodiff.hpp"
#include "subaru/fft.hpp"
#include "subaru/spectral.hpp"

namespace subaru {

// Differentiable counterparts of the spectral transforms, operating on
// batched real/imaginary pairs {N, T, F, 2}. Framing, padding and synthesis
// normalization match the plain AudioClip versions bit for bit, so the
// (analysis -> synthesis) round trip composes with them interchangeably.

// {N, L} -> {N, T, F, 2}
inline Value stft_reim(Tape& tp, Value x, const StftConfig& cfg) {
    cfg.validate();
    const Tensor& tx = tp.val(x);
    if (tx.rank() != 2) throw std::invalid_argument("stft_reim: need {N, L}");
    const int64_t n = tx.dim(0), L = tx.dim(1);
    if (L + cfg.pad_left() + cfg.pad_right() < cfg.win_length)
        throw std::invalid_argument("stft_reim: signal shorter than one analysis window");
    const int64_t T = cfg.frames_for(L);
    const int64_t F = cfg.bins();
    const int64_t pl = cfg.pad_left();
    const auto window = std::make_shared<std::vector<double>>(hann_window(cfg.win_length));

    Tensor out({n, T, F, 2});
    {
        std::vector<double> frame(static_cast<size_t>(cfg.n_fft), 0.0);
        std::vector<std::complex<double>> bins;
        for (int64_t nn = 0; nn < n; ++nn) {
            const double* row = tx.ptr() + nn * L;
            for (int64_t tt = 0; tt < T; ++tt) {
                std::fill(frame.begin(), frame.end(), 0.0);
                const int64_t start = tt * cfg.hop - pl;
                for (int i = 0; i < cfg.win_length; ++i) {
                    const int64_t idx = start + i;
                    if (idx >= 0 && idx < L)
                        frame[static_cast<size_t>(i)] = row[idx] * (*window)[static_cast<size_t>(i)];
                }
                rfft(frame.data(), cfg.n_fft, bins);
                double* dst = out.ptr() + ((nn * T + tt) * F) * 2;
                for (int64_t f = 0; f < F; ++f) {
                    dst[f * 2] = bins[static_cast<size_t>(f)].real();
                    dst[f * 2 + 1] = bins[static_cast<size_t>(f)].imag();
                }
            }
        }
    }
    Value r = tp.make(std::move(out), {x});
    const StftConfig cfgc = cfg;
    tp.set_back(r, [&tp, x, r, n, L, T, F, pl, cfgc, window] {
        if (!tp.needs_grad(x)) return;
        const Tensor& g = tp.grad(r);
        Tensor& gx = tp.grad_buf(x);
        std::vector<std::complex<double>> gbins(static_cast<size_t>(F));
        std::vector<double> gframe;
        for (int64_t nn = 0; nn < n; ++nn) {
            double* grow = gx.ptr() + nn * L;
            for (int64_t tt = 0; tt < T; ++tt) {
                const double* src = g.ptr() + ((nn * T + tt) * F) * 2;
                for (int64_t f = 0; f < F; ++f)
                    gbins[static_cast<size_t>(f)] = {src[f * 2], src[f * 2 + 1]};
                rfft_adjoint(gbins, cfgc.n_fft, gframe);
                const int64_t start = tt * cfgc.hop - pl;
                for (int i = 0; i < cfgc.win_length; ++i) {
                    const int64_t idx = start + i;
                    if (idx >= 0 && idx < L)
                        grow[idx] += gframe[static_cast<size_t>(i)] * (*window)[static_cast<size_t>(i)];
                }
            }
        }
    });
    return r;
}

// {N, T, F, 2} -> {N, source_length}; weighted overlap-add with the same
// squared-window normalization as the plain istft.
inline Value istft_reim(Tape& tp, Value v, const StftConfig& cfg, int64_t source_length) {
    cfg.validate();
    const Tensor& tv = tp.val(v);
    if (tv.rank() != 4 || tv.dim(3) != 2 || tv.dim(2) != cfg.bins())
        throw std::invalid_argument("istft_reim: need {N, T, F, 2} matching config");
    const int64_t n = tv.dim(0), T = tv.dim(1), F = tv.dim(2);
    const int64_t pl = cfg.pad_left();
    const int64_t cover = T > 0 ? cfg.win_length + (T - 1) * cfg.hop : 0;
    if (source_length <= 0)
        source_length = std::max<int64_t>(0, cover - pl - cfg.pad_right());
    const auto window = std::make_shared<std::vector<double>>(hann_window(cfg.win_length));
    auto wsum = std::make_shared<std::vector<double>>(static_cast<size_t>(cover), 0.0);
    for (int64_t tt = 0; tt < T; ++tt)
        for (int i = 0; i < cfg.win_length; ++i)
            (*wsum)[static_cast<size_t>(tt * cfg.hop + i)] +=
                (*window)[static_cast<size_t>(i)] * (*window)[static_cast<size_t>(i)];

    Tensor out({n, source_length});
    {
        std::vector<std::complex<double>> full(static_cast<size_t>(cfg.n_fft));
        std::vector<double> acc(static_cast<size_t>(cover));
        for (int64_t nn = 0; nn < n; ++nn) {
            std::fill(acc.begin(), acc.end(), 0.0);
            for (int64_t tt = 0; tt < T; ++tt) {
                const double* src = tv.ptr() + ((nn * T + tt) * F) * 2;
                for (int64_t f = 0; f < F; ++f)
                    full[static_cast<size_t>(f)] = {src[f * 2], src[f * 2 + 1]};
                for (int64_t f = F; f < cfg.n_fft; ++f)
                    full[static_cast<size_t>(f)] =
                        std::conj(full[static_cast<size_t>(cfg.n_fft - f)]);
                fft_inplace(full, true);
                const int64_t start = tt * cfg.hop;
                for (int i = 0; i < cfg.win_length; ++i)
                    acc[static_cast<size_t>(start + i)] +=
                        full[static_cast<size_t>(i)].real() * (*window)[static_cast<size_t>(i)];
            }
            double* dst = out.ptr() + nn * source_length;
            for (int64_t i = 0; i < source_length; ++i) {
                const int64_t j = i + pl;
                dst[i] = (j < cover && (*wsum)[static_cast<size_t>(j)] > 1e-12)
                             ? acc[static_cast<size_t>(j)] / (*wsum)[static_cast<size_t>(j)]
                             : 0.0;
            }
        }
    }
    Value r = tp.make(std::move(out), {v});
    const StftConfig cfgc = cfg;
    const int64_t slen = source_length;
    tp.set_back(r, [&tp, v, r, n, T, F, pl, cover, slen, cfgc, window, wsum] {
        if (!tp.needs_grad(v)) return;
        const Tensor& g = tp.grad(r);
        Tensor& gv = tp.grad_buf(v);
        const int64_t nfft = cfgc.n_fft;
        std::vector<double> vframe(static_cast<size_t>(nfft));
        std::vector<std::complex<double>> vf;
        for (int64_t nn = 0; nn < n; ++nn) {
            const double* grow = g.ptr() + nn * slen;
            for (int64_t tt = 0; tt < T; ++tt) {
                std::fill(vframe.begin(), vframe.end(), 0.0);
                const int64_t start = tt * cfgc.hop;
                bool any = false;
                for (int i = 0; i < cfgc.win_length; ++i) {
                    const int64_t j = start + i;       // cover coordinates
                    const int64_t iout = j - pl;       // output coordinates
                    if (iout < 0 || iout >= slen) continue;
                    if ((*wsum)[static_cast<size_t>(j)] <= 1e-12) continue;
                    vframe[static_cast<size_t>(i)] = grow[iout] *
                                                     (*window)[static_cast<size_t>(i)] /
                                                     (*wsum)[static_cast<size_t>(j)];
                    any = any || vframe[static_cast<size_t>(i)] != 0.0;
                }
                if (!any) continue;
                rfft(vframe.data(), nfft, vf);
                double* dst = gv.ptr() + ((nn * T + tt) * F) * 2;
                for (int64_t k = 0; k < F; ++k) {
                    // the imaginary parts of the DC and Nyquist bins never
                    // reach the real synthesis output
                    const bool edge = (k == 0 || k == nfft / 2);
                    const double ck = edge ? 1.0 : 2.0;
                    dst[k * 2] += ck / nfft * vf[static_cast<size_t>(k)].real();
                    if (!edge) dst[k * 2 + 1] += 2.0 / nfft * vf[static_cast<size_t>(k)].imag();
                }
            }
        }
    });
    return r;
}

// {N, T, F, 2} -> {N, T, F} magnitude; gradient vanishes at exact zeros.
inline Value complex_abs(Tape& tp, Value v) {
    const Tensor& tv = tp.val(v);
    if (tv.rank() < 1 || tv.shape.back() != 2)
        throw std::invalid_argument("complex_abs: innermost axis must be 2");
    const int64_t m = tv.numel() / 2;
    std::vector<int64_t> shape(tv.shape.begin(), tv.shape.end() - 1);
    Tensor out(shape);
    for (int64_t i = 0; i < m; ++i) out[i] = std::hypot(tv[i * 2], tv[i * 2 + 1]);
    Value r = tp.make(std::move(out), {v});
    tp.set_back(r, [&tp, v, r, m] {
        if (!tp.needs_grad(v)) return;
        const Tensor& g = tp.grad(r);
        const Tensor& tv = tp.val(v);
        const Tensor& ta = tp.val(r);
        Tensor& gv = tp.grad_buf(v);
        for (int64_t i = 0; i < m; ++i) {
            const double a = ta[i];
            if (a <= 1e-12) continue;
            gv[i * 2] += g[i] * tv[i * 2] / a;
            gv[i * 2 + 1] += g[i] * tv[i * 2 + 1] / a;
        }
    });
    return r;
}

// {N, T, F, 2} -> {N, T, F} principal phase in (-pi, pi].
inline Value complex_arg(Tape& tp, Value v) {
    const Tensor& tv = tp.val(v);
    if (tv.rank() < 1 || tv.shape.back() != 2)
        throw std::invalid_argument("complex_arg: innermost axis must be 2");
    const int64_t m = tv.numel() / 2;
    std::vector<int64_t> shape(tv.shape.begin(), tv.shape.end() - 1);
    Tensor out(shape);
    for (int64_t i = 0; i < m; ++i) out[i] = principal_phase(tv[i * 2 + 1], tv[i * 2]);
    Value r = tp.make(std::move(out), {v});
    tp.set_back(r, [&tp, v, r, m] {
        if (!tp.needs_grad(v)) return;
        const Tensor& g = tp.grad(r);
        const Tensor& tv = tp.val(v);
        Tensor& gv = tp.grad_buf(v);
        for (int64_t i = 0; i < m; ++i) {
            const double re = tv[i * 2], im = tv[i * 2 + 1];
            const double r2 = re * re + im * im;
            if (r2 < 1e-24) continue;
            gv[i * 2] += g[i] * (-im / r2);
            gv[i * 2 + 1] += g[i] * (re / r2);
        }
    });
    return r;
}

// Amplitude/phase -> real/imag pairs: re = a cos p, im = a sin p.
inline Value polar_reim(Tape& tp, Value amp, Value phase) {
    const Tensor& ta = tp.val(amp);
    const Tensor& tph = tp.val(phase);
    if (!ta.same_shape(tph)) throw std::invalid_argument("polar_reim: shape mismatch");
    const int64_t m = ta.numel();
    std::vector<int64_t> shape = ta.shape;
    shape.push_back(2);
    Tensor out(shape);
    for (int64_t i = 0; i < m; ++i) {
        out[i * 2] = ta[i] * std::cos(tph[i]);
        out[i * 2 + 1] = ta[i] * std::sin(tph[i]);
    }
    Value r = tp.make(std::move(out), {amp, phase});
    tp.set_back(r, [&tp, amp, phase, r, m] {
        const Tensor& g = tp.grad(r);
        const Tensor& tv = tp.val(r);
        const Tensor& tph = tp.val(phase);
        const bool na = tp.needs_grad(amp), np = tp.needs_grad(phase);
        Tensor* ga = na ? &tp.grad_buf(amp) : nullptr;
        Tensor* gp = np ? &tp.grad_buf(phase) : nullptr;
        for (int64_t i = 0; i < m; ++i) {
            const double gre = g[i * 2], gim = g[i * 2 + 1];
            const double c = std::cos(tph[i]), s = std::sin(tph[i]);
            if (na) (*ga)[i] += gre * c + gim * s;
            if (np) (*gp)[i] += -gre * tv[i * 2 + 1] + gim * tv[i * 2];
        }
    });
    return r;
}

}  // namespace subaru
