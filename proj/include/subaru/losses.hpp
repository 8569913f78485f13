#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "subaru/autodiff.hpp"
#include "subaru/nn_ops.hpp"
#include "subaru/spectral.hpp"
#include "subaru/stft_ops.hpp"

namespace subaru {

// Training objective: four loss families over (enhanced, clean) pairs,
// evaluated in the time domain (multi-scale, multi-period), the phase domain
// (instantaneous phase and group delay, both wrap-insensitive), and the
// frequency domain (multi-resolution spectral convergence + log magnitude).
// All functions build tape graphs; the clean side is expected to be a
// constant (no-grad) leaf.

struct LossWeights {
    double multi_scale = 1.0;
    double multi_period = 1.0;
    double phase_ip = 1.0;
    double phase_gd = 1.0;
    double mr_stft_sc = 1.0;
    double mr_stft_mag = 1.0;
};

struct LossBreakdown {
    double multi_scale = 0.0;
    double multi_period = 0.0;
    double phase_ip = 0.0;
    double phase_gd = 0.0;
    double mr_stft_sc = 0.0;
    double mr_stft_mag = 0.0;
    double total = 0.0;

    bool finite() const {
        return std::isfinite(multi_scale) && std::isfinite(multi_period) &&
               std::isfinite(phase_ip) && std::isfinite(phase_gd) && std::isfinite(mr_stft_sc) &&
               std::isfinite(mr_stft_mag) && std::isfinite(total);
    }
};

namespace loss_detail {

inline void check_pair(Tape& t, Value enhanced, Value clean) {
    const Tensor& e = t.val(enhanced);
    const Tensor& c = t.val(clean);
    if (!e.same_shape(c)) throw std::invalid_argument("loss: pair shape mismatch");
    if (e.numel() == 0) throw std::invalid_argument("loss: zero-length pair");
}

}  // namespace loss_detail

// Mean absolute error after max-pooling both signals at ratios 1, 2, 4;
// each scale normalized by its own pooled length, scales averaged.
inline Value multi_scale_loss(Tape& t, Value enhanced, Value clean) {
    loss_detail::check_pair(t, enhanced, clean);
    Value acc{};
    for (int64_t r : {1, 2, 4}) {
        Value pe = r == 1 ? enhanced : maxpool_last(t, enhanced, r);
        Value pc = r == 1 ? clean : maxpool_last(t, clean, r);
        Value mae = t.mean_all(t.abs_(t.sub(pc, pe)));
        acc = acc.id < 0 ? mae : t.add(acc, mae);
    }
    return t.scale(acc, 1.0 / 3.0);
}

// Periodicity-sensitive term: reflect-pad to a multiple of p, fold into rows
// of p samples, and compare per-row sums; summed over p = 5 and p = 7.
// literal_sum replays the printed form of the published equation, which
// collapses to |total sum difference| and is independent of p; kept only for
// auditability.
inline Value multi_period_loss(Tape& t, Value enhanced, Value clean, bool literal_sum = false) {
    loss_detail::check_pair(t, enhanced, clean);
    const Tensor& e = t.val(enhanced);
    const int64_t L = e.shape.back();
    Value acc{};
    for (int64_t p : {5, 7}) {
        const int64_t target = (L + p - 1) / p * p;
        Value pe = reflect_pad_last(t, enhanced, target);
        Value pc = reflect_pad_last(t, clean, target);
        std::vector<int64_t> folded = e.shape;
        folded.back() = target / p;
        folded.push_back(p);
        Value re = t.sum_last(t.reshape(pe, folded));
        Value rc = t.sum_last(t.reshape(pc, folded));
        Value term;
        if (literal_sum) {
            term = t.abs_(t.sub(t.sum_all(rc), t.sum_all(re)));
        } else {
            term = t.mean_all(t.abs_(t.sub(rc, re)));
        }
        acc = acc.id < 0 ? term : t.add(acc, term);
    }
    return acc;
}

// Wrap-insensitive phase distances over equal T x F grids: mean anti-wrapped
// deviation of the instantaneous phase and of its frequency-axis difference
// (group delay up to sign, which the even anti-wrap distance ignores).
inline std::pair<Value, Value> phase_antiwrap_losses(Tape& t, Value phase_enh,
                                                    Value phase_clean) {
    const Tensor& pe = t.val(phase_enh);
    const Tensor& pc = t.val(phase_clean);
    if (!pe.same_shape(pc)) throw std::invalid_argument("phase loss: grid mismatch");
    Value ip = t.mean_all(t.anti_wrap_(t.sub(phase_clean, phase_enh)));
    Value gd = t.mean_all(
        t.anti_wrap_(t.sub(t.freq_diff(phase_clean), t.freq_diff(phase_enh))));
    return {ip, gd};
}

// The three analysis resolutions (n_fft, hop, win) of the multi-resolution
// spectral loss. Resolutions whose window does not fit the signal are skipped
// so short pairs remain usable; at least one must fit.
inline std::vector<StftConfig> mr_stft_resolutions() {
    std::vector<StftConfig> out;
    const int64_t grid[3][3] = {{256, 128, 256}, {512, 256, 512}, {1024, 512, 1024}};
    for (const auto& g : grid) {
        StftConfig c;
        c.n_fft = static_cast<int>(g[0]);
        c.hop = static_cast<int>(g[1]);
        c.win_length = static_cast<int>(g[2]);
        c.pad = PadMode::none;
        out.push_back(c);
    }
    return out;
}

// Spectral convergence (Frobenius ratio against the clean magnitude) and mean
// absolute log-magnitude error, each averaged over the resolutions used.
// The clean branch must carry no gradient: its Frobenius norm is folded in as
// a constant.
inline std::pair<Value, Value> mr_stft_loss(Tape& t, Value enhanced, Value clean) {
    loss_detail::check_pair(t, enhanced, clean);
    const int64_t L = t.val(enhanced).shape.back();
    Value sc_acc{}, mag_acc{};
    int used = 0;
    for (const StftConfig& cfg : mr_stft_resolutions()) {
        if (L < cfg.win_length) continue;
        Value ae = complex_abs(t, stft_reim(t, enhanced, cfg));
        Value ac = complex_abs(t, stft_reim(t, clean, cfg));
        const Tensor& acv = t.val(ac);
        double denom = 0.0;
        for (int64_t i = 0; i < acv.numel(); ++i) denom += acv[i] * acv[i];
        denom = std::sqrt(denom);
        if (denom <= 0.0)
            throw std::domain_error("mr_stft_loss: clean signal is all zero");
        Value diff = t.sub(ac, ae);
        Value sc = t.scale(t.sqrt_guard(t.sum_all(t.mul(diff, diff))), 1.0 / denom);
        Value mag = t.mean_all(t.abs_(t.sub(t.log_eps(ac, 1e-7), t.log_eps(ae, 1e-7))));
        sc_acc = sc_acc.id < 0 ? sc : t.add(sc_acc, sc);
        mag_acc = mag_acc.id < 0 ? mag : t.add(mag_acc, mag);
        ++used;
    }
    if (used == 0)
        throw std::invalid_argument("mr_stft_loss: signal shorter than every window");
    return {t.scale(sc_acc, 1.0 / used), t.scale(mag_acc, 1.0 / used)};
}

// The full objective. Component nodes are unweighted; the scalar `total`
// applies the weights (all 1.0 by default, making total the plain sum).
struct TotalLoss {
    Value multi_scale, multi_period, phase_ip, phase_gd, mr_stft_sc, mr_stft_mag;
    Value total;

    LossBreakdown values(const Tape& t) const {
        LossBreakdown b;
        b.multi_scale = t.val(multi_scale)[0];
        b.multi_period = t.val(multi_period)[0];
        b.phase_ip = t.val(phase_ip)[0];
        b.phase_gd = t.val(phase_gd)[0];
        b.mr_stft_sc = t.val(mr_stft_sc)[0];
        b.mr_stft_mag = t.val(mr_stft_mag)[0];
        b.total = t.val(total)[0];
        return b;
    }
};

inline TotalLoss total_loss(Tape& t, Value enhanced, Value clean, Value phase_enh,
                            Value phase_clean, const LossWeights& w = {},
                            bool literal_period = false) {
    TotalLoss out;
    out.multi_scale = multi_scale_loss(t, enhanced, clean);
    out.multi_period = multi_period_loss(t, enhanced, clean, literal_period);
    auto ph = phase_antiwrap_losses(t, phase_enh, phase_clean);
    out.phase_ip = ph.first;
    out.phase_gd = ph.second;
    auto mr = mr_stft_loss(t, enhanced, clean);
    out.mr_stft_sc = mr.first;
    out.mr_stft_mag = mr.second;
    Value total = t.scale(out.multi_scale, w.multi_scale);
    total = t.add(total, t.scale(out.multi_period, w.multi_period));
    total = t.add(total, t.scale(out.phase_ip, w.phase_ip));
    total = t.add(total, t.scale(out.phase_gd, w.phase_gd));
    total = t.add(total, t.scale(out.mr_stft_sc, w.mr_stft_sc));
    total = t.add(total, t.scale(out.mr_stft_mag, w.mr_stft_mag));
    out.total = total;
    return out;
}

}  // namespace subaru
