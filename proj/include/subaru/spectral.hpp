#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "subaru/audio.hpp"
#include "subaru/fft.hpp"
#include "subaru/tensor.hpp"

namespace subaru {

// Frame padding conventions.
//   none    — frames fully inside the signal, T = 1 + floor((L - win)/hop)
//   center  — pad n_fft/2 zeros both sides (frame t centered at t*hop),
//             T = 1 + floor(L/hop) when win == n_fft
//   aligned — pad (win - hop)/2 both sides so T = floor(L/hop) exactly when
//             hop divides L; keeps one frame per hop of signal, which is what
//             ties the low-rate analysis to the upsampler's fixed hop
enum class PadMode { none, center, aligned };

struct StftConfig {
    int n_fft = 1024;
    int hop = 128;
    int win_length = 1024;
    PadMode pad = PadMode::center;

    void validate() const {
        if (!is_pow2(n_fft)) throw std::invalid_argument("StftConfig: n_fft must be a power of two");
        if (!(hop > 0 && hop <= win_length && win_length <= n_fft))
            throw std::invalid_argument("StftConfig: need 0 < hop <= win_length <= n_fft");
    }
    int bins() const { return n_fft / 2 + 1; }
    int64_t pad_left() const {
        switch (pad) {
            case PadMode::center: return n_fft / 2;
            case PadMode::aligned: return (win_length - hop) / 2;
            default: return 0;
        }
    }
    int64_t pad_right() const {
        switch (pad) {
            case PadMode::center: return n_fft / 2;
            case PadMode::aligned: return (win_length - hop) - pad_left();
            default: return 0;
        }
    }
    int64_t frames_for(int64_t length) const {
        const int64_t padded = length + pad_left() + pad_right();
        if (padded < win_length) return 0;
        return 1 + (padded - win_length) / hop;
    }
};

// Periodic Hann window: w[n] = 0.5 (1 - cos(2 pi n / N)). The periodic form
// satisfies the constant-overlap-add condition whenever hop divides N.
inline std::vector<double> hann_window(int n) {
    std::vector<double> w(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
        w[static_cast<size_t>(i)] = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / n));
    return w;
}

// Amplitude/phase spectrogram. T frames by F = n_fft/2 + 1 bins; phase is
// the principal value in (-pi, pi].
struct Spectrogram {
    Tensor amplitude;  // {T, F}, >= 0
    Tensor phase;      // {T, F}, in (-pi, pi]
    StftConfig config;
    int source_rate = 0;
    int64_t source_length = 0;  // samples before padding; istft restores this

    int64_t frames() const { return amplitude.shape.empty() ? 0 : amplitude.dim(0); }
    int64_t bins() const { return amplitude.shape.size() < 2 ? 0 : amplitude.dim(1); }
};

inline double principal_phase(double im, double re) {
    double p = std::atan2(im, re);
    if (p <= -M_PI) p += 2.0 * M_PI;  // atan2 can return -pi; range is (-pi, pi]
    return p;
}

inline Spectrogram stft(const AudioClip& clip, const StftConfig& cfg) {
    cfg.validate();
    if (clip.length() + cfg.pad_left() + cfg.pad_right() < cfg.win_length)
        throw std::invalid_argument("stft: clip shorter than one analysis window");

    const int64_t t_frames = cfg.frames_for(clip.length());
    const int f_bins = cfg.bins();
    const auto window = hann_window(cfg.win_length);

    Spectrogram spec;
    spec.config = cfg;
    spec.source_rate = clip.sample_rate;
    spec.source_length = clip.length();
    spec.amplitude = Tensor({t_frames, f_bins});
    spec.phase = Tensor({t_frames, f_bins});

    const int64_t pl = cfg.pad_left();
    std::vector<double> frame(static_cast<size_t>(cfg.n_fft), 0.0);
    std::vector<std::complex<double>> bins;
    for (int64_t t = 0; t < t_frames; ++t) {
        std::fill(frame.begin(), frame.end(), 0.0);
        const int64_t start = t * cfg.hop - pl;  // position in the unpadded signal
        for (int i = 0; i < cfg.win_length; ++i) {
            const int64_t idx = start + i;
            if (idx >= 0 && idx < clip.length())
                frame[static_cast<size_t>(i)] =
                    clip.samples[static_cast<size_t>(idx)] * window[static_cast<size_t>(i)];
        }
        rfft(frame.data(), cfg.n_fft, bins);
        for (int f = 0; f < f_bins; ++f) {
            const auto z = bins[static_cast<size_t>(f)];
            spec.amplitude[t * f_bins + f] = std::abs(z);
            spec.phase[t * f_bins + f] = principal_phase(z.imag(), z.real());
        }
    }
    return spec;
}

// Weighted overlap-add synthesis: frames are inverse-transformed, windowed a
// second time, summed, and divided by the summed squared window.
inline AudioClip istft(const Spectrogram& spec) {
    const StftConfig& cfg = spec.config;
    cfg.validate();
    const int64_t t_frames = spec.frames();
    const int f_bins = cfg.bins();
    if (spec.bins() != f_bins || !spec.amplitude.same_shape(spec.phase))
        throw std::invalid_argument("istft: spectrogram dimensions inconsistent with config");

    const auto window = hann_window(cfg.win_length);
    const int64_t cover = t_frames > 0 ? cfg.win_length + (t_frames - 1) * cfg.hop : 0;
    std::vector<double> acc(static_cast<size_t>(cover), 0.0);
    std::vector<double> wsum(static_cast<size_t>(cover), 0.0);

    std::vector<std::complex<double>> full(static_cast<size_t>(cfg.n_fft));
    std::vector<double> time(static_cast<size_t>(cfg.n_fft));
    for (int64_t t = 0; t < t_frames; ++t) {
        for (int f = 0; f < f_bins; ++f) {
            const double a = spec.amplitude[t * f_bins + f];
            const double p = spec.phase[t * f_bins + f];
            full[static_cast<size_t>(f)] = std::polar(a, p);
        }
        for (int f = f_bins; f < cfg.n_fft; ++f)
            full[static_cast<size_t>(f)] = std::conj(full[static_cast<size_t>(cfg.n_fft - f)]);
        fft_inplace(full, true);
        for (int i = 0; i < cfg.n_fft; ++i) time[static_cast<size_t>(i)] = full[static_cast<size_t>(i)].real();

        const int64_t start = t * cfg.hop;
        for (int i = 0; i < cfg.win_length; ++i) {
            acc[static_cast<size_t>(start + i)] += time[static_cast<size_t>(i)] * window[static_cast<size_t>(i)];
            wsum[static_cast<size_t>(start + i)] += window[static_cast<size_t>(i)] * window[static_cast<size_t>(i)];
        }
    }

    AudioClip out;
    out.sample_rate = spec.source_rate;
    out.bit_depth = 16;
    const int64_t pl = cfg.pad_left();
    const int64_t length = spec.source_length > 0
                               ? spec.source_length
                               : std::max<int64_t>(0, cover - pl - cfg.pad_right());
    out.samples.assign(static_cast<size_t>(length), 0.0);
    for (int64_t i = 0; i < length; ++i) {
        const int64_t j = i + pl;
        if (j < cover && wsum[static_cast<size_t>(j)] > 1e-12)
            out.samples[static_cast<size_t>(i)] = acc[static_cast<size_t>(j)] / wsum[static_cast<size_t>(j)];
    }
    return out;
}

// Anti-wrapping function: distance to the nearest multiple of 2 pi.
//   f_AW(x) = |x - 2 pi round(x / 2 pi)|, range [0, pi], even, 2 pi periodic.
inline double anti_wrap(double x) {
    return std::fabs(x - 2.0 * M_PI * std::round(x / (2.0 * M_PI)));
}

// Phase-derived features: the phase itself plus its forward difference along
// the frequency axis (last column replicated). Wrap discontinuities in the
// difference are left in place — the anti-wrapping loss absorbs them.
struct PhaseFeatures {
    Tensor instantaneous_phase;  // {T, F}
    Tensor group_delay;          // {T, F}
};

inline PhaseFeatures group_delay(const Spectrogram& spec) {
    const int64_t t_frames = spec.frames();
    const int64_t f_bins = spec.bins();
    if (f_bins < 2) throw std::invalid_argument("group_delay: need at least two frequency bins");
    PhaseFeatures out;
    out.instantaneous_phase = spec.phase;
    out.group_delay = Tensor({t_frames, f_bins});
    for (int64_t t = 0; t < t_frames; ++t) {
        for (int64_t f = 0; f + 1 < f_bins; ++f)
            out.group_delay[t * f_bins + f] =
                spec.phase[t * f_bins + f + 1] - spec.phase[t * f_bins + f];
        out.group_delay[t * f_bins + f_bins - 1] = out.group_delay[t * f_bins + f_bins - 2];
    }
    return out;
}

}  // namespace subaru
