#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "subaru/audio.hpp"

namespace subaru {

// ---------------------------------------------------------------------------
// Windowed-sinc rational resampler with a Kaiser window.
//
// Upsample by P (zero stuffing), lowpass at the tighter of the two Nyquist
// limits, downsample by Q. The filter is linear-phase and applied centered,
// so the output is delay-compensated with respect to the input.
// ---------------------------------------------------------------------------

namespace resample_detail {

/* sinc(x) = sin(pi x)/(pi x), sinc(0) = 1 */
inline double sinc(double x) {
    if (x == 0.0) return 1.0;
    const double px = M_PI * x;
    return std::sin(px) / px;
}

/* Zeroth-order modified Bessel function, power series. Converges fast for
   the argument range a Kaiser window ever feeds it. */
inline double bessel_i0(double x) {
    double sum = 1.0, term = 1.0;
    const double hx = x / 2.0;
    for (int k = 1; k < 64; ++k) {
        term *= (hx / k) * (hx / k);
        sum += term;
        if (term < 1e-18 * sum) break;
    }
    return sum;
}

/* Kaiser beta for a target stopband attenuation r (dB):
     beta = 0.1102 (r - 8.7)                    r > 50
            0.5842 (r - 21)^0.4 + 0.07886 (r-21) 21 <= r <= 50
            0                                    r < 21       */
inline double kaiser_beta(double atten_db) {
    if (atten_db > 50.0) return 0.1102 * (atten_db - 8.7);
    if (atten_db >= 21.0)
        return 0.5842 * std::pow(atten_db - 21.0, 0.4) + 0.07886 * (atten_db - 21.0);
    return 0.0;
}

/* Kaiser-window FIR order for attenuation r (dB) and normalized transition
   width df (cycles/sample): M = (r - 7.95) / (2.285 * 2 pi * df). */
inline int kaiser_order(double atten_db, double transition) {
    double m = (atten_db - 7.95) / (2.285 * 2.0 * M_PI * transition);
    return std::max(8, static_cast<int>(std::ceil(m)));
}

inline double kaiser(double beta, double frac) {  // frac in [-1, 1]
    const double t = 1.0 - frac * frac;
    if (t < 0.0) return 0.0;
    return bessel_i0(beta * std::sqrt(t)) / bessel_i0(beta);
}

// Lowpass prototype for the P/Q stage, DC gain P. cutoff/transition are in
// cycles/sample at the upsampled rate (input_rate * P).
struct Filter {
    std::vector<double> taps;  // symmetric, length 2*half + 1, center at half
    int half = 0;
};

inline Filter design(int p, int q, double atten_db) {
    // Stop the band exactly at the tighter Nyquist; put the cutoff 8% inside
    // so the transition band never leaks aliases above the new Nyquist.
    const double nyq = 0.5 / static_cast<double>(std::max(p, q));
    const double cutoff = 0.92 * nyq;
    const double transition = nyq - cutoff;
    const double beta = kaiser_beta(atten_db);
    int half = kaiser_order(atten_db, transition) / 2;
    Filter f;
    f.half = half;
    f.taps.resize(static_cast<size_t>(2 * half + 1));
    for (int j = -half; j <= half; ++j)
        f.taps[static_cast<size_t>(j + half)] =
            static_cast<double>(p) * 2.0 * cutoff * sinc(2.0 * cutoff * j) *
            kaiser(beta, static_cast<double>(j) / half);
    return f;
}

}  // namespace resample_detail

// Designed anti-aliasing taps for a rate pair; exposed so the stopband of the
// actual filter in use can be measured directly.
inline std::vector<double> resample_filter_taps(int source_rate, int target_rate,
                                                double atten_db = 80.0) {
    int g = std::gcd(source_rate, target_rate);
    return resample_detail::design(target_rate / g, source_rate / g, atten_db).taps;
}

inline AudioClip resample(const AudioClip& clip, int target_rate, double atten_db = 80.0) {
    if (target_rate <= 0) throw std::invalid_argument("resample: target_rate must be positive");
    if (clip.sample_rate <= 0) throw std::invalid_argument("resample: clip has no sample rate");

    AudioClip out;
    out.sample_rate = target_rate;
    out.bit_depth = clip.bit_depth;
    out.label = clip.label;

    const int64_t in_len = clip.length();
    const int64_t out_len = static_cast<int64_t>(
        std::llround(static_cast<double>(in_len) * target_rate / clip.sample_rate));
    if (target_rate == clip.sample_rate) {
        out.samples = clip.samples;
        return out;
    }

    int g = std::gcd(clip.sample_rate, target_rate);
    const int p = target_rate / g;        // upsampling factor
    const int q = clip.sample_rate / g;   // downsampling factor
    const auto filt = resample_detail::design(p, q, atten_db);

    out.samples.assign(static_cast<size_t>(out_len), 0.0);
    const double* x = clip.samples.data();
    // Output m sits at index m*q on the zero-stuffed grid; only taps landing
    // on multiples of p contribute: u = m*q - j must satisfy u ≡ 0 (mod p).
    for (int64_t m = 0; m < out_len; ++m) {
        const int64_t center = m * q;
        // smallest j >= -half with (center - j) % p == 0
        int64_t j = -filt.half;
        int64_t rem = (center - j) % p;
        if (rem != 0) j += (rem + p) % p;
        double acc = 0.0;
        for (; j <= filt.half; j += p) {
            const int64_t i = (center - j) / p;
            if (i >= 0 && i < in_len) acc += filt.taps[static_cast<size_t>(j + filt.half)] * x[i];
        }
        out.samples[static_cast<size_t>(m)] = acc;
    }
    out.clamp_unit();
    return out;
}

// Cheap linear-interpolation resampler (used for aligning the BCM stream,
// where phase accuracy matters more than stopband rejection).
inline AudioClip resample_linear(const AudioClip& clip, int target_rate) {
    if (target_rate <= 0) throw std::invalid_argument("resample_linear: bad target rate");
    AudioClip out;
    out.sample_rate = target_rate;
    out.bit_depth = clip.bit_depth;
    out.label = clip.label;
    const int64_t in_len = clip.length();
    const int64_t out_len = static_cast<int64_t>(
        std::llround(static_cast<double>(in_len) * target_rate / clip.sample_rate));
    out.samples.resize(static_cast<size_t>(out_len));
    const double step = static_cast<double>(clip.sample_rate) / target_rate;
    for (int64_t m = 0; m < out_len; ++m) {
        const double pos = m * step;
        const int64_t i0 = static_cast<int64_t>(pos);
        const double frac = pos - i0;
        const double a = i0 < in_len ? clip.samples[static_cast<size_t>(i0)] : 0.0;
        const double b = i0 + 1 < in_len ? clip.samples[static_cast<size_t>(i0 + 1)] : 0.0;
        out.samples[static_cast<size_t>(m)] = a + (b - a) * frac;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Mid-tread uniform quantizer: 2^bits levels across [-1, +1], step 2/2^bits,
// round half away from zero, clip to [-1, 1 - 1 LSB]. No dither.
// ---------------------------------------------------------------------------
inline AudioClip quantize(const AudioClip& clip, int bits) {
    if (bits != 8 && bits != 10 && bits != 12 && bits != 16)
        throw std::invalid_argument("quantize: bits must be one of 8/10/12/16");
    AudioClip out = clip;
    out.bit_depth = bits;
    const double step = 2.0 / static_cast<double>(int64_t(1) << bits);
    const double lo = -static_cast<double>(int64_t(1) << (bits - 1));
    const double hi = static_cast<double>((int64_t(1) << (bits - 1)) - 1);
    for (double& s : out.samples) {
        double level = std::round(s / step);  // round() = half away from zero
        level = std::clamp(level, lo, hi);
        s = level * step;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Butterworth highpass as a cascade of biquads (bilinear transform).
// Order 8 gives ~48 dB at half the cutoff and a flat (monotone) passband.
// ---------------------------------------------------------------------------
inline AudioClip highpass(const AudioClip& clip, double cutoff_hz) {
    if (!(cutoff_hz > 0.0) || cutoff_hz >= clip.sample_rate / 2.0)
        throw std::invalid_argument("highpass: cutoff must satisfy 0 < cutoff < rate/2");
    constexpr int kOrder = 8;
    const double k = std::tan(M_PI * cutoff_hz / clip.sample_rate);

    AudioClip out = clip;
    for (int pair = 0; pair < kOrder / 2; ++pair) {
        /* Analog prototype per pair: H(s) = s^2 / (s^2 + s/Q + 1),
           Q = 1 / (2 sin(theta)), theta = pi (2k+1) / (2 n).
           Bilinear with prewarp K = tan(pi fc / fs):
             b = [1, -2, 1]
             a = [1 + K/Q + K^2, 2K^2 - 2, 1 - K/Q + K^2] / a0 */
        const double theta = M_PI * (2.0 * pair + 1.0) / (2.0 * kOrder);
        const double q_inv = 2.0 * std::sin(theta);
        const double a0 = 1.0 + q_inv * k + k * k;
        const double b0 = 1.0 / a0, b1 = -2.0 / a0, b2 = 1.0 / a0;
        const double a1 = (2.0 * k * k - 2.0) / a0;
        const double a2 = (1.0 - q_inv * k + k * k) / a0;
        double z1 = 0.0, z2 = 0.0;  // transposed direct form II
        for (double& s : out.samples) {
            const double x = s;
            const double y = b0 * x + z1;
            z1 = b1 * x - a1 * y + z2;
            z2 = b2 * x - a2 * y;
            s = y;
        }
    }
    out.clamp_unit();
    return out;
}

// Butterworth lowpass (order 4, biquad cascade) — the band-limiting
// counterpart of the capture highpass, used e.g. to mimic the restricted
// bandwidth of a bone-conduction pickup.
inline AudioClip lowpass(const AudioClip& clip, double cutoff_hz, int order = 4) {
    if (!(cutoff_hz > 0.0) || cutoff_hz >= clip.sample_rate / 2.0)
        throw std::invalid_argument("lowpass: cutoff must satisfy 0 < cutoff < rate/2");
    if (order < 2 || order % 2 != 0) throw std::invalid_argument("lowpass: order must be even");
    const double k = std::tan(M_PI * cutoff_hz / clip.sample_rate);

    AudioClip out = clip;
    for (int pair = 0; pair < order / 2; ++pair) {
        // analog prototype per pair: H(s) = 1 / (s^2 + s/Q + 1); bilinear with
        // prewarp K gives b = K^2 [1, 2, 1] and the same denominator as the
        // highpass case
        const double theta = M_PI * (2.0 * pair + 1.0) / (2.0 * order);
        const double q_inv = 2.0 * std::sin(theta);
        const double a0 = 1.0 + q_inv * k + k * k;
        const double b0 = k * k / a0, b1 = 2.0 * k * k / a0, b2 = k * k / a0;
        const double a1 = (2.0 * k * k - 2.0) / a0;
        const double a2 = (1.0 - q_inv * k + k * k) / a0;
        double z1 = 0.0, z2 = 0.0;  // transposed direct form II
        for (double& s : out.samples) {
            const double x = s;
            const double y = b0 * x + z1;
            z1 = b1 * x - a1 * y + z2;
            z2 = b2 * x - a2 * y;
            s = y;
        }
    }
    out.clamp_unit();
    return out;
}

// ---------------------------------------------------------------------------
// Silence trimming + fixed-length slicing. A 20 ms window is "active" when
// its RMS exceeds -40 dBFS; everything before the first and after the last
// active window is dropped, then the remainder is cut into exact slices.
// ---------------------------------------------------------------------------
// Active region [first, last) of a clip: everything before the first and
// after the last 20 ms window whose RMS clears the silence threshold.
// Returns {-1, -1} for entirely silent input.
inline std::pair<int64_t, int64_t> trim_bounds(const AudioClip& clip,
                                               double silence_dbfs = -40.0,
                                               double window_seconds = 0.020) {
    const int64_t win = std::max<int64_t>(1, static_cast<int64_t>(
        std::llround(window_seconds * clip.sample_rate)));
    const double threshold = std::pow(10.0, silence_dbfs / 20.0);
    const int64_t n = clip.length();
    int64_t first = -1, last = -1;
    for (int64_t start = 0; start < n; start += win) {
        const int64_t end = std::min(n, start + win);
        if (rms(clip.samples, static_cast<size_t>(start), static_cast<size_t>(end)) > threshold) {
            if (first < 0) first = start;
            last = end;
        }
    }
    return {first, last};
}

inline std::vector<AudioClip> trim_and_slice(const AudioClip& clip, double slice_seconds,
                                             double silence_dbfs = -40.0,
                                             double window_seconds = 0.020) {
    if (!(slice_seconds > 0.0)) throw std::invalid_argument("trim_and_slice: slice_seconds <= 0");
    const auto [first, last] = trim_bounds(clip, silence_dbfs, window_seconds);
    std::vector<AudioClip> slices;
    if (first < 0) return slices;  // entirely silent

    const int64_t slice_len = static_cast<int64_t>(std::llround(slice_seconds * clip.sample_rate));
    if (slice_len <= 0) throw std::invalid_argument("trim_and_slice: slice shorter than one sample");
    for (int64_t s = first; s + slice_len <= last; s += slice_len) {
        AudioClip piece;
        piece.sample_rate = clip.sample_rate;
        piece.bit_depth = clip.bit_depth;
        piece.label = clip.label + "#" + std::to_string(slices.size());
        piece.samples.assign(clip.samples.begin() + s, clip.samples.begin() + s + slice_len);
        slices.push_back(std::move(piece));
    }
    return slices;
}

// ---------------------------------------------------------------------------
// Additive noise mixing at an exact SNR. The noise is looped or cropped to
// the clean length, then scaled so 10 log10(P_clean / P_noise) = snr_db.
// ---------------------------------------------------------------------------
inline AudioClip mix_noise(const AudioClip& clean, const AudioClip& noise, double snr_db) {
    if (clean.sample_rate != noise.sample_rate)
        throw std::invalid_argument("mix_noise: sample rates differ");
    if (clean.samples.empty() || noise.samples.empty())
        throw std::invalid_argument("mix_noise: empty input");

    const int64_t n = clean.length();
    std::vector<double> shaped(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i)
        shaped[static_cast<size_t>(i)] = noise.samples[static_cast<size_t>(i % noise.length())];

    const double p_clean = mean_power(clean.samples);
    const double p_noise = mean_power(shaped);
    if (p_clean <= 0.0) throw std::invalid_argument("mix_noise: silent clean signal, SNR undefined");
    if (p_noise <= 0.0) throw std::invalid_argument("mix_noise: silent noise signal, SNR undefined");

    const double gain = std::sqrt(p_clean / (p_noise * std::pow(10.0, snr_db / 10.0)));
    AudioClip out = clean;
    for (int64_t i = 0; i < n; ++i)
        out.samples[static_cast<size_t>(i)] += gain * shaped[static_cast<size_t>(i)];
    out.clamp_unit();
    return out;
}

// ---------------------------------------------------------------------------
// Degradation pipeline: highpass -> mix_noise -> resample -> quantize.
// ---------------------------------------------------------------------------
struct DegradationSpec {
    int target_rate = 4000;
    int target_bits = 8;
    std::optional<double> snr_db;   // nullopt = no added noise
    double hpf_cutoff = 15.0;       // 0 disables the highpass stage
    double snr_min = -7.0;          // allowed range when snr_db is set
    double snr_max = 5.0;

    void validate(const AudioClip& source) const {
        if (target_rate <= 0 || target_rate > source.sample_rate)
            throw std::invalid_argument("DegradationSpec: target_rate must be in (0, source rate]");
        if (target_bits > source.bit_depth)
            throw std::invalid_argument("DegradationSpec: target_bits exceeds source bit depth");
        if (snr_db && (*snr_db < snr_min || *snr_db > snr_max))
            throw std::invalid_argument("DegradationSpec: snr_db outside configured range");
    }
};

// White noise source for degradation when no recorded noise is supplied.
inline AudioClip white_noise(int64_t length, int sample_rate, uint64_t seed, double amp = 0.35) {
    AudioClip n;
    n.sample_rate = sample_rate;
    n.label = "white-noise";
    n.samples.resize(static_cast<size_t>(length));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-amp, amp);
    for (double& s : n.samples) s = dist(rng);
    return n;
}

inline AudioClip degrade(const AudioClip& clip, const DegradationSpec& spec,
                         const AudioClip* noise = nullptr) {
    spec.validate(clip);
    AudioClip work = clip;
    if (spec.hpf_cutoff > 0.0) work = highpass(work, spec.hpf_cutoff);
    if (spec.snr_db) {
        if (noise) {
            work = mix_noise(work, *noise, *spec.snr_db);
        } else {
            AudioClip wn = white_noise(work.length(), work.sample_rate, /*seed=*/0x5eed);
            work = mix_noise(work, wn, *spec.snr_db);
        }
    }
    if (spec.target_rate != work.sample_rate) work = resample(work, spec.target_rate);
    return quantize(work, spec.target_bits);
}

}  // namespace subaru
