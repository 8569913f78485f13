#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "subaru/audio.hpp"
#include "subaru/degrade.hpp"

namespace subaru {

// Deterministic speech-like test signals: a pitch-drifting harmonic stack
// shaped by a few formant-style resonances, syllabic amplitude modulation,
// and short unvoiced (noise burst) segments. Not speech, but it exercises
// the same structure the pipeline cares about: strong low band, correlated
// harmonic high band, envelope modulation, and pauses.
struct SynthVoice {
    double f0_base = 140.0;     // Hz
    double f0_drift = 18.0;     // Hz, slow sweep depth
    double formant1 = 500.0;    // Hz
    double formant2 = 1700.0;   // Hz
    double formant3 = 4200.0;   // Hz, keeps genuine high-band energy
    double syllable_hz = 4.0;
    double peak = 0.5;
};

inline SynthVoice synth_voice_for(uint64_t speaker_seed) {
    std::mt19937_64 rng(speaker_seed * 0x9E3779B97F4A7C15ull + 1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SynthVoice v;
    v.f0_base = 95.0 + 130.0 * u(rng);
    v.f0_drift = 10.0 + 20.0 * u(rng);
    v.formant1 = 350.0 + 400.0 * u(rng);
    v.formant2 = 1200.0 + 900.0 * u(rng);
    v.formant3 = 3600.0 + 1800.0 * u(rng);
    v.syllable_hz = 2.5 + 3.0 * u(rng);
    return v;
}

// Formant-style spectral envelope evaluated at frequency f.
inline double synth_envelope(const SynthVoice& v, double f) {
    auto peak = [](double f, double c, double bw) {
        const double d = (f - c) / bw;
        return 1.0 / (1.0 + d * d);
    };
    return 0.08 + peak(f, v.formant1, 220.0) + 0.7 * peak(f, v.formant2, 350.0) +
           0.45 * peak(f, v.formant3, 700.0);
}

inline AudioClip synth_speech_like(double seconds, int sample_rate, uint64_t seed,
                                   uint64_t speaker_seed = 0) {
    const SynthVoice v = synth_voice_for(speaker_seed);
    std::mt19937_64 rng(seed ^ 0xA5A5A5A55A5A5A5Aull);
    std::uniform_real_distribution<double> u(0.0, 1.0);

    const int64_t n = static_cast<int64_t>(std::llround(seconds * sample_rate));
    AudioClip clip;
    clip.sample_rate = sample_rate;
    clip.label = "synth";
    clip.samples.assign(static_cast<size_t>(n), 0.0);

    const double drift_rate = 0.3 + 0.5 * u(rng);            // Hz of the F0 sweep
    const double drift_phase = 2.0 * M_PI * u(rng);
    const double syl_phase = 2.0 * M_PI * u(rng);
    const double nyq = sample_rate / 2.0;

    // Harmonic part: phase-continuous oscillators so the high harmonics stay
    // phase-locked to the fundamental (what a bandwidth extender can learn).
    const int max_harm = static_cast<int>(std::floor((nyq * 0.94) / std::max(60.0, v.f0_base - v.f0_drift)));
    std::vector<double> phase(static_cast<size_t>(std::max(1, max_harm)), 0.0);
    for (size_t h = 0; h < phase.size(); ++h) phase[h] = 2.0 * M_PI * u(rng);

    // Unvoiced segments: a couple of noise bursts per second.
    const int bursts = std::max(1, static_cast<int>(seconds * 2.0));
    std::vector<std::pair<int64_t, int64_t>> burst_span;
    for (int b = 0; b < bursts; ++b) {
        const int64_t start = static_cast<int64_t>(u(rng) * (n > 800 ? n - 800 : 1));
        const int64_t len = 300 + static_cast<int64_t>(u(rng) * 500);
        burst_span.emplace_back(start, std::min(n, start + len));
    }
    std::normal_distribution<double> gauss(0.0, 1.0);

    double hp_state = 0.0;  // one-pole highpass shaping for the noise bursts
    for (int64_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sample_rate;
        const double f0 = v.f0_base + v.f0_drift * std::sin(2.0 * M_PI * drift_rate * t + drift_phase);
        const double syl = 0.5 * (1.0 - std::cos(2.0 * M_PI * v.syllable_hz * t + syl_phase));
        double s = 0.0;
        for (size_t h = 0; h < phase.size(); ++h) {
            const double fh = f0 * static_cast<double>(h + 1);
            if (fh >= nyq * 0.96) break;
            phase[h] += 2.0 * M_PI * fh / sample_rate;
            s += (synth_envelope(v, fh) / (1.0 + 0.35 * static_cast<double>(h))) * std::sin(phase[h]);
        }
        s *= 0.15 + 0.85 * syl * syl;
        for (const auto& span : burst_span) {
            if (i >= span.first && i < span.second) {
                const double w = gauss(rng);
                hp_state = 0.9 * hp_state + w - 0.7 * w;  // crude spectral tilt
                s += 0.35 * (w - hp_state * 0.5);
                break;
            }
        }
        clip.samples[static_cast<size_t>(i)] = s;
    }

    double peak = 1e-9;
    for (double s : clip.samples) peak = std::max(peak, std::fabs(s));
    const double g = v.peak / peak;
    for (double& s : clip.samples) s *= g;
    return clip;
}

// Fixed coloring filter standing in for a body-conduction capture: keeps the
// low band (vibration couples below ~1 kHz), discards the rest. 4th-order
// Butterworth lowpass via two biquads.
inline AudioClip bcm_colorize(const AudioClip& clean, double cutoff_hz = 900.0) {
    AudioClip out = clean;
    const double k = std::tan(M_PI * cutoff_hz / clean.sample_rate);
    for (int pair = 0; pair < 2; ++pair) {
        const double theta = M_PI * (2.0 * pair + 1.0) / 8.0;  // order 4
        const double q_inv = 2.0 * std::sin(theta);
        const double a0 = 1.0 + q_inv * k + k * k;
        const double b0 = k * k / a0, b1 = 2.0 * k * k / a0, b2 = k * k / a0;
        const double a1 = (2.0 * k * k - 2.0) / a0;
        const double a2 = (1.0 - q_inv * k + k * k) / a0;
        double z1 = 0.0, z2 = 0.0;
        for (double& s : out.samples) {
            const double x = s;
            const double y = b0 * x + z1;
            z1 = b1 * x - a1 * y + z2;
            z2 = b2 * x - a2 * y;
            s = y;
        }
    }
    out.label = clean.label + "+bcm";
    out.clamp_unit();
    return out;
}

}  // namespace subaru
