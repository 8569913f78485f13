#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "subaru/spectral.hpp"

using namespace subaru;

namespace {

StftConfig wide_cfg() {
    StftConfig c;
    c.n_fft = 1024;
    c.hop = 128;
    c.win_length = 1024;
    c.pad = PadMode::center;
    return c;
}

StftConfig narrow_cfg() {
    StftConfig c;
    c.n_fft = 256;
    c.hop = 64;
    c.win_length = 256;
    c.pad = PadMode::aligned;
    return c;
}

AudioClip random_clip(std::mt19937_64& rng, int rate, int64_t length) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    AudioClip c;
    c.sample_rate = rate;
    c.samples.resize(static_cast<size_t>(length));
    for (auto& s : c.samples) s = u(rng);
    return c;
}

double max_abs_diff(const AudioClip& a, const AudioClip& b) {
    REQUIRE(a.samples.size() == b.samples.size());
    double m = 0.0;
    for (size_t i = 0; i < a.samples.size(); ++i)
        m = std::max(m, std::abs(a.samples[i] - b.samples[i]));
    return m;
}

}  // namespace

TEST_CASE("analysis-synthesis round trip stays under 1e-6 on 100 random clips") {
    std::mt19937_64 rng(2026);
    std::uniform_int_distribution<int64_t> wide_len(2048, 16000);
    std::uniform_int_distribution<int64_t> narrow_len(512, 4000);
    for (int i = 0; i < 50; ++i) {
        AudioClip x = random_clip(rng, 16000, wide_len(rng));
        AudioClip y = istft(stft(x, wide_cfg()));
        CAPTURE(i, x.length());
        REQUIRE(y.length() == x.length());
        REQUIRE(max_abs_diff(x, y) < 1e-6);
    }
    for (int i = 0; i < 50; ++i) {
        AudioClip x = random_clip(rng, 4000, narrow_len(rng));
        AudioClip y = istft(stft(x, narrow_cfg()));
        CAPTURE(i, x.length());
        REQUIRE(y.length() == x.length());
        REQUIRE(max_abs_diff(x, y) < 1e-6);
    }
}

TEST_CASE("frame and bin counts for the two analysis grids") {
    std::mt19937_64 rng(1);
    AudioClip sec = random_clip(rng, 16000, 16000);
    Spectrogram s = stft(sec, wide_cfg());
    REQUIRE(s.bins() == 513);
    REQUIRE(s.frames() == 126);

    AudioClip chain_out = random_clip(rng, 16000, 15872);
    REQUIRE(stft(chain_out, wide_cfg()).frames() == 125);

    AudioClip low = random_clip(rng, 4000, 4000);
    Spectrogram ls = stft(low, narrow_cfg());
    REQUIRE(ls.bins() == 129);
    REQUIRE(ls.frames() == 62);

    AudioClip tiny;
    tiny.sample_rate = 4000;
    tiny.samples.assign(16, 0.0);
    REQUIRE_THROWS_AS(stft(tiny, narrow_cfg()), std::invalid_argument);
}

TEST_CASE("zero in, zero out") {
    AudioClip zero;
    zero.sample_rate = 16000;
    zero.samples.assign(8000, 0.0);
    Spectrogram s = stft(zero, wide_cfg());
    for (int64_t i = 0; i < s.amplitude.numel(); ++i) REQUIRE(s.amplitude[i] == 0.0);

    AudioClip back = istft(s);
    for (double v : back.samples) REQUIRE(v == 0.0);
}

TEST_CASE("pure tone concentrates at its bin") {
    AudioClip tone;
    tone.sample_rate = 16000;
    tone.samples.resize(16000);
    for (int64_t i = 0; i < 16000; ++i)
        tone.samples[static_cast<size_t>(i)] = 0.7 * std::sin(2.0 * M_PI * 1000.0 * i / 16000.0);
    Spectrogram s = stft(tone, wide_cfg());
    std::vector<double> mean_amp(static_cast<size_t>(s.bins()), 0.0);
    for (int64_t t = 0; t < s.frames(); ++t)
        for (int64_t f = 0; f < s.bins(); ++f)
            mean_amp[static_cast<size_t>(f)] += s.amplitude[t * s.bins() + f];
    int64_t argmax = 0;
    for (int64_t f = 1; f < s.bins(); ++f)
        if (mean_amp[static_cast<size_t>(f)] > mean_amp[static_cast<size_t>(argmax)]) argmax = f;
    REQUIRE(argmax == 64);  // round(1000 * 1024 / 16000)
}

TEST_CASE("transform is linear in the waveform") {
    std::mt19937_64 rng(5);
    AudioClip x = random_clip(rng, 16000, 6000);
    AudioClip x2 = x;
    for (auto& v : x2.samples) v *= 2.0;
    Spectrogram a = stft(x, wide_cfg());
    Spectrogram b = stft(x2, wide_cfg());
    for (int64_t i = 0; i < a.amplitude.numel(); ++i)
        REQUIRE(b.amplitude[i] == Catch::Approx(2.0 * a.amplitude[i]).margin(1e-9));

    // synthesis is linear in the amplitude at fixed phase
    Spectrogram doubled = a;
    for (int64_t i = 0; i < doubled.amplitude.numel(); ++i) doubled.amplitude[i] *= 2.0;
    AudioClip ya = istft(a);
    AudioClip yd = istft(doubled);
    for (size_t i = 0; i < ya.samples.size(); ++i)
        REQUIRE(yd.samples[i] == Catch::Approx(2.0 * ya.samples[i]).margin(1e-9));
}

TEST_CASE("spectral energy accounts for the window overlap") {
    // With a periodic Hann window and hop = n_fft/8, the squared window sums
    // to exactly 3 across overlapping frames, so full-spectrum energy is
    // 3 * n_fft * signal energy. Content keeps clear of the clip edges so
    // every nonzero sample sees the full overlap stack.
    std::mt19937_64 rng(9);
    AudioClip x = random_clip(rng, 16000, 16000);
    for (int64_t i = 0; i < 1024; ++i) {
        x.samples[static_cast<size_t>(i)] = 0.0;
        x.samples[static_cast<size_t>(16000 - 1 - i)] = 0.0;
    }
    Spectrogram s = stft(x, wide_cfg());
    double e_sig = 0.0;
    for (double v : x.samples) e_sig += v * v;
    double e_spec = 0.0;
    for (int64_t t = 0; t < s.frames(); ++t)
        for (int64_t f = 0; f < s.bins(); ++f) {
            const double a2 = s.amplitude[t * s.bins() + f] * s.amplitude[t * s.bins() + f];
            const bool interior = f != 0 && f != s.bins() - 1;
            e_spec += interior ? 2.0 * a2 : a2;  // conjugate-symmetric halves
        }
    REQUIRE(e_spec / (3.0 * 1024.0 * e_sig) == Catch::Approx(1.0).margin(1e-4));
}

TEST_CASE("phase distance folds into [0, pi]") {
    REQUIRE(anti_wrap(0.0) == 0.0);
    REQUIRE(anti_wrap(2.0 * M_PI) == Catch::Approx(0.0).margin(1e-12));
    REQUIRE(anti_wrap(M_PI) == Catch::Approx(M_PI).margin(1e-12));
    REQUIRE(anti_wrap(3.5 * M_PI) == Catch::Approx(0.5 * M_PI).margin(1e-12));
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    for (int i = 0; i < 500; ++i) {
        const double x = u(rng);
        const int k = static_cast<int>(rng() % 7) - 3;
        REQUIRE(anti_wrap(x + 2.0 * M_PI * k) == Catch::Approx(anti_wrap(x)).margin(1e-9));
        REQUIRE(anti_wrap(-x) == Catch::Approx(anti_wrap(x)).margin(1e-12));
        REQUIRE(anti_wrap(x) >= 0.0);
        REQUIRE(anti_wrap(x) <= M_PI + 1e-12);
    }
}

TEST_CASE("group delay is the frequency-axis phase difference") {
    std::mt19937_64 rng(23);
    AudioClip x = random_clip(rng, 4000, 2000);
    Spectrogram s = stft(x, narrow_cfg());

    // constant phase field -> zero group delay
    Spectrogram flat = s;
    flat.phase.fill(0.7);
    PhaseFeatures pf = group_delay(flat);
    for (int64_t i = 0; i < pf.group_delay.numel(); ++i) REQUIRE(pf.group_delay[i] == 0.0);

    // linear-in-frequency phase -> constant difference everywhere (the last
    // column replicates its neighbor)
    Spectrogram lin = s;
    for (int64_t t = 0; t < lin.frames(); ++t)
        for (int64_t f = 0; f < lin.bins(); ++f)
            lin.phase[t * lin.bins() + f] = 0.01 * static_cast<double>(f);
    PhaseFeatures pl = group_delay(lin);
    for (int64_t i = 0; i < pl.group_delay.numel(); ++i)
        REQUIRE(pl.group_delay[i] == Catch::Approx(0.01).margin(1e-12));

    // random field matches the brute-force loop
    PhaseFeatures pr = group_delay(s);
    REQUIRE(pr.instantaneous_phase.same_shape(s.phase));
    for (int64_t i = 0; i < s.phase.numel(); ++i)
        REQUIRE(pr.instantaneous_phase[i] == s.phase[i]);
    const int64_t F = s.bins();
    for (int64_t t = 0; t < s.frames(); ++t)
        for (int64_t f = 0; f < F; ++f) {
            const double want = f + 1 < F ? s.phase[t * F + f + 1] - s.phase[t * F + f]
                                          : s.phase[t * F + F - 1] - s.phase[t * F + F - 2];
            REQUIRE(pr.group_delay[t * F + f] == Catch::Approx(want).margin(1e-12));
        }

    Spectrogram one_bin = s;
    one_bin.amplitude = Tensor({s.frames(), 1});
    one_bin.phase = Tensor({s.frames(), 1});
    REQUIRE_THROWS_AS(group_delay(one_bin), std::invalid_argument);
}
