#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "subaru/degrade.hpp"
#include "subaru/metrics.hpp"
#include "subaru/synth.hpp"

using namespace subaru;
namespace fs = std::filesystem;

namespace {

AudioClip sine(double freq, double amp, int rate, double seconds, double phase = 0.0) {
    AudioClip c;
    c.sample_rate = rate;
    const int64_t n = static_cast<int64_t>(std::llround(seconds * rate));
    c.samples.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i)
        c.samples[static_cast<size_t>(i)] = amp * std::sin(2.0 * M_PI * freq * i / rate + phase);
    return c;
}

// quadrature projection: amplitude of the freq component over [begin, end)
double tone_amplitude(const AudioClip& c, double freq, int64_t begin, int64_t end) {
    double re = 0.0, im = 0.0;
    for (int64_t i = begin; i < end; ++i) {
        const double w = 2.0 * M_PI * freq * i / c.sample_rate;
        re += c.samples[static_cast<size_t>(i)] * std::cos(w);
        im += c.samples[static_cast<size_t>(i)] * std::sin(w);
    }
    const double n = static_cast<double>(end - begin);
    return 2.0 * std::hypot(re, im) / n;
}

double db(double ratio) { return 10.0 * std::log10(ratio); }

// hand-rolled PCM writer, independent of save_wav, for load_wav oracles
void write_pcm16(const std::string& path, int rate, int channels,
                 const std::vector<int16_t>& interleaved) {
    std::ofstream f(path, std::ios::binary);
    auto u32 = [&](uint32_t v) { f.write(reinterpret_cast<char*>(&v), 4); };
    auto u16 = [&](uint16_t v) { f.write(reinterpret_cast<char*>(&v), 2); };
    const uint32_t data_len = static_cast<uint32_t>(interleaved.size() * 2);
    f.write("RIFF", 4);
    u32(36 + data_len);
    f.write("WAVE", 4);
    f.write("fmt ", 4);
    u32(16);
    u16(1);
    u16(static_cast<uint16_t>(channels));
    u32(static_cast<uint32_t>(rate));
    u32(static_cast<uint32_t>(rate * 2 * channels));
    u16(static_cast<uint16_t>(2 * channels));
    u16(16);
    f.write("data", 4);
    u32(data_len);
    for (int16_t s : interleaved) f.write(reinterpret_cast<char*>(&s), 2);
}

fs::path tmp_dir() {
    const fs::path d = fs::temp_directory_path() / "subaru_audio_test";
    fs::create_directories(d);
    return d;
}

}  // namespace

TEST_CASE("wav files round trip within container precision") {
    const fs::path p = tmp_dir() / "round.wav";
    AudioClip clip = synth_speech_like(1.0, 16000, 42);
    save_wav(p.string(), clip);
    AudioClip back = load_wav(p.string());
    REQUIRE(back.sample_rate == 16000);
    REQUIRE(back.length() == 16000);
    double max_err = 0.0;
    for (int64_t i = 0; i < clip.length(); ++i)
        max_err = std::max(max_err,
                           std::abs(clip.samples[static_cast<size_t>(i)] -
                                    back.samples[static_cast<size_t>(i)]));
    REQUIRE(max_err < 1.6 / 32768.0);  // one 16-bit step plus rounding
}

TEST_CASE("full-scale file content reaches exactly unit amplitude") {
    const fs::path p = tmp_dir() / "square.wav";
    std::vector<int16_t> pcm;
    for (int i = 0; i < 800; ++i) pcm.push_back(i % 2 ? int16_t{32767} : int16_t{-32768});
    write_pcm16(p.string(), 8000, 1, pcm);
    AudioClip c = load_wav(p.string());
    double peak = 0.0;
    for (double s : c.samples) peak = std::max(peak, std::abs(s));
    REQUIRE(peak == 1.0);
}

TEST_CASE("stereo input downmixes by channel mean") {
    const fs::path p = tmp_dir() / "stereo.wav";
    std::vector<int16_t> pcm;
    std::mt19937 rng(3);
    std::uniform_int_distribution<int> d(-20000, 20000);
    std::vector<int16_t> left(300), right(300);
    for (int i = 0; i < 300; ++i) {
        left[static_cast<size_t>(i)] = static_cast<int16_t>(d(rng));
        right[static_cast<size_t>(i)] = static_cast<int16_t>(d(rng));
        pcm.push_back(left[static_cast<size_t>(i)]);
        pcm.push_back(right[static_cast<size_t>(i)]);
    }
    write_pcm16(p.string(), 16000, 2, pcm);
    AudioClip c = load_wav(p.string());
    REQUIRE(c.length() == 300);  // frames, not interleaved samples
    for (int i = 0; i < 300; ++i) {
        const double want = (left[static_cast<size_t>(i)] / 32768.0 +
                             right[static_cast<size_t>(i)] / 32768.0) /
                            2.0;
        REQUIRE(c.samples[static_cast<size_t>(i)] == Catch::Approx(want).margin(1e-12));
    }
}

TEST_CASE("wav loader rejects broken input") {
    const fs::path p = tmp_dir() / "broken.wav";
    std::ofstream(p.string()) << "definitely not audio";
    REQUIRE_THROWS(load_wav(p.string()));
    REQUIRE_THROWS(load_wav((tmp_dir() / "missing.wav").string()));
}

TEST_CASE("resampler length arithmetic and tone preservation") {
    AudioClip one_sec = sine(500.0, 0.5, 16000, 1.0);
    AudioClip down = resample(one_sec, 4000);
    REQUIRE(down.sample_rate == 4000);
    REQUIRE(down.length() == 4000);

    // 500 Hz sits well inside the new passband: amplitude within 1%
    const double amp = tone_amplitude(down, 500.0, 400, 3600);
    REQUIRE(amp == Catch::Approx(0.5).epsilon(0.01));

    AudioClip same = resample(one_sec, 16000);
    REQUIRE(same.length() == one_sec.length());
    REQUIRE(same.samples == one_sec.samples);
    REQUIRE_THROWS_AS(resample(one_sec, 0), std::invalid_argument);
}

TEST_CASE("resampler stopband rejects out-of-band tones by 60 dB") {
    // Steady-state rejection: skip the filter's warm-up/decay transient at the
    // clip edges (503 taps at 16 kHz ≈ 63 output samples each side), which is
    // an edge effect of any FIR, not a stopband property.
    for (double freq : {2100.0, 2500.0, 3000.0, 3500.0, 5000.0, 7000.0}) {
        AudioClip tone = sine(freq, 0.9, 16000, 1.0);
        AudioClip down = resample(tone, 4000);
        const double in_p = mean_power(tone.samples);
        const std::vector<double> interior(down.samples.begin() + 100, down.samples.end() - 100);
        const double out_p = mean_power(interior);
        CAPTURE(freq, db(out_p / in_p));
        REQUIRE(db(out_p / in_p) <= -60.0);
    }

    // direct frequency response of the anti-aliasing taps in the stopband
    const std::vector<double> taps = resample_filter_taps(16000, 4000);
    double dc = 0.0;
    for (double t : taps) dc += t;
    const double nyq = 0.5 / 4.0;  // stopband edge, cycles/sample at 16 kHz
    for (double f = nyq; f <= 0.5; f += (0.5 - nyq) / 40.0) {
        std::complex<double> h = 0.0;
        for (size_t n = 0; n < taps.size(); ++n)
            h += taps[n] * std::polar(1.0, -2.0 * M_PI * f * static_cast<double>(n));
        CAPTURE(f, 20.0 * std::log10(std::abs(h) / dc));
        REQUIRE(std::abs(h) / dc <= std::pow(10.0, -60.0 / 20.0));
    }
}

TEST_CASE("quantizer grid behavior") {
    AudioClip clip = synth_speech_like(0.5, 16000, 7);

    // projection: re-quantizing is exact
    AudioClip q8 = quantize(clip, 8);
    REQUIRE(q8.bit_depth == 8);
    AudioClip q8b = quantize(q8, 8);
    REQUIRE(q8.samples == q8b.samples);

    AudioClip q16 = quantize(clip, 16);
    AudioClip q16b = quantize(q16, 16);
    REQUIRE(q16.samples == q16b.samples);

    // mid-tread: zero maps to zero
    AudioClip z;
    z.sample_rate = 16000;
    z.samples = {0.0, 1e-9, -1e-9};
    AudioClip zq = quantize(z, 8);
    REQUIRE(zq.samples[0] == 0.0);
    REQUIRE(zq.samples[1] == 0.0);
    REQUIRE(zq.samples[2] == 0.0);

    REQUIRE_THROWS_AS(quantize(clip, 9), std::invalid_argument);
}

TEST_CASE("8-bit quantization noise sits at the textbook level") {
    // full-scale sine, non-harmonic frequency, one second
    AudioClip tone = sine(997.0, 1.0, 16000, 1.0);
    AudioClip q = quantize(tone, 8);
    double p_sig = 0.0, p_err = 0.0;
    for (int64_t i = 0; i < tone.length(); ++i) {
        const double e = q.samples[static_cast<size_t>(i)] - tone.samples[static_cast<size_t>(i)];
        p_sig += tone.samples[static_cast<size_t>(i)] * tone.samples[static_cast<size_t>(i)];
        p_err += e * e;
    }
    const double sqnr_db = db(p_sig / p_err);
    CAPTURE(sqnr_db);
    REQUIRE(sqnr_db == Catch::Approx(6.02 * 8 + 1.76).margin(1.5));
}

TEST_CASE("highpass removes DC, keeps speech band, preserves silence") {
    AudioClip dc;
    dc.sample_rate = 16000;
    dc.samples.assign(16000, 0.3);
    AudioClip hp = highpass(dc, 15.0);
    double tail_mean = 0.0;
    for (int64_t i = 8000; i < 16000; ++i) tail_mean += hp.samples[static_cast<size_t>(i)];
    tail_mean /= 8000.0;
    REQUIRE(std::abs(tail_mean) < 1e-3);

    AudioClip tone = sine(1000.0, 0.5, 16000, 1.0);
    AudioClip tone_hp = highpass(tone, 15.0);
    const double amp = tone_amplitude(tone_hp, 1000.0, 2000, 14000);
    REQUIRE(20.0 * std::log10(amp / 0.5) == Catch::Approx(0.0).margin(1.0));

    AudioClip zero;
    zero.sample_rate = 16000;
    zero.samples.assign(4000, 0.0);
    AudioClip zero_hp = highpass(zero, 15.0);
    for (double s : zero_hp.samples) REQUIRE(s == 0.0);
}

TEST_CASE("silence trimming and exact one-second slicing") {
    AudioClip voiced = synth_speech_like(3.4, 16000, 11);
    REQUIRE(trim_and_slice(voiced, 1.0).size() == 3);

    AudioClip silent;
    silent.sample_rate = 16000;
    silent.samples.assign(32000, 0.0);
    REQUIRE(trim_and_slice(silent, 1.0).empty());

    AudioClip framed;
    framed.sample_rate = 16000;
    framed.samples.assign(16000, 0.0);
    AudioClip speech = synth_speech_like(2.0, 16000, 12);
    framed.samples.insert(framed.samples.end(), speech.samples.begin(), speech.samples.end());
    framed.samples.insert(framed.samples.end(), 16000, 0.0);
    auto slices = trim_and_slice(framed, 1.0);
    REQUIRE(slices.size() == 2);
    REQUIRE(slices[0].length() == 16000);
}

TEST_CASE("noise mixing hits the requested snr exactly") {
    AudioClip clean = sine(440.0, 0.25, 16000, 1.0);
    AudioClip noise = white_noise(16000, 16000, 99);

    AudioClip at0 = mix_noise(clean, noise, 0.0);
    std::vector<double> added(at0.samples.size());
    for (size_t i = 0; i < added.size(); ++i) added[i] = at0.samples[i] - clean.samples[i];
    REQUIRE(db(mean_power(clean.samples) / mean_power(added)) == Catch::Approx(0.0).margin(0.01));

    AudioClip at_m7 = mix_noise(clean, noise, -7.0);
    double peak = 0.0;
    for (double s : at_m7.samples) peak = std::max(peak, std::abs(s));
    REQUIRE(peak < 1.0);  // no clipping, so the mix is exactly clean + g*noise
    for (size_t i = 0; i < added.size(); ++i) added[i] = at_m7.samples[i] - clean.samples[i];
    REQUIRE(db(mean_power(clean.samples) / mean_power(added)) == Catch::Approx(-7.0).margin(0.01));

    // g^2 equals P_clean * 10^0.7 when the noise itself has unit power
    const double g2 = mean_power(added) / mean_power(noise.samples);
    REQUIRE(g2 == Catch::Approx(mean_power(clean.samples) * std::pow(10.0, 0.7) /
                                mean_power(noise.samples))
                      .epsilon(1e-9));

    AudioClip silent;
    silent.sample_rate = 16000;
    silent.samples.assign(16000, 0.0);
    REQUIRE_THROWS_AS(mix_noise(silent, noise, 0.0), std::invalid_argument);
    REQUIRE_THROWS_AS(mix_noise(clean, silent, 0.0), std::invalid_argument);
}

TEST_CASE("degradation composes its stages in order") {
    AudioClip clip = synth_speech_like(1.0, 16000, 21);

    // identity spec: same rate, full depth, no noise, highpass disabled
    DegradationSpec id;
    id.target_rate = 16000;
    id.target_bits = 16;
    id.hpf_cutoff = 0.0;
    AudioClip out = degrade(clip, id);
    REQUIRE(out.sample_rate == 16000);
    double max_err = 0.0;
    for (int64_t i = 0; i < clip.length(); ++i)
        max_err = std::max(max_err, std::abs(out.samples[static_cast<size_t>(i)] -
                                             clip.samples[static_cast<size_t>(i)]));
    REQUIRE(max_err < 2.0 / 65536.0);

    // the flagship configuration: 4 kHz, 8 bits
    DegradationSpec low;  // defaults
    AudioClip deg = degrade(clip, low);
    REQUIRE(deg.sample_rate == 4000);
    REQUIRE(deg.length() == 4000);
    REQUIRE(deg.bit_depth == 8);

    // resample+quantize alone is idempotent: a second pass with the same
    // spec moves samples by at most one 8-bit step (here: not at all).
    // The causal highpass is excluded — re-filtering rotates low-frequency
    // phase a second time, which is expected, not drift.
    DegradationSpec rq;
    rq.hpf_cutoff = 0.0;
    AudioClip deg_rq = degrade(clip, rq);
    AudioClip twice = degrade(deg_rq, rq);
    double max_change = 0.0;
    for (int64_t i = 0; i < deg_rq.length(); ++i)
        max_change = std::max(max_change, std::abs(twice.samples[static_cast<size_t>(i)] -
                                                   deg_rq.samples[static_cast<size_t>(i)]));
    REQUIRE(max_change <= 2.0 / 256.0 + 1e-12);
    REQUIRE(twice.samples == deg_rq.samples);
}

TEST_CASE("heavier degradation raises spectral distance") {
    AudioClip clip = synth_speech_like(1.0, 16000, 33);
    auto distance = [&](int rate, int bits) {
        DegradationSpec spec;
        spec.target_rate = rate;
        spec.target_bits = bits;
        AudioClip deg = degrade(clip, spec);
        AudioClip up = resample_linear(deg, 16000);
        up.samples.resize(clip.samples.size(), 0.0);
        return lsd(clip, up);
    };
    const double coarse = distance(4000, 8);
    const double fine = distance(12000, 12);
    CAPTURE(coarse, fine);
    REQUIRE(coarse > fine);
}

TEST_CASE("manifest files round trip") {
    const fs::path p = tmp_dir() / "manifest.csv";
    std::vector<ManifestEntry> entries{
        {"clips/a.wav", "clips/a_bcm.wav", "train", "spk01"},
        {"clips/b.wav", "", "val", "spk02"},
        {"clips/c.wav", "clips/c_bcm.wav", "test", "spk01"},
    };
    save_manifest(p.string(), entries);
    auto back = load_manifest(p.string());
    REQUIRE(back.size() == 3);
    for (size_t i = 0; i < 3; ++i) {
        REQUIRE(back[i].clean_path == entries[i].clean_path);
        REQUIRE(back[i].bcm_path == entries[i].bcm_path);
        REQUIRE(back[i].split == entries[i].split);
        REQUIRE(back[i].speaker_id == entries[i].speaker_id);
    }
    std::ofstream bad(tmp_dir() / "bad.csv");
    bad << "wrong,header,row,here\n";
    bad.close();
    REQUIRE_THROWS(load_manifest((tmp_dir() / "bad.csv").string()));
}
