#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "subaru/degrade.hpp"
#include "subaru/metrics.hpp"
#include "subaru/synth.hpp"

using namespace subaru;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir() {
    const fs::path d = fs::temp_directory_path() / "subaru_metrics_test";
    fs::create_directories(d);
    return d;
}

AudioClip negated(const AudioClip& c) {
    AudioClip out = c;
    for (double& s : out.samples) s = -s;
    return out;
}

// double-loop reimplementation of the spectral distance, kept deliberately
// dumb so it can serve as an oracle for the library version
double lsd_loop_oracle(const AudioClip& ref, const AudioClip& est) {
    Spectrogram r = stft(ref, lsd_stft_config());
    Spectrogram e = stft(est, lsd_stft_config());
    const int64_t T = r.amplitude.dim(0), F = r.amplitude.dim(1);
    double total = 0.0;
    for (int64_t t = 0; t < T; ++t) {
        double acc = 0.0;
        for (int64_t f = 0; f < F; ++f) {
            const double pr = std::max(std::pow(r.amplitude[t * F + f], 2.0), 1e-8);
            const double pe = std::max(std::pow(e.amplitude[t * F + f], 2.0), 1e-8);
            acc += std::pow(std::log10(pr / pe), 2.0);
        }
        total += std::sqrt(acc / static_cast<double>(F));
    }
    return total / static_cast<double>(T);
}

}  // namespace

TEST_CASE("spectral distance is zero between identical clips") {
    AudioClip x = synth_speech_like(1.0, 16000, 5);
    REQUIRE(lsd(x, x) == 0.0);
}

TEST_CASE("uniform power scaling by 10 gives spectral distance exactly 1") {
    // broadband signal so no bin falls under the 1e-8 power floor; the floor
    // would break the constant-log-ratio argument
    AudioClip x = white_noise(16000, 16000, 4242, 0.35);
    Spectrogram sp = stft(x, lsd_stft_config());
    double min_p = 1e300;
    for (double a : sp.amplitude.data) min_p = std::min(min_p, a * a);
    REQUIRE(min_p > 1e-8);  // precondition for exactness

    AudioClip scaled = x;
    for (double& s : scaled.samples) s *= std::sqrt(10.0);
    REQUIRE(lsd(x, scaled) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("spectral distance matches a loop oracle and is symmetric") {
    AudioClip a = synth_speech_like(1.0, 16000, 8);
    AudioClip b = synth_speech_like(1.0, 16000, 9, /*speaker_seed=*/2);
    const double v = lsd(a, b);
    REQUIRE(v == Catch::Approx(lsd_loop_oracle(a, b)).margin(1e-6));
    REQUIRE(v == Catch::Approx(lsd(b, a)).margin(1e-12));  // log-ratio symmetry
    REQUIRE(v > 0.0);

    AudioClip short_clip = synth_speech_like(0.5, 16000, 8);
    REQUIRE_THROWS_AS(lsd(a, short_clip), std::invalid_argument);
    AudioClip other_rate = synth_speech_like(1.0, 8000, 8);
    REQUIRE_THROWS_AS(lsd(a, other_rate), std::invalid_argument);
}

TEST_CASE("distortion ratio caps at 100 dB for perfect estimates") {
    AudioClip x = synth_speech_like(1.0, 16000, 11);
    REQUIRE(si_sdr(x, x) == 100.0);
    // negation is absorbed by the projection too (alpha = -1, zero residual)
    REQUIRE(si_sdr(x, negated(x)) == 100.0);
}

TEST_CASE("distortion ratio is exactly scale invariant") {
    AudioClip x = synth_speech_like(1.0, 16000, 13);
    AudioClip noisy = mix_noise(x, white_noise(x.length(), 16000, 14), 10.0);
    const double base = si_sdr(x, noisy);
    AudioClip doubled = noisy;
    for (double& s : doubled.samples) s *= 2.0;
    REQUIRE(si_sdr(x, doubled) == Catch::Approx(base).margin(1e-9));
    REQUIRE(base > 0.0);
    REQUIRE(base < 100.0);
}

TEST_CASE("orthogonal equal-power noise lands at 0 dB") {
    AudioClip ref = synth_speech_like(1.0, 16000, 55);
    const int64_t n = ref.length();

    // Gram-Schmidt: zero-mean both, strip the reference component out of the
    // noise, then match power
    double mr = 0.0;
    for (double s : ref.samples) mr += s;
    mr /= static_cast<double>(n);
    std::vector<double> r(ref.samples);
    for (double& s : r) s -= mr;

    AudioClip nz = white_noise(n, 16000, 77);
    double mn = 0.0;
    for (double s : nz.samples) mn += s;
    mn /= static_cast<double>(n);
    std::vector<double> w(nz.samples);
    for (double& s : w) s -= mn;

    double wr = 0.0, rr = 0.0;
    for (size_t i = 0; i < r.size(); ++i) {
        wr += w[i] * r[i];
        rr += r[i] * r[i];
    }
    for (size_t i = 0; i < r.size(); ++i) w[i] -= (wr / rr) * r[i];
    double ww = 0.0;
    for (double s : w) ww += s * s;
    const double g = std::sqrt(rr / ww);

    AudioClip est = ref;
    for (size_t i = 0; i < r.size(); ++i) est.samples[i] = r[i] + g * w[i];
    REQUIRE(si_sdr(ref, est) == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("distortion ratio rejects degenerate input") {
    AudioClip x = synth_speech_like(1.0, 16000, 17);
    AudioClip zero = x;
    std::fill(zero.samples.begin(), zero.samples.end(), 0.0);
    REQUIRE_THROWS_AS(si_sdr(zero, x), std::invalid_argument);
    AudioClip short_clip = synth_speech_like(0.5, 16000, 17);
    REQUIRE_THROWS_AS(si_sdr(x, short_clip), std::invalid_argument);
    AudioClip empty;
    empty.sample_rate = 16000;
    REQUIRE_THROWS_AS(si_sdr(empty, empty), std::invalid_argument);
}

TEST_CASE("intelligibility of a clip against itself is essentially perfect") {
    AudioClip x = synth_speech_like(2.0, 16000, 77);
    const double s = stoi(x, x);
    REQUIRE(s >= 0.999);
    REQUIRE(s == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("intelligibility ignores polarity inversion") {
    // Band envelopes are built from magnitude spectra, so flipping the sign of
    // every sample changes nothing. Frozen anchor: identical to the identity
    // score, value 1.0.
    AudioClip x = synth_speech_like(2.0, 16000, 77);
    const double s_id = stoi(x, x);
    const double s_neg = stoi(x, negated(x));
    REQUIRE(s_neg == s_id);
    REQUIRE(s_neg == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("intelligibility against unrelated noise stays low") {
    for (int i = 0; i < 10; ++i) {
        AudioClip ref = synth_speech_like(2.0, 16000, 100 + static_cast<uint64_t>(i));
        AudioClip nz = white_noise(ref.length(), 16000, 900 + static_cast<uint64_t>(i));
        const double s = stoi(ref, nz);
        CAPTURE(i, s);
        REQUIRE(s >= 0.0);
        REQUIRE(s < 0.3);
    }
}

TEST_CASE("intelligibility decreases as additive noise grows") {
    const double snrs[] = {20.0, 10.0, 0.0, -10.0};
    for (int i = 0; i < 10; ++i) {
        AudioClip ref = synth_speech_like(2.0, 16000, 300 + static_cast<uint64_t>(i));
        AudioClip nz = white_noise(ref.length(), 16000, 700 + static_cast<uint64_t>(i));
        double prev = stoi(ref, ref);
        for (double snr : snrs) {
            const double s = stoi(ref, mix_noise(ref, nz, snr));
            CAPTURE(i, snr, prev, s);
            REQUIRE(s <= prev + 1e-12);
            prev = s;
        }
        // by -10 dB the score should have fallen far from the identity value
        REQUIRE(prev < 0.6);
    }
}

TEST_CASE("intelligibility needs 384 ms of active signal") {
    AudioClip tiny = synth_speech_like(0.3, 16000, 19);
    REQUIRE_THROWS_AS(stoi(tiny, tiny), std::invalid_argument);
    AudioClip a = synth_speech_like(2.0, 16000, 19);
    AudioClip b = synth_speech_like(1.0, 16000, 19);
    REQUIRE_THROWS_AS(stoi(a, b), std::invalid_argument);
}

TEST_CASE("evaluation reports aggregate by the mean and round trip losslessly") {
    std::vector<AudioClip> refs, ests;
    std::vector<std::string> ids;
    for (int i = 0; i < 3; ++i) {
        AudioClip clean = synth_speech_like(2.0, 16000, 500 + static_cast<uint64_t>(i));
        DegradationSpec spec;  // 4 kHz / 8-bit
        AudioClip deg = degrade(clean, spec);
        AudioClip up = resample_linear(deg, 16000);
        up.samples.resize(clean.samples.size(), 0.0);
        refs.push_back(clean);
        ests.push_back(up);
        ids.push_back("clip_" + std::to_string(i));
    }

    MetricReport rep = evaluate_clips(refs, ests, ids);
    REQUIRE(rep.clips.size() == 3);
    double sum_lsd = 0.0, sum_sdr = 0.0, sum_stoi = 0.0;
    for (const auto& c : rep.clips) {
        REQUIRE(c.lsd >= 0.0);
        REQUIRE(c.stoi >= 0.0);
        REQUIRE(c.stoi <= 1.0);
        sum_lsd += c.lsd;
        sum_sdr += c.si_sdr;
        sum_stoi += c.stoi;
    }
    REQUIRE(rep.mean_lsd == Catch::Approx(sum_lsd / 3.0).margin(1e-15));
    REQUIRE(rep.mean_si_sdr == Catch::Approx(sum_sdr / 3.0).margin(1e-15));
    REQUIRE(rep.mean_stoi == Catch::Approx(sum_stoi / 3.0).margin(1e-15));

    const fs::path path = tmp_dir() / "records.csv";
    save_metric_records(path.string(), rep);
    MetricReport back = load_metric_records(path.string());
    REQUIRE(back.clips.size() == rep.clips.size());
    for (size_t i = 0; i < rep.clips.size(); ++i) {
        REQUIRE(back.clips[i].id == rep.clips[i].id);
        // %.17g print + stod parse is value-preserving for doubles
        REQUIRE(back.clips[i].lsd == rep.clips[i].lsd);
        REQUIRE(back.clips[i].si_sdr == rep.clips[i].si_sdr);
        REQUIRE(back.clips[i].stoi == rep.clips[i].stoi);
    }
    REQUIRE(back.mean_lsd == rep.mean_lsd);
    REQUIRE(back.mean_si_sdr == rep.mean_si_sdr);
    REQUIRE(back.mean_stoi == rep.mean_stoi);

    const std::string table = format_metric_table(rep);
    REQUIRE(table.find("clip_0") != std::string::npos);
    REQUIRE(table.find("mean") != std::string::npos);

    REQUIRE_THROWS(load_metric_records((tmp_dir() / "absent.csv").string()));
    std::ofstream(tmp_dir() / "bad.csv") << "wrong,header\n";
    REQUIRE_THROWS(load_metric_records((tmp_dir() / "bad.csv").string()));
    REQUIRE_THROWS_AS(evaluate_clips(refs, {ests[0]}), std::invalid_argument);
}
