#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "subaru/audio.hpp"
#include "subaru/degrade.hpp"
#include "subaru/fft.hpp"
#include "subaru/spectral.hpp"

namespace subaru {

// Objective quality metrics: log-spectral distance, scale-invariant SDR, and
// short-time intelligibility. All operate on equal-rate, equal-length clips.

// ---- log-spectral distance -------------------------------------------------
// RMS deviation of the log10 power spectrum, frame-averaged. Analysis fixed
// at 2048/512 Hann; power floored at 1e-8 before the log.
inline StftConfig lsd_stft_config() {
    StftConfig c;
    c.n_fft = 2048;
    c.hop = 512;
    c.win_length = 2048;
    c.pad = PadMode::center;
    return c;
}

inline double lsd(const AudioClip& reference, const AudioClip& estimate) {
    if (reference.sample_rate != estimate.sample_rate)
        throw std::invalid_argument("lsd: sample-rate mismatch");
    if (reference.length() != estimate.length())
        throw std::invalid_argument("lsd: length mismatch");
    if (reference.length() == 0) throw std::invalid_argument("lsd: empty clips");
    const StftConfig cfg = lsd_stft_config();
    Spectrogram r = stft(reference, cfg);
    Spectrogram e = stft(estimate, cfg);
    const int64_t T = r.amplitude.dim(0), F = r.amplitude.dim(1);
    double acc = 0.0;
    for (int64_t t = 0; t < T; ++t) {
        double frame = 0.0;
        for (int64_t f = 0; f < F; ++f) {
            const double pr = std::max(r.amplitude[t * F + f] * r.amplitude[t * F + f], 1e-8);
            const double pe = std::max(e.amplitude[t * F + f] * e.amplitude[t * F + f], 1e-8);
            const double d = std::log10(pr) - std::log10(pe);
            frame += d * d;
        }
        acc += std::sqrt(frame / static_cast<double>(F));
    }
    return acc / static_cast<double>(T);
}

// ---- scale-invariant signal-to-distortion ratio ----------------------------
// Projection form on zero-meaned signals; the zero-residual case is capped
// at +100 dB.
inline double si_sdr(const AudioClip& reference, const AudioClip& estimate) {
    if (reference.length() != estimate.length())
        throw std::invalid_argument("si_sdr: length mismatch");
    const int64_t n = reference.length();
    if (n == 0) throw std::invalid_argument("si_sdr: empty clips");
    double mr = 0.0, me = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        mr += reference.samples[static_cast<size_t>(i)];
        me += estimate.samples[static_cast<size_t>(i)];
    }
    mr /= static_cast<double>(n);
    me /= static_cast<double>(n);
    double rr = 0.0, er = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double r = reference.samples[static_cast<size_t>(i)] - mr;
        const double e = estimate.samples[static_cast<size_t>(i)] - me;
        rr += r * r;
        er += e * r;
    }
    if (rr == 0.0) throw std::invalid_argument("si_sdr: zero reference");
    const double alpha = er / rr;
    double target = 0.0, resid = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double r = reference.samples[static_cast<size_t>(i)] - mr;
        const double e = estimate.samples[static_cast<size_t>(i)] - me;
        const double p = alpha * r;
        target += p * p;
        resid += (p - e) * (p - e);
    }
    if (resid == 0.0) return 100.0;
    return std::min(10.0 * std::log10(target / resid), 100.0);
}

// ---- short-time objective intelligibility ----------------------------------
// Standard construction: 10 kHz analysis, 256-sample frames with 50% overlap
// zero-padded to a 512-point FFT, 40 dB energy-based activity mask from the
// reference, 15 one-third-octave bands from 150 Hz, clipped normalized
// correlation over 30-frame (384 ms) segments.
namespace stoi_detail {

constexpr int kFrame = 256;
constexpr int kHop = 128;
constexpr int kFft = 512;
constexpr int kBands = 15;
constexpr int kSegment = 30;
constexpr double kLowestBand = 150.0;
constexpr double kDynRangeDb = 40.0;
constexpr double kClip = 1.0 + 5.623413251903491;  // 1 + 10^(15/20)

inline std::vector<double> frame_window() {
    // MATLAB-style symmetric Hann without the zero endpoints
    std::vector<double> w(kFrame);
    for (int i = 0; i < kFrame; ++i)
        w[static_cast<size_t>(i)] = 0.5 * (1.0 - std::cos(2.0 * M_PI * (i + 1) / (kFrame + 1.0)));
    return w;
}

// band-energy matrix {frames x bands} of the active frames
inline void band_envelopes(const std::vector<double>& x, const std::vector<int>& keep,
                           std::vector<double>& out) {
    static const std::vector<double> win = frame_window();
    // third-octave band edges on the 512-point grid at 10 kHz
    static const auto bins = [] {
        std::vector<std::pair<int, int>> b(kBands);
        for (int j = 0; j < kBands; ++j) {
            const double cf = kLowestBand * std::pow(2.0, j / 3.0);
            const double lo = cf / std::pow(2.0, 1.0 / 6.0);
            const double hi = cf * std::pow(2.0, 1.0 / 6.0);
            int klo = static_cast<int>(std::ceil(lo * kFft / 10000.0));
            int khi = static_cast<int>(std::ceil(hi * kFft / 10000.0));
            khi = std::min(khi, kFft / 2 + 1);
            b[static_cast<size_t>(j)] = {klo, khi};
        }
        return b;
    }();
    out.assign(keep.size() * kBands, 0.0);
    std::vector<std::complex<double>> buf(kFft);
    for (size_t m = 0; m < keep.size(); ++m) {
        const int start = keep[m] * kHop;
        std::fill(buf.begin(), buf.end(), std::complex<double>(0.0, 0.0));
        for (int i = 0; i < kFrame; ++i)
            buf[static_cast<size_t>(i)] = x[static_cast<size_t>(start + i)] * win[static_cast<size_t>(i)];
        fft_inplace(buf, false);
        for (int j = 0; j < kBands; ++j) {
            double acc = 0.0;
            for (int k = bins[static_cast<size_t>(j)].first; k < bins[static_cast<size_t>(j)].second; ++k)
                acc += std::norm(buf[static_cast<size_t>(k)]);
            out[m * kBands + static_cast<size_t>(j)] = std::sqrt(acc);
        }
    }
}

}  // namespace stoi_detail

inline double stoi(const AudioClip& reference, const AudioClip& estimate) {
    if (reference.sample_rate != estimate.sample_rate)
        throw std::invalid_argument("stoi: sample-rate mismatch");
    if (reference.length() != estimate.length())
        throw std::invalid_argument("stoi: length mismatch");
    using namespace stoi_detail;
    AudioClip r = reference, e = estimate;
    if (r.sample_rate != 10000) {
        r = resample(r, 10000);
        e = resample(e, 10000);
    }
    const int64_t n = std::min(r.length(), e.length());
    const int frames = n >= kFrame ? static_cast<int>((n - kFrame) / kHop) + 1 : 0;

    // activity mask from the reference's windowed frame energies
    static const std::vector<double> win = frame_window();
    std::vector<double> energy_db(static_cast<size_t>(frames));
    double max_db = -1e30;
    for (int m = 0; m < frames; ++m) {
        double acc = 0.0;
        for (int i = 0; i < kFrame; ++i) {
            const double v = r.samples[static_cast<size_t>(m * kHop + i)] * win[static_cast<size_t>(i)];
            acc += v * v;
        }
        energy_db[static_cast<size_t>(m)] = 10.0 * std::log10(acc + 1e-30);
        max_db = std::max(max_db, energy_db[static_cast<size_t>(m)]);
    }
    std::vector<int> keep;
    for (int m = 0; m < frames; ++m)
        if (energy_db[static_cast<size_t>(m)] > max_db - kDynRangeDb) keep.push_back(m);
    if (static_cast<int>(keep.size()) < kSegment)
        throw std::invalid_argument("stoi: fewer than 384 ms of active signal");

    std::vector<double> xb, yb;
    band_envelopes(r.samples, keep, xb);
    band_envelopes(e.samples, keep, yb);

    const int M = static_cast<int>(keep.size());
    double acc = 0.0;
    int cnt = 0;
    for (int m = kSegment - 1; m < M; ++m) {
        for (int j = 0; j < kBands; ++j) {
            double xx = 0.0, yy = 0.0;
            for (int i = 0; i < kSegment; ++i) {
                const size_t idx = static_cast<size_t>(m - kSegment + 1 + i) * kBands +
                                   static_cast<size_t>(j);
                xx += xb[idx] * xb[idx];
                yy += yb[idx] * yb[idx];
            }
            const double alpha = yy > 0.0 ? std::sqrt(xx / yy) : 0.0;
            double sx = 0.0, sy = 0.0;
            double seg_x[kSegment], seg_y[kSegment];
            for (int i = 0; i < kSegment; ++i) {
                const size_t idx = static_cast<size_t>(m - kSegment + 1 + i) * kBands +
                                   static_cast<size_t>(j);
                seg_x[i] = xb[idx];
                seg_y[i] = std::min(alpha * yb[idx], kClip * xb[idx]);
                sx += seg_x[i];
                sy += seg_y[i];
            }
            sx /= kSegment;
            sy /= kSegment;
            double num = 0.0, dx = 0.0, dy = 0.0;
            for (int i = 0; i < kSegment; ++i) {
                num += (seg_x[i] - sx) * (seg_y[i] - sy);
                dx += (seg_x[i] - sx) * (seg_x[i] - sx);
                dy += (seg_y[i] - sy) * (seg_y[i] - sy);
            }
            const double den = std::sqrt(dx * dy);
            acc += den > 0.0 ? num / den : 0.0;
            ++cnt;
        }
    }
    // The raw correlation average can dip a hair below 0 for estimates that
    // are pure unrelated noise; the score is defined on [0, 1], so pin it.
    return std::clamp(acc / static_cast<double>(cnt), 0.0, 1.0);
}

// ---- per-clip reports ------------------------------------------------------
struct ClipMetrics {
    std::string id;
    double lsd = 0.0;
    double si_sdr = 0.0;
    double stoi = 0.0;
};

struct MetricReport {
    std::vector<ClipMetrics> clips;
    double mean_lsd = 0.0;
    double mean_si_sdr = 0.0;
    double mean_stoi = 0.0;

    void aggregate() {
        mean_lsd = mean_si_sdr = mean_stoi = 0.0;
        if (clips.empty()) return;
        for (const auto& c : clips) {
            mean_lsd += c.lsd;
            mean_si_sdr += c.si_sdr;
            mean_stoi += c.stoi;
        }
        const double n = static_cast<double>(clips.size());
        mean_lsd /= n;
        mean_si_sdr /= n;
        mean_stoi /= n;
    }
};

inline MetricReport evaluate_clips(const std::vector<AudioClip>& references,
                                   const std::vector<AudioClip>& estimates,
                                   const std::vector<std::string>& ids = {}) {
    if (references.size() != estimates.size())
        throw std::invalid_argument("evaluate_clips: count mismatch");
    MetricReport rep;
    for (size_t i = 0; i < references.size(); ++i) {
        ClipMetrics m;
        m.id = i < ids.size() ? ids[i] : "clip" + std::to_string(i);
        m.lsd = lsd(references[i], estimates[i]);
        m.si_sdr = si_sdr(references[i], estimates[i]);
        m.stoi = stoi(references[i], estimates[i]);
        rep.clips.push_back(std::move(m));
    }
    rep.aggregate();
    return rep;
}

// Machine-readable records: one CSV row per clip with full double precision,
// so a load reproduces the report bit-exactly.
inline void save_metric_records(const std::string& path, const MetricReport& rep) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_metric_records: cannot open " + path);
    f << "id,lsd,si_sdr,stoi\n";
    char buf[256];
    for (const auto& c : rep.clips) {
        std::snprintf(buf, sizeof(buf), ",%.17g,%.17g,%.17g\n", c.lsd, c.si_sdr, c.stoi);
        f << c.id << buf;
    }
}

inline MetricReport load_metric_records(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_metric_records: cannot open " + path);
    std::string line;
    if (!std::getline(f, line) || line != "id,lsd,si_sdr,stoi")
        throw std::runtime_error("load_metric_records: bad header");
    MetricReport rep;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        ClipMetrics c;
        std::string field;
        if (!std::getline(ss, c.id, ',')) continue;
        std::getline(ss, field, ',');
        c.lsd = std::stod(field);
        std::getline(ss, field, ',');
        c.si_sdr = std::stod(field);
        std::getline(ss, field, ',');
        c.stoi = std::stod(field);
        rep.clips.push_back(std::move(c));
    }
    rep.aggregate();
    return rep;
}

inline std::string format_metric_table(const MetricReport& rep) {
    std::ostringstream os;
    char buf[256];
    os << "clip                              LSD   SI-SDR     STOI\n";
    for (const auto& c : rep.clips) {
        std::snprintf(buf, sizeof(buf), "%-30s %6.3f  %7.2f   %6.4f\n", c.id.c_str(), c.lsd,
                      c.si_sdr, c.stoi);
        os << buf;
    }
    std::snprintf(buf, sizeof(buf), "%-30s %6.3f  %7.2f   %6.4f\n", "mean", rep.mean_lsd,
                  rep.mean_si_sdr, rep.mean_stoi);
    os << "----\n" << buf;
    return os.str();
}

}  // namespace subaru
