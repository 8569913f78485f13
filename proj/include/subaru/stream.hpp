#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "subaru/networks.hpp"

namespace subaru {

// Frame-by-frame streaming emulation. Each captured frame pays a fixed
// transport latency plus the reconstruction inference time; a frame stream is
// viable when inference keeps up with capture (faster than one frame
// duration) and conversational when the one-way delay stays within the
// 150 ms conversational-quality bound.

constexpr double kItuOneWayMs = 150.0;

struct StreamFrame {
    int index = 0;
    double duration_s = 1.0;
    double transport_ms = 12.0;
    double inference_ms = 0.0;
    double total_ms = 0.0;    // transport + inference
    double done_at_ms = 0.0;  // simulated pipeline completion time
    bool stages_measured = false;
    SubaruModel::StageTimes stages;  // valid when stages_measured
};

struct StreamReport {
    std::vector<StreamFrame> frames;
    bool realtime_ok = true;  // every inference_ms < 1000 * duration_s
    bool itu_ok = true;       // every total_ms <= 150
    double max_total_ms = 0.0;
    double mean_total_ms = 0.0;
    double max_inference_ms = 0.0;
    double mean_inference_ms = 0.0;
};

// Fills totals, verdicts, and the simulated pipeline timeline: transport of
// frame k+1 overlaps inference of frame k, so a frame's processing starts at
// the later of its arrival and the previous frame's completion.
inline StreamReport finalize_report(std::vector<StreamFrame> frames) {
    StreamReport r;
    double emit_ms = 0.0, prev_done = 0.0, sum_total = 0.0, sum_inf = 0.0;
    for (size_t i = 0; i < frames.size(); ++i) {
        StreamFrame& f = frames[i];
        if (!(f.duration_s > 0.0)) throw std::invalid_argument("stream: frame duration <= 0");
        if (f.transport_ms < 0.0 || f.inference_ms < 0.0)
            throw std::invalid_argument("stream: negative latency");
        f.index = static_cast<int>(i);
        f.total_ms = f.transport_ms + f.inference_ms;
        const double arrive = emit_ms + f.duration_s * 1000.0 + f.transport_ms;
        f.done_at_ms = std::max(arrive, prev_done) + f.inference_ms;
        prev_done = f.done_at_ms;
        emit_ms += f.duration_s * 1000.0;

        if (!(f.inference_ms < 1000.0 * f.duration_s)) r.realtime_ok = false;
        if (f.total_ms > kItuOneWayMs) r.itu_ok = false;
        r.max_total_ms = std::max(r.max_total_ms, f.total_ms);
        r.max_inference_ms = std::max(r.max_inference_ms, f.inference_ms);
        sum_total += f.total_ms;
        sum_inf += f.inference_ms;
    }
    if (!frames.empty()) {
        r.mean_total_ms = sum_total / static_cast<double>(frames.size());
        r.mean_inference_ms = sum_inf / static_cast<double>(frames.size());
    }
    r.frames = std::move(frames);
    return r;
}

// Pure simulated-clock path: budget arithmetic on injected latencies, no
// audio involved.
inline StreamReport stream_report_from_latencies(const std::vector<double>& durations_s,
                                                 double transport_ms,
                                                 const std::vector<double>& inference_ms) {
    if (durations_s.size() != inference_ms.size())
        throw std::invalid_argument("stream: durations/latencies length mismatch");
    std::vector<StreamFrame> frames(durations_s.size());
    for (size_t i = 0; i < frames.size(); ++i) {
        frames[i].duration_s = durations_s[i];
        frames[i].transport_ms = transport_ms;
        frames[i].inference_ms = inference_ms[i];
    }
    return finalize_report(std::move(frames));
}

struct StreamOptions {
    double transport_ms = 12.0;
    // injected per-frame inference latencies: empty = measure wall-clock;
    // a single value is broadcast to every frame
    std::vector<double> injected_inference_ms;
    bool measure_stages = false;  // only meaningful when measuring
};

struct StreamResult {
    std::vector<AudioClip> enhanced;
    StreamReport report;
};

// Run the chain frame by frame in capture order. Frames are processed
// independently (no cross-frame state), so the concatenated output equals
// batch enhancement of the same slices bit for bit. With injected latencies
// the report uses the simulated clock; otherwise inference is timed.
inline StreamResult simulate_stream(SubaruModel& model, const std::vector<AudioClip>& acm_frames,
                                    const std::vector<AudioClip>* bcm_frames = nullptr,
                                    const StreamOptions& opt = {}) {
    if (acm_frames.empty()) throw std::invalid_argument("simulate_stream: empty frame sequence");
    if (bcm_frames && bcm_frames->size() != acm_frames.size())
        throw std::invalid_argument("simulate_stream: auxiliary frame count mismatch");
    const auto& inj = opt.injected_inference_ms;
    if (!inj.empty() && inj.size() != 1 && inj.size() != acm_frames.size())
        throw std::invalid_argument("simulate_stream: injected latency count mismatch");

    StreamResult res;
    std::vector<StreamFrame> frames;
    for (size_t i = 0; i < acm_frames.size(); ++i) {
        const AudioClip& acm = acm_frames[i];
        StreamFrame f;
        f.duration_s = static_cast<double>(acm.length()) / acm.sample_rate;
        f.transport_ms = opt.transport_ms;

        const AudioClip* bcm = bcm_frames ? &(*bcm_frames)[i] : nullptr;
        const auto t0 = std::chrono::steady_clock::now();
        SubaruModel::StageTimes st;
        AudioClip enhanced = subaru_forward(model, acm, bcm,
                                            opt.measure_stages && inj.empty() ? &st : nullptr);
        const auto t1 = std::chrono::steady_clock::now();

        if (!inj.empty()) {
            f.inference_ms = inj.size() == 1 ? inj[0] : inj[i];
        } else {
            f.inference_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
            if (opt.measure_stages) {
                f.stages_measured = true;
                f.stages = st;
            }
        }
        frames.push_back(f);
        res.enhanced.push_back(std::move(enhanced));
    }
    res.report = finalize_report(std::move(frames));
    return res;
}

// Slice-wise batch enhancement used as the streaming reference: all frames
// stacked into one forward pass, rows split back out.
inline std::vector<AudioClip> batch_enhance(SubaruModel& model,
                                            const std::vector<AudioClip>& acm_frames,
                                            const std::vector<AudioClip>* bcm_frames = nullptr) {
    if (acm_frames.empty()) throw std::invalid_argument("batch_enhance: empty frame sequence");
    if (bcm_frames && bcm_frames->size() != acm_frames.size())
        throw std::invalid_argument("batch_enhance: auxiliary frame count mismatch");
    const int64_t n = static_cast<int64_t>(acm_frames.size());
    const int64_t la = acm_frames[0].length();
    for (const AudioClip& c : acm_frames) {
        if (c.sample_rate != model.cfg.acm_rate)
            throw std::invalid_argument("batch_enhance: frame not at the capture rate");
        if (c.length() != la) throw std::invalid_argument("batch_enhance: ragged frame lengths");
    }
    const int64_t T = model.cfg.acm_stft.frames_for(la);
    const int64_t out_len = T * model.cfg.upsample_factor();

    Tensor acm({n, la});
    for (int64_t i = 0; i < n; ++i)
        std::copy(acm_frames[static_cast<size_t>(i)].samples.begin(),
                  acm_frames[static_cast<size_t>(i)].samples.end(), acm.ptr() + i * la);

    Tensor bcm({n, out_len});
    const Tensor* bcm_ptr = nullptr;
    if (bcm_frames) {
        for (int64_t i = 0; i < n; ++i) {
            AudioClip aligned = (*bcm_frames)[static_cast<size_t>(i)];
            if (aligned.sample_rate != model.cfg.out_rate)
                aligned = resample_linear(aligned, model.cfg.out_rate);
            for (int64_t k = 0; k < out_len; ++k)
                bcm[i * out_len + k] =
                    k < aligned.length() ? aligned.samples[static_cast<size_t>(k)] : 0.0;
        }
        bcm_ptr = &bcm;
    }

    Tape tape;
    auto out = model.forward(tape, acm, bcm_ptr, false);
    const Tensor& y = tape.val(out.enhanced);
    std::vector<AudioClip> clips;
    for (int64_t i = 0; i < n; ++i) {
        AudioClip c;
        c.sample_rate = model.cfg.out_rate;
        c.bit_depth = 16;
        c.samples.assign(y.ptr() + i * out_len, y.ptr() + (i + 1) * out_len);
        clips.push_back(std::move(c));
    }
    return clips;
}

inline AudioClip concat_clips(const std::vector<AudioClip>& clips) {
    if (clips.empty()) throw std::invalid_argument("concat_clips: nothing to join");
    AudioClip out = clips[0];
    for (size_t i = 1; i < clips.size(); ++i) {
        if (clips[i].sample_rate != out.sample_rate)
            throw std::invalid_argument("concat_clips: mixed sample rates");
        out.samples.insert(out.samples.end(), clips[i].samples.begin(), clips[i].samples.end());
    }
    return out;
}

// ---- reporting -------------------------------------------------------------
inline std::string latency_report(const StreamReport& r) {
    std::ostringstream os;
    os << "streaming latency report\n";
    if (r.frames.empty()) {
        os << "  no frames\n";
        return os.str();
    }
    char line[256];
    const bool stages = r.frames.front().stages_measured;
    os << "  frame  dur_s  transport_ms  inference_ms  total_ms  done_at_ms";
    if (stages) os << "  [spec  upsample  temporal  refine]";
    os << "\n";
    for (const StreamFrame& f : r.frames) {
        std::snprintf(line, sizeof(line), "  %5d  %5.3f  %12.2f  %12.2f  %8.2f  %10.2f",
                      f.index, f.duration_s, f.transport_ms, f.inference_ms, f.total_ms,
                      f.done_at_ms);
        os << line;
        if (f.stages_measured) {
            std::snprintf(line, sizeof(line), "  [%.1f  %.1f  %.1f  %.1f]", f.stages.sen_ms,
                          f.stages.ups_ms, f.stages.ten_ms, f.stages.apen_ms);
            os << line;
        }
        os << "\n";
    }
    std::snprintf(line, sizeof(line),
                  "  total latency: max %.2f ms, mean %.2f ms (transport + inference)\n",
                  r.max_total_ms, r.mean_total_ms);
    os << line;
    std::snprintf(line, sizeof(line), "  inference: max %.2f ms, mean %.2f ms\n",
                  r.max_inference_ms, r.mean_inference_ms);
    os << line;
    os << "  realtime (inference < frame duration): " << (r.realtime_ok ? "true" : "false")
       << "\n";
    os << "  one-way delay within 150 ms: " << (r.itu_ok ? "true" : "false") << "\n";
    return os.str();
}

// one machine-readable record per frame
inline std::string stream_records_csv(const StreamReport& r) {
    std::ostringstream os;
    os << "index,duration_s,transport_ms,inference_ms,total_ms,done_at_ms,spec_ms,upsample_ms,"
          "temporal_ms,refine_ms\n";
    char line[320];
    for (const StreamFrame& f : r.frames) {
        std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.17g,%.17g,%.17g", f.index,
                      f.duration_s, f.transport_ms, f.inference_ms, f.total_ms, f.done_at_ms);
        os << line;
        if (f.stages_measured) {
            std::snprintf(line, sizeof(line), ",%.17g,%.17g,%.17g,%.17g", f.stages.sen_ms,
                          f.stages.ups_ms, f.stages.ten_ms, f.stages.apen_ms);
            os << line << "\n";
        } else {
            os << ",,,,\n";
        }
    }
    return os.str();
}

}  // namespace subaru
