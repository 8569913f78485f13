// Command-line front end: wires capture degradation, training, enhancement,
// stream simulation, evaluation, power accounting, and the rate/bits sweep
// into reproducible runs. Every subcommand reads the same sectioned config
// (file via --config or $SUBARU_CONFIG, any key overridable as
// --section.key value) and drops its outputs plus the resolved config under
// one run directory.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "subaru/checkpoint.hpp"
#include "subaru/config.hpp"
#include "subaru/metrics.hpp"
#include "subaru/networks.hpp"
#include "subaru/plot.hpp"
#include "subaru/power.hpp"
#include "subaru/stream.hpp"
#include "subaru/synth.hpp"
#include "subaru/trainer.hpp"

namespace fs = std::filesystem;
using namespace subaru;

namespace {

// ---- config plumbing -------------------------------------------------------

struct CliCommon {
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;  // section.key -> value
};

// Pull "--section.key value" / "--section.key=value" pairs out of argv before
// CLI11 sees them; they can name any config key, so they cannot be declared
// as ordinary flags.
std::vector<std::string> extract_overrides(int argc, char** argv, CliCommon& common) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) {
        std::string a = argv[i];
        if (a.rfind("--", 0) == 0 && a.size() > 2) {
            const std::string body = a.substr(2);
            const size_t eq = body.find('=');
            const std::string name = eq == std::string::npos ? body : body.substr(0, eq);
            const size_t dot = name.find('.');
            if (dot != std::string::npos && dot > 0 && dot + 1 < name.size()) {
                std::string value;
                if (eq != std::string::npos) {
                    value = body.substr(eq + 1);
                } else {
                    if (i + 1 >= argc)
                        throw CLI::ParseError("override --" + name + " needs a value", 2);
                    value = argv[++i];
                }
                common.overrides.emplace_back(name, value);
                continue;
            }
        }
        args.push_back(std::move(a));
    }
    return args;
}

RunConfig resolve_config(const CliCommon& common) {
    ConfigMap m;
    std::string path = common.config_path;
    if (path.empty()) {
        const char* env = std::getenv(config_env_var());
        if (env && *env) path = env;
    }
    if (!path.empty()) m = ConfigMap::load(path);
    if (!common.overrides.empty()) {
        // reject typo'd override keys instead of silently ignoring them
        ConfigMap universe = RunConfig{}.to_map();
        universe.set("degrade", "snr_db", "0");  // optional, absent from the defaults
        for (const auto& [dotted, value] : common.overrides) {
            const size_t dot = dotted.find('.');
            if (!universe.has(dotted.substr(0, dot), dotted.substr(dot + 1)))
                throw CLI::ParseError("unknown config key --" + dotted, 2);
            m.set_dotted(dotted, value);
        }
    }
    return RunConfig::from_map(m);
}

fs::path ensure_run_dir(const RunConfig& cfg) {
    fs::create_directories(cfg.run_dir);
    write_resolved_config(cfg, cfg.run_dir);
    return cfg.run_dir;
}

std::vector<int> parse_int_list(const std::string& csv, const char* what) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            size_t used = 0;
            out.push_back(std::stoi(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw std::runtime_error(std::string(what) + ": bad list entry '" + tok + "'");
        }
    }
    if (out.empty()) throw std::runtime_error(std::string(what) + ": empty list");
    return out;
}

RateBits parse_rate_bits(const std::string& s, const char* what) {
    RateBits rb{};
    char extra = 0;
    if (std::sscanf(s.c_str(), "%d:%d%c", &rb.rate_hz, &rb.bits, &extra) != 2)
        throw std::runtime_error(std::string(what) + ": expected RATE:BITS, got '" + s + "'");
    return rb;
}

// ---- degrade ---------------------------------------------------------------

int run_degrade(const RunConfig& cfg, const std::string& in_path, const std::string& out_path,
                const std::string& noise_path) {
    AudioClip clip = load_wav(in_path);
    DegradationSpec spec = cfg.deg;
    AudioClip noise;
    const AudioClip* noise_ptr = nullptr;
    if (!noise_path.empty()) {
        noise = load_wav(noise_path);
        if (noise.sample_rate != clip.sample_rate) noise = resample(noise, clip.sample_rate);
        noise_ptr = &noise;
    }
    AudioClip out = degrade(clip, spec, noise_ptr);
    save_wav(out_path, out);
    std::printf("degraded %s (%d Hz/%d-bit) -> %s (%d Hz/%d-bit, %lld samples)\n",
                in_path.c_str(), clip.sample_rate, clip.bit_depth, out_path.c_str(),
                out.sample_rate, out.bit_depth, static_cast<long long>(out.length()));
    return 0;
}

// ---- make-data -------------------------------------------------------------

int run_make_data(const RunConfig& cfg, const std::string& out_dir, int clips, double seconds,
                  int speakers, double val_frac, double test_frac, uint64_t seed, bool with_aux) {
    if (clips <= 0) throw std::runtime_error("make-data: need at least one clip");
    fs::create_directories(out_dir);
    std::vector<ManifestEntry> entries;
    const int n_val = static_cast<int>(std::llround(val_frac * clips));
    const int n_test = static_cast<int>(std::llround(test_frac * clips));
    for (int i = 0; i < clips; ++i) {
        const uint64_t speaker = static_cast<uint64_t>(i % std::max(1, speakers));
        AudioClip clean = synth_speech_like(seconds, cfg.chain.out_rate,
                                            seed + static_cast<uint64_t>(i), speaker);
        char name[64];
        std::snprintf(name, sizeof(name), "clip_%03d.wav", i);
        save_wav((fs::path(out_dir) / name).string(), clean);
        ManifestEntry e;
        e.clean_path = name;
        e.speaker_id = "spk" + std::to_string(speaker);
        if (with_aux) {
            AudioClip aux = bcm_colorize(clean, cfg.data.bcm_cutoff_hz);
            char aux_name[64];
            std::snprintf(aux_name, sizeof(aux_name), "clip_%03d_aux.wav", i);
            save_wav((fs::path(out_dir) / aux_name).string(), aux);
            e.bcm_path = aux_name;
        }
        // deterministic tail split: train first, then val, then test
        if (i >= clips - n_test)
            e.split = "test";
        else if (i >= clips - n_test - n_val)
            e.split = "val";
        else
            e.split = "train";
        entries.push_back(std::move(e));
    }
    const std::string manifest = (fs::path(out_dir) / "manifest.csv").string();
    save_manifest(manifest, entries);
    std::printf("wrote %d clips (%.1f s @ %d Hz) and %s\n", clips, seconds, cfg.chain.out_rate,
                manifest.c_str());
    return 0;
}

// ---- train -----------------------------------------------------------------

int run_train(RunConfig cfg, int val_items, bool stop_on_baseline) {
    if (cfg.manifest.empty())
        throw std::runtime_error("train: no manifest (set paths.manifest or --manifest)");
    const auto entries = load_manifest(cfg.manifest);
    const std::string root =
        cfg.data_root.empty() ? fs::path(cfg.manifest).parent_path().string() : cfg.data_root;
    TripleDataset train_set(entries, "train", cfg.chain, cfg.data, root);
    TripleDataset val_set(entries, "val", cfg.chain, cfg.data, root);
    std::printf("train slices: %zu   val slices: %zu\n", train_set.size(), val_set.size());

    ensure_run_dir(cfg);
    SubaruModel model(cfg.chain);
    std::printf("model parameters: %lld\n", static_cast<long long>(model.param_count()));

    StopGate gate;
    gate.on_val_beating_baseline = stop_on_baseline;
    TrainLoopResult res = train_loop(model, train_set, val_set, cfg.train, gate, val_items);

    std::printf("ran %lld steps over %d epochs%s\n", static_cast<long long>(res.steps),
                res.epochs_run, res.stopped_early ? " (stopped at the validation gate)" : "");
    if (!res.val_history.empty()) {
        const ValResult& v = res.val_history.back();
        std::printf("final val: LSD %.4f (baseline %.4f)  SI-SDR %.2f dB (baseline %.2f)\n",
                    v.lsd, v.baseline_lsd, v.si_sdr, v.baseline_si_sdr);
    }
    std::printf("metrics: %s\n", res.metrics_path.c_str());
    if (!res.best_checkpoint.empty()) std::printf("best checkpoint: %s\n", res.best_checkpoint.c_str());
    return 0;
}

// ---- enhance ---------------------------------------------------------------

// Pad the capture so the analysis grid divides it and the encoder ladder has
// enough frames, run the chain, crop back to the rate-scaled input length.
AudioClip enhance_clip(SubaruModel& model, AudioClip acm, const AudioClip* bcm,
                       SubaruModel::StageTimes* stages = nullptr) {
    if (acm.sample_rate != model.cfg.acm_rate) acm = resample(acm, model.cfg.acm_rate);
    const int64_t orig = acm.length();
    const int hop = model.cfg.acm_stft.hop;
    const int64_t min_len = static_cast<int64_t>(32) * hop;
    int64_t padded = ((orig + hop - 1) / hop) * hop;
    padded = std::max(padded, min_len);
    acm.samples.resize(static_cast<size_t>(padded), 0.0);
    AudioClip out = subaru_forward(model, acm, bcm, stages);
    const int64_t want = orig * (model.cfg.out_rate / model.cfg.acm_rate);
    if (static_cast<int64_t>(out.samples.size()) > want) out.samples.resize(want);
    return out;
}

int run_enhance(const RunConfig& cfg, const std::string& ckpt, const std::string& in_path,
                const std::string& out_path, const std::string& bcm_path) {
    SubaruModel model(cfg.chain);
    load_checkpoint(ckpt, model.store);
    AudioClip acm = load_wav(in_path);
    AudioClip bcm;
    const AudioClip* bcm_ptr = nullptr;
    if (!bcm_path.empty()) {
        bcm = load_wav(bcm_path);
        bcm_ptr = &bcm;
    }
    SubaruModel::StageTimes st;
    AudioClip out = enhance_clip(model, acm, bcm_ptr, &st);
    save_wav(out_path, out);
    std::printf("enhanced %s -> %s (%d Hz, %lld samples)\n", in_path.c_str(), out_path.c_str(),
                out.sample_rate, static_cast<long long>(out.length()));
    std::printf("stage times: spec %.1f ms  upsample %.1f ms  temporal %.1f ms  refine %.1f ms\n",
                st.sen_ms, st.ups_ms, st.ten_ms, st.apen_ms);
    return 0;
}

// ---- stream-sim ------------------------------------------------------------

int run_stream_sim(const RunConfig& cfg, const std::string& in_path, const std::string& ckpt,
                   const std::string& out_path, std::vector<double> inject, int frames,
                   bool stages) {
    const fs::path run_dir = ensure_run_dir(cfg);
    StreamReport report;
    std::vector<AudioClip> enhanced;

    if (in_path.empty()) {
        // pure budget arithmetic: no audio, no model
        if (inject.empty())
            throw std::runtime_error("stream-sim: without an input wav, provide --inject");
        if (frames <= 0) throw std::runtime_error("stream-sim: --frames must be positive");
        std::vector<double> durations(static_cast<size_t>(frames), cfg.stream_frame_seconds);
        std::vector<double> lat(static_cast<size_t>(frames),
                                inject.size() == 1 ? inject[0] : 0.0);
        if (inject.size() > 1) {
            if (inject.size() != static_cast<size_t>(frames))
                throw std::runtime_error("stream-sim: --inject count must be 1 or --frames");
            lat = inject;
        }
        report = stream_report_from_latencies(durations, cfg.stream_transport_ms, lat);
    } else {
        if (ckpt.empty()) throw std::runtime_error("stream-sim: an input wav needs --ckpt");
        SubaruModel model(cfg.chain);
        load_checkpoint(ckpt, model.store);
        AudioClip acm = load_wav(in_path);
        if (acm.sample_rate != model.cfg.acm_rate) acm = resample(acm, model.cfg.acm_rate);
        const int64_t frame_len =
            static_cast<int64_t>(std::llround(cfg.stream_frame_seconds * model.cfg.acm_rate));
        // the encoder ladder halves the frame axis five times; give it room
        if (model.cfg.acm_stft.frames_for(frame_len) < 32)
            throw std::runtime_error(
                "stream-sim: stream.frame_seconds too short for the encoder (need >= " +
                std::to_string(model.cfg.acm_stft.hop * 32 + model.cfg.acm_stft.win_length) +
                " capture samples per frame)");
        std::vector<AudioClip> acm_frames;
        for (int64_t s = 0; s + frame_len <= acm.length(); s += frame_len) {
            AudioClip f;
            f.sample_rate = model.cfg.acm_rate;
            f.samples.assign(acm.samples.begin() + s, acm.samples.begin() + s + frame_len);
            acm_frames.push_back(std::move(f));
        }
        if (acm_frames.empty())
            throw std::runtime_error("stream-sim: input shorter than one frame");
        StreamOptions opt;
        opt.transport_ms = cfg.stream_transport_ms;
        opt.injected_inference_ms = std::move(inject);
        opt.measure_stages = stages;
        StreamResult res = simulate_stream(model, acm_frames, nullptr, opt);
        report = std::move(res.report);
        enhanced = std::move(res.enhanced);
        if (!out_path.empty()) save_wav(out_path, concat_clips(enhanced));
    }

    std::fputs(latency_report(report).c_str(), stdout);
    const fs::path records = run_dir / "stream_records.csv";
    std::ofstream(records) << stream_records_csv(report);
    std::printf("records: %s\n", records.string().c_str());
    return 0;
}

// ---- evaluate --------------------------------------------------------------

std::vector<std::pair<fs::path, fs::path>> pair_up(const std::string& ref, const std::string& est) {
    std::vector<std::pair<fs::path, fs::path>> pairs;
    if (fs::is_directory(ref) != fs::is_directory(est))
        throw std::runtime_error("evaluate: --ref and --est must both be files or both dirs");
    if (!fs::is_directory(ref)) {
        pairs.emplace_back(ref, est);
        return pairs;
    }
    std::map<std::string, fs::path> ref_files;
    for (const auto& e : fs::directory_iterator(ref))
        if (e.path().extension() == ".wav") ref_files[e.path().filename().string()] = e.path();
    for (const auto& e : fs::directory_iterator(est))
        if (e.path().extension() == ".wav") {
            auto it = ref_files.find(e.path().filename().string());
            if (it != ref_files.end()) pairs.emplace_back(it->second, e.path());
        }
    std::sort(pairs.begin(), pairs.end());
    return pairs;
}

int run_evaluate(const RunConfig& cfg, const std::string& ref, const std::string& est,
                 std::string out_records) {
    const auto pairs = pair_up(ref, est);
    if (pairs.empty()) throw std::runtime_error("evaluate: no matching wav pairs");
    std::vector<AudioClip> refs, ests;
    std::vector<std::string> ids;
    for (const auto& [r, e] : pairs) {
        AudioClip cr = load_wav(r.string());
        AudioClip ce = load_wav(e.string());
        if (cr.sample_rate != ce.sample_rate)
            throw std::runtime_error("evaluate: sample-rate mismatch for " + r.filename().string());
        const int64_t n = std::min(cr.length(), ce.length());
        cr.samples.resize(static_cast<size_t>(n));
        ce.samples.resize(static_cast<size_t>(n));
        refs.push_back(std::move(cr));
        ests.push_back(std::move(ce));
        ids.push_back(r.filename().string());
    }
    MetricReport rep = evaluate_clips(refs, ests, ids);
    std::fputs(format_metric_table(rep).c_str(), stdout);
    if (out_records.empty())
        out_records = (ensure_run_dir(cfg) / "metric_records.csv").string();
    save_metric_records(out_records, rep);
    std::printf("records: %s\n", out_records.c_str());
    return 0;
}

// ---- power-report ----------------------------------------------------------

int run_power_report(const RunConfig& cfg, const std::string& from, const std::string& to,
                     bool write_records) {
    const RateBits high = parse_rate_bits(from, "power-report --from");
    const RateBits low = parse_rate_bits(to, "power-report --to");
    std::fputs(power_report_text(high, low).c_str(), stdout);
    if (write_records) {
        const fs::path run_dir = ensure_run_dir(cfg);
        const fs::path csv = run_dir / "power_table.csv";
        std::ofstream f(csv);
        f << "rate_hz,bits,current_ua,power_mw\n";
        char buf[128];
        for (const AdcPoint& p : adc_power_table()) {
            std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g\n", p.rate_hz, p.bits, p.current_ua,
                          p.power_mw);
            f << buf;
        }
        std::printf("records: %s\n", csv.string().c_str());
    }
    return 0;
}

// ---- sweep -----------------------------------------------------------------

// Degrade synthetic wideband clips across the rate/bits grid, reconstruct with
// the plain sinc resampler (no model), and tabulate mean spectral distance.
// The source rate defaults to the top sweep rate so the reference fills the
// whole analysis band; an octave of near-silence above the source content
// would let quantization-noise images dominate the distance instead of the
// lost signal.
int run_sweep(const RunConfig& cfg, int clips, double seconds, uint64_t seed, int source_rate,
              const std::string& rates_csv, const std::string& bits_csv) {
    const std::vector<int> rates = parse_int_list(rates_csv, "sweep --rates");
    const std::vector<int> bits = parse_int_list(bits_csv, "sweep --bits");
    for (int r : rates)
        if (r <= 0 || r > source_rate)
            throw std::runtime_error("sweep: rate " + std::to_string(r) +
                                     " outside (0, source rate]");

    std::vector<AudioClip> clean;
    for (int i = 0; i < clips; ++i)
        clean.push_back(synth_speech_like(seconds, source_rate, seed + static_cast<uint64_t>(i),
                                          static_cast<uint64_t>(i % 4)));

    const fs::path run_dir = ensure_run_dir(cfg);
    const fs::path csv_path = run_dir / "sweep.csv";
    std::ofstream csv(csv_path);
    csv << "rate_hz,bits,mean_lsd\n";

    std::printf("mean LSD, %d clips (%.1f s @ %d Hz source)\n", clips, seconds, source_rate);
    std::printf("%8s", "rate_hz");
    for (int b : bits) std::printf("  %8d-bit", b);
    std::printf("\n");

    std::vector<PlotSeries> series(bits.size());
    for (size_t j = 0; j < bits.size(); ++j) series[j].label = std::to_string(bits[j]) + "-bit";

    for (int rate : rates) {
        std::printf("%8d", rate);
        for (size_t j = 0; j < bits.size(); ++j) {
            DegradationSpec spec;
            spec.target_rate = rate;
            spec.target_bits = bits[j];
            spec.hpf_cutoff = 0.0;  // isolate the rate/bits effect
            double mean = 0.0;
            for (const AudioClip& c : clean) {
                AudioClip up = resample(degrade(c, spec), source_rate);
                up.samples.resize(c.samples.size(), 0.0);
                mean += lsd(c, up);
            }
            mean /= static_cast<double>(clean.size());
            char buf[128];
            std::snprintf(buf, sizeof(buf), "%d,%d,%.17g\n", rate, bits[j], mean);
            csv << buf;
            std::printf("  %12.4f", mean);
            series[j].x.push_back(rate / 1000.0);
            series[j].y.push_back(mean);
        }
        std::printf("\n");
    }
    csv.close();

    const fs::path svg_path = run_dir / "sweep.svg";
    write_svg_lines(svg_path.string(), "degradation sweep", "sampling rate (kHz)", "mean LSD",
                    series);
    std::printf("records: %s\nchart:   %s\n", csv_path.string().c_str(),
                svg_path.string().c_str());
    return 0;
}

// ---- plot ------------------------------------------------------------------

int run_plot(const RunConfig& cfg, const std::string& sweep_csv, const std::string& train_csv) {
    if (sweep_csv.empty() && train_csv.empty())
        throw CLI::ParseError("plot: provide --sweep and/or --train", 2);
    const fs::path run_dir = ensure_run_dir(cfg);

    if (!sweep_csv.empty()) {
        std::ifstream f(sweep_csv);
        if (!f) throw std::runtime_error("plot: cannot open " + sweep_csv);
        std::string line;
        if (!std::getline(f, line) || line != "rate_hz,bits,mean_lsd")
            throw std::runtime_error("plot: bad sweep header in " + sweep_csv);
        std::map<int, PlotSeries> by_bits;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            int rate = 0, b = 0;
            double v = 0.0;
            if (std::sscanf(line.c_str(), "%d,%d,%lf", &rate, &b, &v) != 3)
                throw std::runtime_error("plot: bad sweep row: " + line);
            PlotSeries& s = by_bits[b];
            if (s.label.empty()) s.label = std::to_string(b) + "-bit";
            s.x.push_back(rate / 1000.0);
            s.y.push_back(v);
        }
        std::vector<PlotSeries> series;
        for (auto& [b, s] : by_bits) series.push_back(std::move(s));
        const fs::path out = run_dir / "sweep.svg";
        write_svg_lines(out.string(), "degradation sweep", "sampling rate (kHz)", "mean LSD",
                        series);
        std::printf("chart: %s\n", out.string().c_str());
    }

    if (!train_csv.empty()) {
        std::ifstream f(train_csv);
        if (!f) throw std::runtime_error("plot: cannot open " + train_csv);
        std::string line;
        if (!std::getline(f, line))
            throw std::runtime_error("plot: empty metrics file " + train_csv);
        std::stringstream hdr(line);
        std::vector<std::string> cols;
        std::string tok;
        while (std::getline(hdr, tok, ',')) cols.push_back(tok);
        if (cols.size() < 3 || cols[0] != "step")
            throw std::runtime_error("plot: bad metrics header in " + train_csv);
        std::vector<PlotSeries> series(cols.size() - 2);  // skip step and lr
        for (size_t j = 2; j < cols.size(); ++j) series[j - 2].label = cols[j];
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            std::stringstream row(line);
            std::vector<double> vals;
            while (std::getline(row, tok, ',')) vals.push_back(std::stod(tok));
            if (vals.size() != cols.size())
                throw std::runtime_error("plot: ragged metrics row: " + line);
            for (size_t j = 2; j < vals.size(); ++j) {
                series[j - 2].x.push_back(vals[0]);
                series[j - 2].y.push_back(vals[j]);
            }
        }
        const fs::path out = run_dir / "loss_curves.svg";
        write_svg_lines(out.string(), "training losses", "step", "loss", series);
        std::printf("chart: %s\n", out.string().c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CliCommon common;
    std::vector<std::string> args;
    try {
        args = extract_overrides(argc, argv, common);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }

    CLI::App app{
        "sub-Nyquist capture simulation, wideband reconstruction, and power/latency accounting"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");
    app.add_option("--config", common.config_path,
                   "sectioned key=value config file (default: $" + std::string(config_env_var()) +
                       ")");

    // degrade
    std::string in_path, out_path, noise_path;
    int rate = 0, bits = 0;
    double snr = -1e9, hpf = -1e9;
    auto* c_degrade = app.add_subcommand("degrade", "simulate the low-rate low-bit capture");
    c_degrade->add_option("input", in_path, "source wav")->required();
    c_degrade->add_option("output", out_path, "degraded wav")->required();
    c_degrade->add_option("--rate", rate, "target sample rate (Hz)");
    c_degrade->add_option("--bits", bits, "target bit depth (8/10/12/16)");
    c_degrade->add_option("--snr", snr, "mix noise at this SNR (dB)");
    c_degrade->add_option("--hpf", hpf, "highpass cutoff (Hz, 0 disables)");
    c_degrade->add_option("--noise", noise_path, "noise wav (default: white noise)");

    // make-data
    std::string data_dir;
    int md_clips = 24, md_speakers = 4;
    double md_seconds = 2.0, md_val = 0.2, md_test = 0.0;
    uint64_t md_seed = 1;
    bool md_aux = false;
    auto* c_mkdata =
        app.add_subcommand("make-data", "synthesize a deterministic corpus and manifest");
    c_mkdata->add_option("--out", data_dir, "output directory")->required();
    c_mkdata->add_option("--clips", md_clips, "number of clips");
    c_mkdata->add_option("--seconds", md_seconds, "clip duration");
    c_mkdata->add_option("--speakers", md_speakers, "distinct synthetic voices");
    c_mkdata->add_option("--val-frac", md_val, "fraction of clips for validation");
    c_mkdata->add_option("--test-frac", md_test, "fraction of clips for test");
    c_mkdata->add_option("--seed", md_seed, "corpus seed");
    c_mkdata->add_flag("--with-aux", md_aux, "also write low-band auxiliary pickups");

    // train
    std::string manifest_flag, data_root_flag, run_dir_flag;
    int tr_val_items = 0;
    bool tr_gate = false;
    auto* c_train = app.add_subcommand("train", "train the reconstruction chain on a manifest");
    c_train->add_option("--manifest", manifest_flag, "manifest csv (overrides paths.manifest)");
    c_train->add_option("--data-root", data_root_flag, "base dir for manifest paths");
    c_train->add_option("--out", run_dir_flag, "run directory (overrides paths.run_dir)");
    c_train->add_option("--val-items", tr_val_items, "cap validation items per epoch (0 = all)");
    c_train->add_flag("--stop-when-beating", tr_gate,
                      "stop once validation beats the naive-upsample baseline");

    // enhance
    std::string ckpt_path, bcm_path;
    auto* c_enhance = app.add_subcommand("enhance", "reconstruct wideband audio from a capture");
    c_enhance->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
    c_enhance->add_option("input", in_path, "capture wav")->required();
    c_enhance->add_option("output", out_path, "enhanced wav")->required();
    c_enhance->add_option("--bcm", bcm_path, "auxiliary body-conduction wav");

    // stream-sim
    std::vector<double> inject;
    int ss_frames = 10;
    bool ss_stages = false;
    std::string ss_in, ss_ckpt, ss_out;
    auto* c_stream = app.add_subcommand("stream-sim", "frame-by-frame streaming latency budget");
    c_stream->add_option("input", ss_in, "capture wav (omit for pure budget arithmetic)");
    c_stream->add_option("--ckpt", ss_ckpt, "checkpoint file (required with an input wav)");
    c_stream->add_option("--out", ss_out, "write the streamed enhancement here");
    c_stream->add_option("--inject", inject, "injected inference latency ms (1 value or per frame)");
    c_stream->add_option("--frames", ss_frames, "frame count for pure budget mode");
    c_stream->add_flag("--stages", ss_stages, "time the four stages when measuring");

    // evaluate
    std::string ev_ref, ev_est, ev_out;
    auto* c_eval = app.add_subcommand("evaluate", "score estimates against references");
    c_eval->add_option("--ref", ev_ref, "reference wav or directory")->required();
    c_eval->add_option("--est", ev_est, "estimate wav or directory")->required();
    c_eval->add_option("--out", ev_out, "records csv (default: <run_dir>/metric_records.csv)");

    // power-report
    std::string pw_from = "24000:12", pw_to = "4000:8";
    bool pw_records = false;
    auto* c_power = app.add_subcommand("power-report", "capture-ADC power table and savings");
    c_power->add_option("--from", pw_from, "expensive operating point RATE:BITS");
    c_power->add_option("--to", pw_to, "cheap operating point RATE:BITS");
    c_power->add_flag("--records", pw_records, "also write power_table.csv into the run dir");

    // sweep
    int sw_clips = 20, sw_source = 24000;
    double sw_seconds = 2.0;
    uint64_t sw_seed = 7;
    std::string sw_rates = "24000,12000,10000,8000,6000,4000", sw_bits = "8,12";
    auto* c_sweep = app.add_subcommand("sweep", "spectral distance across the rate/bits grid");
    c_sweep->add_option("--clips", sw_clips, "clips per grid cell");
    c_sweep->add_option("--seconds", sw_seconds, "clip duration");
    c_sweep->add_option("--seed", sw_seed, "corpus seed");
    c_sweep->add_option("--source-rate", sw_source, "wideband source rate (Hz)");
    c_sweep->add_option("--rates", sw_rates, "comma-separated target rates");
    c_sweep->add_option("--bits", sw_bits, "comma-separated bit depths");

    // plot
    std::string pl_sweep, pl_train;
    auto* c_plot = app.add_subcommand("plot", "render record files as SVG charts");
    c_plot->add_option("--sweep", pl_sweep, "sweep.csv from the sweep subcommand");
    c_plot->add_option("--train", pl_train, "metrics.csv from a training run");

    try {
        std::reverse(args.begin(), args.end());  // CLI11's vector overload wants reversed argv
        app.parse(args);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        RunConfig cfg = resolve_config(common);
        if (app.got_subcommand(c_degrade)) {
            if (c_degrade->count("--rate")) cfg.deg.target_rate = rate;
            if (c_degrade->count("--bits")) cfg.deg.target_bits = bits;
            if (c_degrade->count("--snr")) cfg.deg.snr_db = snr;
            if (c_degrade->count("--hpf")) cfg.deg.hpf_cutoff = hpf;
            return run_degrade(cfg, in_path, out_path, noise_path);
        }
        if (app.got_subcommand(c_mkdata))
            return run_make_data(cfg, data_dir, md_clips, md_seconds, md_speakers, md_val,
                                 md_test, md_seed, md_aux);
        if (app.got_subcommand(c_train)) {
            if (!manifest_flag.empty()) cfg.manifest = manifest_flag;
            if (!data_root_flag.empty()) cfg.data_root = data_root_flag;
            if (!run_dir_flag.empty()) {
                cfg.run_dir = run_dir_flag;
                cfg.train.run_dir = run_dir_flag;
            }
            return run_train(cfg, tr_val_items, tr_gate);
        }
        if (app.got_subcommand(c_enhance))
            return run_enhance(cfg, ckpt_path, in_path, out_path, bcm_path);
        if (app.got_subcommand(c_stream))
            return run_stream_sim(cfg, ss_in, ss_ckpt, ss_out, inject, ss_frames, ss_stages);
        if (app.got_subcommand(c_eval)) return run_evaluate(cfg, ev_ref, ev_est, ev_out);
        if (app.got_subcommand(c_power)) return run_power_report(cfg, pw_from, pw_to, pw_records);
        if (app.got_subcommand(c_sweep))
            return run_sweep(cfg, sw_clips, sw_seconds, sw_seed, sw_source, sw_rates, sw_bits);
        if (app.got_subcommand(c_plot)) return run_plot(cfg, pl_sweep, pl_train);
        std::cerr << "no subcommand dispatched\n";
        return 2;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
