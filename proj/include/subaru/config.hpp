#pragma once

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "subaru/degrade.hpp"
#include "subaru/networks.hpp"
#include "subaru/trainer.hpp"

namespace subaru {

// Sectioned key = value configuration. Files look like
//
//   [train]
//   lr = 1e-4        # comments with '#' or ';'
//
// and any key can be overridden on the command line as --train.lr 2e-4.
// Ordered maps keep serialization canonical so a resolved config can be
// written next to every run's outputs.

class ConfigMap {
  public:
    using Section = std::map<std::string, std::string>;

    static std::string trim(const std::string& s) {
        size_t a = 0, b = s.size();
        while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
        while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
        return s.substr(a, b - a);
    }

    static ConfigMap parse(const std::string& text) {
        ConfigMap m;
        std::istringstream in(text);
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const size_t hash = line.find_first_of("#;");
            if (hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw std::invalid_argument("config line " + std::to_string(lineno) +
                                                ": unterminated section header");
                section = trim(line.substr(1, line.size() - 2));
                if (section.empty())
                    throw std::invalid_argument("config line " + std::to_string(lineno) +
                                                ": empty section name");
                m.sections_[section];  // remember even if empty
                continue;
            }
            const size_t eq = line.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument("config line " + std::to_string(lineno) +
                                            ": expected key = value");
            const std::string key = trim(line.substr(0, eq));
            const std::string val = trim(line.substr(eq + 1));
            if (key.empty())
                throw std::invalid_argument("config line " + std::to_string(lineno) +
                                            ": empty key");
            m.sections_[section][key] = val;
        }
        return m;
    }

    static ConfigMap load(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw std::runtime_error("config: cannot open " + path);
        std::stringstream ss;
        ss << f.rdbuf();
        return parse(ss.str());
    }

    void set(const std::string& section, const std::string& key, const std::string& value) {
        sections_[section][key] = value;
    }

    // "section.key" form used by command-line overrides
    void set_dotted(const std::string& dotted, const std::string& value) {
        const size_t dot = dotted.find('.');
        if (dot == std::string::npos || dot == 0 || dot + 1 == dotted.size())
            throw std::invalid_argument("config override must look like section.key: " + dotted);
        set(dotted.substr(0, dot), dotted.substr(dot + 1), value);
    }

    bool has(const std::string& section, const std::string& key) const {
        auto s = sections_.find(section);
        return s != sections_.end() && s->second.count(key) > 0;
    }

    std::string get_str(const std::string& section, const std::string& key,
                        const std::string& fallback) const {
        auto s = sections_.find(section);
        if (s == sections_.end()) return fallback;
        auto k = s->second.find(key);
        return k == s->second.end() ? fallback : k->second;
    }

    double get_double(const std::string& section, const std::string& key, double fallback) const {
        if (!has(section, key)) return fallback;
        const std::string v = get_str(section, key, "");
        size_t used = 0;
        double out;
        try {
            out = std::stod(v, &used);
        } catch (const std::exception&) {
            throw std::invalid_argument("config " + section + "." + key + ": not a number: " + v);
        }
        if (used != v.size())
            throw std::invalid_argument("config " + section + "." + key + ": not a number: " + v);
        return out;
    }

    int64_t get_int(const std::string& section, const std::string& key, int64_t fallback) const {
        if (!has(section, key)) return fallback;
        const std::string v = get_str(section, key, "");
        size_t used = 0;
        int64_t out;
        try {
            out = std::stoll(v, &used);
        } catch (const std::exception&) {
            throw std::invalid_argument("config " + section + "." + key +
                                        ": not an integer: " + v);
        }
        if (used != v.size())
            throw std::invalid_argument("config " + section + "." + key +
                                        ": not an integer: " + v);
        return out;
    }

    bool get_bool(const std::string& section, const std::string& key, bool fallback) const {
        if (!has(section, key)) return fallback;
        const std::string v = get_str(section, key, "");
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw std::invalid_argument("config " + section + "." + key + ": not a boolean: " + v);
    }

    std::string serialize() const {
        std::ostringstream os;
        bool first = true;
        for (const auto& [name, section] : sections_) {
            if (!first) os << "\n";
            first = false;
            if (!name.empty()) os << "[" << name << "]\n";
            for (const auto& [k, v] : section) os << k << " = " << v << "\n";
        }
        return os.str();
    }

    const std::map<std::string, Section>& sections() const { return sections_; }

  private:
    std::map<std::string, Section> sections_;
};

// name of the environment variable holding the default config file path
inline const char* config_env_var() { return "SUBARU_CONFIG"; }

// ---- resolved run configuration --------------------------------------------
struct RunConfig {
    ChainConfig chain;
    DegradationSpec deg;
    DataOptions data;
    TrainConfig train;
    double stream_transport_ms = 12.0;
    double stream_frame_seconds = 1.0;
    std::string run_dir = "runs/default";
    std::string manifest;
    std::string data_root;

    static RunConfig from_map(const ConfigMap& m) {
        RunConfig r;
        r.chain.acm_rate = static_cast<int>(m.get_int("chain", "acm_rate", r.chain.acm_rate));
        r.chain.out_rate = static_cast<int>(m.get_int("chain", "out_rate", r.chain.out_rate));
        r.chain.apen_before_ten =
            m.get_bool("chain", "apen_before_ten", r.chain.apen_before_ten);
        r.chain.init_seed = static_cast<uint64_t>(
            m.get_int("chain", "init_seed", static_cast<int64_t>(r.chain.init_seed)));
        r.chain.acm_stft.n_fft =
            static_cast<int>(m.get_int("stft", "acm_n_fft", r.chain.acm_stft.n_fft));
        r.chain.acm_stft.win_length = r.chain.acm_stft.n_fft;
        r.chain.acm_stft.hop =
            static_cast<int>(m.get_int("stft", "acm_hop", r.chain.acm_stft.hop));
        r.chain.wide_stft.n_fft =
            static_cast<int>(m.get_int("stft", "wide_n_fft", r.chain.wide_stft.n_fft));
        r.chain.wide_stft.win_length = r.chain.wide_stft.n_fft;
        r.chain.wide_stft.hop =
            static_cast<int>(m.get_int("stft", "wide_hop", r.chain.wide_stft.hop));

        r.deg.target_rate = static_cast<int>(m.get_int("degrade", "rate", r.deg.target_rate));
        r.deg.target_bits = static_cast<int>(m.get_int("degrade", "bits", r.deg.target_bits));
        if (m.has("degrade", "snr_db")) r.deg.snr_db = m.get_double("degrade", "snr_db", 0.0);
        r.deg.snr_min = m.get_double("degrade", "snr_min", r.deg.snr_min);
        r.deg.snr_max = m.get_double("degrade", "snr_max", r.deg.snr_max);
        r.deg.hpf_cutoff = m.get_double("degrade", "hpf_cutoff", r.deg.hpf_cutoff);

        r.data.deg = r.deg;
        r.data.randomize_snr = m.get_bool("data", "randomize_snr", r.data.randomize_snr);
        r.data.slice_seconds = m.get_double("data", "slice_seconds", r.data.slice_seconds);
        r.data.bcm_cutoff_hz = m.get_double("data", "bcm_cutoff_hz", r.data.bcm_cutoff_hz);

        TrainConfig& t = r.train;
        t.batch_size = static_cast<int>(m.get_int("train", "batch_size", t.batch_size));
        t.epochs = static_cast<int>(m.get_int("train", "epochs", t.epochs));
        t.lr = m.get_double("train", "lr", t.lr);
        t.weight_decay = m.get_double("train", "weight_decay", t.weight_decay);
        t.beta1 = m.get_double("train", "beta1", t.beta1);
        t.beta2 = m.get_double("train", "beta2", t.beta2);
        t.adam_eps = m.get_double("train", "adam_eps", t.adam_eps);
        t.sched_t0 = m.get_double("train", "sched_t0", t.sched_t0);
        t.sched_tmult = m.get_double("train", "sched_tmult", t.sched_tmult);
        t.eta_min = m.get_double("train", "eta_min", t.eta_min);
        t.grad_clip_norm = m.get_double("train", "grad_clip_norm", t.grad_clip_norm);
        t.grad_accum_batches =
            static_cast<int>(m.get_int("train", "grad_accum_batches", t.grad_accum_batches));
        t.seed = static_cast<uint64_t>(m.get_int("train", "seed", static_cast<int64_t>(t.seed)));
        t.literal_period = m.get_bool("train", "literal_period", t.literal_period);
        t.mix_initial = m.get_double("train", "mix_initial", t.mix_initial);
        t.mix_zero_frac = m.get_double("train", "mix_zero_frac", t.mix_zero_frac);
        t.max_wall_seconds = m.get_double("train", "max_wall_seconds", t.max_wall_seconds);
        t.max_steps = m.get_int("train", "max_steps", t.max_steps);
        t.weights.multi_scale = m.get_double("loss", "w_multi_scale", t.weights.multi_scale);
        t.weights.multi_period = m.get_double("loss", "w_multi_period", t.weights.multi_period);
        t.weights.phase_ip = m.get_double("loss", "w_phase_ip", t.weights.phase_ip);
        t.weights.phase_gd = m.get_double("loss", "w_phase_gd", t.weights.phase_gd);
        t.weights.mr_stft_sc = m.get_double("loss", "w_mr_stft_sc", t.weights.mr_stft_sc);
        t.weights.mr_stft_mag = m.get_double("loss", "w_mr_stft_mag", t.weights.mr_stft_mag);

        r.stream_transport_ms = m.get_double("stream", "transport_ms", r.stream_transport_ms);
        r.stream_frame_seconds =
            m.get_double("stream", "frame_seconds", r.stream_frame_seconds);

        r.run_dir = m.get_str("paths", "run_dir", r.run_dir);
        r.manifest = m.get_str("paths", "manifest", r.manifest);
        r.data_root = m.get_str("paths", "data_root", r.data_root);
        r.train.run_dir = r.run_dir;
        return r;
    }

    ConfigMap to_map() const {
        ConfigMap m;
        auto put_d = [&](const char* s, const char* k, double v) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            m.set(s, k, buf);
        };
        auto put_i = [&](const char* s, const char* k, int64_t v) {
            m.set(s, k, std::to_string(v));
        };
        auto put_b = [&](const char* s, const char* k, bool v) {
            m.set(s, k, v ? "true" : "false");
        };
        put_i("chain", "acm_rate", chain.acm_rate);
        put_i("chain", "out_rate", chain.out_rate);
        put_b("chain", "apen_before_ten", chain.apen_before_ten);
        put_i("chain", "init_seed", static_cast<int64_t>(chain.init_seed));
        put_i("stft", "acm_n_fft", chain.acm_stft.n_fft);
        put_i("stft", "acm_hop", chain.acm_stft.hop);
        put_i("stft", "wide_n_fft", chain.wide_stft.n_fft);
        put_i("stft", "wide_hop", chain.wide_stft.hop);
        put_i("degrade", "rate", deg.target_rate);
        put_i("degrade", "bits", deg.target_bits);
        if (deg.snr_db) put_d("degrade", "snr_db", *deg.snr_db);
        put_d("degrade", "snr_min", deg.snr_min);
        put_d("degrade", "snr_max", deg.snr_max);
        put_d("degrade", "hpf_cutoff", deg.hpf_cutoff);
        put_b("data", "randomize_snr", data.randomize_snr);
        put_d("data", "slice_seconds", data.slice_seconds);
        put_d("data", "bcm_cutoff_hz", data.bcm_cutoff_hz);
        put_i("train", "batch_size", train.batch_size);
        put_i("train", "epochs", train.epochs);
        put_d("train", "lr", train.lr);
        put_d("train", "weight_decay", train.weight_decay);
        put_d("train", "beta1", train.beta1);
        put_d("train", "beta2", train.beta2);
        put_d("train", "adam_eps", train.adam_eps);
        put_d("train", "sched_t0", train.sched_t0);
        put_d("train", "sched_tmult", train.sched_tmult);
        put_d("train", "eta_min", train.eta_min);
        put_d("train", "grad_clip_norm", train.grad_clip_norm);
        put_i("train", "grad_accum_batches", train.grad_accum_batches);
        put_i("train", "seed", static_cast<int64_t>(train.seed));
        put_b("train", "literal_period", train.literal_period);
        put_d("train", "mix_initial", train.mix_initial);
        put_d("train", "mix_zero_frac", train.mix_zero_frac);
        put_d("train", "max_wall_seconds", train.max_wall_seconds);
        put_i("train", "max_steps", train.max_steps);
        put_d("loss", "w_multi_scale", train.weights.multi_scale);
        put_d("loss", "w_multi_period", train.weights.multi_period);
        put_d("loss", "w_phase_ip", train.weights.phase_ip);
        put_d("loss", "w_phase_gd", train.weights.phase_gd);
        put_d("loss", "w_mr_stft_sc", train.weights.mr_stft_sc);
        put_d("loss", "w_mr_stft_mag", train.weights.mr_stft_mag);
        put_d("stream", "transport_ms", stream_transport_ms);
        put_d("stream", "frame_seconds", stream_frame_seconds);
        m.set("paths", "run_dir", run_dir);
        m.set("paths", "manifest", manifest);
        m.set("paths", "data_root", data_root);
        return m;
    }
};

// Writes the fully resolved configuration next to a run's outputs.
inline void write_resolved_config(const RunConfig& cfg, const std::string& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream f(std::filesystem::path(dir) / "config.resolved");
    if (!f) throw std::runtime_error("cannot write resolved config under " + dir);
    f << cfg.to_map().serialize();
}

}  // namespace subaru
