#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "subaru/checkpoint.hpp"
#include "subaru/degrade.hpp"
#include "subaru/losses.hpp"
#include "subaru/metrics.hpp"
#include "subaru/networks.hpp"

namespace subaru {

// End-to-end optimization: Adam with decoupled-from-nothing classic weight
// decay folded into the gradient, cosine-annealing warm restarts stepped on
// fractional epochs, per-batch gradient clipping followed by accumulation,
// and a deterministic batch pipeline mixing recorded and simulated pairs.

struct TrainConfig {
    int batch_size = 8;
    int epochs = 50;
    double lr = 1e-4;
    double weight_decay = 1e-5;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    double sched_t0 = 10.0;    // epochs per restart cycle
    double sched_tmult = 1.0;  // cycle growth factor
    double eta_min = 0.0;
    double grad_clip_norm = 10.0;
    int grad_accum_batches = 2;
    uint64_t seed = 1234;
    LossWeights weights;
    bool literal_period = false;
    double mix_initial = 0.5;    // simulated-pair fraction at epoch 0
    double mix_zero_frac = 0.5;  // fraction of epochs after which it reaches 0
    double max_wall_seconds = 0.0;  // 0 = uncapped
    int64_t max_steps = 0;          // batches; 0 = uncapped
    std::string run_dir = "runs/train";

    void validate() const {
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size < 1");
        if (epochs < 0) throw std::invalid_argument("TrainConfig: negative epochs");
        if (!(lr >= 0.0)) throw std::invalid_argument("TrainConfig: negative lr");
        if (!(weight_decay >= 0.0)) throw std::invalid_argument("TrainConfig: negative decay");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
            throw std::invalid_argument("TrainConfig: betas must lie in [0, 1)");
        if (!(sched_t0 > 0.0)) throw std::invalid_argument("TrainConfig: sched_t0 <= 0");
        if (!(sched_tmult >= 1.0)) throw std::invalid_argument("TrainConfig: sched_tmult < 1");
        if (!(grad_clip_norm > 0.0)) throw std::invalid_argument("TrainConfig: clip norm <= 0");
        if (grad_accum_batches < 1)
            throw std::invalid_argument("TrainConfig: grad_accum_batches < 1");
        if (!(mix_initial >= 0.0 && mix_initial <= 1.0))
            throw std::invalid_argument("TrainConfig: mix_initial outside [0, 1]");
        if (!(mix_zero_frac >= 0.0 && mix_zero_frac <= 1.0))
            throw std::invalid_argument("TrainConfig: mix_zero_frac outside [0, 1]");
    }

    // canonical string for the checkpoint config hash
    std::string fingerprint(const ChainConfig& chain) const {
        char buf[512];
        std::snprintf(buf, sizeof(buf),
                      "b%d e%d lr%.12g wd%.12g b1%.12g b2%.12g t0%.12g tm%.12g clip%.12g "
                      "acc%d seed%llu mix%.12g/%.12g acm%d out%d order%d",
                      batch_size, epochs, lr, weight_decay, beta1, beta2, sched_t0, sched_tmult,
                      grad_clip_norm, grad_accum_batches,
                      static_cast<unsigned long long>(seed), mix_initial, mix_zero_frac,
                      chain.acm_rate, chain.out_rate, chain.apen_before_ten ? 1 : 0);
        return buf;
    }
};

// Simulated-pair fraction for a (fractional) epoch: linear from mix_initial
// down to 0 at epochs * mix_zero_frac, then 0.
inline double mix_schedule(const TrainConfig& cfg, double epoch) {
    const double span = cfg.epochs * cfg.mix_zero_frac;
    if (span <= 0.0) return 0.0;
    const double f = cfg.mix_initial * (1.0 - epoch / span);
    return std::clamp(f, 0.0, cfg.mix_initial);
}

// Cosine annealing with warm restarts on fractional epochs: cycle i spans
// t0 * tmult^i epochs; within a cycle the rate falls from `base` to eta_min
// and snaps back at the boundary.
inline double cosine_warm_restart_lr(double base, double eta_min, double t0, double tmult,
                                     double epoch_frac) {
    double e = epoch_frac, ti = t0;
    while (e >= ti) {
        e -= ti;
        ti *= tmult;
    }
    return eta_min + (base - eta_min) * 0.5 * (1.0 + std::cos(M_PI * e / ti));
}

// ---- deterministic seeding -------------------------------------------------
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    return mix64(base ^ mix64(a ^ mix64(b ^ mix64(c))));
}

// ---- triples ---------------------------------------------------------------
struct TrainItem {
    Tensor acm;    // {1, La} degraded capture at the low rate
    Tensor bcm;    // {1, Lo} aligned auxiliary stream; numel 0 = absent
    Tensor clean;  // {1, Lo} target cropped to the chain output length
};

struct BatchTensors {
    Tensor acm, bcm, clean;
    bool has_bcm = false;
    int n = 0;
};

struct DataOptions {
    DegradationSpec deg;         // snr_db unset -> sampled per item from the range
    bool randomize_snr = true;
    double slice_seconds = 1.0;
    double bcm_cutoff_hz = 900.0;  // colored-filter stand-in for a bone pickup
};

// Fixed-length aligned slices of a manifest split, with on-demand capture
// degradation. "Recorded" items use the bcm file next to the clean one;
// "simulated" items synthesize the auxiliary stream by lowpassing the clean
// slice.
class TripleDataset {
  public:
    TripleDataset() = default;

    TripleDataset(const std::vector<ManifestEntry>& manifest, const std::string& split,
                  const ChainConfig& chain, DataOptions opt, const std::string& root = "")
        : chain_(chain), opt_(opt) {
        const std::filesystem::path base(root);
        for (const ManifestEntry& e : manifest) {
            if (e.split != split) continue;
            AudioClip clean = load_wav((base / e.clean_path).string());
            if (clean.sample_rate != chain.out_rate) clean = resample(clean, chain.out_rate);
            AudioClip bcm;
            const bool with_bcm = !e.bcm_path.empty();
            if (with_bcm) {
                bcm = load_wav((base / e.bcm_path).string());
                if (bcm.sample_rate != chain.out_rate) bcm = resample(bcm, chain.out_rate);
            }
            const auto [first, last] = trim_bounds(clean);
            if (first < 0) continue;
            const int64_t len =
                static_cast<int64_t>(std::llround(opt_.slice_seconds * chain.out_rate));
            for (int64_t s = first; s + len <= last; s += len) {
                AudioClip cs;
                cs.sample_rate = chain.out_rate;
                cs.label = e.clean_path + "#" + std::to_string((s - first) / len);
                cs.samples.assign(clean.samples.begin() + s, clean.samples.begin() + s + len);
                clean_.push_back(std::move(cs));
                AudioClip bs;
                if (with_bcm) {
                    bs.sample_rate = chain.out_rate;
                    bs.samples.resize(static_cast<size_t>(len), 0.0);
                    for (int64_t i = 0; i < len && s + i < bcm.length(); ++i)
                        bs.samples[static_cast<size_t>(i)] =
                            bcm.samples[static_cast<size_t>(s + i)];
                }
                bcm_.push_back(std::move(bs));
            }
        }
        if (clean_.empty()) throw std::runtime_error("TripleDataset: empty split '" + split + "'");
    }

    // slices owned directly (for generated corpora and tests)
    TripleDataset(std::vector<AudioClip> clean_slices, const ChainConfig& chain, DataOptions opt)
        : chain_(chain), opt_(opt), clean_(std::move(clean_slices)) {
        bcm_.resize(clean_.size());
        if (clean_.empty()) throw std::runtime_error("TripleDataset: no slices");
    }

    size_t size() const { return clean_.size(); }
    const AudioClip& clean_slice(size_t i) const { return clean_.at(i); }
    bool has_recorded_bcm(size_t i) const { return !bcm_.at(i).samples.empty(); }
    const ChainConfig& chain() const { return chain_; }
    const DataOptions& options() const { return opt_; }

    // chain output length for one slice
    int64_t item_out_len() const {
        const int64_t la =
            static_cast<int64_t>(std::llround(opt_.slice_seconds * chain_.acm_rate));
        return chain_.acm_stft.frames_for(la) * chain_.upsample_factor();
    }

    TrainItem make_item(size_t i, bool simulated_pair, uint64_t seed) const {
        const AudioClip& clean = clean_.at(i);
        std::mt19937_64 rng(mix64(seed));

        DegradationSpec spec = opt_.deg;
        if (opt_.randomize_snr && !spec.snr_db) {
            std::uniform_real_distribution<double> snr(spec.snr_min, spec.snr_max);
            spec.snr_db = snr(rng);
        }
        AudioClip noise = white_noise(clean.length(), clean.sample_rate, rng());
        AudioClip acm = degrade(clean, spec, &noise);

        const int64_t lo = item_out_len();
        TrainItem item;
        item.acm = Tensor({1, acm.length()});
        std::copy(acm.samples.begin(), acm.samples.end(), item.acm.data.begin());
        item.clean = Tensor({1, lo});
        for (int64_t k = 0; k < lo && k < clean.length(); ++k)
            item.clean[k] = clean.samples[static_cast<size_t>(k)];

        if (simulated_pair) {
            AudioClip aux = lowpass(clean, opt_.bcm_cutoff_hz);
            item.bcm = Tensor({1, lo});
            for (int64_t k = 0; k < lo && k < aux.length(); ++k)
                item.bcm[k] = aux.samples[static_cast<size_t>(k)];
        } else if (!bcm_.at(i).samples.empty()) {
            const AudioClip& aux = bcm_.at(i);
            item.bcm = Tensor({1, lo});
            for (int64_t k = 0; k < lo && k < aux.length(); ++k)
                item.bcm[k] = aux.samples[static_cast<size_t>(k)];
        }
        return item;
    }

  private:
    ChainConfig chain_;
    DataOptions opt_;
    std::vector<AudioClip> clean_;
    std::vector<AudioClip> bcm_;
};

inline BatchTensors collate(const std::vector<TrainItem>& items) {
    if (items.empty()) throw std::invalid_argument("collate: empty batch");
    const int64_t n = static_cast<int64_t>(items.size());
    const int64_t la = items[0].acm.dim(1), lo = items[0].clean.dim(1);
    BatchTensors b;
    b.n = static_cast<int>(n);
    b.acm = Tensor({n, la});
    b.clean = Tensor({n, lo});
    b.bcm = Tensor({n, lo});
    for (int64_t i = 0; i < n; ++i) {
        const TrainItem& it = items[static_cast<size_t>(i)];
        if (it.acm.dim(1) != la || it.clean.dim(1) != lo)
            throw std::invalid_argument("collate: ragged batch");
        std::copy(it.acm.data.begin(), it.acm.data.end(), b.acm.ptr() + i * la);
        std::copy(it.clean.data.begin(), it.clean.data.end(), b.clean.ptr() + i * lo);
        if (it.bcm.numel() > 0) {
            std::copy(it.bcm.data.begin(), it.bcm.data.end(), b.bcm.ptr() + i * lo);
            b.has_bcm = true;
        }
    }
    return b;
}

// Deterministic batch for (epoch, batch index): a per-epoch permutation
// assigns clips to slots; the first round(mix * batch) slots become simulated
// pairs; per-item degradation seeds derive from (seed, epoch, batch, slot).
inline BatchTensors make_batch(const TripleDataset& data, const TrainConfig& cfg, int64_t epoch,
                               int64_t batch_idx) {
    const size_t n = data.size();
    std::vector<size_t> perm(n);
    for (size_t i = 0; i < n; ++i) perm[i] = i;
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 0xEBACull, static_cast<uint64_t>(epoch)));
    std::shuffle(perm.begin(), perm.end(), shuffle_rng);

    const int n_sim = static_cast<int>(std::llround(
        mix_schedule(cfg, static_cast<double>(epoch)) * cfg.batch_size));
    std::vector<TrainItem> items;
    for (int s = 0; s < cfg.batch_size; ++s) {
        const size_t idx =
            perm[(static_cast<size_t>(batch_idx) * cfg.batch_size + s) % n];
        const uint64_t item_seed = derive_seed(cfg.seed, static_cast<uint64_t>(epoch),
                                               static_cast<uint64_t>(batch_idx),
                                               static_cast<uint64_t>(s));
        items.push_back(data.make_item(idx, s < n_sim, item_seed));
    }
    return collate(items);
}

// ---- optimizer pieces ------------------------------------------------------
// Scales trainable gradients so their joint norm is at most max_norm;
// returns the pre-clip norm.
inline double clip_global_norm(const ParamStore& store, std::vector<Tensor>& grads,
                               double max_norm) {
    double sq = 0.0;
    for (int i = 0; i < store.count(); ++i) {
        if (!store.at(i).trainable) continue;
        const Tensor& g = grads[static_cast<size_t>(i)];
        for (int64_t k = 0; k < g.numel(); ++k) sq += g[k] * g[k];
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (int i = 0; i < store.count(); ++i) {
            if (!store.at(i).trainable) continue;
            for (auto& v : grads[static_cast<size_t>(i)].data) v *= s;
        }
    }
    return norm;
}

// One Adam update over the trainable entries. `t` is the 1-based update
// count for bias correction; weight decay is added to the gradient.
inline void adam_update(ParamStore& store, const std::vector<Tensor>& grads, double lr,
                        const TrainConfig& cfg, int64_t t) {
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (int i = 0; i < store.count(); ++i) {
        ParamEntry& e = store.at(i);
        if (!e.trainable) continue;
        if (e.adam_m.numel() == 0) {
            e.adam_m = Tensor(e.value.shape);
            e.adam_v = Tensor(e.value.shape);
        }
        const Tensor* g = &grads[static_cast<size_t>(i)];
        Tensor zero;
        if (g->numel() == 0) {
            zero = Tensor(e.value.shape);
            g = &zero;
        }
        for (int64_t k = 0; k < e.value.numel(); ++k) {
            const double gk = (*g)[k] + cfg.weight_decay * e.value[k];
            e.adam_m[k] = cfg.beta1 * e.adam_m[k] + (1.0 - cfg.beta1) * gk;
            e.adam_v[k] = cfg.beta2 * e.adam_v[k] + (1.0 - cfg.beta2) * gk * gk;
            const double mh = e.adam_m[k] / bc1;
            const double vh = e.adam_v[k] / bc2;
            e.value[k] -= lr * mh / (std::sqrt(vh) + cfg.adam_eps);
        }
    }
}

// ---- step metrics log ------------------------------------------------------
class MetricsLog {
  public:
    void open(const std::string& path, bool append = false) {
        const bool fresh = !append || !std::filesystem::exists(path);
        f_.open(path, append ? std::ios::app : std::ios::out);
        if (!f_) throw std::runtime_error("MetricsLog: cannot open " + path);
        if (fresh)
            f_ << "step,lr,multi_scale,multi_period,phase_ip,phase_gd,mr_stft_sc,mr_stft_mag,"
                  "total\n";
    }

    void append_step(int64_t step, double lr, const LossBreakdown& b) {
        char buf[400];
        std::snprintf(buf, sizeof(buf),
                      "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      static_cast<long long>(step), lr, b.multi_scale, b.multi_period,
                      b.phase_ip, b.phase_gd, b.mr_stft_sc, b.mr_stft_mag, b.total);
        f_ << buf;
        f_.flush();
    }

  private:
    std::ofstream f_;
};

// ---- helpers ---------------------------------------------------------------
inline AudioClip row_clip(const Tensor& t, int64_t row, int rate) {
    const int64_t L = t.dim(1);
    AudioClip c;
    c.sample_rate = rate;
    c.samples.assign(t.ptr() + row * L, t.ptr() + (row + 1) * L);
    return c;
}

// phase grids {N, T, F} of clean waveforms under the refiner's analysis
inline Tensor clean_phase_grid(const Tensor& clean, const StftConfig& cfg, int rate) {
    const int64_t n = clean.dim(0), L = clean.dim(1);
    const int64_t T = cfg.frames_for(L), F = cfg.bins();
    Tensor out({n, T, F});
    for (int64_t r = 0; r < n; ++r) {
        Spectrogram s = stft(row_clip(clean, r, rate), cfg);
        std::copy(s.phase.data.begin(), s.phase.data.end(), out.ptr() + r * T * F);
    }
    return out;
}

// ---- the trainer -----------------------------------------------------------
class Trainer {
  public:
    Trainer(SubaruModel& model, TrainConfig cfg, double batches_per_epoch)
        : model_(model), cfg_(std::move(cfg)), bpe_(batches_per_epoch) {
        cfg_.validate();
        accum_.assign(model_.store.size(), Tensor());
    }

    const TrainConfig& config() const { return cfg_; }
    int64_t steps() const { return step_; }
    int64_t updates() const { return updates_; }
    double epoch_frac() const { return bpe_ > 0.0 ? static_cast<double>(step_) / bpe_ : 0.0; }
    double current_lr() const {
        return cosine_warm_restart_lr(cfg_.lr, cfg_.eta_min, cfg_.sched_t0, cfg_.sched_tmult,
                                      epoch_frac());
    }
    double last_grad_norm() const { return last_norm_; }
    double last_lr() const { return last_lr_; }

    // forward + objective + backward on one batch; clip; accumulate; apply
    // Adam once grad_accum_batches micro-gradients have arrived.
    LossBreakdown train_step(const BatchTensors& batch) {
        const double lr_now = current_lr();
        Tape t;
        auto out = model_.forward(t, batch.acm, batch.has_bcm ? &batch.bcm : nullptr, true);
        if (t.val(out.enhanced).dim(1) != batch.clean.dim(1))
            throw std::invalid_argument("train_step: clean target length must match the chain output");
        Value clean_v = t.input(batch.clean, false);
        Tensor pc = clean_phase_grid(batch.clean, model_.cfg.wide_stft, model_.cfg.out_rate);
        TotalLoss tl = total_loss(t, out.enhanced, clean_v, out.refined.phase,
                                  t.input(std::move(pc), false), cfg_.weights,
                                  cfg_.literal_period);
        LossBreakdown b = tl.values(t);
        if (!b.finite()) {
            std::ostringstream os;
            os << "train_step: non-finite loss at step " << step_ << " (ms " << b.multi_scale
               << " mp " << b.multi_period << " ip " << b.phase_ip << " gd " << b.phase_gd
               << " sc " << b.mr_stft_sc << " mag " << b.mr_stft_mag << ")";
            throw std::runtime_error(os.str());
        }
        t.backward(tl.total);
        std::vector<Tensor> grads(model_.store.size());
        t.export_param_grads(grads);
        last_norm_ = clip_global_norm(model_.store, grads, cfg_.grad_clip_norm);

        for (size_t i = 0; i < grads.size(); ++i) {
            if (grads[i].numel() == 0) continue;
            if (accum_[i].numel() == 0) accum_[i] = Tensor(grads[i].shape);
            for (int64_t k = 0; k < grads[i].numel(); ++k) accum_[i][k] += grads[i][k];
        }
        ++accum_n_;
        ++step_;
        last_lr_ = lr_now;

        if (accum_n_ >= cfg_.grad_accum_batches) {
            if (accum_n_ > 1) {
                const double inv = 1.0 / static_cast<double>(accum_n_);
                for (auto& g : accum_)
                    for (auto& v : g.data) v *= inv;
            }
            adam_update(model_.store, accum_, lr_now, cfg_, ++updates_);
            for (auto& g : accum_) g = Tensor();
            accum_n_ = 0;
        }
        return b;
    }

    CheckpointMeta meta(uint64_t config_hash) const {
        CheckpointMeta m;
        m.config_hash = config_hash;
        m.step = step_;
        m.opt_updates = updates_;
        m.epoch_frac = epoch_frac();
        m.source_rate = model_.cfg.acm_rate;
        m.target_rate = model_.cfg.out_rate;
        return m;
    }

    void restore_counters(const CheckpointMeta& m) {
        step_ = m.step;
        updates_ = m.opt_updates;
        accum_n_ = 0;
        for (auto& g : accum_) g = Tensor();
    }

  private:
    SubaruModel& model_;
    TrainConfig cfg_;
    double bpe_;
    int64_t step_ = 0;
    int64_t updates_ = 0;
    int accum_n_ = 0;
    std::vector<Tensor> accum_;
    double last_norm_ = 0.0;
    double last_lr_ = 0.0;
};

// ---- validation ------------------------------------------------------------
struct ValResult {
    double lsd = 0.0;
    double si_sdr = 0.0;
    double baseline_lsd = 0.0;     // naive upsample of the degraded capture
    double baseline_si_sdr = 0.0;
    int items = 0;
};

inline ValResult validate_model(SubaruModel& model, const TripleDataset& val,
                                uint64_t seed = 0x5a17, int max_items = 0) {
    ValResult r;
    const size_t n =
        max_items > 0 ? std::min<size_t>(val.size(), static_cast<size_t>(max_items)) : val.size();
    for (size_t i = 0; i < n; ++i) {
        TrainItem it = val.make_item(i, !val.has_recorded_bcm(i), derive_seed(seed, i));
        Tape t;
        auto out = model.forward(t, it.acm, it.bcm.numel() > 0 ? &it.bcm : nullptr, false);
        AudioClip enh = row_clip(t.val(out.enhanced), 0, model.cfg.out_rate);
        AudioClip cln = row_clip(it.clean, 0, model.cfg.out_rate);
        AudioClip acm = row_clip(it.acm, 0, model.cfg.acm_rate);
        AudioClip up = resample_linear(acm, model.cfg.out_rate);
        up.samples.resize(cln.samples.size(), 0.0);
        r.lsd += lsd(cln, enh);
        r.si_sdr += si_sdr(cln, enh);
        r.baseline_lsd += lsd(cln, up);
        r.baseline_si_sdr += si_sdr(cln, up);
        ++r.items;
    }
    if (r.items > 0) {
        r.lsd /= r.items;
        r.si_sdr /= r.items;
        r.baseline_lsd /= r.items;
        r.baseline_si_sdr /= r.items;
    }
    return r;
}

// ---- the loop --------------------------------------------------------------
struct StopGate {
    bool on_val_beating_baseline = false;  // stop once LSD and SI-SDR both beat it
    double lsd_margin = 0.0;
    double si_sdr_margin = 0.0;
    int min_epochs = 1;
};

struct TrainLoopResult {
    int64_t steps = 0;
    int epochs_run = 0;
    double best_val_lsd = std::numeric_limits<double>::infinity();
    std::string best_checkpoint, last_checkpoint, init_checkpoint, metrics_path;
    std::vector<ValResult> val_history;
    bool stopped_early = false;
};

inline TrainLoopResult train_loop(SubaruModel& model, const TripleDataset& train,
                                  const TripleDataset& val, const TrainConfig& cfg,
                                  const StopGate& gate = {}, int val_max_items = 0) {
    cfg.validate();
    namespace fs = std::filesystem;
    fs::create_directories(cfg.run_dir);
    const uint64_t hash = fnv1a(cfg.fingerprint(model.cfg));
    const double bpe = std::max<double>(
        1.0, std::ceil(static_cast<double>(train.size()) / cfg.batch_size));
    Trainer tr(model, cfg, bpe);

    TrainLoopResult res;
    res.init_checkpoint = (fs::path(cfg.run_dir) / "init.ckpt").string();
    res.last_checkpoint = (fs::path(cfg.run_dir) / "last.ckpt").string();
    res.best_checkpoint = (fs::path(cfg.run_dir) / "best.ckpt").string();
    res.metrics_path = (fs::path(cfg.run_dir) / "metrics.csv").string();
    save_checkpoint(res.init_checkpoint, model.store, tr.meta(hash));

    MetricsLog log;
    log.open(res.metrics_path);
    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    bool stop = false;
    for (int epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
        for (int64_t b = 0; b < static_cast<int64_t>(bpe) && !stop; ++b) {
            BatchTensors batch = make_batch(train, cfg, epoch, b);
            LossBreakdown lb = tr.train_step(batch);
            log.append_step(tr.steps(), tr.last_lr(), lb);
            if (cfg.max_steps > 0 && tr.steps() >= cfg.max_steps) stop = true;
            if (cfg.max_wall_seconds > 0.0 && elapsed() > cfg.max_wall_seconds) stop = true;
        }
        ValResult v = validate_model(model, val, 0x5a17, val_max_items);
        res.val_history.push_back(v);
        if (v.lsd < res.best_val_lsd) {
            res.best_val_lsd = v.lsd;
            save_checkpoint(res.best_checkpoint, model.store, tr.meta(hash));
        }
        save_checkpoint(res.last_checkpoint, model.store, tr.meta(hash));
        res.epochs_run = epoch + 1;
        if (gate.on_val_beating_baseline && epoch + 1 >= gate.min_epochs &&
            v.lsd < v.baseline_lsd - gate.lsd_margin &&
            v.si_sdr > v.baseline_si_sdr + gate.si_sdr_margin) {
            res.stopped_early = true;
            stop = true;
        }
    }
    if (cfg.epochs == 0) {
        res.last_checkpoint.clear();  // only init.ckpt exists
        res.best_checkpoint.clear();
    }
    res.steps = tr.steps();
    return res;
}

}  // namespace subaru
