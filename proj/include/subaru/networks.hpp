#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "subaru/audio.hpp"
#include "subaru/degrade.hpp"
#include "subaru/nn_ops.hpp"
#include "subaru/params.hpp"
#include "subaru/spectral.hpp"
#include "subaru/stft_ops.hpp"

namespace subaru {

// The four-network reconstruction chain:
//
//   air-mic stream (4 kHz)  -> spectral enhancer   (2-d U-net over the
//                               low-rate amplitude spectrogram)
//                           -> frame upsampler     (transposed-conv vocoder,
//                               62.5 frames/s -> 16 kHz waveform)
//   bone-mic stream (16 kHz) ->+
//                           -> temporal enhancer   (1-d U-net fusing the two
//                               streams in the waveform domain)
//                           -> amplitude/phase refiner (dual-stream spectral
//                               correction with cross-coupling)
//
// All parameters live in one ParamStore; construction order fixes both the
// RNG stream and the checkpoint layout. Heads that feed residual paths are
// zero-initialized, so an untrained chain passes signals through unchanged
// up to the vocoder stage.

struct ChainConfig {
    int acm_rate = 4000;    // air-conduction capture rate
    int out_rate = 16000;   // reconstruction target rate
    StftConfig acm_stft;    // analysis for the low-rate stream
    StftConfig wide_stft;   // analysis for the wideband refiner
    bool apen_before_ten = false;  // exchange the order of the last two stages
    int mamba_state = 16;
    int mamba_conv = 4;
    uint64_t init_seed = 20260823;

    ChainConfig() {
        acm_stft.n_fft = 256;
        acm_stft.hop = 64;
        acm_stft.win_length = 256;
        acm_stft.pad = PadMode::aligned;
        wide_stft.n_fft = 1024;
        wide_stft.hop = 128;
        wide_stft.win_length = 1024;
        wide_stft.pad = PadMode::center;
    }

    int64_t upsample_factor() const {
        // frames at hop 64 on 4 kHz come out at 16 kHz samples per frame
        return acm_stft.hop * (out_rate / acm_rate);
    }
};

namespace net_detail {

constexpr double kLeak = 0.1;

struct ConvP {
    int w = -1;
    int b = -1;
};

struct BnP {
    int g = -1;
    int b = -1;
    int rm = -1;
    int rv = -1;
};

// Declaration-side helper: everything added through one of these shares a
// name prefix and the model RNG.
struct Decl {
    ParamStore& s;
    std::string pfx;
    std::mt19937_64& rng;

    ConvP conv(const std::string& n, std::vector<int64_t> shape, bool bias) {
        ConvP p;
        const int64_t co = shape[0];
        p.w = s.add(pfx + n + ".w", init_conv(std::move(shape), rng));
        if (bias) p.b = s.add(pfx + n + ".b", Tensor({co}));
        return p;
    }
    ConvP tconv(const std::string& n, std::vector<int64_t> shape, bool bias) {
        ConvP p;
        const int64_t co = shape[1];
        p.w = s.add(pfx + n + ".w", init_tconv(std::move(shape), rng));
        if (bias) p.b = s.add(pfx + n + ".b", Tensor({co}));
        return p;
    }
    ConvP lin(const std::string& n, int64_t dout, int64_t din, bool bias) {
        ConvP p;
        p.w = s.add(pfx + n + ".w", init_linear({dout, din}, rng));
        if (bias) p.b = s.add(pfx + n + ".b", Tensor({dout}));
        return p;
    }
    ConvP zero_conv(const std::string& n, std::vector<int64_t> shape) {
        ConvP p;
        const int64_t co = shape[0];
        p.w = s.add(pfx + n + ".w", Tensor(std::move(shape)));
        p.b = s.add(pfx + n + ".b", Tensor({co}));
        return p;
    }
    ConvP zero_lin(const std::string& n, int64_t dout, int64_t din) {
        ConvP p;
        p.w = s.add(pfx + n + ".w", Tensor({dout, din}));
        p.b = s.add(pfx + n + ".b", Tensor({dout}));
        return p;
    }
    BnP bn(const std::string& n, int64_t c) {
        BnP p;
        p.g = s.add(pfx + n + ".gamma", Tensor::full({c}, 1.0));
        p.b = s.add(pfx + n + ".beta", Tensor({c}));
        p.rm = s.add(pfx + n + ".running_mean", Tensor({c}), false);
        p.rv = s.add(pfx + n + ".running_var", Tensor::full({c}, 1.0), false);
        return p;
    }
    int raw(const std::string& n, Tensor t, bool trainable = true) {
        return s.add(pfx + n, std::move(t), trainable);
    }
};

inline Value P(Tape& t, ParamStore& s, int id) { return t.param(s.at(id).value, id); }
inline Value Pb(Tape& t, ParamStore& s, int id) {
    return id >= 0 ? t.param(s.at(id).value, id) : Value{};
}

inline Value bn(Tape& t, ParamStore& s, const BnP& p, Value x, bool training) {
    return batch_norm(t, x, P(t, s, p.g), P(t, s, p.b), s.at(p.rm).value, s.at(p.rv).value,
                      training);
}

inline Value lrelu(Tape& t, Value x) { return t.leaky_relu_(x, kLeak); }

}  // namespace net_detail

// ---- gated state-space block ----------------------------------------------
// Input-dependent diagonal state space with a gating branch, wrapped in a
// residual. Expansion kept at 1 so the block's footprint stays proportional
// to d^2 rather than 4 d^2.
struct MambaBlock {
    int d = 0;
    int rank = 0;  // low-rank width of the step-size projection
    int n_state = 16;
    int k_conv = 4;
    net_detail::ConvP in_proj;   // {2d, d}
    int conv_w = -1, conv_b = -1;
    net_detail::ConvP x_proj;    // {rank + 2 n_state, d}
    net_detail::ConvP dt_proj;   // {d, rank}
    int a_log = -1, dskip = -1;
    net_detail::ConvP out_proj;  // {d, d}

    void declare(net_detail::Decl dc, int width, int n_state_ = 16, int k_conv_ = 4) {
        d = width;
        n_state = n_state_;
        k_conv = k_conv_;
        rank = (width + 15) / 16;
        in_proj = dc.lin("in_proj", 2 * d, d, false);
        conv_w = dc.raw("conv.w", init_conv({d, 1, k_conv}, dc.rng).reshaped({d, k_conv}));
        conv_b = dc.raw("conv.b", Tensor({d}));
        x_proj = dc.lin("x_proj", rank + 2 * n_state, d, false);
        dt_proj = dc.lin("dt_proj", d, rank, true);
        // step sizes start log-spaced in [1e-3, 0.1]; stored through the
        // softplus inverse so the forward recovers them exactly
        {
            Tensor& bias = dc.s.at(dt_proj.b).value;
            for (int64_t j = 0; j < d; ++j) {
                const double frac = d > 1 ? static_cast<double>(j) / (d - 1) : 0.0;
                const double dt = std::exp(std::log(1e-3) + frac * (std::log(0.1) - std::log(1e-3)));
                bias[j] = std::log(std::expm1(dt));
            }
        }
        {
            Tensor a({d, n_state});
            for (int64_t dd = 0; dd < d; ++dd)
                for (int64_t ss = 0; ss < n_state; ++ss)
                    a[dd * n_state + ss] = std::log(static_cast<double>(ss + 1));
            a_log = dc.raw("a_log", std::move(a));
        }
        dskip = dc.raw("d_skip", Tensor::full({d}, 1.0));
        out_proj = dc.lin("out_proj", d, d, true);
    }

    // x {N, L, d} -> {N, L, d}
    Value forward(Tape& t, ParamStore& s, Value x) const {
        using namespace net_detail;
        const int64_t n = t.val(x).dim(0), L = t.val(x).dim(1);
        Value xz = linear(t, x, P(t, s, in_proj.w), Value{});
        Value flat = t.reshape(xz, {n * L, 2 * d});
        Value xi = t.reshape(t.slice_ch(flat, 0, d), {n, L, d});
        Value z = t.reshape(t.slice_ch(flat, d, 2 * d), {n, L, d});

        xi = t.transpose12(xi);  // {N, d, L}
        xi = depthwise_conv1d(t, xi, P(t, s, conv_w), P(t, s, conv_b), true);
        xi = t.silu_(xi);
        xi = t.transpose12(xi);  // {N, L, d}

        Value xp = linear(t, xi, P(t, s, x_proj.w), Value{});
        Value xpf = t.reshape(xp, {n * L, rank + 2 * n_state});
        Value dtr = t.reshape(t.slice_ch(xpf, 0, rank), {n, L, rank});
        Value Bm = t.reshape(t.slice_ch(xpf, rank, rank + n_state), {n, L, n_state});
        Value Cm = t.reshape(t.slice_ch(xpf, rank + n_state, rank + 2 * n_state),
                             {n, L, n_state});
        Value delta = t.softplus_(linear(t, dtr, P(t, s, dt_proj.w), Pb(t, s, dt_proj.b)));
        Value A = t.scale(t.exp_(P(t, s, a_log)), -1.0);
        Value y = selective_scan(t, xi, delta, A, Bm, Cm, P(t, s, dskip));
        y = t.mul(y, t.silu_(z));
        y = linear(t, y, P(t, s, out_proj.w), Pb(t, s, out_proj.b));
        return t.add(x, y);
    }
};

// ---- spectral enhancer (2-d U-net over the low-rate spectrogram) -----------
struct SpectralEnhancer {
    struct Res2d {
        net_detail::ConvP c1, c2, c3;
        net_detail::BnP b1, b2, b3;
        int64_t dil = 1;
    };
    struct Enc {
        net_detail::ConvP down;
        net_detail::BnP down_bn;
        Res2d res;
    };
    struct Dec {
        net_detail::ConvP up;
        net_detail::BnP up_bn;
        net_detail::ConvP merge;
        net_detail::BnP merge_bn;
        Res2d res;
    };
    static constexpr std::array<int64_t, 5> kCh = {8, 16, 24, 32, 64};
    static constexpr std::array<int64_t, 5> kDil = {1, 1, 2, 3, 5};
    std::array<Enc, 5> enc;
    MambaBlock mid;
    std::array<Dec, 5> dec;
    net_detail::ConvP head;  // 1x1, zero-initialized residual head

    static Res2d declare_res(net_detail::Decl dc, const std::string& n, int64_t c, int64_t dil) {
        Res2d r;
        r.dil = dil;
        r.c1 = dc.conv(n + ".c1", {c, c, 4, 4}, false);
        r.b1 = dc.bn(n + ".b1", c);
        r.c2 = dc.conv(n + ".c2", {c, c, 4, 4}, false);
        r.b2 = dc.bn(n + ".b2", c);
        r.c3 = dc.conv(n + ".c3", {c, c, 4, 4}, false);
        r.b3 = dc.bn(n + ".b3", c);
        return r;
    }

    void declare(ParamStore& s, std::mt19937_64& rng, const ChainConfig& cfg) {
        net_detail::Decl dc{s, "sen.", rng};
        int64_t in_ch = 1;
        for (int i = 0; i < 5; ++i) {
            const std::string n = "enc" + std::to_string(i + 1);
            enc[i].down = dc.conv(n + ".down", {kCh[i], in_ch, 4, 4}, false);
            enc[i].down_bn = dc.bn(n + ".down_bn", kCh[i]);
            enc[i].res = declare_res(dc, n + ".res", kCh[i], kDil[i]);
            in_ch = kCh[i];
        }
        mid.declare({s, "sen.mid.", rng}, 64, cfg.mamba_state, cfg.mamba_conv);
        const std::array<int64_t, 5> dec_in = {64, 64, 32, 24, 16};
        const std::array<int64_t, 5> dec_out = {64, 32, 24, 16, 8};
        const std::array<int64_t, 5> skip_ch = {32, 24, 16, 8, 1};
        const std::array<int64_t, 5> dec_dil = {5, 3, 2, 1, 1};
        for (int i = 0; i < 5; ++i) {
            const std::string n = "dec" + std::to_string(i + 1);
            dec[i].up = dc.tconv(n + ".up", {dec_in[i], dec_out[i], 4, 4}, false);
            dec[i].up_bn = dc.bn(n + ".up_bn", dec_out[i]);
            dec[i].merge = dc.conv(n + ".merge", {dec_out[i], dec_out[i] + skip_ch[i], 4, 4}, false);
            dec[i].merge_bn = dc.bn(n + ".merge_bn", dec_out[i]);
            dec[i].res = declare_res(dc, n + ".res", dec_out[i], dec_dil[i]);
        }
        head = dc.zero_conv("head", {1, 8, 1, 1});
    }

    Value apply_res(Tape& t, ParamStore& s, const Res2d& r, Value x, bool training) const {
        using namespace net_detail;
        Value u = lrelu(t, bn(t, s, r.b1, conv2d_same(t, x, P(t, s, r.c1.w), Value{}, r.dil), training));
        u = lrelu(t, bn(t, s, r.b2, conv2d_same(t, u, P(t, s, r.c2.w), Value{}, r.dil), training));
        u = bn(t, s, r.b3, conv2d_same(t, u, P(t, s, r.c3.w), Value{}, 1), training);
        return lrelu(t, t.add(x, u));
    }

    // x {N, 1, T, F} (log-amplitude) -> same shape, residual enhanced
    Value forward(Tape& t, ParamStore& s, Value x, bool training) const {
        using namespace net_detail;
        std::array<Value, 5> skips;  // pre-stage activations, deepest last
        Value h = x;
        for (int i = 0; i < 5; ++i) {
            skips[i] = h;
            h = conv2d(t, h, P(t, s, enc[i].down.w), Value{}, 2, 1, 1, 1, 1, 1);
            h = lrelu(t, bn(t, s, enc[i].down_bn, h, training));
            h = apply_res(t, s, enc[i].res, h, training);
        }
        {
            const int64_t n = t.val(h).dim(0), hb = t.val(h).dim(2), wb = t.val(h).dim(3);
            Value seq = t.reshape(h, {n, 64, hb * wb});
            seq = t.transpose12(seq);
            seq = mid.forward(t, s, seq);
            seq = t.transpose12(seq);
            h = t.reshape(seq, {n, 64, hb, wb});
        }
        for (int i = 0; i < 5; ++i) {
            Value skip = skips[4 - i];
            const Tensor& ts = t.val(skip);
            h = tconv2d(t, h, P(t, s, dec[i].up.w), Value{}, 2, 1);
            h = lrelu(t, bn(t, s, dec[i].up_bn, h, training));
            h = crop_pad_hw(t, h, ts.dim(2), ts.dim(3));
            h = t.concat_ch(h, skip);
            h = conv2d_same(t, h, P(t, s, dec[i].merge.w), Value{}, 1);
            h = lrelu(t, bn(t, s, dec[i].merge_bn, h, training));
            h = apply_res(t, s, dec[i].res, h, training);
        }
        Value r = conv2d(t, h, P(t, s, head.w), Pb(t, s, head.b), 1, 1, 0, 0, 0, 0);
        return t.add(x, r);
    }
};

// ---- frame upsampler (transposed-conv vocoder) -----------------------------
struct FrameUpsampler {
    struct Stage {
        net_detail::ConvP up;
        std::array<net_detail::ConvP, 3> res;
        int64_t stride = 0, kernel = 0;
    };
    net_detail::ConvP pre;   // k7, bins -> 256
    std::array<Stage, 4> st; // strides 8,8,2,2
    net_detail::ConvP post;  // k7, 16 -> 1
    static constexpr std::array<int64_t, 3> kResDil = {1, 3, 9};

    void declare(ParamStore& s, std::mt19937_64& rng, const ChainConfig& cfg) {
        net_detail::Decl dc{s, "ups.", rng};
        const int64_t bins = cfg.acm_stft.bins();
        pre = dc.conv("pre", {256, bins, 7}, true);
        const std::array<int64_t, 4> strides = {8, 8, 2, 2};
        const std::array<int64_t, 4> kernels = {16, 16, 4, 4};
        const std::array<int64_t, 5> ch = {256, 128, 64, 32, 16};
        for (int i = 0; i < 4; ++i) {
            const std::string n = "st" + std::to_string(i + 1);
            st[i].stride = strides[i];
            st[i].kernel = kernels[i];
            st[i].up = dc.tconv(n + ".up", {ch[i], ch[i + 1], kernels[i]}, true);
            for (int j = 0; j < 3; ++j)
                st[i].res[j] = dc.conv(n + ".res" + std::to_string(j + 1), {ch[i + 1], ch[i + 1], 3}, true);
        }
        post = dc.conv("post", {1, 16, 7}, true);
    }

    // x {N, bins, T} -> {N, 1, T * 256}
    Value forward(Tape& t, ParamStore& s, Value x) const {
        using namespace net_detail;
        Value h = conv1d_same(t, x, P(t, s, pre.w), Pb(t, s, pre.b));
        for (const Stage& stage : st) {
            h = lrelu(t, h);
            h = tconv1d(t, h, P(t, s, stage.up.w), Pb(t, s, stage.up.b), stage.stride,
                        (stage.kernel - stage.stride) / 2);
            for (int j = 0; j < 3; ++j) {
                Value u = conv1d_same(t, lrelu(t, h), P(t, s, stage.res[j].w),
                                      Pb(t, s, stage.res[j].b), kResDil[j]);
                h = t.add(h, u);
            }
        }
        h = conv1d_same(t, lrelu(t, h), P(t, s, post.w), Pb(t, s, post.b));
        return t.tanh_(h);
    }
};

// ---- temporal enhancer (1-d U-net, two input streams) ----------------------
struct TemporalEnhancer {
    struct ResInv {
        net_detail::ConvP c1, c2;  // c -> 4c -> c
        net_detail::BnP b1, b2;
        int64_t dil = 1;
    };
    struct Enc {
        net_detail::ConvP down;
        net_detail::BnP down_bn;
        ResInv res;
    };
    struct Dec {
        net_detail::ConvP up;
        net_detail::BnP up_bn;
        net_detail::ConvP merge;
        net_detail::BnP merge_bn;
        ResInv res;
    };
    static constexpr std::array<int64_t, 4> kCh = {10, 20, 40, 80};
    static constexpr std::array<int64_t, 4> kDil = {1, 2, 3, 5};
    std::array<Enc, 4> enc;
    MambaBlock mid;
    std::array<Dec, 4> dec;
    net_detail::ConvP head;  // k1, zero-initialized residual head

    static ResInv declare_res(net_detail::Decl dc, const std::string& n, int64_t c, int64_t dil) {
        ResInv r;
        r.dil = dil;
        r.c1 = dc.conv(n + ".c1", {4 * c, c, 4}, false);
        r.b1 = dc.bn(n + ".b1", 4 * c);
        r.c2 = dc.conv(n + ".c2", {c, 4 * c, 4}, false);
        r.b2 = dc.bn(n + ".b2", c);
        return r;
    }

    void declare(ParamStore& s, std::mt19937_64& rng, const ChainConfig& cfg) {
        net_detail::Decl dc{s, "ten.", rng};
        int64_t in_ch = 2;
        for (int i = 0; i < 4; ++i) {
            const std::string n = "enc" + std::to_string(i + 1);
            enc[i].down = dc.conv(n + ".down", {kCh[i], in_ch, 4}, false);
            enc[i].down_bn = dc.bn(n + ".down_bn", kCh[i]);
            enc[i].res = declare_res(dc, n + ".res", kCh[i], kDil[i]);
            in_ch = kCh[i];
        }
        mid.declare({s, "ten.mid.", rng}, 80, cfg.mamba_state, cfg.mamba_conv);
        const std::array<int64_t, 4> dec_in = {80, 80, 40, 20};
        const std::array<int64_t, 4> dec_out = {80, 40, 20, 10};
        const std::array<int64_t, 4> skip_ch = {40, 20, 10, 2};
        const std::array<int64_t, 4> dec_dil = {5, 3, 2, 1};
        for (int i = 0; i < 4; ++i) {
            const std::string n = "dec" + std::to_string(i + 1);
            dec[i].up = dc.tconv(n + ".up", {dec_in[i], dec_out[i], 4}, false);
            dec[i].up_bn = dc.bn(n + ".up_bn", dec_out[i]);
            dec[i].merge = dc.conv(n + ".merge", {dec_out[i], dec_out[i] + skip_ch[i], 4}, false);
            dec[i].merge_bn = dc.bn(n + ".merge_bn", dec_out[i]);
            dec[i].res = declare_res(dc, n + ".res", dec_out[i], dec_dil[i]);
        }
        head = dc.zero_conv("head", {1, 10, 1});
    }

    Value apply_res(Tape& t, ParamStore& s, const ResInv& r, Value x, bool training) const {
        using namespace net_detail;
        Value u = lrelu(t, bn(t, s, r.b1, conv1d_same(t, x, P(t, s, r.c1.w), Value{}, r.dil), training));
        u = bn(t, s, r.b2, conv1d_same(t, u, P(t, s, r.c2.w), Value{}, 1), training);
        return lrelu(t, t.add(x, u));
    }

    // x {N, 2, L}: channel 0 carries the signal path (kept as the residual
    // base), channel 1 the auxiliary stream (zeros when absent).
    Value forward(Tape& t, ParamStore& s, Value x, bool training) const {
        using namespace net_detail;
        std::array<Value, 4> skips;
        Value h = x;
        for (int i = 0; i < 4; ++i) {
            skips[i] = h;
            h = conv1d(t, h, P(t, s, enc[i].down.w), Value{}, 2, 1, 1, 1);
            h = lrelu(t, bn(t, s, enc[i].down_bn, h, training));
            h = apply_res(t, s, enc[i].res, h, training);
        }
        {
            Value seq = t.transpose12(h);  // {N, Lb, 80}
            seq = mid.forward(t, s, seq);
            h = t.transpose12(seq);
        }
        for (int i = 0; i < 4; ++i) {
            Value skip = skips[3 - i];
            const Tensor& ts = t.val(skip);
            h = tconv1d(t, h, P(t, s, dec[i].up.w), Value{}, 2, 1);
            h = lrelu(t, bn(t, s, dec[i].up_bn, h, training));
            h = crop_pad_last(t, h, ts.dim(2));
            h = t.concat_ch(h, skip);
            h = conv1d_same(t, h, P(t, s, dec[i].merge.w), Value{}, 1);
            h = lrelu(t, bn(t, s, dec[i].merge_bn, h, training));
            h = apply_res(t, s, dec[i].res, h, training);
        }
        Value r = conv1d(t, h, P(t, s, head.w), Pb(t, s, head.b), 1, 1, 0, 0);
        return t.add(t.slice_ch(x, 0, 1), r);
    }
};

// ---- amplitude/phase refiner ----------------------------------------------
struct AmpPhaseRefiner {
    struct Block {
        int ln_g = -1, ln_b = -1;
        int dw_w = -1, dw_b = -1;
        net_detail::ConvP pw1, pw2;
    };
    static constexpr int64_t kWidth = 128;
    net_detail::ConvP amp_in, ph_in;      // bins -> width
    std::array<Block, 2> amp_blk, ph_blk;
    net_detail::ConvP cross_pa, cross_ap; // phase->amp, amp->phase coupling
    net_detail::ConvP amp_head;           // width -> bins, zero
    net_detail::ConvP ph_head;            // width -> 2*bins, zero
    int64_t bins = 0;

    Block declare_block(net_detail::Decl dc, const std::string& n) {
        Block b;
        b.ln_g = dc.raw(n + ".ln.gamma", Tensor::full({kWidth}, 1.0));
        b.ln_b = dc.raw(n + ".ln.beta", Tensor({kWidth}));
        b.dw_w = dc.raw(n + ".dw.w", init_conv({kWidth, 1, 7}, dc.rng).reshaped({kWidth, 7}));
        b.dw_b = dc.raw(n + ".dw.b", Tensor({kWidth}));
        b.pw1 = dc.lin(n + ".pw1", 4 * kWidth, kWidth, true);
        b.pw2 = dc.lin(n + ".pw2", kWidth, 4 * kWidth, true);
        return b;
    }

    void declare(ParamStore& s, std::mt19937_64& rng, const ChainConfig& cfg) {
        net_detail::Decl dc{s, "apen.", rng};
        bins = cfg.wide_stft.bins();
        amp_in = dc.lin("amp_in", kWidth, bins, true);
        ph_in = dc.lin("ph_in", kWidth, bins, true);
        for (int i = 0; i < 2; ++i) {
            amp_blk[i] = declare_block(dc, "amp_blk" + std::to_string(i + 1));
            ph_blk[i] = declare_block(dc, "ph_blk" + std::to_string(i + 1));
        }
        cross_pa = dc.lin("cross_pa", kWidth, kWidth, true);
        cross_ap = dc.lin("cross_ap", kWidth, kWidth, true);
        amp_head = dc.zero_lin("amp_head", bins, kWidth);
        ph_head = dc.zero_lin("ph_head", 2 * bins, kWidth);
    }

    Value apply_block(Tape& t, ParamStore& s, const Block& b, Value h) const {
        using namespace net_detail;
        Value u = layer_norm(t, h, P(t, s, b.ln_g), P(t, s, b.ln_b));
        u = t.transpose12(u);  // {N, width, T}
        u = depthwise_conv1d(t, u, P(t, s, b.dw_w), P(t, s, b.dw_b), false);
        u = t.transpose12(u);
        u = linear(t, u, P(t, s, b.pw1.w), Pb(t, s, b.pw1.b));
        u = t.gelu_(u);
        u = linear(t, u, P(t, s, b.pw2.w), Pb(t, s, b.pw2.b));
        return t.add(h, u);
    }

    struct Out {
        Value wav;        // {N, out_len}
        Value amplitude;  // {N, T, bins}
        Value phase;      // {N, T, bins}
    };

    // wav {N, L} at the wideband rate -> corrected waveform + its spectral
    // factors. With zeroed heads this is exactly analysis followed by
    // synthesis.
    Out forward(Tape& t, ParamStore& s, Value wav, const StftConfig& cfg) const {
        using namespace net_detail;
        const int64_t n = t.val(wav).dim(0);
        const int64_t L = t.val(wav).dim(1);
        Value spec = stft_reim(t, wav, cfg);
        Value xa = complex_abs(t, spec);   // {N, T, bins}
        Value xp = complex_arg(t, spec);
        const int64_t T = t.val(xa).dim(1);

        Value ha = linear(t, t.log_eps(xa, 1e-5), P(t, s, amp_in.w), Pb(t, s, amp_in.b));
        Value hp = linear(t, xp, P(t, s, ph_in.w), Pb(t, s, ph_in.b));
        ha = apply_block(t, s, amp_blk[0], ha);
        hp = apply_block(t, s, ph_blk[0], hp);
        Value ha2 = t.add(ha, linear(t, hp, P(t, s, cross_pa.w), Pb(t, s, cross_pa.b)));
        Value hp2 = t.add(hp, linear(t, ha, P(t, s, cross_ap.w), Pb(t, s, cross_ap.b)));
        ha = apply_block(t, s, amp_blk[1], ha2);
        hp = apply_block(t, s, ph_blk[1], hp2);

        Value ra = linear(t, ha, P(t, s, amp_head.w), Pb(t, s, amp_head.b));
        Value ya = t.mul(xa, t.exp_(ra));

        Value rr = linear(t, hp, P(t, s, ph_head.w), Pb(t, s, ph_head.b));  // {N,T,2*bins}
        Value rrf = t.reshape(rr, {n * T, 2 * bins});
        Value rs = t.reshape(t.slice_ch(rrf, 0, bins), {n, T, bins});
        Value rc = t.reshape(t.slice_ch(rrf, bins, 2 * bins), {n, T, bins});
        Value yp = t.atan2_(t.add(t.sin_(xp), rs), t.add(t.cos_(xp), rc));

        Out out;
        out.amplitude = ya;
        out.phase = yp;
        out.wav = istft_reim(t, polar_reim(t, ya, yp), cfg, L);
        return out;
    }
};

// ---- assembled chain -------------------------------------------------------
class SubaruModel {
  public:
    ChainConfig cfg;
    ParamStore store;
    SpectralEnhancer sen;
    FrameUpsampler ups;
    TemporalEnhancer ten;
    AmpPhaseRefiner apen;

    explicit SubaruModel(ChainConfig c = {}) : cfg(c) {
        std::mt19937_64 rng(cfg.init_seed);
        sen.declare(store, rng, cfg);
        ups.declare(store, rng, cfg);
        ten.declare(store, rng, cfg);
        apen.declare(store, rng, cfg);
    }

    int64_t param_count() const { return store.trainable_count(); }
    int64_t param_count(const std::string& prefix) const {
        return store.trainable_count(prefix);
    }

    struct ChainOut {
        Value enhanced;       // {N, out_len}, in (-1, 1)
        Value sen_in;         // {N, 1, T, F} log amplitude
        Value sen_out;
        Value vocoded;        // {N, out_len} upsampler waveform
        AmpPhaseRefiner::Out refined;
        int64_t out_len = 0;
    };

    // wall-clock spent in each stage of one forward pass
    struct StageTimes {
        double sen_ms = 0.0;   // includes the low-rate analysis transform
        double ups_ms = 0.0;
        double ten_ms = 0.0;
        double apen_ms = 0.0;  // includes the synthesis transform
    };

    // acm {N, La} at acm_rate; bcm (nullable) {N, out_len} at out_rate,
    // already resampled/length-matched by the caller.
    ChainOut forward(Tape& t, const Tensor& acm, const Tensor* bcm, bool training,
                     StageTimes* stages = nullptr) {
        if (acm.rank() != 2) throw std::invalid_argument("chain: acm must be {N, L}");
        const int64_t n = acm.dim(0), la = acm.dim(1);
        const int64_t T = cfg.acm_stft.frames_for(la);
        const int64_t F = cfg.acm_stft.bins();
        const int64_t out_len = T * cfg.upsample_factor();

        using clock = std::chrono::steady_clock;
        auto mark = clock::now();
        auto lap = [&]() {
            const auto now = clock::now();
            const double ms = std::chrono::duration<double, std::milli>(now - mark).count();
            mark = now;
            return ms;
        };

        // analysis of the low-rate stream is a leaf: no gradient flows into
        // the capture path
        Tensor logamp({n, 1, T, F});
        for (int64_t nn = 0; nn < n; ++nn) {
            AudioClip clip;
            clip.sample_rate = cfg.acm_rate;
            clip.samples.assign(acm.ptr() + nn * la, acm.ptr() + (nn + 1) * la);
            Spectrogram spec = stft(clip, cfg.acm_stft);
            for (int64_t i = 0; i < T * F; ++i)
                logamp[nn * T * F + i] = std::log(spec.amplitude[i] + 1e-5);
        }

        ChainOut out;
        out.out_len = out_len;
        out.sen_in = t.input(std::move(logamp), false);
        out.sen_out = sen.forward(t, store, out.sen_in, training);
        if (stages) stages->sen_ms = lap();

        Value spec_ft = t.transpose12(t.reshape(out.sen_out, {n, T, F}));  // {N, F, T}
        Value voc = ups.forward(t, store, spec_ft);                        // {N, 1, out_len}
        out.vocoded = t.reshape(voc, {n, out_len});
        if (stages) stages->ups_ms = lap();

        Tensor bcm_t({n, out_len});
        if (bcm) {
            if (bcm->dim(0) != n || bcm->dim(1) != out_len)
                throw std::invalid_argument("chain: bcm must be {N, out_len}");
            bcm_t = *bcm;
        }
        Value bcm_v = t.input(std::move(bcm_t), false);

        auto run_ten = [&](Value wav) {
            Value pair = t.concat_ch(t.reshape(wav, {n, 1, out_len}),
                                     t.reshape(bcm_v, {n, 1, out_len}));
            Value y = ten.forward(t, store, pair, training);
            return t.reshape(y, {n, out_len});
        };

        Value chain;
        if (!cfg.apen_before_ten) {
            Value after_ten = run_ten(out.vocoded);
            if (stages) stages->ten_ms = lap();
            out.refined = apen.forward(t, store, after_ten, cfg.wide_stft);
            if (stages) stages->apen_ms = lap();
            chain = out.refined.wav;
        } else {
            out.refined = apen.forward(t, store, out.vocoded, cfg.wide_stft);
            if (stages) stages->apen_ms = lap();
            chain = run_ten(out.refined.wav);
            if (stages) stages->ten_ms = lap();
        }
        out.enhanced = t.tanh_(chain);
        return out;
    }
};

// Single-call convenience wrapper: run the chain on clips with frozen
// statistics and return the enhanced waveform.
inline AudioClip subaru_forward(SubaruModel& model, const AudioClip& acm_clip,
                                const AudioClip* bcm_clip,
                                SubaruModel::StageTimes* stages = nullptr) {
    if (acm_clip.sample_rate != model.cfg.acm_rate)
        throw std::invalid_argument("subaru_forward: acm clip must be at the capture rate");
    const int64_t la = acm_clip.length();
    const int64_t T = model.cfg.acm_stft.frames_for(la);
    const int64_t out_len = T * model.cfg.upsample_factor();

    Tensor acm({1, la});
    std::copy(acm_clip.samples.begin(), acm_clip.samples.end(), acm.data.begin());

    Tensor bcm({1, out_len});
    const Tensor* bcm_ptr = nullptr;
    if (bcm_clip) {
        AudioClip aligned = *bcm_clip;
        if (aligned.sample_rate != model.cfg.out_rate)
            aligned = resample_linear(aligned, model.cfg.out_rate);
        for (int64_t i = 0; i < out_len; ++i)
            bcm[i] = i < aligned.length() ? aligned.samples[static_cast<size_t>(i)] : 0.0;
        bcm_ptr = &bcm;
    }

    Tape tape;
    auto out = model.forward(tape, acm, bcm_ptr, false, stages);
    AudioClip result;
    result.sample_rate = model.cfg.out_rate;
    result.bit_depth = 16;
    const Tensor& y = tape.val(out.enhanced);
    result.samples.assign(y.ptr(), y.ptr() + y.numel());
    result.label = acm_clip.label;
    return result;
}

}  // namespace subaru
