// Network-level checks: parameter budgets, shape contracts, residual-head
// identities at initialization, and gradient flow through composed blocks.
#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "subaru/networks.hpp"

using namespace subaru;

namespace {

Tensor randn(std::vector<int64_t> shape, uint64_t seed, double scl = 1.0) {
    Tensor t(std::move(shape));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, scl);
    for (auto& v : t.data) v = nd(rng);
    return t;
}

}  // namespace

TEST_CASE("parameter budgets match the frozen layout") {
    SubaruModel model;
    // regression against the counted layout
    CHECK(model.param_count("sen.") == 918313);
    CHECK(model.param_count("ups.") == 1093937);
    CHECK(model.param_count("ten.") == 682551);
    CHECK(model.param_count("apen.") == 895107);
    CHECK(model.param_count() == 3589908);
    // published budgets: 900.2k / 1130.3k / 760.5k / 828.6k, total 3.61M
    CHECK(std::abs(model.param_count("sen.") / 900200.0 - 1.0) < 0.15);
    CHECK(std::abs(model.param_count("ups.") / 1130300.0 - 1.0) < 0.15);
    CHECK(std::abs(model.param_count("ten.") / 760500.0 - 1.0) < 0.15);
    CHECK(std::abs(model.param_count("apen.") / 828600.0 - 1.0) < 0.15);
    CHECK(std::abs(model.param_count() / 3.61e6 - 1.0) < 0.15);
    // prefixes partition the store
    CHECK(model.param_count("sen.") + model.param_count("ups.") + model.param_count("ten.") +
              model.param_count("apen.") ==
          model.param_count());
}

TEST_CASE("state-space block: count, shape, determinism") {
    ParamStore s;
    std::mt19937_64 rng(7);
    MambaBlock blk;
    blk.declare({s, "m.", rng}, 64);
    CHECK(s.trainable_count() == 16384);

    ParamStore s80;
    std::mt19937_64 rng80(7);
    MambaBlock blk80;
    blk80.declare({s80, "m.", rng80}, 80);
    CHECK(s80.trainable_count() == 24480);

    Tape t;
    Value x = t.input(randn({2, 9, 64}, 11, 0.5), true);
    Value y = blk.forward(t, s, x);
    REQUIRE(t.val(y).shape == std::vector<int64_t>({2, 9, 64}));
    // residual wrapper: output differs from input but stays finite
    double diff = 0.0;
    for (int64_t i = 0; i < t.val(y).numel(); ++i) {
        REQUIRE(std::isfinite(t.val(y)[i]));
        diff += std::abs(t.val(y)[i] - t.val(x)[i]);
    }
    CHECK(diff > 1e-6);

    // same seed -> identical declaration
    ParamStore s2;
    std::mt19937_64 rng2(7);
    MambaBlock blk2;
    blk2.declare({s2, "m.", rng2}, 64);
    for (int i = 0; i < s.count(); ++i) {
        REQUIRE(s.at(i).name == s2.at(i).name);
        REQUIRE(s.at(i).value.data == s2.at(i).value.data);
    }
}

TEST_CASE("state-space block: gradients reach every parameter") {
    ParamStore s;
    std::mt19937_64 rng(3);
    MambaBlock blk;
    blk.declare({s, "m.", rng}, 64);

    Tape t;
    Value x = t.input(randn({1, 6, 64}, 21, 0.5), true);
    Value y = blk.forward(t, s, x);
    Value loss = t.mean_all(t.mul(y, y));
    t.backward(loss);
    std::vector<Tensor> slots(s.size());
    t.export_param_grads(slots);
    for (int i = 0; i < s.count(); ++i) {
        double g1 = 0.0;
        for (double v : slots[static_cast<size_t>(i)].data) g1 += std::abs(v);
        INFO("param " << s.at(i).name);
        CHECK(std::isfinite(g1));
        CHECK(g1 > 0.0);  // every parameter participates
    }
}

TEST_CASE("state-space block: finite-difference check through the composition") {
    ParamStore s;
    std::mt19937_64 rng(5);
    MambaBlock blk;
    blk.declare({s, "m.", rng}, 64);
    Tensor x0 = randn({1, 4, 64}, 31, 0.4);
    Tensor readout = randn({1, 4, 64}, 32, 1.0);

    auto loss_of = [&](const Tensor& xin) {
        Tape t;
        Value x = t.input(xin, true);
        Value y = blk.forward(t, s, x);
        Value r = t.input(readout, false);
        return t.sum_all(t.mul(y, r));
    };

    Tape t;
    Value x = t.input(x0, true);
    Value y = blk.forward(t, s, x);
    Value loss = t.sum_all(t.mul(y, t.input(readout, false)));
    t.backward(loss);
    const Tensor& gx = t.grad(x);

    std::mt19937_64 pick(77);
    for (int k = 0; k < 12; ++k) {
        const int64_t i = static_cast<int64_t>(pick() % static_cast<uint64_t>(x0.numel()));
        const double h = 1e-5;
        Tensor xp = x0, xm = x0;
        xp[i] += h;
        xm[i] -= h;
        Tape tp, tm;
        double lp, lm;
        {
            Tape tt;
            Value vv = tt.input(xp, true);
            Value yy = blk.forward(tt, s, vv);
            Value ll = tt.sum_all(tt.mul(yy, tt.input(readout, false)));
            lp = tt.val(ll)[0];
        }
        {
            Tape tt;
            Value vv = tt.input(xm, true);
            Value yy = blk.forward(tt, s, vv);
            Value ll = tt.sum_all(tt.mul(yy, tt.input(readout, false)));
            lm = tt.val(ll)[0];
        }
        const double num = (lp - lm) / (2 * h);
        const double ana = gx[i];
        const double rel = std::abs(num - ana) / (1.0 + std::max(std::abs(num), std::abs(ana)));
        INFO("coord " << i << " num " << num << " ana " << ana);
        CHECK(rel < 2e-6);
    }
    (void)loss_of;
}

TEST_CASE("chain shapes for a one-second capture") {
    SubaruModel model;
    Tensor acm = randn({1, 4000}, 41, 0.1);
    Tape t;
    auto out = model.forward(t, acm, nullptr, false);
    CHECK(out.out_len == 15872);
    CHECK(t.val(out.sen_in).shape == std::vector<int64_t>({1, 1, 62, 129}));
    CHECK(t.val(out.sen_out).shape == std::vector<int64_t>({1, 1, 62, 129}));
    CHECK(t.val(out.vocoded).shape == std::vector<int64_t>({1, 15872}));
    CHECK(t.val(out.enhanced).shape == std::vector<int64_t>({1, 15872}));
    CHECK(t.val(out.refined.amplitude).shape == std::vector<int64_t>({1, 125, 513}));
    CHECK(t.val(out.refined.phase).shape == std::vector<int64_t>({1, 125, 513}));
    // reconstruction stays strictly inside (-1, 1) and finite
    for (int64_t i = 0; i < t.val(out.enhanced).numel(); ++i) {
        REQUIRE(std::isfinite(t.val(out.enhanced)[i]));
        REQUIRE(std::abs(t.val(out.enhanced)[i]) < 1.0);
    }
    // capture length and target length agree within one low-rate frame
    CHECK(std::abs(16000 - out.out_len) <= 256);
}

TEST_CASE("zero-initialized heads make the residual stages transparent") {
    SubaruModel model;
    Tensor acm = randn({1, 4000}, 43, 0.1);
    Tape t;
    auto out = model.forward(t, acm, nullptr, false);

    // spectral stage: head is zero, so output == input bitwise
    REQUIRE(t.val(out.sen_out).data == t.val(out.sen_in).data);

    // temporal + refiner stages reduce to analysis/synthesis of the vocoded
    // waveform; the final nonlinearity is the only remaining transform
    const Tensor& voc = t.val(out.vocoded);
    const Tensor& enh = t.val(out.enhanced);
    double max_err = 0.0;
    for (int64_t i = 0; i < enh.numel(); ++i)
        max_err = std::max(max_err, std::abs(enh[i] - std::tanh(voc[i])));
    CHECK(max_err < 1e-9);
}

TEST_CASE("auxiliary stream feeds the temporal stage") {
    SubaruModel model;
    // make the temporal head non-trivial so the second channel matters
    for (int i = 0; i < model.store.count(); ++i) {
        auto& e = model.store.at(i);
        if (e.name == "ten.head.w") e.value.fill(0.05);
    }
    Tensor acm = randn({1, 4000}, 47, 0.1);
    Tensor bcm = randn({1, 15872}, 48, 0.1);
    Tape t1, t2;
    auto without = model.forward(t1, acm, nullptr, false);
    auto with = model.forward(t2, acm, &bcm, false);
    double diff = 0.0;
    for (int64_t i = 0; i < t1.val(without.enhanced).numel(); ++i)
        diff += std::abs(t1.val(without.enhanced)[i] - t2.val(with.enhanced)[i]);
    CHECK(diff > 1e-6);
}

TEST_CASE("stage order can be exchanged") {
    ChainConfig cfg;
    cfg.apen_before_ten = true;
    SubaruModel model(cfg);
    Tensor acm = randn({1, 4000}, 53, 0.1);
    Tape t;
    auto out = model.forward(t, acm, nullptr, false);
    CHECK(t.val(out.enhanced).shape == std::vector<int64_t>({1, 15872}));
    // zero heads: same transparency holds in the exchanged order
    const Tensor& voc = t.val(out.vocoded);
    const Tensor& enh = t.val(out.enhanced);
    double max_err = 0.0;
    for (int64_t i = 0; i < enh.numel(); ++i)
        max_err = std::max(max_err, std::abs(enh[i] - std::tanh(voc[i])));
    CHECK(max_err < 1e-9);
}

TEST_CASE("convenience wrapper produces a wideband clip") {
    SubaruModel model;
    AudioClip acm;
    acm.sample_rate = 4000;
    acm.samples.resize(4000);
    std::mt19937_64 rng(59);
    std::normal_distribution<double> nd(0.0, 0.05);
    for (auto& v : acm.samples) v = nd(rng);

    AudioClip out = subaru_forward(model, acm, nullptr);
    CHECK(out.sample_rate == 16000);
    CHECK(out.length() == 15872);

    // with an auxiliary clip at a different rate the wrapper aligns it
    AudioClip bcm;
    bcm.sample_rate = 8000;
    bcm.samples.resize(8000);
    for (auto& v : bcm.samples) v = nd(rng);
    AudioClip out2 = subaru_forward(model, acm, &bcm);
    CHECK(out2.length() == 15872);
}

TEST_CASE("training mode updates normalization statistics") {
    SubaruModel model;
    Tensor acm = randn({2, 2560}, 61, 0.1);
    // snapshot one running mean
    int rm_id = -1;
    for (int i = 0; i < model.store.count(); ++i)
        if (model.store.at(i).name == "sen.enc1.down_bn.running_mean") rm_id = i;
    REQUIRE(rm_id >= 0);
    Tensor before = model.store.at(rm_id).value;
    {
        Tape t;
        model.forward(t, acm, nullptr, true);
    }
    Tensor after = model.store.at(rm_id).value;
    CHECK(before.data != after.data);
    // eval mode leaves them untouched
    Tensor snap = after;
    {
        Tape t;
        model.forward(t, acm, nullptr, false);
    }
    CHECK(model.store.at(rm_id).value.data == snap.data);
}
