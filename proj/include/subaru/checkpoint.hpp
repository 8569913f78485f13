#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "subaru/params.hpp"

namespace subaru {

// Binary checkpoint: magic "SBRU0001", a metadata record, every parameter
// array by name (values + trainable flag), then an "OPT0" section with the
// optimizer moments. Doubles are written raw, so save -> load -> save is
// byte-identical and resumed training continues bitwise.

inline uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

struct CheckpointMeta {
    uint64_t config_hash = 0;
    int64_t step = 0;         // batches consumed
    int64_t opt_updates = 0;  // optimizer updates applied (bias-correction clock)
    double epoch_frac = 0.0;
    int32_t source_rate = 4000;
    int32_t target_rate = 16000;
};

namespace ckpt_detail {

template <typename T>
void put(std::ostream& f, const T& v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& f) {
    T v{};
    f.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!f) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

inline void put_string(std::ostream& f, const std::string& s) {
    put<uint32_t>(f, static_cast<uint32_t>(s.size()));
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& f) {
    const uint32_t n = get<uint32_t>(f);
    std::string s(n, '\0');
    f.read(s.data(), n);
    if (!f) throw std::runtime_error("checkpoint: truncated string");
    return s;
}

inline void put_tensor(std::ostream& f, const Tensor& t) {
    put<uint32_t>(f, static_cast<uint32_t>(t.rank()));
    for (int64_t d : t.shape) put<int64_t>(f, d);
    f.write(reinterpret_cast<const char*>(t.ptr()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
}

inline Tensor get_tensor(std::istream& f) {
    const uint32_t rank = get<uint32_t>(f);
    std::vector<int64_t> shape(rank);
    for (auto& d : shape) d = get<int64_t>(f);
    Tensor t(std::move(shape));
    f.read(reinterpret_cast<char*>(t.ptr()),
           static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!f) throw std::runtime_error("checkpoint: truncated tensor data");
    return t;
}

}  // namespace ckpt_detail

inline void save_checkpoint(const std::string& path, const ParamStore& store,
                            const CheckpointMeta& meta) {
    using namespace ckpt_detail;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
    f.write("SBRU0001", 8);
    put<uint64_t>(f, meta.config_hash);
    put<int64_t>(f, meta.step);
    put<int64_t>(f, meta.opt_updates);
    put<double>(f, meta.epoch_frac);
    put<int32_t>(f, meta.source_rate);
    put<int32_t>(f, meta.target_rate);
    put<uint32_t>(f, static_cast<uint32_t>(store.size()));
    for (int i = 0; i < store.count(); ++i) {
        const ParamEntry& e = store.at(i);
        put_string(f, e.name);
        put<uint8_t>(f, e.trainable ? 1 : 0);
        put_tensor(f, e.value);
    }
    f.write("OPT0", 4);
    for (int i = 0; i < store.count(); ++i) {
        const ParamEntry& e = store.at(i);
        const bool has = e.adam_m.numel() > 0;
        put<uint8_t>(f, has ? 1 : 0);
        if (has) {
            put_tensor(f, e.adam_m);
            put_tensor(f, e.adam_v);
        }
    }
    if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

// Loads into an already-constructed store; the declaration layout (names,
// shapes, order) must match exactly. expect_hash 0 skips the config check.
inline CheckpointMeta load_checkpoint(const std::string& path, ParamStore& store,
                                      uint64_t expect_hash = 0) {
    using namespace ckpt_detail;
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, "SBRU0001", 8) != 0)
        throw std::runtime_error("load_checkpoint: bad magic in " + path);
    CheckpointMeta meta;
    meta.config_hash = get<uint64_t>(f);
    meta.step = get<int64_t>(f);
    meta.opt_updates = get<int64_t>(f);
    meta.epoch_frac = get<double>(f);
    meta.source_rate = get<int32_t>(f);
    meta.target_rate = get<int32_t>(f);
    if (expect_hash != 0 && meta.config_hash != expect_hash)
        throw std::runtime_error("load_checkpoint: config hash mismatch");
    const uint32_t n = get<uint32_t>(f);
    if (n != store.size())
        throw std::runtime_error("load_checkpoint: entry count mismatch");
    for (int i = 0; i < store.count(); ++i) {
        ParamEntry& e = store.at(i);
        const std::string name = get_string(f);
        if (name != e.name)
            throw std::runtime_error("load_checkpoint: entry order mismatch at " + name);
        const uint8_t trainable = get<uint8_t>(f);
        if ((trainable != 0) != e.trainable)
            throw std::runtime_error("load_checkpoint: trainable flag mismatch at " + name);
        Tensor t = get_tensor(f);
        if (!t.same_shape(e.value))
            throw std::runtime_error("load_checkpoint: shape mismatch at " + name);
        e.value = std::move(t);
    }
    char opt[4];
    f.read(opt, 4);
    if (!f || std::memcmp(opt, "OPT0", 4) != 0)
        throw std::runtime_error("load_checkpoint: missing optimizer section");
    for (int i = 0; i < store.count(); ++i) {
        ParamEntry& e = store.at(i);
        const uint8_t has = get<uint8_t>(f);
        if (has) {
            e.adam_m = get_tensor(f);
            e.adam_v = get_tensor(f);
        } else {
            e.adam_m = Tensor();
            e.adam_v = Tensor();
        }
    }
    return meta;
}

}  // namespace subaru
