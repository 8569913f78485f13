#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "subaru/tensor.hpp"

namespace subaru {

// Flat named parameter store shared by the four networks and the optimizer.
// Declaration order is the canonical order: it fixes both the RNG consumption
// during initialization and the checkpoint layout, so a given seed always
// produces the same model. Non-trainable entries hold running statistics —
// they are serialized with the rest but skipped by the optimizer.
struct ParamEntry {
    std::string name;
    Tensor value;
    Tensor adam_m;  // first-moment accumulator, lazily sized
    Tensor adam_v;  // second-moment accumulator
    bool trainable = true;
};

class ParamStore {
  public:
    int add(const std::string& name, Tensor init, bool trainable = true) {
        if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate name " + name);
        ParamEntry e;
        e.name = name;
        e.value = std::move(init);
        e.trainable = trainable;
        entries_.push_back(std::move(e));
        const int id = static_cast<int>(entries_.size()) - 1;
        index_[name] = id;
        return id;
    }

    int find(const std::string& name) const {
        auto it = index_.find(name);
        return it == index_.end() ? -1 : it->second;
    }

    ParamEntry& at(int id) { return entries_.at(static_cast<size_t>(id)); }
    const ParamEntry& at(int id) const { return entries_.at(static_cast<size_t>(id)); }
    ParamEntry& named(const std::string& name) {
        const int id = find(name);
        if (id < 0) throw std::invalid_argument("ParamStore: unknown name " + name);
        return at(id);
    }

    size_t size() const { return entries_.size(); }
    int count() const { return static_cast<int>(entries_.size()); }

    // Number of learnable scalars (running statistics excluded).
    int64_t trainable_count() const {
        int64_t n = 0;
        for (const auto& e : entries_)
            if (e.trainable) n += e.value.numel();
        return n;
    }

    // Learnable scalars whose name starts with the given prefix.
    int64_t trainable_count(const std::string& prefix) const {
        int64_t n = 0;
        for (const auto& e : entries_)
            if (e.trainable && e.name.rfind(prefix, 0) == 0) n += e.value.numel();
        return n;
    }

    std::vector<ParamEntry>& entries() { return entries_; }
    const std::vector<ParamEntry>& entries() const { return entries_; }

  private:
    std::vector<ParamEntry> entries_;
    std::unordered_map<std::string, int> index_;
};

// Initialization helpers. Weights draw from U[-1/sqrt(fan_in), 1/sqrt(fan_in)]
// with the fan taken from the input side of the tensor layout; biases start at
// zero; heads that feed residual connections start at exactly zero so a fresh
// model reduces to its identity path.

inline Tensor init_fanin(std::vector<int64_t> shape, int64_t fan_in, std::mt19937_64& rng) {
    if (fan_in <= 0) throw std::invalid_argument("init_fanin: fan_in must be positive");
    return Tensor::uniform(std::move(shape), 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
}

// conv weight {Co, Ci, K...}: fan_in = Ci * prod(K)
inline Tensor init_conv(std::vector<int64_t> shape, std::mt19937_64& rng) {
    int64_t fan = 1;
    for (size_t i = 1; i < shape.size(); ++i) fan *= shape[i];
    return init_fanin(shape, fan, rng);
}

// transposed conv weight {Ci, Co, K...}: fan_in = Co * prod(K)
inline Tensor init_tconv(std::vector<int64_t> shape, std::mt19937_64& rng) {
    int64_t fan = 1;
    for (size_t i = 1; i < shape.size(); ++i) fan *= shape[i];
    return init_fanin(shape, fan, rng);
}

// linear weight {Dout, Din}: fan_in = Din
inline Tensor init_linear(std::vector<int64_t> shape, std::mt19937_64& rng) {
    return init_fanin(shape, shape.back(), rng);
}

}  // namespace subaru
