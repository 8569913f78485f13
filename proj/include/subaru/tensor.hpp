#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace subaru {

// Dense row-major tensor of doubles. All model math runs in double precision
// so that finite-difference gradient checks are meaningful at 1e-4 tolerance.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(numel_of(shape)), 0.0);
    }

    Tensor(std::vector<int64_t> s, std::vector<double> d)
        : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<int64_t>(data.size()) != numel_of(shape))
            throw std::invalid_argument("Tensor: shape/data size mismatch");
    }

    static int64_t numel_of(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (int64_t v : s) {
            if (v < 0) throw std::invalid_argument("Tensor: negative dim");
            n *= v;
        }
        return n;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int64_t dim(size_t i) const { return shape.at(i); }
    size_t rank() const { return shape.size(); }

    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }

    double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    Tensor reshaped(std::vector<int64_t> s) const {
        Tensor t = *this;
        int64_t n = 1;
        for (int64_t d : s) n *= d;
        if (n != numel()) throw std::invalid_argument("reshaped: element count mismatch");
        t.shape = std::move(s);
        return t;
    }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }

    static Tensor full(std::vector<int64_t> s, double v) {
        Tensor t(std::move(s));
        t.fill(v);
        return t;
    }

    static Tensor from_vec(const std::vector<double>& v) {
        return Tensor({static_cast<int64_t>(v.size())}, v);
    }

    // Uniform on [-a, a]; used by fan-in scaled init.
    static Tensor uniform(std::vector<int64_t> s, double a, std::mt19937_64& rng) {
        Tensor t(std::move(s));
        std::uniform_real_distribution<double> dist(-a, a);
        for (double& x : t.data) x = dist(rng);
        return t;
    }
};

inline std::string shape_str(const std::vector<int64_t>& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

}  // namespace subaru
