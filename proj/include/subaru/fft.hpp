#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

namespace subaru {

// Iterative radix-2 complex FFT. Every transform size this project uses is a
// power of two (256/512/1024/2048), so a general mixed-radix engine would be
// dead weight; non-power-of-two sizes are rejected loudly instead.
inline bool is_pow2(int64_t n) { return n > 0 && (n & (n - 1)) == 0; }

inline void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
    const size_t n = a.size();
    if (!is_pow2(static_cast<int64_t>(n)))
        throw std::invalid_argument("fft: size must be a power of two");
    // bit-reversal permutation
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    const double sign = inverse ? 1.0 : -1.0;
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = sign * 2.0 * M_PI / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                std::complex<double> u = a[i + k];
                std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse) {
        const double inv_n = 1.0 / static_cast<double>(n);
        for (auto& x : a) x *= inv_n;
    }
}

// Real-input forward DFT, onesided: bins 0..n/2 of X_k = sum_t x_t e^{-2pi i k t / n}.
inline void rfft(const double* x, int64_t n, std::vector<std::complex<double>>& out) {
    std::vector<std::complex<double>> buf(static_cast<size_t>(n));
    for (int64_t t = 0; t < n; ++t) buf[static_cast<size_t>(t)] = {x[t], 0.0};
    fft_inplace(buf, false);
    out.assign(buf.begin(), buf.begin() + static_cast<size_t>(n / 2 + 1));
}

// Adjoint of rfft: given onesided bin gradients G_k (k = 0..n/2, upper bins
// implicitly zero), returns d/dx_t = Re( sum_k G_k e^{+2pi i k t / n} ).
// Also serves as the synthesis kernel for overlap-add istft when fed with
// conjugate-symmetric weighting applied by the caller.
inline void rfft_adjoint(const std::vector<std::complex<double>>& g, int64_t n,
                         std::vector<double>& out) {
    std::vector<std::complex<double>> buf(static_cast<size_t>(n), {0.0, 0.0});
    for (size_t k = 0; k < g.size(); ++k) buf[k] = g[k];
    fft_inplace(buf, true);  // (1/n) sum_k G_k e^{+2pi i k t / n}
    out.resize(static_cast<size_t>(n));
    for (int64_t t = 0; t < n; ++t)
        out[static_cast<size_t>(t)] = buf[static_cast<size_t>(t)].real() * static_cast<double>(n);
}

}  // namespace subaru
