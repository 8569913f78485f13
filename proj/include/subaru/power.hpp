#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace subaru {

// ADC power accounting for the capture front-end: measured current/power of
// the nRF52840 SAADC at 3.0 V across the {4, 8, 16, 24} kHz x {8, 10, 12} bit
// grid, the savings quotient between two operating points, and a fit of the
// ideal P = k * f_s * 2^N law that demonstrates how far the measurements
// deviate from it.

struct AdcPoint {
    int rate_hz;
    int bits;
    double current_ua;
    double power_mw;
};

inline const std::array<AdcPoint, 12>& adc_power_table() {
    static const std::array<AdcPoint, 12> table = {{
        {4000, 8, 234.0, 0.702},
        {4000, 10, 248.0, 0.744},
        {4000, 12, 275.0, 0.825},
        {8000, 8, 319.0, 0.957},
        {8000, 10, 338.0, 1.014},
        {8000, 12, 375.0, 1.125},
        {16000, 8, 489.0, 1.467},
        {16000, 10, 518.0, 1.554},
        {16000, 12, 575.0, 1.725},
        {24000, 8, 659.0, 1.977},
        {24000, 10, 698.0, 2.094},
        {24000, 12, 775.0, 2.325},
    }};
    return table;
}

inline double power_lookup(int rate_hz, int bits) {
    for (const AdcPoint& p : adc_power_table())
        if (p.rate_hz == rate_hz && p.bits == bits) return p.power_mw;
    throw std::invalid_argument("power_lookup: (" + std::to_string(rate_hz) + " Hz, " +
                                std::to_string(bits) + "-bit) is off the measured grid");
}

struct RateBits {
    int rate_hz;
    int bits;
};

// How much capture power a cheaper operating point saves: power(high)/power(low).
inline double savings_ratio(RateBits high, RateBits low) {
    return power_lookup(high.rate_hz, high.bits) / power_lookup(low.rate_hz, low.bits);
}

inline double power_model_estimate(double k, double rate_hz, int bits) {
    if (!(k > 0.0)) throw std::invalid_argument("power_model_estimate: k must be positive");
    return k * rate_hz * std::pow(2.0, bits);
}

// Least-squares k for P = k * f_s * 2^N over the measured grid, with
// residual diagnostics. The measurements do not follow the ideal law (the
// bit-depth dependence is far weaker than 2^N), so `diverges` reports
// whether the fit should be trusted.
struct PowerFit {
    double k = 0.0;
    double max_rel_residual = 0.0;
    double mean_rel_residual = 0.0;
    bool diverges = false;
    std::vector<double> rel_residuals;  // per table row, (model - measured)/measured
};

inline PowerFit fit_power_model(double divergence_threshold = 0.25) {
    double num = 0.0, den = 0.0;
    for (const AdcPoint& p : adc_power_table()) {
        const double x = p.rate_hz * std::pow(2.0, p.bits);
        num += p.power_mw * x;
        den += x * x;
    }
    PowerFit fit;
    fit.k = num / den;
    for (const AdcPoint& p : adc_power_table()) {
        const double model = power_model_estimate(fit.k, p.rate_hz, p.bits);
        const double rel = (model - p.power_mw) / p.power_mw;
        fit.rel_residuals.push_back(rel);
        fit.max_rel_residual = std::max(fit.max_rel_residual, std::abs(rel));
        fit.mean_rel_residual += std::abs(rel);
    }
    fit.mean_rel_residual /= static_cast<double>(fit.rel_residuals.size());
    fit.diverges = fit.max_rel_residual > divergence_threshold;
    return fit;
}

inline std::string power_report_text(RateBits high, RateBits low) {
    std::ostringstream os;
    char buf[256];
    os << "ADC power (measured, 3.0 V)\n";
    os << "rate_hz  bits  current_uA  power_mW\n";
    for (const AdcPoint& p : adc_power_table()) {
        std::snprintf(buf, sizeof(buf), "%7d  %4d  %10.0f  %8.3f\n", p.rate_hz, p.bits,
                      p.current_ua, p.power_mw);
        os << buf;
    }
    const double ratio = savings_ratio(high, low);
    std::snprintf(buf, sizeof(buf),
                  "capture at {%d Hz, %d-bit} instead of {%d Hz, %d-bit}: %.2fx power saving\n",
                  low.rate_hz, low.bits, high.rate_hz, high.bits, ratio);
    os << buf;
    const PowerFit fit = fit_power_model();
    std::snprintf(buf, sizeof(buf),
                  "ideal-law fit P = k*f_s*2^N: k = %.3e mW/(Hz*level), max residual %.0f%%%s\n",
                  fit.k, 100.0 * fit.max_rel_residual,
                  fit.diverges ? " -- measurements diverge from the ideal law" : "");
    os << buf;
    return os.str();
}

}  // namespace subaru
