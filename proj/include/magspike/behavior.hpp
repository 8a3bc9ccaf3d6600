#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "magspike/characterize.hpp"
#include "magspike/errors.hpp"
#include "magspike/rng.hpp"
#include "magspike/stats.hpp"

// Behavioral device model: the calibrated activation g(.) mapping the
// transformed input voltage V1 to the expected P-state lifetime, plus
// memoryless dwell sampling. This is what lets a 400-neuron network run
// without per-step LLG.
namespace magspike {

struct ActivationFit {
    double tau0 = 0.0;         // tau_P at vref [s]
    double vref = 0.0;         // reference voltage [V]
    double vc = 0.0;           // e-folding voltage [V]
    double v_min = 0.0;        // validated domain [V]
    double v_max = 0.0;
    double tau_ap_fixed = 0.0; // AP lifetime over the domain [s]
    double fit_residual = 0.0; // RMS of log tau_P residuals

    void validate() const {
        if (!(tau0 > 0.0)) throw InvalidInput("ActivationFit: tau0 must be positive");
        if (!(vc > 0.0)) throw InvalidInput("ActivationFit: vc must be positive");
        if (!(v_min < v_max)) throw InvalidInput("ActivationFit: v_min must be < v_max");
        if (!(tau_ap_fixed >= 0.0)) throw InvalidInput("ActivationFit: tau_ap_fixed must be >= 0");
    }
};

// Expected P lifetime for input v1, clamped to the validated domain.
inline double g(double v1, const ActivationFit& fit) {
    const double v = std::clamp(v1, fit.v_min, fit.v_max);
    return fit.tau0 * std::exp(-(v - fit.vref) / fit.vc);
}

// dg/dv1; zero in the clamped region.
inline double g_prime(double v1, const ActivationFit& fit) {
    if (v1 < fit.v_min || v1 > fit.v_max) return 0.0;
    return -g(v1, fit) / fit.vc;
}

// Least-squares fit of log tau_P = log tau0 - (v1 - vref)/vc along the v1
// axis of a contour map, at the operating v2 column. Also verifies that
// tau_AP is flat (< 10% spread) and records its mean as the fixed AP
// lifetime. vref is the midpoint of the swept window.
inline ActivationFit fit_activation(const ContourMap& map, std::size_t v2_index = 0,
                                    double max_residual = 0.1,
                                    double max_tau_ap_spread = 0.10) {
    if (v2_index >= map.v2_grid.size())
        throw InvalidInput("fit_activation: v2_index out of range");
    if (map.v1_grid.size() < 5)
        throw CalibrationError("fit_activation: need >= 5 points along v1, got " +
                               std::to_string(map.v1_grid.size()));
    std::vector<double> v1s, log_tau_p, tau_aps;
    for (std::size_t i = 0; i < map.v1_grid.size(); ++i) {
        const auto& est = map.at(i, v2_index);
        v1s.push_back(map.v1_grid[i]);
        log_tau_p.push_back(std::log(est.tau_p));
        tau_aps.push_back(est.tau_ap);
    }
    const auto line = stats::fit_line(v1s, log_tau_p);
    if (line.slope >= 0.0)
        throw CalibrationError("fit_activation: tau_P does not decrease with v1");
    if (line.rms_residual >= max_residual)
        throw CalibrationError("fit_activation: log tau_P residual " +
                               std::to_string(line.rms_residual) + " exceeds " +
                               std::to_string(max_residual));
    const double ap_min = *std::min_element(tau_aps.begin(), tau_aps.end());
    const double ap_max = *std::max_element(tau_aps.begin(), tau_aps.end());
    const double ap_mean = stats::mean(tau_aps);
    if ((ap_max - ap_min) / ap_mean >= max_tau_ap_spread)
        throw CalibrationError("fit_activation: tau_AP spread " +
                               std::to_string((ap_max - ap_min) / ap_mean) + " exceeds " +
                               std::to_string(max_tau_ap_spread));

    ActivationFit fit;
    fit.v_min = *std::min_element(v1s.begin(), v1s.end());
    fit.v_max = *std::max_element(v1s.begin(), v1s.end());
    fit.vref = 0.5 * (fit.v_min + fit.v_max);
    fit.vc = -1.0 / line.slope;
    fit.tau0 = std::exp(line.intercept + line.slope * fit.vref);
    fit.tau_ap_fixed = ap_mean;
    fit.fit_residual = line.rms_residual;
    fit.validate();
    return fit;
}

struct SpikeTrain {
    std::vector<double> spike_times; // [s], strictly increasing
    double z = 0.0;                  // generating mean P lifetime [s]
};

// k spikes of one neuron: exponential P waits with mean z separated by
// exponential AP residences (the spike widths) with mean tau_ap_fixed. Draws
// happen in chronological order, so a fixed stream gives a fixed train.
inline SpikeTrain sample_spike_train(double z, const ActivationFit& fit, std::size_t k,
                                     rng::RandomStream& rs) {
    if (!(z > 0.0)) throw InvalidInput("sample_spike_train: z must be positive");
    if (k == 0) throw InvalidInput("sample_spike_train: k must be >= 1");
    SpikeTrain train;
    train.z = z;
    train.spike_times.reserve(k);
    double t = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        if (j > 0) t += fit.tau_ap_fixed > 0.0 ? rs.exponential(fit.tau_ap_fixed) : 0.0;
        t += rs.exponential(z);
        train.spike_times.push_back(t);
    }
    return train;
}

} // namespace magspike
