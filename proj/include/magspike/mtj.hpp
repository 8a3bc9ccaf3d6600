#pragma once

#include <cmath>
#include <cstdint>

#include "magspike/constants.hpp"
#include "magspike/errors.hpp"
#include "magspike/llg.hpp"
#include "magspike/magnet.hpp"
#include "magspike/rng.hpp"
#include "magspike/telegraph.hpp"
#include "magspike/vec3.hpp"

// Three-terminal magnetoelectric MTJ on top of the macrospin core. V_ME maps
// to an easy-axis effective field through the ME layer; V_I drives a spin
// current whose magnitude follows the state-dependent junction resistance.
namespace magspike {

struct MtjParams {
    double r_p = 0.0;          // parallel-state resistance [Ohm]
    double tmr = 0.0;          // (R_AP - R_P)/R_P, e.g. 2.0 for 200%
    double polarization = 0.0; // spin polarization of the charge current
    double me_coeff = 0.0;     // alpha_ME [s/m]
    double me_thickness = 0.0; // ME layer thickness [m]
    Vec3 pinned_axis{0.0, 0.0, 1.0};

    void validate() const {
        if (!(r_p > 0.0)) throw InvalidInput("MtjParams: r_p must be positive");
        if (tmr < 0.0) throw InvalidInput("MtjParams: tmr must be >= 0");
        if (!(polarization >= 0.0 && polarization <= 1.0))
            throw InvalidInput("MtjParams: polarization must be in [0, 1]");
        if (!(me_thickness > 0.0)) throw InvalidInput("MtjParams: me_thickness must be positive");
        if (std::fabs(pinned_axis.norm() - 1.0) > 1e-9)
            throw InvalidInput("MtjParams: pinned_axis must be unit length");
    }
};

struct ReadoutParams {
    double i_total = 0.0; // constant source current [A]
    double r_load = 0.0;  // load resistance [Ohm]

    void validate() const {
        if (!(i_total > 0.0)) throw InvalidInput("ReadoutParams: i_total must be positive");
        if (!(r_load > 0.0)) throw InvalidInput("ReadoutParams: r_load must be positive");
    }
};

// Conductance interpolation between the P and AP endpoints:
// G(theta) = (G_P+G_AP)/2 + (G_P-G_AP)/2 * cos(theta).
inline double mtj_resistance(const Vec3& m, const MtjParams& p) {
    detail::require_unit(m, "mtj_resistance");
    const double g_p = 1.0 / p.r_p;
    const double g_ap = 1.0 / (p.r_p * (1.0 + p.tmr));
    const double cos_theta = m.dot(p.pinned_axis);
    return 1.0 / (0.5 * (g_p + g_ap) + 0.5 * (g_p - g_ap) * cos_theta);
}

// Magnetoelectric field along the easy axis: B = alpha_ME * (V/t), H = B/mu0.
inline Vec3 me_field(double v_me, const MtjParams& p) {
    const double h = p.me_coeff * (v_me / p.me_thickness) / constants::mu0;
    return {0.0, 0.0, h};
}

// Spin current along the pinned axis; magnitude set by the instantaneous
// junction resistance, which is what couples V_I chiefly to tau_P.
inline Vec3 spin_current(double v_i, const Vec3& m, const MtjParams& p) {
    return p.pinned_axis * (p.polarization * v_i / mtj_resistance(m, p));
}

// Ideal current-source readout: I_Output = I_Total - V_I / R(m).
inline double readout(const Vec3& m, const ReadoutParams& r, double v_i, const MtjParams& p) {
    return r.i_total - v_i / mtj_resistance(m, p);
}

// Linear change of input basis (V_ME, V_I) <-> (V1, V2) with
// M = [[cos a, cos b], [sin a, sin b]]. Forward applies M^-1, inverse M.
struct BasisAngles {
    double alpha = 0.0; // direction along which tau_AP stays constant (V1 image)
    double beta = 0.0;  // direction along which tau_P stays constant (V2 image)

    double determinant() const { return std::sin(beta - alpha); }
    void validate() const {
        if (std::fabs(determinant()) < 1e-12)
            throw InvalidInput("BasisAngles: sin(beta - alpha) = 0, matrix singular");
    }
};

struct TransformedVoltages {
    double v1 = 0.0;
    double v2 = 0.0;
};

struct TerminalVoltages {
    double v_me = 0.0;
    double v_i = 0.0;
};

inline TransformedVoltages basis_transform(double v_me, double v_i, const BasisAngles& a) {
    a.validate();
    const double det = a.determinant();
    // M^-1 = 1/det [[ sin b, -cos b], [-sin a, cos a]]
    return {(std::sin(a.beta) * v_me - std::cos(a.beta) * v_i) / det,
            (-std::sin(a.alpha) * v_me + std::cos(a.alpha) * v_i) / det};
}

inline TerminalVoltages inverse_basis_transform(double v1, double v2, const BasisAngles& a) {
    a.validate();
    return {std::cos(a.alpha) * v1 + std::cos(a.beta) * v2,
            std::sin(a.alpha) * v1 + std::sin(a.beta) * v2};
}

// Everything needed to run one device: the macrospin, junction, readout, the
// calibrated input basis, binarization thresholds, and the validated V1
// operating window at the operating V2.
struct DeviceBundle {
    MagnetParams magnet;
    MtjParams mtj;
    ReadoutParams readout{150e-6, 1e3};
    BasisAngles basis;
    double threshold_hi = 0.5;
    double threshold_lo = -0.5;
    double readout_window = 0.0; // readout moving-average length [s]; 0 = raw
    double dt = 1e-12;       // integration step [s]
    double v2_operating = 0.0; // V2 at which the activation is calibrated
    double v1_min = 0.0;
    double v1_max = 0.0;

    void validate() const {
        magnet.validate();
        mtj.validate();
        readout.validate();
        if (!(-1.0 < threshold_lo && threshold_lo < threshold_hi && threshold_hi < 1.0))
            throw InvalidInput("DeviceBundle: need -1 < threshold_lo < threshold_hi < 1");
        if (!(dt > 0.0)) throw InvalidInput("DeviceBundle: dt must be positive");
        if (readout_window < 0.0)
            throw InvalidInput("DeviceBundle: readout_window must be >= 0");
    }

    std::size_t readout_window_samples() const {
        return readout_window <= 0.0
                   ? 1
                   : std::max<std::size_t>(1, static_cast<std::size_t>(readout_window / dt + 0.5));
    }
};

// Precomputed state-dependent spin current: I = P * V_I * G(m) along the
// pinned axis, with the conductance interpolation expanded so the hot loop
// has no divisions.
class SpinCurrentSource {
  public:
    SpinCurrentSource(double v_i, const MtjParams& p) : axis_(p.pinned_axis) {
        const double g_p = 1.0 / p.r_p;
        const double g_ap = 1.0 / (p.r_p * (1.0 + p.tmr));
        const double pv = p.polarization * v_i;
        mid_ = pv * 0.5 * (g_p + g_ap);
        half_ = pv * 0.5 * (g_p - g_ap);
    }

    Vec3 at(const Vec3& m) const {
        return axis_ * (mid_ + half_ * m.dot(axis_));
    }

  private:
    Vec3 axis_;
    double mid_ = 0.0;
    double half_ = 0.0;
};

// Integrates the ME-MTJ under constant terminal voltages, streaming the
// easy-axis projection into a hysteretic binarizer. No trajectory is stored,
// so arbitrarily long dwell statistics fit in constant memory.
inline TelegraphTrace simulate_device_telegraph(const DeviceBundle& dev, double v_me,
                                                double v_i, double duration,
                                                std::uint64_t seed,
                                                Vec3 m0 = Vec3{0.0, 0.0, 1.0}) {
    const LlgStepper stepper(dev.magnet, dev.dt);
    rng::RandomStream rs(seed);
    StreamingBinarizer bin(dev.threshold_hi, dev.threshold_lo, dev.dt,
                           dev.readout_window_samples());
    const Vec3 h_me = me_field(v_me, dev.mtj);
    const SpinCurrentSource current(v_i, dev.mtj);
    const auto n_steps = static_cast<std::size_t>(duration / dev.dt);
    Vec3 m = m0.normalized();
    bin.feed(m.dot(dev.mtj.pinned_axis));
    for (std::size_t i = 0; i < n_steps; ++i) {
        m = stepper.step(m, h_me, current.at(m), rs);
        bin.feed(m.dot(dev.mtj.pinned_axis));
    }
    return bin.finish();
}

// Same dynamics, but stops as soon as the trace has entered the AP state
// spike_target times (or the timeout elapses). Returns the entry times.
struct SpikeRunResult {
    std::vector<double> ap_entry_times;
    bool timed_out = false;
};

inline SpikeRunResult simulate_device_spikes(const DeviceBundle& dev, double v_me, double v_i,
                                             std::size_t spike_target, double timeout,
                                             std::uint64_t seed,
                                             Vec3 m0 = Vec3{0.0, 0.0, 1.0}) {
    if (spike_target == 0) throw InvalidInput("simulate_device_spikes: spike_target must be >= 1");
    const LlgStepper stepper(dev.magnet, dev.dt);
    rng::RandomStream rs(seed);
    StreamingBinarizer bin(dev.threshold_hi, dev.threshold_lo, dev.dt,
                           dev.readout_window_samples());
    const Vec3 h_me = me_field(v_me, dev.mtj);
    const SpinCurrentSource current(v_i, dev.mtj);
    const auto max_steps = static_cast<std::size_t>(timeout / dev.dt);
    Vec3 m = m0.normalized();
    bin.feed(m.dot(dev.mtj.pinned_axis));
    for (std::size_t i = 0; i < max_steps && bin.ap_entry_count() < spike_target; ++i) {
        m = stepper.step(m, h_me, current.at(m), rs);
        bin.feed(m.dot(dev.mtj.pinned_axis));
    }
    return {bin.ap_entry_times(), bin.ap_entry_count() < spike_target};
}

} // namespace magspike
