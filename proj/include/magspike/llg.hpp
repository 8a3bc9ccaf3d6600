#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "magspike/constants.hpp"
#include "magspike/errors.hpp"
#include "magspike/magnet.hpp"
#include "magspike/rng.hpp"
#include "magspike/vec3.hpp"

// Stochastic Landau-Lifshitz-Gilbert integration for a single macrospin.
//
// The implicit Gilbert form
//   dm/dt = -gamma (m x H_eff) + alpha (m x dm/dt) + (1/(q Ns)) (m x I_s x m)
// is integrated in its algebraically equivalent explicit form
//   (1+alpha^2) dm/dt = -gamma (m x H) - alpha gamma m x (m x H) + T + alpha (m x T)
// with T = (I_s - m (m . I_s)) / (q Ns).
//
// Thermal noise enters as a field added to H_eff, resampled once per step and
// held constant through both Heun stages (Stratonovich convention), with per
// component standard deviation
//   sigma = sqrt( alpha/(1+alpha^2) * 2 kB T / (gamma mu0 Ms V dt) ).
namespace magspike {

struct DriveSignal {
    std::function<Vec3(double)> applied_field; // [A/m]
    std::function<Vec3(double)> spin_current;  // [A]
};

inline DriveSignal zero_drive() {
    return {[](double) { return Vec3{}; }, [](double) { return Vec3{}; }};
}

struct TrajectorySample {
    double t = 0.0;
    Vec3 m;
};

struct Trajectory {
    double timestep = 0.0;
    std::vector<TrajectorySample> samples;
};

namespace detail {
inline void require_unit(const Vec3& m, const char* who) {
    if (std::fabs(m.norm() - 1.0) > 1e-6)
        throw InvalidInput(std::string(who) + ": m must be a unit vector");
}
} // namespace detail

// Uniaxial anisotropy along z, diagonal demagnetization, plus the applied field.
inline Vec3 effective_field(const Vec3& m, const MagnetParams& p, const Vec3& applied) {
    detail::require_unit(m, "effective_field");
    return Vec3{-p.ms * p.demag.x * m.x + applied.x,
                -p.ms * p.demag.y * m.y + applied.y,
                p.hk * m.z - p.ms * p.demag.z * m.z + applied.z};
}

inline double thermal_sigma(const MagnetParams& p, double dt) {
    if (!(dt > 0.0)) throw InvalidInput("thermal_sigma: dt must be positive");
    if (p.temperature == 0.0) return 0.0;
    const double a = p.damping / (1.0 + p.damping * p.damping);
    return std::sqrt(a * 2.0 * constants::k_boltzmann * p.temperature /
                     (p.gyro * constants::mu0 * p.ms * p.volume * dt));
}

// One thermal field realization; consumes exactly three Gaussian draws.
inline Vec3 thermal_field_sample(const MagnetParams& p, double dt, rng::RandomStream& rs) {
    const double sigma = thermal_sigma(p, dt);
    const double gx = rs.gaussian();
    const double gy = rs.gaussian();
    const double gz = rs.gaussian();
    return {sigma * gx, sigma * gy, sigma * gz};
}

// Explicit-form right-hand side given the total field (including thermal).
inline Vec3 llg_rhs(const Vec3& m, const MagnetParams& p, const Vec3& h_total,
                    const Vec3& i_s) {
    const double inv_1a2 = 1.0 / (1.0 + p.damping * p.damping);
    const Vec3 mxh = m.cross(h_total);
    const Vec3 mxmxh = m.cross(mxh);
    Vec3 rhs = (mxh + mxmxh * p.damping) * (-p.gyro);
    if (i_s.x != 0.0 || i_s.y != 0.0 || i_s.z != 0.0) {
        const Vec3 torque = (i_s - m * m.dot(i_s)) *
                            (1.0 / (constants::q_electron * p.spin_count));
        rhs += torque + m.cross(torque) * p.damping;
    }
    return rhs * inv_1a2;
}

// Precomputes the per-step constants; the hot path for device simulations.
// Thermal normals come from the stream's polar sampler.
class LlgStepper {
  public:
    LlgStepper(const MagnetParams& params, double dt)
        : p_(params), dt_(dt), sigma_(thermal_sigma(params, dt)) {
        p_.validate();
        const double inv_1a2 = 1.0 / (1.0 + p_.damping * p_.damping);
        gamma_eff_ = p_.gyro * inv_1a2;
        alpha_gamma_eff_ = p_.damping * gamma_eff_;
        torque_scale_ = inv_1a2 / (constants::q_electron * p_.spin_count);
        ms_nx_ = p_.ms * p_.demag.x;
        ms_ny_ = p_.ms * p_.demag.y;
        ms_nz_ = p_.ms * p_.demag.z;
    }

    const MagnetParams& params() const { return p_; }
    double dt() const { return dt_; }

    // One stochastic Heun step. The drive pair is held constant through the
    // step; the anisotropy/demag field is re-evaluated at the predictor.
    Vec3 step(const Vec3& m, const Vec3& applied, const Vec3& i_s,
              rng::RandomStream& rs) const {
        if (!applied.finite() || !i_s.finite())
            throw NumericError("llg_step: non-finite drive");
        Vec3 h_drive = applied;
        if (sigma_ != 0.0) {
            h_drive.x += sigma_ * rs.normal();
            h_drive.y += sigma_ * rs.normal();
            h_drive.z += sigma_ * rs.normal();
        }
        const Vec3 k1 = rhs(m, h_drive, i_s);
        const Vec3 m_pred = m + k1 * dt_;
        const Vec3 k2 = rhs(m_pred, h_drive, i_s);
        return (m + (k1 + k2) * (0.5 * dt_)).normalized();
    }

  private:
    Vec3 rhs(const Vec3& m, const Vec3& h_drive, const Vec3& i_s) const {
        const Vec3 h{h_drive.x - ms_nx_ * m.x, h_drive.y - ms_ny_ * m.y,
                     h_drive.z + (p_.hk - ms_nz_) * m.z};
        const Vec3 mxh = m.cross(h);
        const Vec3 mxmxh = m.cross(mxh);
        Vec3 out{-gamma_eff_ * mxh.x - alpha_gamma_eff_ * mxmxh.x,
                 -gamma_eff_ * mxh.y - alpha_gamma_eff_ * mxmxh.y,
                 -gamma_eff_ * mxh.z - alpha_gamma_eff_ * mxmxh.z};
        if (i_s.x != 0.0 || i_s.y != 0.0 || i_s.z != 0.0) {
            const Vec3 torque = (i_s - m * m.dot(i_s)) * torque_scale_;
            out += torque + m.cross(torque) * p_.damping;
        }
        return out;
    }

    MagnetParams p_;
    double dt_;
    double sigma_;
    double gamma_eff_ = 0.0;
    double alpha_gamma_eff_ = 0.0;
    double torque_scale_ = 0.0;
    double ms_nx_ = 0.0, ms_ny_ = 0.0, ms_nz_ = 0.0;
};

// Single stochastic Heun step (spec operation form).
inline Vec3 llg_step(const Vec3& m, const MagnetParams& p, const Vec3& applied,
                     const Vec3& i_s, double dt, rng::RandomStream& rs) {
    detail::require_unit(m, "llg_step");
    return LlgStepper(p, dt).step(m, applied, i_s, rs);
}

// Integrates floor(duration/dt) steps; returns floor(duration/dt)+1 samples.
inline Trajectory simulate_trajectory(const Vec3& m0, const MagnetParams& p,
                                      const DriveSignal& drive, double duration,
                                      double dt, std::uint64_t seed) {
    detail::require_unit(m0, "simulate_trajectory");
    if (!(duration >= dt)) throw InvalidInput("simulate_trajectory: duration < dt");
    const auto n_steps = static_cast<std::size_t>(duration / dt);
    const LlgStepper stepper(p, dt);
    rng::RandomStream rs(seed);

    Trajectory traj;
    traj.timestep = dt;
    traj.samples.reserve(n_steps + 1);
    Vec3 m = m0.normalized();
    traj.samples.push_back({0.0, m});
    for (std::size_t i = 0; i < n_steps; ++i) {
        const double t = static_cast<double>(i) * dt;
        try {
            m = stepper.step(m, drive.applied_field(t), drive.spin_current(t), rs);
        } catch (const NumericError& e) {
            throw NumericError(std::string(e.what()) + " at step " + std::to_string(i));
        }
        traj.samples.push_back({static_cast<double>(i + 1) * dt, m});
    }
    return traj;
}

// Barrier of the uniaxial term alone, in units of kB*T.
inline double energy_barrier(const MagnetParams& p) {
    if (!(p.temperature > 0.0)) throw InvalidInput("energy_barrier: temperature must be positive");
    return (constants::mu0 * p.ms * p.hk / 2.0) * p.volume /
           (constants::k_boltzmann * p.temperature);
}

// Anisotropy + demag + Zeeman energy [J]; the conserved quantity at zero
// damping, zero current, zero temperature.
inline double magnetic_energy(const Vec3& m, const MagnetParams& p,
                              const Vec3& applied = Vec3{}) {
    const double aniso = -p.ms * p.hk * m.z * m.z / 2.0;
    const double demag = p.ms * p.ms *
                         (p.demag.x * m.x * m.x + p.demag.y * m.y * m.y +
                          p.demag.z * m.z * m.z) /
                         2.0;
    const double zeeman = -p.ms * m.dot(applied);
    return constants::mu0 * (aniso + demag + zeeman) * p.volume;
}

} // namespace magspike
