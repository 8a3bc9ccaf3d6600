#pragma once

#include <cmath>
#include <numbers>

#include "magspike/constants.hpp"
#include "magspike/errors.hpp"
#include "magspike/vec3.hpp"

namespace magspike {

// Carlson symmetric integral R_D(x,y,z) by the duplication theorem.
// Needed for the demagnetizing factors of a general ellipsoid.
inline double carlson_rd(double x, double y, double z) {
    double sum = 0.0;
    double fac = 1.0;
    double mu = 0.0, dx = 0.0, dy = 0.0, dz = 0.0;
    for (int it = 0; it < 1000; ++it) {
        const double sx = std::sqrt(x), sy = std::sqrt(y), sz = std::sqrt(z);
        const double lam = sx * (sy + sz) + sy * sz;
        sum += fac / (sz * (z + lam));
        fac *= 0.25;
        x = 0.25 * (x + lam);
        y = 0.25 * (y + lam);
        z = 0.25 * (z + lam);
        mu = (x + y + 3.0 * z) * 0.2;
        dx = (mu - x) / mu;
        dy = (mu - y) / mu;
        dz = (mu - z) / mu;
        if (std::max({std::fabs(dx), std::fabs(dy), std::fabs(dz)}) < 1e-10) break;
    }
    const double ea = dx * dy;
    const double eb = dz * dz;
    const double ec = ea - eb;
    const double ed = ea - 6.0 * eb;
    const double ee = ed + ec + ec;
    const double series =
        1.0 + ed * (-3.0 / 14.0 + (9.0 / 88.0) * ed - (4.5 / 26.0) * dz * ee) +
        dz * ((1.0 / 6.0) * ee + dz * (-(9.0 / 22.0) * ec + dz * (3.0 / 26.0) * ea));
    return 3.0 * sum + fac * series / (mu * std::sqrt(mu));
}

// Diagonal demagnetizing factors of a uniformly magnetized ellipsoid with
// semi-axes (ax, ay, az). Factors sum to 1.
inline Vec3 demag_factors_ellipsoid(double ax, double ay, double az) {
    if (!(ax > 0.0 && ay > 0.0 && az > 0.0))
        throw InvalidInput("demag_factors_ellipsoid: semi-axes must be positive");
    const double abc3 = ax * ay * az / 3.0;
    return {abc3 * carlson_rd(ay * ay, az * az, ax * ax),
            abc3 * carlson_rd(az * az, ax * ax, ay * ay),
            abc3 * carlson_rd(ax * ax, ay * ay, az * az)};
}

// Material, geometry, and thermal parameters of one macrospin free layer.
// The easy axis is +z by convention; demag holds the diagonal ellipsoid
// factors (Nx, Ny, Nz).
struct MagnetParams {
    double ms = 0.0;            // saturation magnetization [A/m]
    double volume = 0.0;        // free-layer volume [m^3]
    double damping = 0.0;       // Gilbert damping ratio
    double gyro = constants::gyromagnetic; // gyromagnetic ratio [m/(A s)]
    double hk = 0.0;            // uniaxial anisotropy field along z [A/m]
    Vec3 demag{0.0, 0.0, 0.0};  // diagonal demagnetizing factors
    double temperature = 0.0;   // [K]
    double spin_count = 0.0;    // Ns = Ms V / mu_B

    void validate() const {
        if (!(ms > 0.0)) throw InvalidInput("MagnetParams: ms must be positive");
        if (!(volume > 0.0)) throw InvalidInput("MagnetParams: volume must be positive");
        if (!(damping >= 0.0 && damping < 1.0))
            throw InvalidInput("MagnetParams: damping must be in [0, 1)");
        if (!(gyro > 0.0)) throw InvalidInput("MagnetParams: gyro must be positive");
        if (temperature < 0.0) throw InvalidInput("MagnetParams: temperature must be >= 0");
        const double nsum = demag.x + demag.y + demag.z;
        if (nsum != 0.0 && std::fabs(nsum - 1.0) > 1e-9)
            throw InvalidInput("MagnetParams: demag factors must sum to 1");
        const double ns = ms * volume / constants::mu_bohr;
        if (std::fabs(spin_count - ns) > 1e-9 * ns)
            throw InvalidInput("MagnetParams: spin_count inconsistent with Ms*V/mu_B");
    }

    double thermal_energy() const { return constants::k_boltzmann * temperature; }
};

// Builds params with spin_count derived from Ms*V/mu_B.
inline MagnetParams make_magnet(double ms, double volume, double damping, double hk,
                                Vec3 demag, double temperature,
                                double gyro = constants::gyromagnetic) {
    MagnetParams p;
    p.ms = ms;
    p.volume = volume;
    p.damping = damping;
    p.gyro = gyro;
    p.hk = hk;
    p.demag = demag;
    p.temperature = temperature;
    p.spin_count = ms * volume / constants::mu_bohr;
    p.validate();
    return p;
}

// Anisotropy field that puts the uniaxial barrier mu0*Ms*Hk*V/2 at the
// requested multiple of kB*T.
inline double hk_for_barrier(double barrier_kt, double ms, double volume, double temperature) {
    if (!(temperature > 0.0)) throw InvalidInput("hk_for_barrier: temperature must be positive");
    return 2.0 * barrier_kt * constants::k_boltzmann * temperature /
           (constants::mu0 * ms * volume);
}

// Elliptical free layer of the reference device: 17 nm x 42.5 nm x 0.8 nm,
// long axis along z, thickness along y.
inline constexpr double paper_width = 17e-9;
inline constexpr double paper_length = 42.5e-9;
inline constexpr double paper_thickness = 0.8e-9;
inline constexpr double paper_ms = 7.5e5;
inline constexpr double paper_damping = 0.0122;

inline double paper_volume() {
    return std::numbers::pi / 4.0 * paper_width * paper_length * paper_thickness;
}

inline Vec3 paper_demag_factors() {
    return demag_factors_ellipsoid(paper_width / 2.0, paper_thickness / 2.0,
                                   paper_length / 2.0);
}

inline MagnetParams paper_magnet(double temperature = 300.0, double barrier_kt = 2.0) {
    const double v = paper_volume();
    const double hk = hk_for_barrier(barrier_kt, paper_ms, v, temperature);
    return make_magnet(paper_ms, v, paper_damping, hk, paper_demag_factors(), temperature);
}

} // namespace magspike
