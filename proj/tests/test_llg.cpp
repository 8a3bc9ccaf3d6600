#include <doctest.h>

#include <cmath>
#include <numbers>

#include "magspike/constants.hpp"
#include "magspike/llg.hpp"
#include "magspike/magnet.hpp"
#include "magspike/rng.hpp"

using namespace magspike;

namespace {

MagnetParams test_magnet(double hk, Vec3 demag, double temperature, double damping = 0.0122,
                         double ms = 7.5e5) {
    return make_magnet(ms, paper_volume(), damping, hk, demag, temperature);
}

} // namespace

TEST_CASE("demag factors: sphere, plate limits, paper ellipse") {
    const auto sphere = demag_factors_ellipsoid(1e-9, 1e-9, 1e-9);
    CHECK(sphere.x == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
    CHECK(sphere.y == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
    CHECK(sphere.z == doctest::Approx(1.0 / 3.0).epsilon(1e-9));

    const auto paper = paper_demag_factors();
    CHECK(paper.x + paper.y + paper.z == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(paper.y > paper.x); // thickness axis dominates
    CHECK(paper.x > paper.z); // long axis smallest
    CHECK(paper.z == doctest::Approx(0.010490).epsilon(1e-3));
}

TEST_CASE("effective field: anisotropy only along easy axis") {
    const auto p = test_magnet(3.87e4, {0, 0, 0}, 300.0);
    const auto h = effective_field({0, 0, 1}, p, {0, 0, 0});
    CHECK(h.x == 0.0);
    CHECK(h.y == 0.0);
    CHECK(h.z == doctest::Approx(3.87e4));
}

TEST_CASE("effective field: full demag along z") {
    const auto p = test_magnet(0.0, {0, 0, 1}, 300.0);
    const auto h = effective_field({0, 0, 1}, p, {0, 0, 0});
    CHECK(h.z == doctest::Approx(-7.5e5));
}

TEST_CASE("effective field: mixed case equals hand-computed three-term sum") {
    const double s = 1.0 / std::sqrt(2.0);
    const Vec3 m{s, 0.0, s};
    const Vec3 applied{1e3, -2e3, 5e2};
    const auto p = test_magnet(3.87e4, {0.2, 0.3, 0.5}, 300.0);
    // independent hand evaluation, term by term
    const Vec3 aniso{0.0, 0.0, 3.87e4 * s};
    const Vec3 demag{-7.5e5 * 0.2 * s, 0.0, -7.5e5 * 0.5 * s};
    const auto h = effective_field(m, p, applied);
    CHECK(h.x == doctest::Approx(aniso.x + demag.x + applied.x).epsilon(1e-12));
    CHECK(h.y == doctest::Approx(aniso.y + demag.y + applied.y).epsilon(1e-12));
    CHECK(h.z == doctest::Approx(aniso.z + demag.z + applied.z).epsilon(1e-12));
}

TEST_CASE("effective field rejects non-unit m") {
    const auto p = test_magnet(3.87e4, {0, 0, 0}, 300.0);
    CHECK_THROWS_AS((void)effective_field({0, 0, 1.5}, p, {}), InvalidInput);
}

TEST_CASE("thermal field: zero temperature, determinism, Monte Carlo sigma") {
    const auto cold = test_magnet(3.87e4, {0, 0, 0}, 0.0);
    rng::RandomStream rs(1);
    const auto h0 = thermal_field_sample(cold, 1e-12, rs);
    CHECK(h0.x == 0.0);
    CHECK(h0.y == 0.0);
    CHECK(h0.z == 0.0);
    CHECK_THROWS_AS((void)thermal_field_sample(cold, 0.0, rs), InvalidInput);

    const auto p = paper_magnet();
    rng::RandomStream a(42), b(42);
    const auto ha = thermal_field_sample(p, 1e-12, a);
    const auto hb = thermal_field_sample(p, 1e-12, b);
    CHECK(ha.x == hb.x);
    CHECK(ha.y == hb.y);
    CHECK(ha.z == hb.z);

    const double sigma = thermal_sigma(p, 1e-12);
    rng::RandomStream mc(7);
    const int n = 1000000;
    double sx = 0, sy = 0, sz = 0;
    for (int i = 0; i < n; ++i) {
        const auto h = thermal_field_sample(p, 1e-12, mc);
        sx += h.x * h.x;
        sy += h.y * h.y;
        sz += h.z * h.z;
    }
    CHECK(std::sqrt(sx / n) == doctest::Approx(sigma).epsilon(0.01));
    CHECK(std::sqrt(sy / n) == doctest::Approx(sigma).epsilon(0.01));
    CHECK(std::sqrt(sz / n) == doctest::Approx(sigma).epsilon(0.01));
}

TEST_CASE("llg_step: fixed point when m is parallel to the field") {
    const auto p = test_magnet(3.87e4, {0, 0, 0}, 0.0);
    rng::RandomStream rs(1);
    const auto m1 = llg_step({0, 0, 1}, p, {0, 0, 0}, {0, 0, 0}, 1e-12, rs);
    CHECK(m1.x == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(m1.y == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(m1.z == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("llg_step rejects non-finite drive") {
    const auto p = test_magnet(3.87e4, {0, 0, 0}, 300.0);
    rng::RandomStream rs(1);
    CHECK_THROWS_AS(
        (void)llg_step({0, 0, 1}, p, {std::nan(""), 0, 0}, {0, 0, 0}, 1e-12, rs),
        NumericError);
}

TEST_CASE("hot-path stepper matches the reference explicit form") {
    const auto p = test_magnet(2e4, {0.2, 0.3, 0.5}, 0.0);
    const double dt = 1e-12;
    const Vec3 m0 = Vec3{0.3, -0.4, 0.9}.normalized();
    const Vec3 applied{5e3, 1e3, -2e3};
    const Vec3 i_s{0.0, 0.0, 4e-5};
    rng::RandomStream rs(1);
    const auto fast = LlgStepper(p, dt).step(m0, applied, i_s, rs);
    // manual Heun built from the public pieces
    const auto h1 = effective_field(m0, p, applied);
    const auto k1 = llg_rhs(m0, p, h1, i_s);
    const auto mp = m0 + k1 * dt;
    const auto h2 = Vec3{-p.ms * p.demag.x * mp.x + applied.x,
                         -p.ms * p.demag.y * mp.y + applied.y,
                         p.hk * mp.z - p.ms * p.demag.z * mp.z + applied.z};
    const auto k2 = llg_rhs(mp, p, h2, i_s);
    const auto ref = (m0 + (k1 + k2) * (0.5 * dt)).normalized();
    CHECK(fast.x == doctest::Approx(ref.x).epsilon(1e-14));
    CHECK(fast.y == doctest::Approx(ref.y).epsilon(1e-14));
    CHECK(fast.z == doctest::Approx(ref.z).epsilon(1e-14));
}

TEST_CASE("Larmor precession at zero damping matches gamma*H/2pi within 1 percent") {
    auto p = test_magnet(0.0, {0, 0, 0}, 0.0, /*damping=*/0.0);
    const double h_mag = 1e4;
    const double f_expected = p.gyro * h_mag / (2.0 * std::numbers::pi);
    CHECK(f_expected == doctest::Approx(3.52e8).epsilon(0.01)); // spec reference value

    const double dt = 5e-13;
    const double period = 1.0 / f_expected;
    const auto steps = static_cast<std::size_t>(100.0 * period / dt);
    Vec3 m = Vec3{std::sin(0.4), 0.0, std::cos(0.4)};
    const LlgStepper stepper(p, dt);
    rng::RandomStream rs(1);
    double phase = 0.0;
    double prev_angle = std::atan2(m.y, m.x);
    const double mz0 = m.z;
    double max_dz = 0.0;
    for (std::size_t i = 0; i < steps; ++i) {
        m = stepper.step(m, {0, 0, h_mag}, {0, 0, 0}, rs);
        const double ang = std::atan2(m.y, m.x);
        double d = ang - prev_angle;
        if (d > std::numbers::pi) d -= 2 * std::numbers::pi;
        if (d < -std::numbers::pi) d += 2 * std::numbers::pi;
        phase += d;
        prev_angle = ang;
        max_dz = std::max(max_dz, std::fabs(m.z - mz0));
    }
    const double f_measured = std::fabs(phase) / (2.0 * std::numbers::pi) /
                              (static_cast<double>(steps) * dt);
    CHECK(f_measured == doctest::Approx(f_expected).epsilon(0.01));
    CHECK(max_dz < 1e-6); // m_z conserved over 100 periods
}

TEST_CASE("damped relaxation drives m_z monotonically to the easy axis") {
    const auto p = test_magnet(3.87e4, {0, 0, 0}, 0.0);
    Vec3 m{std::sin(1.2), 0.0, std::cos(1.2)};
    const LlgStepper stepper(p, 1e-12);
    rng::RandomStream rs(1);
    double prev = m.z;
    for (int i = 0; i < 200000; ++i) {
        m = stepper.step(m, {}, {}, rs);
        CHECK(m.z >= prev - 1e-12);
        prev = m.z;
    }
    CHECK(m.z > 0.99);
}

TEST_CASE("trajectory: boundary sample count, determinism, unit norm") {
    const auto p = paper_magnet();
    const auto two = simulate_trajectory({0, 0, 1}, p, zero_drive(), 1e-12, 1e-12, 3);
    CHECK(two.samples.size() == 2);

    const auto t1 = simulate_trajectory({0, 0, 1}, p, zero_drive(), 50e-9, 1e-12, 9);
    const auto t2 = simulate_trajectory({0, 0, 1}, p, zero_drive(), 50e-9, 1e-12, 9);
    CHECK(t1.samples.size() == 50001);
    for (std::size_t i = 0; i < t1.samples.size(); ++i) {
        CHECK(t1.samples[i].m.x == t2.samples[i].m.x);
        CHECK(std::fabs(t1.samples[i].m.norm() - 1.0) < 1e-9);
    }
    CHECK_THROWS_AS(
        (void)simulate_trajectory({0, 0, 1}, p, zero_drive(), 0.5e-12, 1e-12, 1),
        InvalidInput);
}

TEST_CASE("superparamagnetic regime: spontaneous reversals at zero drive") {
    const auto p = paper_magnet();
    const auto traj = simulate_trajectory({0, 0, 1}, p, zero_drive(), 10e-6, 1e-12, 2718);
    int reversals = 0;
    double prev = traj.samples.front().m.z;
    for (const auto& s : traj.samples) {
        if (s.m.z * prev < 0.0) {
            ++reversals;
            prev = s.m.z;
        }
    }
    CHECK(reversals >= 10);
}

TEST_CASE("energy barrier: closed form, paper calibration, volume linearity") {
    auto p = test_magnet(0.0, {0, 0, 0}, 300.0);
    CHECK(energy_barrier(p) == 0.0);

    const auto paper = paper_magnet();
    CHECK(energy_barrier(paper) == doctest::Approx(2.0).epsilon(0.01));
    CHECK(paper.hk == doctest::Approx(3.87e4).epsilon(0.01));
    CHECK(paper.volume == doctest::Approx(4.54e-25).epsilon(0.01));

    auto doubled = paper;
    doubled.volume *= 2.0;
    doubled.spin_count *= 2.0;
    CHECK(energy_barrier(doubled) == doctest::Approx(2.0 * energy_barrier(paper)).epsilon(1e-12));
}

TEST_CASE("conservative dynamics: energy drift below 0.1 percent over 1e4 steps") {
    const auto p = make_magnet(1e5, paper_volume(), 0.0, 3.87e4, {0.2, 0.3, 0.5}, 0.0);
    Vec3 m = Vec3{0.6, 0.5, 0.4}.normalized();
    const double e0 = magnetic_energy(m, p);
    const LlgStepper stepper(p, 1e-12);
    rng::RandomStream rs(1);
    double max_drift = 0.0;
    for (int i = 0; i < 10000; ++i) {
        m = stepper.step(m, {}, {}, rs);
        max_drift = std::max(max_drift, std::fabs(magnetic_energy(m, p) - e0));
    }
    CHECK(max_drift / std::fabs(e0) < 1e-3);
}

TEST_CASE("Heun order: halving dt shrinks the endpoint change fourfold") {
    const auto p = test_magnet(3.0e4, {0.2, 0.3, 0.5}, 0.0, 0.05, 2e5);
    const Vec3 m0 = Vec3{0.5, -0.3, 0.8}.normalized();
    const auto endpoint = [&](double dt) {
        Vec3 m = m0;
        const LlgStepper stepper(p, dt);
        rng::RandomStream rs(1);
        const auto n = static_cast<std::size_t>(2e-9 / dt);
        for (std::size_t i = 0; i < n; ++i) m = stepper.step(m, {}, {}, rs);
        return m;
    };
    const auto e1 = endpoint(2e-12);
    const auto e2 = endpoint(1e-12);
    const auto e4 = endpoint(0.5e-12);
    const double d12 = (e1 - e2).norm();
    const double d24 = (e2 - e4).norm();
    const double ratio = d12 / d24;
    CHECK(ratio > 4.0 / 1.5);
    CHECK(ratio < 4.0 * 1.5);
}
