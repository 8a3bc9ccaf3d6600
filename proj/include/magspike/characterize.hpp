#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <string>
#include <vector>

#include "magspike/errors.hpp"
#include "magspike/mtj.hpp"
#include "magspike/parallel.hpp"
#include "magspike/rng.hpp"
#include "magspike/stats.hpp"
#include "magspike/telegraph.hpp"

// Lifetime maps over the transformed (V1, V2) input plane, and the
// least-squares calibration that recovers the basis angles from raw
// (V_ME, V_I) sweeps.
namespace magspike {

struct ContourMap {
    std::vector<double> v1_grid;
    std::vector<double> v2_grid;
    // Row-major [i_v1 * v2_grid.size() + j_v2]. A failed grid point (too few
    // dwells within the simulation budget) has n_p == n_ap == 0 and a warning.
    std::vector<LifetimeEstimate> estimates;
    std::vector<std::string> warnings;

    const LifetimeEstimate& at(std::size_t i_v1, std::size_t j_v2) const {
        return estimates[i_v1 * v2_grid.size() + j_v2];
    }
    static bool valid(const LifetimeEstimate& e) { return e.n_p > 0 && e.n_ap > 0; }
};

// For each grid point: map (v1, v2) to terminal voltages, run the device,
// binarize, and estimate lifetimes. Points run in parallel with per-point
// derived seeds.
inline ContourMap characterize(const DeviceBundle& dev, const std::vector<double>& v1_list,
                               const std::vector<double>& v2_list, double sim_time,
                               std::uint64_t seed, std::size_t min_dwells = 30) {
    if (v1_list.empty() || v2_list.empty())
        throw InvalidInput("characterize: empty voltage grid");
    dev.validate();
    ContourMap map;
    map.v1_grid = v1_list;
    map.v2_grid = v2_list;
    map.estimates.resize(v1_list.size() * v2_list.size());
    std::vector<std::string> warn(map.estimates.size());

    parallel_for(map.estimates.size(), [&](std::size_t idx) {
        const std::size_t i = idx / v2_list.size();
        const std::size_t j = idx % v2_list.size();
        const auto [v_me, v_i] = inverse_basis_transform(v1_list[i], v2_list[j], dev.basis);
        const auto trace = simulate_device_telegraph(
            dev, v_me, v_i, sim_time, rng::derive_seed(seed, "characterize", idx));
        try {
            const auto est = extract_lifetimes(trace, /*discard_edges=*/true);
            map.estimates[idx] = est;
            if (est.n_p < min_dwells || est.n_ap < min_dwells)
                warn[idx] = "grid point (" + std::to_string(v1_list[i]) + ", " +
                            std::to_string(v2_list[j]) + ") has only " + std::to_string(est.n_p) +
                            "/" + std::to_string(est.n_ap) + " P/AP dwells";
        } catch (const EstimationError& e) {
            warn[idx] = "grid point (" + std::to_string(v1_list[i]) + ", " +
                        std::to_string(v2_list[j]) + ") failed: " + e.what();
        }
    });
    for (auto& w : warn)
        if (!w.empty()) map.warnings.push_back(std::move(w));
    return map;
}

// Lifetime grid over raw terminal voltages; used before a basis exists.
struct TerminalGrid {
    std::vector<double> v_me;
    std::vector<double> v_i;
    std::vector<LifetimeEstimate> estimates; // row-major [i_me * v_i.size() + j]
    std::vector<std::string> warnings;
};

inline TerminalGrid characterize_terminal(const DeviceBundle& dev,
                                          const std::vector<double>& v_me_list,
                                          const std::vector<double>& v_i_list,
                                          double sim_time, std::uint64_t seed) {
    TerminalGrid grid;
    grid.v_me = v_me_list;
    grid.v_i = v_i_list;
    grid.estimates.resize(v_me_list.size() * v_i_list.size());
    std::vector<std::string> warn(grid.estimates.size());
    parallel_for(grid.estimates.size(), [&](std::size_t idx) {
        const std::size_t i = idx / v_i_list.size();
        const std::size_t j = idx % v_i_list.size();
        const auto trace = simulate_device_telegraph(
            dev, v_me_list[i], v_i_list[j], sim_time,
            rng::derive_seed(seed, "characterize-terminal", idx));
        try {
            grid.estimates[idx] = extract_lifetimes(trace, /*discard_edges=*/true);
        } catch (const EstimationError& e) {
            warn[idx] = "terminal point (" + std::to_string(v_me_list[i]) + ", " +
                        std::to_string(v_i_list[j]) + ") failed: " + e.what();
        }
    });
    for (auto& w : warn)
        if (!w.empty()) grid.warnings.push_back(std::move(w));
    return grid;
}

// Fits planes log tau = c0 + c1 V_ME + c2 V_I for both lifetimes and returns
// the basis whose V1 axis runs along the tau_AP contours (so V1 moves only
// tau_P) and whose V2 axis runs along the tau_P contours. Signs are oriented
// so that increasing V1 shortens tau_P and increasing V2 lengthens tau_AP.
inline BasisAngles calibrate_basis(const TerminalGrid& grid) {
    std::vector<double> u, v, log_p, log_ap;
    for (std::size_t i = 0; i < grid.v_me.size(); ++i) {
        for (std::size_t j = 0; j < grid.v_i.size(); ++j) {
            const auto& est = grid.estimates[i * grid.v_i.size() + j];
            if (!ContourMap::valid(est)) continue;
            u.push_back(grid.v_me[i]);
            v.push_back(grid.v_i[j]);
            log_p.push_back(std::log(est.tau_p));
            log_ap.push_back(std::log(est.tau_ap));
        }
    }
    if (u.size() < 6)
        throw CalibrationError("calibrate_basis: only " + std::to_string(u.size()) +
                               " usable grid points");
    const auto plane_p = stats::fit_plane(u, v, log_p);
    const auto plane_ap = stats::fit_plane(u, v, log_ap);

    // Contour direction = perpendicular of the in-plane gradient.
    double a_x = -plane_ap.cv, a_y = plane_ap.cu;  // tau_AP contour
    double b_x = -plane_p.cv, b_y = plane_p.cu;    // tau_P contour
    // Orient V1 so it shortens tau_P, V2 so it lengthens tau_AP.
    if (plane_p.cu * a_x + plane_p.cv * a_y > 0.0) { a_x = -a_x; a_y = -a_y; }
    if (plane_ap.cu * b_x + plane_ap.cv * b_y < 0.0) { b_x = -b_x; b_y = -b_y; }

    BasisAngles angles{std::atan2(a_y, a_x), std::atan2(b_y, b_x)};
    angles.validate();
    return angles;
}

// CSV with one row per grid point: v1, v2, tau_p, se_p, n_p, tau_ap, se_ap, n_ap.
inline void write_contour_csv(const ContourMap& map, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("write_contour_csv: cannot open " + path);
    out << "v1_V,v2_V,tau_p_s,se_p_s,n_p,tau_ap_s,se_ap_s,n_ap\n";
    out << std::setprecision(17);
    for (std::size_t i = 0; i < map.v1_grid.size(); ++i) {
        for (std::size_t j = 0; j < map.v2_grid.size(); ++j) {
            const auto& e = map.at(i, j);
            out << map.v1_grid[i] << ',' << map.v2_grid[j] << ',' << e.tau_p << ',' << e.se_p
                << ',' << e.n_p << ',' << e.tau_ap << ',' << e.se_ap << ',' << e.n_ap << '\n';
        }
    }
}

} // namespace magspike
