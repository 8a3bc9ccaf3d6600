#pragma once

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include <json.hpp>

#include "magspike/behavior.hpp"
#include "magspike/characterize.hpp"
#include "magspike/errors.hpp"
#include "magspike/llg.hpp"
#include "magspike/magnet.hpp"
#include "magspike/mtj.hpp"
#include "magspike/rng.hpp"
#include "magspike/snn.hpp"

// JSON round trips for every persisted type, checkpoint files, and config
// hashing. Keys carry SI unit suffixes. nlohmann::json orders keys
// alphabetically and prints shortest round-trip doubles, so serialization is
// byte-deterministic.
namespace magspike {

using json = nlohmann::json;

inline void to_json(json& j, const Vec3& v) { j = json::array({v.x, v.y, v.z}); }
inline void from_json(const json& j, Vec3& v) {
    if (!j.is_array() || j.size() != 3) throw FormatError("Vec3: expected [x, y, z]");
    v = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline void to_json(json& j, const MagnetParams& p) {
    j = json{{"ms_A_per_m", p.ms},
             {"volume_m3", p.volume},
             {"damping", p.damping},
             {"gyro_m_per_A_s", p.gyro},
             {"hk_A_per_m", p.hk},
             {"demag", p.demag},
             {"temperature_K", p.temperature},
             {"spin_count", p.spin_count}};
}
inline void from_json(const json& j, MagnetParams& p) {
    p.ms = j.at("ms_A_per_m").get<double>();
    p.volume = j.at("volume_m3").get<double>();
    p.damping = j.at("damping").get<double>();
    p.gyro = j.value("gyro_m_per_A_s", constants::gyromagnetic);
    p.hk = j.at("hk_A_per_m").get<double>();
    p.demag = j.value("demag", Vec3{});
    p.temperature = j.at("temperature_K").get<double>();
    p.spin_count = j.value("spin_count", p.ms * p.volume / constants::mu_bohr);
    p.validate();
}

inline void to_json(json& j, const MtjParams& p) {
    j = json{{"r_p_ohm", p.r_p},
             {"tmr", p.tmr},
             {"polarization", p.polarization},
             {"me_coeff_s_per_m", p.me_coeff},
             {"me_thickness_m", p.me_thickness},
             {"pinned_axis", p.pinned_axis}};
}
inline void from_json(const json& j, MtjParams& p) {
    p.r_p = j.at("r_p_ohm").get<double>();
    p.tmr = j.at("tmr").get<double>();
    p.polarization = j.at("polarization").get<double>();
    p.me_coeff = j.at("me_coeff_s_per_m").get<double>();
    p.me_thickness = j.at("me_thickness_m").get<double>();
    p.pinned_axis = j.value("pinned_axis", Vec3{0.0, 0.0, 1.0});
    p.validate();
}

inline void to_json(json& j, const ReadoutParams& p) {
    j = json{{"i_total_A", p.i_total}, {"r_load_ohm", p.r_load}};
}
inline void from_json(const json& j, ReadoutParams& p) {
    p.i_total = j.at("i_total_A").get<double>();
    p.r_load = j.at("r_load_ohm").get<double>();
    p.validate();
}

inline void to_json(json& j, const BasisAngles& a) {
    j = json{{"alpha_rad", a.alpha}, {"beta_rad", a.beta}};
}
inline void from_json(const json& j, BasisAngles& a) {
    a.alpha = j.at("alpha_rad").get<double>();
    a.beta = j.at("beta_rad").get<double>();
    a.validate();
}

inline void to_json(json& j, const DeviceBundle& d) {
    j = json{{"magnet", d.magnet},
             {"mtj", d.mtj},
             {"readout", d.readout},
             {"basis", d.basis},
             {"threshold_hi", d.threshold_hi},
             {"threshold_lo", d.threshold_lo},
             {"readout_window_s", d.readout_window},
             {"dt_s", d.dt},
             {"v2_operating_V", d.v2_operating},
             {"v1_min_V", d.v1_min},
             {"v1_max_V", d.v1_max}};
}
inline void from_json(const json& j, DeviceBundle& d) {
    d.magnet = j.at("magnet").get<MagnetParams>();
    d.mtj = j.at("mtj").get<MtjParams>();
    if (j.contains("readout")) d.readout = j.at("readout").get<ReadoutParams>();
    if (j.contains("basis")) d.basis = j.at("basis").get<BasisAngles>();
    d.threshold_hi = j.value("threshold_hi", 0.5);
    d.threshold_lo = j.value("threshold_lo", -0.5);
    d.readout_window = j.value("readout_window_s", 0.0);
    d.dt = j.value("dt_s", 1e-12);
    d.v2_operating = j.value("v2_operating_V", 0.0);
    d.v1_min = j.value("v1_min_V", 0.0);
    d.v1_max = j.value("v1_max_V", 0.0);
    d.validate();
}

inline void to_json(json& j, const ActivationFit& f) {
    j = json{{"tau0_s", f.tau0},
             {"vref_V", f.vref},
             {"vc_V", f.vc},
             {"v_min_V", f.v_min},
             {"v_max_V", f.v_max},
             {"tau_ap_fixed_s", f.tau_ap_fixed},
             {"fit_residual", f.fit_residual}};
}
inline void from_json(const json& j, ActivationFit& f) {
    f.tau0 = j.at("tau0_s").get<double>();
    f.vref = j.at("vref_V").get<double>();
    f.vc = j.at("vc_V").get<double>();
    f.v_min = j.at("v_min_V").get<double>();
    f.v_max = j.at("v_max_V").get<double>();
    f.tau_ap_fixed = j.at("tau_ap_fixed_s").get<double>();
    f.fit_residual = j.value("fit_residual", 0.0);
    f.validate();
}

inline void to_json(json& j, const TargetSpec& t) {
    j = json{{"t1_s", t.t1}, {"t2_s", t.t2}};
}
inline void from_json(const json& j, TargetSpec& t) {
    t.t1 = j.at("t1_s").get<double>();
    t.t2 = j.at("t2_s").get<double>();
    t.validate();
}

inline void to_json(json& j, const TrainConfig& c) {
    j = json{{"learning_rate", c.learning_rate},
             {"epochs", c.epochs},
             {"batch_size", c.batch_size},
             {"seed", c.seed},
             {"init_scale", c.init_scale},
             {"threads", c.n_threads}};
}
inline void from_json(const json& j, TrainConfig& c) {
    c.learning_rate = j.at("learning_rate").get<double>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.batch_size = j.value("batch_size", std::size_t{1});
    c.seed = j.value("seed", std::uint64_t{0});
    c.init_scale = j.value("init_scale", 1.0);
    c.n_threads = j.value("threads", 0u);
    c.validate();
}

inline void to_json(json& j, const LifetimeEstimate& e) {
    j = json{{"tau_p_s", e.tau_p}, {"tau_ap_s", e.tau_ap}, {"n_p", e.n_p},
             {"n_ap", e.n_ap},     {"se_p_s", e.se_p},     {"se_ap_s", e.se_ap}};
}
inline void from_json(const json& j, LifetimeEstimate& e) {
    e.tau_p = j.at("tau_p_s").get<double>();
    e.tau_ap = j.at("tau_ap_s").get<double>();
    e.n_p = j.at("n_p").get<std::size_t>();
    e.n_ap = j.at("n_ap").get<std::size_t>();
    e.se_p = j.at("se_p_s").get<double>();
    e.se_ap = j.at("se_ap_s").get<double>();
}

inline void to_json(json& j, const ContourMap& m) {
    j = json{{"v1_grid_V", m.v1_grid},
             {"v2_grid_V", m.v2_grid},
             {"estimates", m.estimates},
             {"warnings", m.warnings}};
}
inline void from_json(const json& j, ContourMap& m) {
    m.v1_grid = j.at("v1_grid_V").get<std::vector<double>>();
    m.v2_grid = j.at("v2_grid_V").get<std::vector<double>>();
    m.estimates = j.at("estimates").get<std::vector<LifetimeEstimate>>();
    m.warnings = j.value("warnings", std::vector<std::string>{});
}

// The PRNG family is part of the persisted schema so that streams are
// reproducible from file alone.
inline constexpr const char* prng_family = "xoshiro256++/splitmix64/box-muller";

inline std::string config_hash(const json& j) {
    const std::uint64_t h = rng::fnv1a64(j.dump());
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

inline constexpr const char* checkpoint_format = "magspike-checkpoint-v1";

inline json checkpoint_to_json(const Network& net, const TargetSpec& targets,
                               const TrainConfig& cfg, const std::string& cfg_hash) {
    json layers = json::array();
    for (const auto& w : net.weights)
        layers.push_back(json{{"rows", w.rows}, {"cols", w.cols}, {"data", w.data}});
    return json{{"format", checkpoint_format},
                {"prng", prng_family},
                {"activation", net.activation},
                {"t_norm_s", net.t_norm},
                {"targets", targets},
                {"train_config", cfg},
                {"config_hash", cfg_hash},
                {"layers", layers}};
}

struct Checkpoint {
    Network net;
    TargetSpec targets;
    TrainConfig train_config;
    std::string config_hash;
};

inline Checkpoint checkpoint_from_json(const json& j) {
    if (j.value("format", "") != checkpoint_format)
        throw FormatError("checkpoint: unknown format '" + j.value("format", "") + "'");
    Checkpoint cp;
    cp.net.activation = j.at("activation").get<ActivationFit>();
    cp.net.t_norm = j.at("t_norm_s").get<double>();
    for (const auto& layer : j.at("layers")) {
        Matrix w(layer.at("rows").get<std::size_t>(), layer.at("cols").get<std::size_t>());
        w.data = layer.at("data").get<std::vector<double>>();
        if (w.data.size() != w.rows * w.cols)
            throw FormatError("checkpoint: layer data size mismatch");
        cp.net.weights.push_back(std::move(w));
    }
    cp.targets = j.at("targets").get<TargetSpec>();
    cp.train_config = j.at("train_config").get<TrainConfig>();
    cp.config_hash = j.value("config_hash", "");
    cp.net.validate();
    return cp;
}

inline void write_json_file(const json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out << j.dump(2) << '\n';
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw FormatError(path + ": " + e.what());
    }
    return j;
}

// CSV columns (t_s, mx, my, mz).
inline void write_trajectory_csv(const Trajectory& traj, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out << "t_s,mx,my,mz\n" << std::setprecision(17);
    for (const auto& s : traj.samples)
        out << s.t << ',' << s.m.x << ',' << s.m.y << ',' << s.m.z << '\n';
}

} // namespace magspike
