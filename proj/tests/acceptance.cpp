// Acceptance suite. `acceptance core` runs the physics, gradient,
// reproduction, and determinism criteria that are self-contained;
// `acceptance mnist` runs the MNIST training/evaluation criteria and fails
// with an explanation when the dataset is not on disk (MNIST_DIR or
// data/mnist under the repository root).

#include <cmath>
#include <cstdarg>
#include <cstdlib>
#include <numbers>

#include "suite_util.hpp"

#include "magspike/behavior.hpp"
#include "magspike/characterize.hpp"
#include "magspike/dataio.hpp"
#include "magspike/llg.hpp"
#include "magspike/snn.hpp"
#include "magspike/stats.hpp"
#include "magspike/telegraph.hpp"

using namespace magspike;

namespace {

// --------------------------------------------------------------------------
// Criterion 5: gradient suite.
// --------------------------------------------------------------------------
double kl_loss_quadrature(double z, double lambda) {
    const double c = std::log(z / lambda);
    const double d = lambda / z - 1.0;
    const auto f = [&](double u) { return std::exp(-u) * (c + d * u); };
    const int n = 40000;
    const double h = 45.0 / n;
    double sum = f(0.0) + f(45.0);
    for (int i = 1; i < n; ++i) sum += f(i * h) * (i % 2 == 1 ? 4.0 : 2.0);
    return sum * h / 3.0;
}

void criterion_gradients(suite::Reporter& rep) {
    ActivationFit fit;
    fit.tau0 = 1.2e-8;
    fit.vref = 0.0;
    fit.vc = 0.012;
    fit.v_min = -0.03;
    fit.v_max = 0.03;
    fit.tau_ap_fixed = 5e-9;

    rng::RandomStream rs(50501);
    double max_rel = 0.0;
    int triples = 0;
    while (triples < 100) {
        const bool deep = rs.uniform() < 0.5;
        const std::vector<std::size_t> arch =
            deep ? std::vector<std::size_t>{7, 6, 5} : std::vector<std::size_t>{9, 6};
        TrainConfig cfg;
        cfg.learning_rate = 1e-4;
        cfg.epochs = 0;
        cfg.batch_size = 1;
        cfg.seed = rs.next_u64();
        cfg.init_scale = 0.03;
        auto net = init_network(arch, fit, 3e-7 / 0.06, cfg);
        std::vector<double> input(arch.front());
        for (auto& x : input) x = 0.02 * (2.0 * rs.uniform() - 1.0);
        const std::size_t label = rs.next_u64() % arch.back();
        const TargetSpec targets{2e-9, 5e-8};

        // clamp-boundary neurons are excluded per the criterion
        const auto states = forward(net, input);
        bool interior = true;
        for (const auto& st : states)
            for (double v1 : st.v1)
                interior = interior && v1 > fit.v_min + 1e-3 && v1 < fit.v_max - 1e-3;
        if (!interior) continue;
        ++triples;

        const auto grads = backward(net, input, label, targets);
        const double h = 1e-6;
        for (std::size_t l = 0; l < net.weights.size(); ++l) {
            double layer_scale = 0.0;
            for (double v : grads[l].data) layer_scale = std::max(layer_scale, std::fabs(v));
            for (std::size_t idx = 0; idx < net.weights[l].data.size(); idx += 5) {
                auto plus = net, minus = net;
                plus.weights[l].data[idx] += h;
                minus.weights[l].data[idx] -= h;
                const double fd = (loss_total(plus, input, label, targets) -
                                   loss_total(minus, input, label, targets)) /
                                  (2.0 * h);
                if (std::fabs(fd) < 1e-3 * layer_scale) continue; // FD noise floor
                const double an = grads[l].data[idx];
                max_rel = std::max(max_rel,
                                   std::fabs(an - fd) / std::max(std::fabs(fd), std::fabs(an)));
            }
        }
    }
    rep.line("criterion-5a-backward-vs-fd", max_rel < 1e-4,
             suite::fmt("max relative error %.3g over 100 triples (want < 1e-4)", max_rel));

    double max_grad_rel = 0.0, max_loss_rel = 0.0;
    rng::RandomStream pr(50502);
    for (int i = 0; i < 200; ++i) {
        const double z = 1e-9 * std::exp(6.0 * pr.uniform());
        const double lambda = 1e-9 * std::exp(6.0 * pr.uniform());
        const double h = 1e-5 * z;
        const double fd = (kl_loss(z + h, lambda) - kl_loss(z - h, lambda)) / (2.0 * h);
        if (std::fabs(fd) * z > 1e-9)
            max_grad_rel = std::max(max_grad_rel, std::fabs(kl_grad(z, lambda) - fd) /
                                                      std::fabs(fd));
        const double quad = kl_loss_quadrature(z, lambda);
        if (std::fabs(quad) > 1e-12)
            max_loss_rel =
                std::max(max_loss_rel, std::fabs(kl_loss(z, lambda) - quad) / std::fabs(quad));
    }
    rep.line("criterion-5b-klgrad-vs-fd", max_grad_rel < 1e-6,
             suite::fmt("max relative error %.3g (want < 1e-6)", max_grad_rel));
    rep.line("criterion-5c-klloss-vs-quadrature", max_loss_rel < 1e-6,
             suite::fmt("max relative error %.3g (want < 1e-6)", max_loss_rel));
}

// --------------------------------------------------------------------------
// Criterion 6: LLG physics.
// --------------------------------------------------------------------------
void criterion_llg_physics(suite::Reporter& rep) {
    // norm drift
    {
        const auto p = paper_magnet();
        const LlgStepper stepper(p, 1e-12);
        rng::RandomStream rs(606);
        Vec3 m{0, 0, 1};
        double worst = 0.0;
        for (int i = 0; i < 100000; ++i) {
            m = stepper.step(m, {}, {}, rs);
            worst = std::max(worst, std::fabs(m.norm() - 1.0));
        }
        rep.line("criterion-6a-norm-drift", worst < 1e-9,
                 suite::fmt("max | |m|-1 | = %.3g per step over 1e5 steps (want < 1e-9)", worst));
    }
    // Larmor frequency at zero damping
    {
        auto p = make_magnet(7.5e5, paper_volume(), 0.0, 0.0, {0, 0, 0}, 0.0);
        const double h_mag = 1e4;
        const double f_expected = p.gyro * h_mag / (2.0 * std::numbers::pi);
        const double dt = 5e-13;
        const auto steps = static_cast<std::size_t>(100.0 / f_expected / dt);
        const LlgStepper stepper(p, dt);
        rng::RandomStream rs(1);
        Vec3 m{std::sin(0.4), 0.0, std::cos(0.4)};
        double phase = 0.0, prev = std::atan2(m.y, m.x);
        for (std::size_t i = 0; i < steps; ++i) {
            m = stepper.step(m, {0, 0, h_mag}, {}, rs);
            const double ang = std::atan2(m.y, m.x);
            double d = ang - prev;
            if (d > std::numbers::pi) d -= 2 * std::numbers::pi;
            if (d < -std::numbers::pi) d += 2 * std::numbers::pi;
            phase += d;
            prev = ang;
        }
        const double f_measured =
            std::fabs(phase) / (2.0 * std::numbers::pi) / (static_cast<double>(steps) * dt);
        rep.line("criterion-6b-larmor", std::fabs(f_measured - f_expected) / f_expected < 0.01,
                 suite::fmt("measured %.5g Hz vs gamma*H/2pi = %.5g Hz", f_measured, f_expected));
    }
    // zero-drive symmetry and exponentiality on the shipped device
    {
        const auto cal = suite::load_default_device();
        const auto trace =
            simulate_device_telegraph(cal.device, 0.0, 0.0, 20e-6, rng::derive_seed(606, "ks"));
        const auto est = extract_lifetimes(trace, true);
        const bool enough = est.n_p >= 500 && est.n_ap >= 500;
        const double lo_p = est.tau_p - 1.96 * est.se_p, hi_p = est.tau_p + 1.96 * est.se_p;
        const double lo_a = est.tau_ap - 1.96 * est.se_ap, hi_a = est.tau_ap + 1.96 * est.se_ap;
        const bool overlap = lo_p <= hi_a && lo_a <= hi_p;
        rep.line("criterion-6c-symmetric-lifetimes", enough && overlap,
                 suite::fmt("tau_P %.3g+-%.2g, tau_AP %.3g+-%.2g (n=%zu/%zu), 95%% CIs %s",
                            est.tau_p, 1.96 * est.se_p, est.tau_ap, 1.96 * est.se_ap, est.n_p,
                            est.n_ap, overlap ? "overlap" : "disjoint"));
        const auto dwells = dwells_of(trace, MtjState::P);
        const double d_stat = stats::ks_statistic_exponential(dwells, est.tau_p);
        const double p_val = stats::ks_p_value(d_stat, dwells.size());
        rep.line("criterion-6d-exponentiality", dwells.size() >= 500 && p_val >= 0.01,
                 suite::fmt("KS D=%.4f, p=%.3g with %zu P dwells (want p >= 0.01, n >= 500)",
                            d_stat, p_val, dwells.size()));
    }
}

// --------------------------------------------------------------------------
// Criterion 7: independence over the calibrated window.
// --------------------------------------------------------------------------
void criterion_independence(suite::Reporter& rep) {
    const auto cal = suite::load_default_device();
    const auto& dev = cal.device;

    // basis round trip
    {
        rng::RandomStream rs(707);
        double worst = 0.0;
        for (int i = 0; i < 1000; ++i) {
            const double v_me = 2.0 * rs.uniform() - 1.0;
            const double v_i = 2.0 * rs.uniform() - 1.0;
            const auto t = basis_transform(v_me, v_i, dev.basis);
            const auto b = inverse_basis_transform(t.v1, t.v2, dev.basis);
            worst = std::max({worst, std::fabs(b.v_me - v_me), std::fabs(b.v_i - v_i)});
        }
        rep.line("criterion-7a-basis-roundtrip", worst < 1e-12,
                 suite::fmt("max round-trip error %.3g V (want < 1e-12)", worst));
    }

    // fresh sweep across the shipped window
    {
        const GridSpec window{dev.v1_min, dev.v1_max, 7};
        const auto v1s = window.values();
        std::vector<LifetimeEstimate> est(v1s.size());
        parallel_for(v1s.size(), [&](std::size_t i) {
            const auto [v_me, v_i] = inverse_basis_transform(v1s[i], dev.v2_operating, dev.basis);
            const double tau_hint = g(v1s[i], cal.activation) + cal.activation.tau_ap_fixed;
            est[i] = extract_lifetimes(
                simulate_device_telegraph(dev, v_me, v_i, std::max(40e-6, 1500 * 1.3 * tau_hint),
                                          rng::derive_seed(707, "independence", i)),
                true);
        });
        double tp_min = est[0].tau_p, tp_max = est[0].tau_p;
        double ap_min = est[0].tau_ap, ap_max = est[0].tau_ap;
        double ap_sum = 0.0;
        for (const auto& e : est) {
            tp_min = std::min(tp_min, e.tau_p);
            tp_max = std::max(tp_max, e.tau_p);
            ap_min = std::min(ap_min, e.tau_ap);
            ap_max = std::max(ap_max, e.tau_ap);
            ap_sum += e.tau_ap;
        }
        const double span = tp_max / tp_min;
        const double spread = (ap_max - ap_min) / (ap_sum / est.size());
        rep.line("criterion-7b-independence", span >= 10.0 && spread < 0.10,
                 suite::fmt("tau_P spans %.1fx while tau_AP spreads %.1f%% over the window "
                            "(want >= 10x and < 10%%)",
                            span, 100.0 * spread));
    }
}

// --------------------------------------------------------------------------
// Criterion 8: sigmoid switching rate versus the current-axis drive.
// --------------------------------------------------------------------------
void criterion_sigmoid(suite::Reporter& rep) {
    const auto cal = suite::load_default_device();
    // drive axis oriented so positive drive destabilizes P (R rises)
    const GridSpec drive{-0.012, 0.012, 9};
    const auto ds = drive.values();
    std::vector<double> rates(ds.size());
    parallel_for(ds.size(), [&](std::size_t i) {
        const auto est = extract_lifetimes(
            simulate_device_telegraph(cal.device, 0.0, -ds[i], 50e-6,
                                      rng::derive_seed(808, "sigmoid", i)),
            true);
        rates[i] = switching_rate(est);
    });
    bool monotone = true;
    for (std::size_t i = 1; i < rates.size(); ++i)
        monotone = monotone && rates[i] >= rates[i - 1] - 1e-12;
    const double r0 = rates[ds.size() / 2];
    std::string curve;
    for (double r : rates) curve += suite::fmt("%.3f ", r);
    rep.line("criterion-8-sigmoid",
             monotone && std::fabs(r0 - 0.5) <= 0.05,
             suite::fmt("R(0)=%.3f, sweep: %s(want monotone, R(0)=0.5+-0.05)", r0,
                        curve.c_str()));
}

// --------------------------------------------------------------------------
// Criterion 10: byte-level determinism of every mode.
// --------------------------------------------------------------------------
void criterion_determinism(suite::Reporter& rep) {
    suite::TempTree tmp("magspike_accept_det");
    const auto cal = suite::load_default_device();

    json synth_cfg = {{"mode", "synth"},
                      {"seed", 1001},
                      {"out_dir", tmp.path("data")},
                      {"synth", {{"n_train", 600}, {"n_test", 200}}}};
    (void)run(parse_config(synth_cfg));
    const json data_section = {
        {"train_images", tmp.path("data/train-images-idx3-ubyte")},
        {"train_labels", tmp.path("data/train-labels-idx1-ubyte")},
        {"test_images", tmp.path("data/t10k-images-idx3-ubyte")},
        {"test_labels", tmp.path("data/t10k-labels-idx1-ubyte")},
    };

    json train_cfg = {{"mode", "train"},
                      {"seed", 1002},
                      {"out_dir", tmp.path("train")},
                      {"calibrated", cal},
                      {"targets", TargetSpec{1e-9, 3e-7}},
                      {"train",
                       {{"learning_rate", 2e-4},
                        {"epochs", 2},
                        {"batch_size", 30},
                        {"init_scale", 0.02},
                        {"threads", 2},
                        {"hidden", json::array()}}},
                      {"data", data_section}};
    (void)run(parse_config(train_cfg));
    const auto cp1 = suite::slurp_file(tmp.path("train/checkpoint.json"));
    const auto csv1 = suite::slurp_file(tmp.path("train/metrics.csv"));
    (void)run(parse_config(train_cfg));
    const bool train_same = cp1 == suite::slurp_file(tmp.path("train/checkpoint.json")) &&
                            csv1 == suite::slurp_file(tmp.path("train/metrics.csv"));
    rep.line("criterion-10a-train-determinism", train_same,
             train_same ? "checkpoint and metrics bytes identical across reruns"
                        : "bytes differ between reruns");

    json eval_cfg = {{"mode", "eval"},
                     {"seed", 1003},
                     {"out_dir", tmp.path("eval")},
                     {"checkpoint", tmp.path("train/checkpoint.json")},
                     {"data", data_section},
                     {"eval", {{"k_list", {1, 3}}, {"n_images", 120}, {"n_seeds", 2}}}};
    (void)run(parse_config(eval_cfg));
    auto m1 = read_json_file(tmp.path("eval/metrics.json"));
    const auto evcsv1 = suite::slurp_file(tmp.path("eval/metrics.csv"));
    (void)run(parse_config(eval_cfg));
    auto m2 = read_json_file(tmp.path("eval/metrics.json"));
    m1.erase("wall_clock_s");
    m2.erase("wall_clock_s");
    const bool eval_same = m1 == m2 && evcsv1 == suite::slurp_file(tmp.path("eval/metrics.csv"));
    rep.line("criterion-10b-eval-determinism", eval_same,
             eval_same ? "metrics identical across reruns (wall clock excluded)"
                       : "metrics differ between reruns");

    json char_cfg = {{"mode", "characterize"},
                     {"seed", 1004},
                     {"out_dir", tmp.path("char")},
                     {"calibrated", cal},
                     {"characterize",
                      {{"v1", {{"min", cal.device.v1_min}, {"max", cal.device.v1_max}, {"count", 2}}},
                       {"v2", {{"min", cal.device.v2_operating}, {"max", cal.device.v2_operating}, {"count", 1}}},
                       {"sim_time_s", 10e-6},
                       {"min_dwells", 10}}}};
    (void)run(parse_config(char_cfg));
    const auto cc1 = suite::slurp_file(tmp.path("char/contour.csv"));
    (void)run(parse_config(char_cfg));
    const bool char_same = cc1 == suite::slurp_file(tmp.path("char/contour.csv"));
    rep.line("criterion-10c-characterize-determinism", char_same,
             char_same ? "contour bytes identical across reruns" : "contour bytes differ");

    json cosim_cfg = {{"mode", "cosim"},
                      {"seed", 1005},
                      {"out_dir", tmp.path("cosim")},
                      {"checkpoint", tmp.path("train/checkpoint.json")},
                      {"calibrated", cal},
                      {"data", data_section},
                      {"cosim", {{"n_images", 6}, {"k", 2}, {"timeout_t2", 10.0}}}};
    (void)run(parse_config(cosim_cfg));
    auto c1 = read_json_file(tmp.path("cosim/metrics.json"));
    (void)run(parse_config(cosim_cfg));
    auto c2 = read_json_file(tmp.path("cosim/metrics.json"));
    c1.erase("wall_clock_s");
    c2.erase("wall_clock_s");
    rep.line("criterion-10d-cosim-determinism", c1 == c2,
             c1 == c2 ? "cosim metrics identical across reruns" : "cosim metrics differ");
}

// --------------------------------------------------------------------------
// MNIST criteria (1, 2, 3, 4, 9).
// --------------------------------------------------------------------------
struct MnistPaths {
    std::string train_images, train_labels, test_images, test_labels;
    bool found = false;
    std::string searched;
};

MnistPaths locate_mnist() {
    MnistPaths paths;
    std::vector<std::string> roots;
    if (const char* env = std::getenv("MNIST_DIR")) roots.push_back(env);
    roots.push_back(suite::source_dir() + "/data/mnist");
    const char* names[4] = {"train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                            "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"};
    for (const auto& root : roots) {
        paths.searched += root + " ";
        std::string found[4];
        bool all = true;
        for (int i = 0; i < 4; ++i) {
            const std::string plain = root + "/" + names[i];
            const std::string gz = plain + ".gz";
            if (std::filesystem::exists(plain)) found[i] = plain;
            else if (std::filesystem::exists(gz)) found[i] = gz;
            else all = false;
        }
        if (all) {
            paths.train_images = found[0];
            paths.train_labels = found[1];
            paths.test_images = found[2];
            paths.test_labels = found[3];
            paths.found = true;
            return paths;
        }
    }
    return paths;
}

void mnist_criteria(suite::Reporter& rep) {
    const auto mnist = locate_mnist();
    if (!mnist.found) {
        const std::string why =
            "MNIST dataset not found (searched: " + mnist.searched +
            "); supply it via MNIST_DIR or data/mnist (see tools/fetch_mnist.sh)";
        for (const char* c : {"criterion-1-mnist-784x10", "criterion-2-mnist-784x400x10",
                              "criterion-3-k-spike-gap", "criterion-4-sparsity",
                              "criterion-9-backend-consistency"})
            rep.line(c, false, why);
        return;
    }

    suite::TempTree tmp("magspike_accept_mnist");
    const auto cal = suite::load_default_device();
    const json data_section = {{"train_images", mnist.train_images},
                               {"train_labels", mnist.train_labels},
                               {"test_images", mnist.test_images},
                               {"test_labels", mnist.test_labels}};

    struct Arch {
        const char* name;
        json hidden;
        double target;
        double tolerance;
        std::string checkpoint;
        double software_acc = 0.0;
    };
    std::vector<Arch> archs{
        {"criterion-1-mnist-784x10", json::array(), 0.9088, 0.015, "", 0.0},
        {"criterion-2-mnist-784x400x10", json::array({400}), 0.9741, 0.007, "", 0.0}};

    for (auto& arch : archs) {
        json cfg = read_json_file(suite::source_dir() +
                                  (arch.hidden.empty()
                                       ? "/configs/train_mnist_784x10.json"
                                       : "/configs/train_mnist_784x400x10.json"));
        cfg["out_dir"] = tmp.path(std::string("train_") + (arch.hidden.empty() ? "1" : "2"));
        cfg["data"] = data_section;
        cfg["calibrated"] = cal;
        harness_detail::Timer timer;
        const auto report = run(parse_config(cfg));
        arch.software_acc = report.software_accuracy;
        arch.checkpoint = cfg["out_dir"].get<std::string>() + "/checkpoint.json";
        rep.line(arch.name,
                 std::fabs(report.software_accuracy - arch.target) <= arch.tolerance,
                 suite::fmt("test accuracy %.4f vs %.4f +- %.3f (wall clock %.0f s)",
                            report.software_accuracy, arch.target, arch.tolerance,
                            timer.seconds()));
    }

    // Criterion 3 + 4: k-spike gap, monotonicity, sparsity for both depths.
    bool gap_ok = true, mono_ok = true, sparsity_ok = true;
    std::string gap_detail, sparsity_detail;
    for (auto& arch : archs) {
        json cfg = {{"mode", "eval"},
                    {"seed", 3003},
                    {"out_dir", tmp.path(std::string("eval_") + arch.name)},
                    {"checkpoint", arch.checkpoint},
                    {"data", data_section},
                    {"eval", {{"k_list", {1, 2, 3, 5}}, {"n_images", 0}, {"n_seeds", 5}}}};
        const auto report = run(parse_config(cfg));
        const double sw = arch.software_acc;
        for (std::size_t k : {std::size_t{2}, std::size_t{3}}) {
            const double acc = report.accuracy_per_k.at(k);
            gap_ok = gap_ok && std::fabs(acc - sw) <= 0.010;
            gap_detail += suite::fmt("[%s k=%zu %.4f vs sw %.4f] ", arch.name, k, acc, sw);
        }
        double prev = 0.0, prev_se = 0.0;
        bool first = true;
        for (std::size_t k : {std::size_t{1}, std::size_t{2}, std::size_t{3}, std::size_t{5}}) {
            const double acc = report.accuracy_per_k.at(k);
            const double se = report.accuracy_stderr_per_k.at(k);
            if (!first) mono_ok = mono_ok && acc >= prev - (se + prev_se);
            prev = acc;
            prev_se = se;
            first = false;
        }
        const double spikes3 = report.spikes_per_neuron_per_k.at(3);
        sparsity_ok = sparsity_ok && spikes3 <= 3.0 + 1e-9;
        sparsity_detail += suite::fmt("[%s %.3f spikes/neuron at k=3] ", arch.name, spikes3);
    }
    rep.line("criterion-3-k-spike-gap", gap_ok && mono_ok,
             gap_detail + (mono_ok ? "monotone in k within 1 SE" : "NOT monotone in k"));
    rep.line("criterion-4-sparsity", sparsity_ok, sparsity_detail + "(bound 3 at k=3)");

    // Criterion 9: LLG cosim within 3 points of the behavioral backend.
    {
        json cfg = {{"mode", "cosim"},
                    {"seed", 909},
                    {"out_dir", tmp.path("cosim")},
                    {"checkpoint", archs[0].checkpoint},
                    {"calibrated", cal},
                    {"data", data_section},
                    {"cosim", {{"n_images", 200}, {"k", 3}, {"timeout_t2", 20.0}}}};
        const auto report = run(parse_config(cfg));
        const double gap = report.extra.at("accuracy_gap").get<double>();
        rep.line("criterion-9-backend-consistency", gap <= 0.03,
                 suite::fmt("LLG %.4f vs behavioral %.4f, gap %.4f (want <= 0.03)",
                            report.extra.at("llg_accuracy").get<double>(),
                            report.extra.at("behavioral_accuracy").get<double>(), gap));
    }
}

} // namespace

int main(int argc, char** argv) {
    const std::string group = argc > 1 ? argv[1] : "core";
    suite::Reporter rep;
    if (group == "core") {
        criterion_gradients(rep);
        criterion_llg_physics(rep);
        criterion_independence(rep);
        criterion_sigmoid(rep);
        criterion_determinism(rep);
    } else if (group == "mnist") {
        mnist_criteria(rep);
    } else {
        std::fprintf(stderr, "usage: acceptance [core|mnist]\n");
        return 2;
    }
    std::printf("acceptance(%s): %d checks, %d failures\n", group.c_str(), rep.checks,
                rep.failures);
    return rep.exit_code();
}
