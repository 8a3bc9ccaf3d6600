#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "magspike/errors.hpp"
#include "magspike/llg.hpp"
#include "magspike/stats.hpp"
#include "magspike/vec3.hpp"

// Two-state (P/AP) classification of magnetization traces and dwell-time
// statistics. P means aligned with the pinned layer.
namespace magspike {

enum class MtjState { P, AP };

struct DwellRun {
    MtjState state;
    double dwell = 0.0; // [s]
};

struct TelegraphTrace {
    std::vector<DwellRun> runs;
};

struct LifetimeEstimate {
    double tau_p = 0.0;  // mean P dwell [s]
    double tau_ap = 0.0; // mean AP dwell [s]
    std::size_t n_p = 0;
    std::size_t n_ap = 0;
    double se_p = 0.0;
    double se_ap = 0.0;
};

// Hysteretic two-threshold classifier fed one easy-axis projection sample at
// a time. Enter AP below `lo`, enter P above `hi`, keep the previous state in
// between. The first sample sets the state by sign; each subsequent sample
// attributes one dt to the state it lands in, so dwells sum exactly to the
// number of steps times dt.
//
// A moving average over `window` samples models the readout bandwidth: the
// raw underdamped magnetization recrosses the equator ballistically during a
// transition, and the un-averaged projection would register those ~0.1 ns
// excursions as dwells (the sensing circuit cannot see them, and Fig.-1-style
// telegraph plots are time averaged).
class StreamingBinarizer {
  public:
    StreamingBinarizer(double hi, double lo, double dt, std::size_t window = 1)
        : hi_(hi), lo_(lo), dt_(dt), window_(window == 0 ? 1 : window) {
        if (!(-1.0 < lo && lo < hi && hi < 1.0))
            throw InvalidInput("StreamingBinarizer: need -1 < lo < hi < 1");
        if (!(dt > 0.0)) throw InvalidInput("StreamingBinarizer: dt must be positive");
        ring_.assign(window_, 0.0);
    }

    void feed(double raw_proj) {
        // running mean over the last `window` samples (fewer while warming up)
        ring_sum_ += raw_proj - ring_[ring_pos_];
        ring_[ring_pos_] = raw_proj;
        ring_pos_ = (ring_pos_ + 1) % window_;
        const std::size_t filled = std::min(n_samples_ + 1, window_);
        const double proj = ring_sum_ / static_cast<double>(filled);

        ++n_samples_;
        if (n_samples_ == 1) {
            state_ = proj >= 0.0 ? MtjState::P : MtjState::AP;
            return; // the first sample anchors t = 0, no elapsed time yet
        }
        MtjState next = state_;
        if (proj < lo_) next = MtjState::AP;
        else if (proj > hi_) next = MtjState::P;
        if (next == state_) {
            ++run_steps_;
        } else {
            if (run_steps_ > 0) {
                runs_.push_back({state_, static_cast<double>(run_steps_) * dt_});
            }
            if (next == MtjState::AP) {
                ap_entries_.push_back(static_cast<double>(n_samples_ - 1) * dt_);
            }
            state_ = next;
            run_steps_ = 1;
        }
    }

    // Closes the trailing partial run and returns the trace.
    TelegraphTrace finish() {
        TelegraphTrace trace;
        trace.runs = runs_;
        if (run_steps_ > 0) trace.runs.push_back({state_, static_cast<double>(run_steps_) * dt_});
        return trace;
    }

    std::size_t samples_fed() const { return n_samples_; }
    std::size_t completed_runs() const { return runs_.size(); }
    MtjState state() const { return state_; }
    std::size_t ap_entry_count() const { return ap_entries_.size(); }
    const std::vector<double>& ap_entry_times() const { return ap_entries_; }

  private:
    double hi_, lo_, dt_;
    std::size_t window_;
    std::vector<double> ring_;
    std::size_t ring_pos_ = 0;
    double ring_sum_ = 0.0;
    MtjState state_ = MtjState::P;
    std::size_t n_samples_ = 0;
    std::size_t run_steps_ = 0;
    std::vector<DwellRun> runs_;
    std::vector<double> ap_entries_; // times the trace entered AP
};

// Classifies a full trajectory. Projection is m . pinned_axis; avg_window
// sets the readout moving-average length in samples (1 = raw).
inline TelegraphTrace binarize(const Trajectory& traj, double hi, double lo,
                               const Vec3& pinned_axis = Vec3{0.0, 0.0, 1.0},
                               std::size_t avg_window = 1) {
    if (traj.samples.empty()) throw InvalidInput("binarize: empty trajectory");
    StreamingBinarizer bin(hi, lo, traj.timestep, avg_window);
    for (const auto& s : traj.samples) bin.feed(s.m.dot(pinned_axis));
    return bin.finish();
}

// Arithmetic dwell means and standard errors per state. With discard_edges
// the first and last (truncated) runs are dropped.
inline LifetimeEstimate extract_lifetimes(const TelegraphTrace& trace, bool discard_edges) {
    std::size_t begin = 0;
    std::size_t end = trace.runs.size();
    if (discard_edges) {
        if (end > begin) ++begin;
        if (end > begin) --end;
    }
    std::vector<double> p_dwells, ap_dwells;
    for (std::size_t i = begin; i < end; ++i) {
        const auto& run = trace.runs[i];
        (run.state == MtjState::P ? p_dwells : ap_dwells).push_back(run.dwell);
    }
    if (p_dwells.size() < 2 || ap_dwells.size() < 2)
        throw EstimationError("extract_lifetimes: need >= 2 dwells per state, got P=" +
                              std::to_string(p_dwells.size()) +
                              " AP=" + std::to_string(ap_dwells.size()));
    LifetimeEstimate est;
    est.n_p = p_dwells.size();
    est.n_ap = ap_dwells.size();
    est.tau_p = stats::mean(p_dwells);
    est.tau_ap = stats::mean(ap_dwells);
    est.se_p = stats::standard_error(p_dwells);
    est.se_ap = stats::standard_error(ap_dwells);
    return est;
}

inline std::vector<double> dwells_of(const TelegraphTrace& trace, MtjState which,
                                     bool discard_edges = true) {
    std::size_t begin = 0, end = trace.runs.size();
    if (discard_edges) {
        if (end > begin) ++begin;
        if (end > begin) --end;
    }
    std::vector<double> out;
    for (std::size_t i = begin; i < end; ++i)
        if (trace.runs[i].state == which) out.push_back(trace.runs[i].dwell);
    return out;
}

// Time-averaged switching rate R = tau_AP / (tau_P + tau_AP).
inline double switching_rate(const LifetimeEstimate& est) {
    return est.tau_ap / (est.tau_p + est.tau_ap);
}

} // namespace magspike
