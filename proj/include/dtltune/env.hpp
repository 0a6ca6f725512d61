#ifndef DTLTUNE_ENV_HPP
#define DTLTUNE_ENV_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "dtltune/beamsim.hpp"
#include "dtltune/rng.hpp"

namespace dtltune {

using Vec = Eigen::VectorXd;

// Control dimensions in Table-1 column order.
enum ControlDim { kT1Amp = 0, kT2Amp = 1, kT2Phase = 2, kT3Amp = 3, kT3Phase = 4 };
constexpr int kAllControls = 5;

struct DimBounds {
    double min, max, maxStep;
};

struct ActionBounds {
    std::vector<DimBounds> dims;

    static ActionBounds table1(int activeControls) {
        if (activeControls != 3 && activeControls != 5)
            throw std::invalid_argument("activeControls must be 3 or 5");
        ActionBounds b;
        b.dims = {{37.0, 47.6, 1.0}, {61.7, 76.1, 1.0}, {0.0, 360.0, 5.0}};
        if (activeControls == 5) {
            b.dims.push_back({60.3, 74.2, 1.0});
            b.dims.push_back({0.0, 360.0, 5.0});
        }
        return b;
    }

    int size() const { return int(dims.size()); }

    Vec maxSteps() const {
        Vec m(size());
        for (int d = 0; d < size(); ++d) m[d] = dims[d].maxStep;
        return m;
    }
};

// |delta_d| <= maxStep_d after clamping; stored in bounds order.
using ActionDelta = Vec;

struct RewardParams {
    std::array<double, kMonitorCount> A = {0.1, 0.15, 0.2, 0.25, 0.3};
    double B = 0.2;
    double threshold = 0.85;
    double bonus = 1000.0;
    // action-norm penalty from the reward definition is intentionally not
    // implemented; step-size limits take its place. Must stay 0.
    double actionNormWeight = 0.0;
};

enum class ResetMode { fixedStart, randomStart };

struct EpisodeConfig {
    int maxSteps = 5000;
    ResetMode resetMode = ResetMode::fixedStart;
    int activeControls = 3;
    ControlSettings startPoint{40.0, 66.0, 73.0, 135.0, 0.0};
    bool stochasticBeam = false;   // fresh beam seed per step when true
};

struct StepInfo {
    double transmission = 0;
    ActionDelta appliedDelta;
    int stepIndex = 0;
};

struct StepResult {
    Vec nextState;
    double reward = 0;
    bool done = false;
    StepInfo info;
};

// Eq.-5 style reward: +bonus once the final monitor reaches the threshold,
// otherwise the negative weighted square shortfalls plus loss-power terms.
inline double reward(const MonitorReadings& readings, double i0, const RewardParams& params) {
    if (!(i0 > 0)) throw std::invalid_argument("input current I0 must be > 0");
    if (params.actionNormWeight != 0.0)
        throw std::invalid_argument("action-norm reward term is not implemented; weight must be 0");
    if (readings.current[kMonitorCount - 1] / i0 >= params.threshold) return params.bonus;
    double acc = 0;
    for (int n = 0; n < kMonitorCount; ++n) {
        const double shortfall = params.threshold - readings.current[n] / i0;
        acc += params.A[n] * shortfall * shortfall +
               params.B * readings.lostPower[n] * readings.lostPower[n];
    }
    return -acc;
}

// Widest incremental move allowed from the current settings:
// lo_d = max(-maxStep_d, min_d - x_d), hi_d = min(maxStep_d, max_d - x_d).
inline void feasibleBounds(const Vec& controls, const ActionBounds& bounds, Vec& lo, Vec& hi) {
    const int n = bounds.size();
    lo.resize(n);
    hi.resize(n);
    for (int d = 0; d < n; ++d) {
        const auto& b = bounds.dims[d];
        lo[d] = std::max(-b.maxStep, b.min - controls[d]);
        hi[d] = std::min(b.maxStep, b.max - controls[d]);
    }
}

inline ActionDelta clampAction(const Vec& controls, const ActionBounds& bounds,
                               const ActionDelta& requested) {
    Vec lo, hi;
    feasibleBounds(controls, bounds, lo, hi);
    return requested.cwiseMax(lo).cwiseMin(hi);
}

class Environment {
public:
    Environment(LatticeConfig lattice, BeamSpec beamSpec, RewardParams rewardParams,
                EpisodeConfig episode)
        : lattice_(std::move(lattice)),
          beamSpec_(beamSpec),
          rewardParams_(rewardParams),
          episode_(episode),
          bounds_(ActionBounds::table1(episode.activeControls)) {
        lattice_.validate();
        episode_.startPoint.validate();
        rebuildBeam(beamSpec_.seed);
    }

    const ActionBounds& bounds() const { return bounds_; }
    const LatticeConfig& lattice() const { return lattice_; }
    const RewardParams& rewardParams() const { return rewardParams_; }
    const EpisodeConfig& episodeConfig() const { return episode_; }
    int stateDim() const { return 2 * kMonitorCount + bounds_.size(); }
    int actionDim() const { return bounds_.size(); }
    bool done() const { return done_; }
    int stepIndex() const { return stepIndex_; }
    double transmission() const { return lastReadings_.current[kMonitorCount - 1] / lattice_.inputCurrent; }
    const MonitorReadings& readings() const { return lastReadings_; }

    // active-control view of the full settings
    Vec controlVector() const {
        Vec x(bounds_.size());
        x[0] = controls_.t1Amp;
        x[1] = controls_.t2Amp;
        x[2] = controls_.t2Phase;
        if (bounds_.size() == 5) {
            x[3] = controls_.t3Amp;
            x[4] = controls_.t3Phase;
        }
        return x;
    }
    const ControlSettings& controls() const { return controls_; }

    Vec reset(std::uint64_t seed = 0) {
        if (episode_.resetMode == ResetMode::fixedStart) {
            return resetTo(episode_.startPoint);
        }
        SplitMix64 rng(seed);
        ControlSettings c = episode_.startPoint;   // inactive dims stay pinned
        c.t1Amp = uniformIn(rng, bounds_.dims[0].min, bounds_.dims[0].max);
        c.t2Amp = uniformIn(rng, bounds_.dims[1].min, bounds_.dims[1].max);
        c.t2Phase = uniformIn(rng, bounds_.dims[2].min, bounds_.dims[2].max);
        if (bounds_.size() == 5) {
            c.t3Amp = uniformIn(rng, bounds_.dims[3].min, bounds_.dims[3].max);
            c.t3Phase = uniformIn(rng, bounds_.dims[4].min, bounds_.dims[4].max);
        }
        return resetTo(c);
    }

    Vec resetTo(const ControlSettings& start) {
        start.validate();
        controls_ = start;
        stepIndex_ = 0;
        done_ = false;
        stochasticCounter_ = 0;
        simulate();
        return state();
    }

    StepResult step(const ActionDelta& requested) {
        if (done_) throw std::logic_error("step() called on a finished episode");
        if (requested.size() != bounds_.size())
            throw std::invalid_argument("action dimension mismatch");

        const Vec x = controlVector();
        const ActionDelta applied = clampAction(x, bounds_, requested);
        setControlVector(x + applied);
        ++stepIndex_;
        if (episode_.stochasticBeam) rebuildBeam(beamSpec_.seed + (++stochasticCounter_));
        simulate();

        StepResult out;
        out.info.transmission = transmission();
        out.info.appliedDelta = applied;
        out.info.stepIndex = stepIndex_;
        out.reward = dtltune::reward(lastReadings_, lattice_.inputCurrent, rewardParams_);
        const bool success = out.info.transmission >= rewardParams_.threshold;
        done_ = success || stepIndex_ >= episode_.maxSteps;
        out.done = done_;
        out.nextState = state();
        return out;
    }

    // 15-dim (or 13-dim) observation: I/I0, P, then controls mapped to [-1, 1]
    Vec state() const {
        Vec s(stateDim());
        for (int n = 0; n < kMonitorCount; ++n) {
            s[n] = lastReadings_.current[n] / lattice_.inputCurrent;
            s[kMonitorCount + n] = lastReadings_.lostPower[n];
        }
        const Vec x = controlVector();
        for (int d = 0; d < bounds_.size(); ++d) {
            const auto& b = bounds_.dims[d];
            s[2 * kMonitorCount + d] = 2.0 * (x[d] - b.min) / (b.max - b.min) - 1.0;
        }
        return s;
    }

    // exact inverse of the control part of state(); used by tests and tools
    Vec controlsFromState(const Vec& s) const {
        Vec x(bounds_.size());
        for (int d = 0; d < bounds_.size(); ++d) {
            const auto& b = bounds_.dims[d];
            x[d] = b.min + (s[2 * kMonitorCount + d] + 1.0) * 0.5 * (b.max - b.min);
        }
        return x;
    }

    ControlSettings settingsFromVector(const Vec& x) const {
        ControlSettings c = controls_;
        c.t1Amp = x[0];
        c.t2Amp = x[1];
        c.t2Phase = x[2];
        if (bounds_.size() == 5) {
            c.t3Amp = x[3];
            c.t3Phase = x[4];
        }
        return c;
    }

    // direct control injection for replay-style checks and greedy rollouts
    void setControls(const ControlSettings& c) {
        c.validate();
        controls_ = c;
        simulate();
    }

private:
    void setControlVector(const Vec& x) { controls_ = settingsFromVector(x); }

    void rebuildBeam(std::uint64_t seed) {
        beam_ = makeInitialBeam<double>(beamSpec_.count, seed, beamSpec_.psiSigma,
                                        beamSpec_.deltaSigma);
    }

    void simulate() {
        lastReadings_ = trackLattice(beam_, controls_, lattice_).readings;
    }

    LatticeConfig lattice_;
    BeamSpec beamSpec_;
    RewardParams rewardParams_;
    EpisodeConfig episode_;
    ActionBounds bounds_;
    BeamEnsemble beam_;
    ControlSettings controls_;
    MonitorReadings lastReadings_{};
    int stepIndex_ = 0;
    bool done_ = true;
    std::uint64_t stochasticCounter_ = 0;
};

}   // namespace dtltune

#endif
