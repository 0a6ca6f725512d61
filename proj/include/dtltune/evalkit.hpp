#ifndef DTLTUNE_EVALKIT_HPP
#define DTLTUNE_EVALKIT_HPP

#include <algorithm>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dtltune/a3c.hpp"
#include "dtltune/env.hpp"
#include "dtltune/neural.hpp"

namespace dtltune {

struct TrajectoryStep {
    ControlSettings controls;   // after the step
    Vec state;
    ActionDelta applied;
    double reward = 0;
    double transmission = 0;
};

struct Trajectory {
    ControlSettings startPoint;
    double startTransmission = 0;
    std::vector<TrajectoryStep> steps;
    bool success = false;

    int length() const { return int(steps.size()); }
    ControlSettings terminal() const {
        return steps.empty() ? startPoint : steps.back().controls;
    }
};

struct EvalSummary {
    int sampleSize = 0;
    int successes = 0;
    double successRate = 0;
    int histogramBinWidth = 50;
    std::vector<long> histogram;          // counts per bin of steps used
    std::vector<int> underSteps = {100, 300, 700};
    std::vector<double> underFraction;    // fraction of runs finishing under N steps
    std::vector<ControlSettings> solutionPoints;   // terminal settings of successes
    std::vector<int> stepsPerRun;
    int maxSteps = 0;
};

// eps = 0, a = mu, eval-mode forward; fully deterministic.
inline Trajectory greedyRollout(const NetworkParams& actor, Environment& env,
                                const ControlSettings& start, int maxSteps) {
    Trajectory traj;
    traj.startPoint = start;
    Vec state = env.resetTo(start);
    traj.startTransmission = env.transmission();
    if (env.transmission() >= env.rewardParams().threshold) {
        traj.success = true;   // threshold already met at step 0
        return traj;
    }
    for (int k = 0; k < maxSteps && !env.done(); ++k) {
        Vec raw = forward(actor, state, ForwardMode::eval, 0);
        const PolicyOutput po = policyHead(raw, actor.spec);
        StepResult res = env.step(po.mu);
        TrajectoryStep st;
        st.controls = env.controls();
        st.state = res.nextState;
        st.applied = res.info.appliedDelta;
        st.reward = res.reward;
        st.transmission = res.info.transmission;
        traj.steps.push_back(std::move(st));
        state = res.nextState;
        if (res.done) break;
    }
    traj.success = env.transmission() >= env.rewardParams().threshold;
    return traj;
}

inline ControlSettings randomStart(const ActionBounds& bounds, const ControlSettings& pinned,
                                   SplitMix64& rng) {
    ControlSettings c = pinned;
    c.t1Amp = uniformIn(rng, bounds.dims[0].min, bounds.dims[0].max);
    c.t2Amp = uniformIn(rng, bounds.dims[1].min, bounds.dims[1].max);
    c.t2Phase = uniformIn(rng, bounds.dims[2].min, bounds.dims[2].max);
    if (bounds.size() == 5) {
        c.t3Amp = uniformIn(rng, bounds.dims[3].min, bounds.dims[3].max);
        c.t3Phase = uniformIn(rng, bounds.dims[4].min, bounds.dims[4].max);
    }
    return c;
}

// Seeded uniform starts, one greedy rollout each, aggregated counts.
// Runs that never succeed enter the histogram with maxSteps.
inline EvalSummary randomStartEval(const NetworkParams& actor, Environment& env, int sampleSize,
                                   int maxSteps, std::uint64_t seed,
                                   std::vector<Trajectory>* trajectoriesOut = nullptr) {
    if (sampleSize < 1) throw std::invalid_argument("sampleSize must be >= 1");
    EvalSummary sum;
    sum.sampleSize = sampleSize;
    sum.maxSteps = maxSteps;
    sum.histogram.assign(std::size_t(maxSteps / sum.histogramBinWidth) + 1, 0);
    SplitMix64 rng(seed);

    for (int k = 0; k < sampleSize; ++k) {
        ControlSettings start =
            randomStart(env.bounds(), env.episodeConfig().startPoint, rng);
        Trajectory traj = greedyRollout(actor, env, start, maxSteps);
        const int used = traj.success ? traj.length() : maxSteps;
        sum.stepsPerRun.push_back(used);
        sum.histogram[std::size_t(std::min(used, maxSteps) / sum.histogramBinWidth)]++;
        if (traj.success) {
            ++sum.successes;
            sum.solutionPoints.push_back(traj.terminal());
        }
        if (trajectoriesOut) trajectoriesOut->push_back(std::move(traj));
    }
    sum.successRate = double(sum.successes) / double(sampleSize);
    for (int cap : sum.underSteps) {
        long c = 0;
        for (int s : sum.stepsPerRun)
            if (s < cap) ++c;
        sum.underFraction.push_back(double(c) / double(sampleSize));
    }
    return sum;
}

// Terminal settings of every success plus the calibrated design point,
// ready for scatter projections. Empty summaries yield only the design row.
struct SolutionBandRow {
    std::string label;
    ControlSettings settings;
};

inline std::vector<SolutionBandRow> exportSolutionBand(const std::vector<EvalSummary>& summaries,
                                                       const ControlSettings& design) {
    std::vector<SolutionBandRow> rows;
    for (const auto& s : summaries)
        for (const auto& p : s.solutionPoints) rows.push_back({"rl", p});
    rows.push_back({"design", design});
    return rows;
}

struct PhaseSpaceStats {
    double aliveFraction = 0;
    double psiStd = 0;
    double deltaStd = 0;
};

struct PhaseSpaceComparison {
    ControlSettings rlSettings;
    ControlSettings expertSettings;
    // per monitor: the dumped (psi, delta) points and summary stats
    std::array<std::vector<std::pair<double, double>>, kMonitorCount> rlDumps;
    std::array<std::vector<std::pair<double, double>>, kMonitorCount> expertDumps;
    std::array<PhaseSpaceStats, kMonitorCount> rlStats;
    std::array<PhaseSpaceStats, kMonitorCount> expertStats;
};

namespace detail {
inline PhaseSpaceStats statsOf(const std::vector<std::pair<double, double>>& pts,
                               Eigen::Index beamCount) {
    PhaseSpaceStats st;
    st.aliveFraction = double(pts.size()) / double(beamCount);
    if (pts.empty()) return st;
    double mp = 0, md = 0;
    for (auto& p : pts) {
        mp += p.first;
        md += p.second;
    }
    mp /= double(pts.size());
    md /= double(pts.size());
    double vp = 0, vd = 0;
    for (auto& p : pts) {
        vp += (p.first - mp) * (p.first - mp);
        vd += (p.second - md) * (p.second - md);
    }
    st.psiStd = std::sqrt(vp / double(pts.size()));
    st.deltaStd = std::sqrt(vd / double(pts.size()));
    return st;
}
}   // namespace detail

// Greedy rollout to success, then paired phase-space dumps at all monitors
// for the RL terminal settings and the expert (design) settings.
inline PhaseSpaceComparison comparePhaseSpace(const NetworkParams& actor, Environment& env,
                                              const ControlSettings& expert,
                                              const ControlSettings& rolloutStart,
                                              int maxSteps, const BeamSpec& beamSpec) {
    Trajectory traj = greedyRollout(actor, env, rolloutStart, maxSteps);
    if (!traj.success)
        throw std::runtime_error("comparePhaseSpace: greedy rollout failed at step " +
                                 std::to_string(traj.length()));
    PhaseSpaceComparison cmp;
    cmp.rlSettings = traj.terminal();
    cmp.expertSettings = expert;

    auto beam = makeInitialBeam<double>(beamSpec.count, beamSpec.seed, beamSpec.psiSigma,
                                        beamSpec.deltaSigma);
    auto rl = trackLattice(beam, cmp.rlSettings, env.lattice(), SnapshotPolicy::record);
    auto ex = trackLattice(beam, expert, env.lattice(), SnapshotPolicy::record);
    for (int m = 1; m <= kMonitorCount; ++m) {
        cmp.rlDumps[m - 1] = dumpPhaseSpace(rl, m);
        cmp.expertDumps[m - 1] = dumpPhaseSpace(ex, m);
        cmp.rlStats[m - 1] = detail::statsOf(cmp.rlDumps[m - 1], beam.count());
        cmp.expertStats[m - 1] = detail::statsOf(cmp.expertDumps[m - 1], beam.count());
    }
    return cmp;
}

}   // namespace dtltune

#endif
