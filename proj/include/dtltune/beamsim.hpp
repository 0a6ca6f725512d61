#ifndef DTLTUNE_BEAMSIM_HPP
#define DTLTUNE_BEAMSIM_HPP

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dtltune/rng.hpp"

namespace dtltune {

// Longitudinal surrogate of a DTL section: three controllable RF tanks
// followed by two fixed buncher segments, with a beam-current and
// lost-power monitor at the exit of each segment.

constexpr int kMonitorCount = 5;
constexpr int kSegmentCount = 5;

template <typename Scalar>
struct TankConfigT {
    int cells = 1;
    Scalar designAmplitude = 0;   // Table-1 amplitude units
    Scalar designPhase = 0;       // degrees, reference for the phase knob
    Scalar couplingK = 0;         // phase slip per cell per unit energy deviation
    Scalar acceptancePsi = 0;     // radians, (0, pi]
    Scalar acceptanceDelta = 0;   // energy-deviation cut
    Scalar syncPhaseRad = 0;      // synchronous RF phase (radians, negative side)

    void validate() const {
        if (cells < 1) throw std::invalid_argument("tank cells must be >= 1");
        if (!(acceptancePsi > 0) || acceptancePsi > Scalar(M_PI) + Scalar(1e-12))
            throw std::invalid_argument("acceptancePsi must lie in (0, pi]");
        if (!(acceptanceDelta > 0)) throw std::invalid_argument("acceptanceDelta must be > 0");
        if (!(couplingK > 0)) throw std::invalid_argument("couplingK must be > 0");
    }
};

template <typename Scalar>
struct LatticeConfigT {
    // segments[0..2] are the controllable tanks, [3..4] the fixed downstream pair
    std::array<TankConfigT<Scalar>, kSegmentCount> segments{};
    Scalar inputCurrent = 1;      // I0
    Scalar gain = 0;              // calibrated RF-kick gain g

    int monitorCount() const { return kMonitorCount; }

    void validate() const {
        if (!(inputCurrent > 0)) throw std::invalid_argument("inputCurrent must be > 0");
        if (!(gain > 0)) throw std::invalid_argument("gain must be > 0");
        for (const auto& t : segments) t.validate();
    }

    Scalar maxAcceptanceDelta() const {
        Scalar m = 0;
        for (const auto& t : segments) m = std::max(m, t.acceptanceDelta);
        return m;
    }
};

// Table 1 action-variable bounds; order: t1Amp, t2Amp, t2Phase, t3Amp, t3Phase
// is NOT used here -- ControlSettings keeps the natural tank grouping.
template <typename Scalar>
struct ControlSettingsT {
    Scalar t1Amp = 0;
    Scalar t2Amp = 0;
    Scalar t3Amp = 0;
    Scalar t2Phase = 0;   // degrees
    Scalar t3Phase = 0;   // degrees

    static constexpr Scalar t1AmpMin = Scalar(37.0), t1AmpMax = Scalar(47.6);
    static constexpr Scalar t2AmpMin = Scalar(61.7), t2AmpMax = Scalar(76.1);
    static constexpr Scalar t3AmpMin = Scalar(60.3), t3AmpMax = Scalar(74.2);
    static constexpr Scalar phaseMin = Scalar(0.0), phaseMax = Scalar(360.0);

    bool inRange() const {
        return t1Amp >= t1AmpMin && t1Amp <= t1AmpMax &&
               t2Amp >= t2AmpMin && t2Amp <= t2AmpMax &&
               t3Amp >= t3AmpMin && t3Amp <= t3AmpMax &&
               t2Phase >= phaseMin && t2Phase <= phaseMax &&
               t3Phase >= phaseMin && t3Phase <= phaseMax;
    }
    void validate() const {
        if (!inRange()) throw std::invalid_argument("control settings outside Table-1 ranges");
    }
};

template <typename Scalar>
struct ParticleT {
    Scalar psi = 0;     // phase deviation from the synchronous phase (rad)
    Scalar delta = 0;   // relative energy deviation
    bool alive = true;
    int lossRegion = -1;   // monitor interval 0..4 where lost, -1 while alive
};

// Structure-of-arrays ensemble; per-particle views are built on demand.
template <typename Scalar>
struct BeamEnsembleT {
    using Arr = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
    using BoolArr = Eigen::Array<bool, Eigen::Dynamic, 1>;
    using IntArr = Eigen::Array<int, Eigen::Dynamic, 1>;

    Arr psi;
    Arr delta;
    BoolArr alive;
    IntArr lossRegion;
    std::uint64_t seed = 0;

    Eigen::Index count() const { return psi.size(); }
    Eigen::Index aliveCount() const { return alive.count(); }

    ParticleT<Scalar> particle(Eigen::Index i) const {
        return {psi[i], delta[i], alive[i], lossRegion[i]};
    }
};

template <typename Scalar>
struct MonitorReadingsT {
    std::array<Scalar, kMonitorCount> current{};     // I[1..5]
    std::array<Scalar, kMonitorCount> lostPower{};   // P[1..5], each in [0, 1]
};

template <typename Scalar>
struct PhaseSpaceSnapshotT {
    // (psi, delta) of particles alive at one monitor, in input order
    std::vector<std::pair<Scalar, Scalar>> points;
};

template <typename Scalar>
struct TrackResultT {
    MonitorReadingsT<Scalar> readings;
    BeamEnsembleT<Scalar> beam;
    std::optional<std::array<PhaseSpaceSnapshotT<Scalar>, kMonitorCount>> snapshots;
};

// Truncated (|z| <= 3) bivariate Gaussian in (psi, delta), deterministic in
// (count, seed, spread).
template <typename Scalar>
BeamEnsembleT<Scalar> makeInitialBeam(Eigen::Index count, std::uint64_t seed,
                                      Scalar psiSigma, Scalar deltaSigma) {
    if (count < 1) throw std::invalid_argument("beam count must be >= 1");
    if (!(psiSigma > 0) || !(deltaSigma > 0))
        throw std::invalid_argument("beam spread sigmas must be > 0");

    BeamEnsembleT<Scalar> beam;
    beam.seed = seed;
    beam.psi.resize(count);
    beam.delta.resize(count);
    beam.alive = BeamEnsembleT<Scalar>::BoolArr::Constant(count, true);
    beam.lossRegion = BeamEnsembleT<Scalar>::IntArr::Constant(count, -1);

    GaussianSampler<Scalar> gauss(seed);
    for (Eigen::Index i = 0; i < count; ++i)
        beam.psi[i] = psiSigma * gauss.truncated(Scalar(3));
    for (Eigen::Index i = 0; i < count; ++i)
        beam.delta[i] = deltaSigma * gauss.truncated(Scalar(3));
    return beam;
}

// One RF-gap kick followed by the cell drift:
//   delta' = delta + g*amp*(cos(phi_s + off + psi) - cos(phi_s + off))
//   psi'   = psi - K*delta'
// Dead particles pass through unchanged.
template <typename Scalar>
ParticleT<Scalar> cellMap(const ParticleT<Scalar>& p, Scalar amp, Scalar phiOffset,
                          const TankConfigT<Scalar>& tank, Scalar gain,
                          int region = 0) {
    if (!p.alive) return p;
    ParticleT<Scalar> out = p;
    const Scalar th = tank.syncPhaseRad + phiOffset;
    out.delta = p.delta + gain * amp * (std::cos(th + p.psi) - std::cos(th));
    out.psi = p.psi - tank.couplingK * out.delta;
    if (std::abs(out.psi) > tank.acceptancePsi || std::abs(out.delta) > tank.acceptanceDelta) {
        out.alive = false;
        out.lossRegion = region;
    }
    return out;
}

enum class SnapshotPolicy { none, record };

// Tracks the whole ensemble segment by segment. Amplitude knobs scale the
// effective amplitude of tanks 1-3; phase knobs offset tanks 2-3 relative to
// their design phase (tank 1 runs at design phase). Downstream segments are
// fixed at their design settings.
template <typename Scalar>
TrackResultT<Scalar> trackLattice(const BeamEnsembleT<Scalar>& beam,
                                  const ControlSettingsT<Scalar>& controls,
                                  const LatticeConfigT<Scalar>& lattice,
                                  SnapshotPolicy snap = SnapshotPolicy::none) {
    controls.validate();
    lattice.validate();

    using Arr = typename BeamEnsembleT<Scalar>::Arr;

    TrackResultT<Scalar> res;
    res.beam = beam;
    if (snap == SnapshotPolicy::record)
        res.snapshots.emplace();

    const Eigen::Index n = beam.count();
    const Scalar deg2rad = Scalar(M_PI) / Scalar(180);
    const std::array<Scalar, kSegmentCount> amps = {
        controls.t1Amp, controls.t2Amp, controls.t3Amp,
        lattice.segments[3].designAmplitude, lattice.segments[4].designAmplitude};
    const std::array<Scalar, kSegmentCount> offsets = {
        Scalar(0),
        (controls.t2Phase - lattice.segments[1].designPhase) * deg2rad,
        (controls.t3Phase - lattice.segments[2].designPhase) * deg2rad,
        Scalar(0), Scalar(0)};

    Arr& psi = res.beam.psi;
    Arr& delta = res.beam.delta;
    auto& alive = res.beam.alive;
    auto& lossRegion = res.beam.lossRegion;

    const Scalar lostNorm = Scalar(n) * (Scalar(1) + lattice.maxAcceptanceDelta());

    for (int seg = 0; seg < kSegmentCount; ++seg) {
        const auto& tank = lattice.segments[seg];
        const Scalar th = tank.syncPhaseRad + offsets[seg];
        const Scalar ga = lattice.gain * amps[seg];
        const Scalar cos0 = std::cos(th);
        Scalar lostEnergy = 0;

        for (int c = 0; c < tank.cells; ++c) {
            Arr d2 = delta + ga * ((psi + th).cos() - cos0);
            Arr p2 = psi - tank.couplingK * d2;
            auto lostNow =
                alive && (p2.abs() > tank.acceptancePsi || d2.abs() > tank.acceptanceDelta);
            delta = alive.select(d2, delta);
            psi = alive.select(p2, psi);
            lostEnergy += lostNow.select(Scalar(1) + delta, Arr::Zero(n)).sum();
            lossRegion = lostNow.select(seg, lossRegion);
            alive = alive && !lostNow;
        }

        res.readings.current[seg] =
            lattice.inputCurrent * Scalar(alive.count()) / Scalar(n);
        // energy-weighted losses, normalised so all-lost-in-one-region == 1
        res.readings.lostPower[seg] = lostEnergy / lostNorm;

        if (res.snapshots) {
            auto& s = (*res.snapshots)[seg];
            s.points.reserve(static_cast<std::size_t>(alive.count()));
            for (Eigen::Index i = 0; i < n; ++i)
                if (alive[i]) s.points.emplace_back(psi[i], delta[i]);
        }
    }
    return res;
}

template <typename Scalar>
std::vector<std::pair<Scalar, Scalar>>
dumpPhaseSpace(const TrackResultT<Scalar>& tracked, int atMonitor) {
    if (atMonitor < 1 || atMonitor > kMonitorCount)
        throw std::invalid_argument("monitor index must be in 1..5");
    if (!tracked.snapshots)
        throw std::invalid_argument("tracking did not record per-monitor snapshots");
    return (*tracked.snapshots)[atMonitor - 1].points;
}

template <typename Scalar>
ControlSettingsT<Scalar> designPoint(const LatticeConfigT<Scalar>& lattice) {
    ControlSettingsT<Scalar> c;
    c.t1Amp = lattice.segments[0].designAmplitude;
    c.t2Amp = lattice.segments[1].designAmplitude;
    c.t3Amp = lattice.segments[2].designAmplitude;
    c.t2Phase = lattice.segments[1].designPhase;
    c.t3Phase = lattice.segments[2].designPhase;
    return c;
}

// Pre-calibrated lattice. The geometry injects a beam mismatched in psi;
// tank 1 carries most of the synchrotron rotation so its amplitude controls
// the arrival orientation at the downstream bunchers, whose tight psi
// acceptance turns misrotation into loss. Tank sync phases sit at -90 deg so
// the phase knobs detune to second order, giving broad smooth phase windows
// wrapped around 0/360.
template <typename Scalar = double>
LatticeConfigT<Scalar> defaultLattice() {
    LatticeConfigT<Scalar> lat;
    const Scalar matchedRatio = Scalar(28.57);   // psi/delta amplitude ratio of the buckets
    const Scalar gain = Scalar(1.350463e-4);
    const Scalar sync = Scalar(-M_PI / 2);
    const std::array<Scalar, 3> designAmp = {Scalar(46.8), Scalar(75.0), Scalar(73.0)};
    const std::array<int, 3> cells = {64, 10, 10};

    lat.gain = gain;
    lat.inputCurrent = 1;
    for (int i = 0; i < 3; ++i) {
        auto& t = lat.segments[i];
        t.cells = cells[i];
        t.designAmplitude = designAmp[i];
        t.designPhase = 0;
        t.couplingK = gain * designAmp[i] * matchedRatio * matchedRatio;
        t.acceptancePsi = Scalar(M_PI);
        t.acceptanceDelta = Scalar(0.08);
        t.syncPhaseRad = sync;
    }
    const Scalar dsRatio = matchedRatio / Scalar(6.5);
    const Scalar dsAdvance = Scalar(0.6);   // phase advance per buncher cell
    for (int i = 3; i < kSegmentCount; ++i) {
        auto& t = lat.segments[i];
        t.cells = 16;
        t.designAmplitude = dsAdvance / (dsRatio * gain);
        t.designPhase = 0;
        t.couplingK = dsRatio * dsAdvance;
        t.acceptancePsi = Scalar(0.105);
        t.acceptanceDelta = Scalar(0.08);
        t.syncPhaseRad = sync;
    }
    return lat;
}

template <typename Scalar>
struct BeamSpecT {
    Eigen::Index count = 1024;
    std::uint64_t seed = 42;
    Scalar psiSigma = Scalar(0.20);
    Scalar deltaSigma = Scalar(0.001077);
};

template <typename Scalar>
struct CalibrationTargetsT {
    Scalar minDesignTransmission = Scalar(0.95);
    Scalar maxRandomMeanTransmission = Scalar(0.5);
};

template <typename Scalar>
struct CalibrationReportT {
    Scalar designTransmission = 0;
    Scalar randomMeanTransmission = 0;
    Scalar allMinTransmission = 0;
    int candidatesTried = 0;
    bool accepted = false;
    std::string summary() const {
        std::ostringstream os;
        os << "design=" << designTransmission
           << " random_mean=" << randomMeanTransmission
           << " all_min=" << allMinTransmission
           << " candidates=" << candidatesTried
           << (accepted ? " accepted" : " rejected");
        return os.str();
    }
};

class CalibrationError : public std::runtime_error {
public:
    explicit CalibrationError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

template <typename Scalar>
Scalar transmission(const LatticeConfigT<Scalar>& lat, const BeamEnsembleT<Scalar>& beam,
                    const ControlSettingsT<Scalar>& c) {
    auto res = trackLattice(beam, c, lat);
    return res.readings.current[kMonitorCount - 1] / lat.inputCurrent;
}

template <typename Scalar>
CalibrationReportT<Scalar> evaluateCandidate(const LatticeConfigT<Scalar>& lat,
                                             const BeamEnsembleT<Scalar>& beam,
                                             int randomSamples, std::uint64_t sweepSeed) {
    CalibrationReportT<Scalar> rep;
    rep.designTransmission = transmission(lat, beam, designPoint(lat));

    ControlSettingsT<Scalar> mins = designPoint(lat);
    mins.t1Amp = ControlSettingsT<Scalar>::t1AmpMin;
    mins.t2Amp = ControlSettingsT<Scalar>::t2AmpMin;
    mins.t3Amp = ControlSettingsT<Scalar>::t3AmpMin;
    rep.allMinTransmission = transmission(lat, beam, mins);

    SplitMix64 rng(sweepSeed);
    Scalar sum = 0;
    for (int k = 0; k < randomSamples; ++k) {
        ControlSettingsT<Scalar> c;
        c.t1Amp = uniformIn(rng, ControlSettingsT<Scalar>::t1AmpMin, ControlSettingsT<Scalar>::t1AmpMax);
        c.t2Amp = uniformIn(rng, ControlSettingsT<Scalar>::t2AmpMin, ControlSettingsT<Scalar>::t2AmpMax);
        c.t3Amp = uniformIn(rng, ControlSettingsT<Scalar>::t3AmpMin, ControlSettingsT<Scalar>::t3AmpMax);
        c.t2Phase = uniformIn(rng, ControlSettingsT<Scalar>::phaseMin, ControlSettingsT<Scalar>::phaseMax);
        c.t3Phase = uniformIn(rng, ControlSettingsT<Scalar>::phaseMin, ControlSettingsT<Scalar>::phaseMax);
        sum += transmission(lat, beam, c);
    }
    rep.randomMeanTransmission = sum / Scalar(randomSamples);
    return rep;
}

}   // namespace detail

// Local sweep around the configured lattice: rescan the gain for the best
// compression at the tank-3 exit (couplingK follows the matched-ratio
// relation), then scan the downstream psi acceptance until the targets hold.
// Throws CalibrationError with the best report if the sweep is exhausted.
template <typename Scalar>
LatticeConfigT<Scalar> calibrate(const LatticeConfigT<Scalar>& start,
                                 const BeamSpecT<Scalar>& beamSpec,
                                 const CalibrationTargetsT<Scalar>& targets,
                                 CalibrationReportT<Scalar>* reportOut = nullptr,
                                 int randomSamples = 60, int gainSteps = 121) {
    start.validate();
    auto beam = makeInitialBeam<Scalar>(beamSpec.count, beamSpec.seed,
                                        beamSpec.psiSigma, beamSpec.deltaSigma);

    CalibrationReportT<Scalar> best;
    best.designTransmission = -1;
    int tried = 0;

    // candidate 0: the configuration as given
    {
        auto rep = detail::evaluateCandidate(start, beam, randomSamples, 9001);
        rep.candidatesTried = ++tried;
        if (rep.designTransmission >= targets.minDesignTransmission &&
            rep.randomMeanTransmission <= targets.maxRandomMeanTransmission) {
            rep.accepted = true;
            if (reportOut) *reportOut = rep;
            return start;
        }
        best = rep;
    }

    // stage 1: gain alignment (minimise the psi spread at the tank-3 exit)
    const Scalar g0 = start.gain;
    Scalar bestSpread = std::numeric_limits<Scalar>::max();
    Scalar bestGain = g0;
    for (int i = 0; i < gainSteps; ++i) {
        const Scalar mul = Scalar(0.92) + Scalar(0.16) * Scalar(i) / Scalar(gainSteps - 1);
        LatticeConfigT<Scalar> cand = start;
        cand.gain = g0 * mul;
        for (int t = 0; t < 3; ++t)
            cand.segments[t].couplingK *= mul;   // keeps the matched ratio
        auto res = trackLattice(beam, designPoint(cand), cand, SnapshotPolicy::record);
        const auto& pts = (*res.snapshots)[2].points;
        if (pts.size() < 2) continue;
        Scalar mean = 0;
        for (auto& p : pts) mean += p.first;
        mean /= Scalar(pts.size());
        Scalar var = 0;
        for (auto& p : pts) var += (p.first - mean) * (p.first - mean);
        var /= Scalar(pts.size());
        if (var < bestSpread) {
            bestSpread = var;
            bestGain = cand.gain;
        }
    }

    LatticeConfigT<Scalar> aligned = start;
    {
        const Scalar mul = bestGain / g0;
        aligned.gain = bestGain;
        for (int t = 0; t < 3; ++t) aligned.segments[t].couplingK *= mul;
    }

    // stage 2: downstream acceptance scan
    const Scalar spread = std::sqrt(bestSpread);
    for (Scalar accSigma : {Scalar(2.9), Scalar(2.8), Scalar(3.0), Scalar(2.7), Scalar(3.1), Scalar(3.2)}) {
        LatticeConfigT<Scalar> cand = aligned;
        cand.segments[3].acceptancePsi = accSigma * spread;
        cand.segments[4].acceptancePsi = accSigma * spread;
        auto rep = detail::evaluateCandidate(cand, beam, randomSamples, 9001);
        rep.candidatesTried = ++tried;
        if (rep.designTransmission >= targets.minDesignTransmission &&
            rep.randomMeanTransmission <= targets.maxRandomMeanTransmission) {
            rep.accepted = true;
            if (reportOut) *reportOut = rep;
            return cand;
        }
        if (rep.designTransmission > best.designTransmission) best = rep;
    }

    best.candidatesTried = tried;
    if (reportOut) *reportOut = best;
    throw CalibrationError("calibration sweep exhausted; best candidate: " + best.summary());
}

using TankConfig = TankConfigT<double>;
using LatticeConfig = LatticeConfigT<double>;
using ControlSettings = ControlSettingsT<double>;
using Particle = ParticleT<double>;
using BeamEnsemble = BeamEnsembleT<double>;
using MonitorReadings = MonitorReadingsT<double>;
using TrackResult = TrackResultT<double>;
using BeamSpec = BeamSpecT<double>;
using CalibrationTargets = CalibrationTargetsT<double>;
using CalibrationReport = CalibrationReportT<double>;

}   // namespace dtltune

#endif
