#include <doctest.h>

#include "dtltune/beamsim.hpp"

using namespace dtltune;

namespace {

bool identicalBeams(const BeamEnsemble& a, const BeamEnsemble& b) {
    return (a.psi == b.psi).all() && (a.delta == b.delta).all() &&
           (a.alive == b.alive).all() && (a.lossRegion == b.lossRegion).all();
}

ControlSettings allMinima(const LatticeConfig& lat) {
    ControlSettings c = designPoint(lat);
    c.t1Amp = ControlSettings::t1AmpMin;
    c.t2Amp = ControlSettings::t2AmpMin;
    c.t3Amp = ControlSettings::t3AmpMin;
    return c;
}

}   // namespace

TEST_CASE("makeInitialBeam is deterministic and validates arguments") {
    auto a = makeInitialBeam<double>(1000, 42, 0.3, 0.01);
    auto b = makeInitialBeam<double>(1000, 42, 0.3, 0.01);
    CHECK(identicalBeams(a, b));

    auto one = makeInitialBeam<double>(1, 7, 0.3, 0.01);
    CHECK(one.aliveCount() == 1);

    CHECK_THROWS_AS(makeInitialBeam<double>(0, 1, 0.3, 0.01), std::invalid_argument);
    CHECK_THROWS_AS(makeInitialBeam<double>(10, 1, -0.3, 0.01), std::invalid_argument);
    CHECK_THROWS_AS(makeInitialBeam<double>(10, 1, 0.3, 0.0), std::invalid_argument);
}

TEST_CASE("makeInitialBeam sample mean stays within the statistical bound") {
    auto beam = makeInitialBeam<double>(10000, 7, 0.3, 0.01);
    const double meanPsi = beam.psi.mean();
    CHECK(std::abs(meanPsi) < 3.0 * 0.3 / std::sqrt(10000.0));
    // truncation bound respected
    CHECK((beam.psi.abs() <= 3.0 * 0.3).all());
    CHECK((beam.delta.abs() <= 3.0 * 0.01).all());
}

TEST_CASE("cellMap: synchronous particle is a fixed point") {
    const auto lat = defaultLattice<double>();
    const auto& tank = lat.segments[0];
    Particle p{0.0, 0.0, true, -1};
    for (double amp : {tank.designAmplitude, 37.0, 47.6}) {
        Particle q = cellMap(p, amp, 0.0, tank, lat.gain);
        CHECK(q.psi == 0.0);
        CHECK(q.delta == 0.0);
        CHECK(q.alive);
    }
}

TEST_CASE("cellMap: acceptance cut marks particles lost; dead particles pass through") {
    auto tank = defaultLattice<double>().segments[0];
    tank.acceptancePsi = 0.5;
    Particle p{0.49, 0.0, true, -1};
    // strong negative delta kick drags psi above the cut after the drift
    Particle q = cellMap(p, tank.designAmplitude, 0.0, tank, 5e-3, 2);
    if (!q.alive) CHECK(q.lossRegion == 2);

    Particle dead{1.0, 0.5, false, 3};
    Particle same = cellMap(dead, tank.designAmplitude, 0.0, tank, 5e-3);
    CHECK(same.psi == dead.psi);
    CHECK(same.delta == dead.delta);
    CHECK_FALSE(same.alive);
    CHECK(same.lossRegion == 3);
}

TEST_CASE("cellMap: small deviations oscillate and survive a full tank") {
    const auto lat = defaultLattice<double>();
    const auto& tank = lat.segments[0];
    Particle p{0.05, 0.0005, true, -1};
    double maxPsi = 0;
    for (int c = 0; c < 10 * tank.cells; ++c) {
        p = cellMap(p, tank.designAmplitude, 0.0, tank, lat.gain);
        REQUIRE(p.alive);
        maxPsi = std::max(maxPsi, std::abs(p.psi));
    }
    CHECK(maxPsi < 0.5);   // bounded oscillation, far inside the bucket
}

TEST_CASE("trackLattice: calibrated design point and detuned minima") {
    const auto lat = defaultLattice<double>();
    const auto beam = makeInitialBeam<double>(1024, 42, 0.20, 0.001077);

    auto design = trackLattice(beam, designPoint(lat), lat);
    CHECK(design.readings.current[4] / lat.inputCurrent >= 0.95);

    auto detuned = trackLattice(beam, allMinima(lat), lat);
    CHECK(detuned.readings.current[4] / lat.inputCurrent < 0.5);
}

TEST_CASE("trackLattice: currents are monotone and bounded, P in [0,1]") {
    const auto lat = defaultLattice<double>();
    const auto beam = makeInitialBeam<double>(512, 9, 0.20, 0.001077);
    SplitMix64 rng(31);
    for (int k = 0; k < 25; ++k) {
        ControlSettings c;
        c.t1Amp = uniformIn(rng, ControlSettings::t1AmpMin, ControlSettings::t1AmpMax);
        c.t2Amp = uniformIn(rng, ControlSettings::t2AmpMin, ControlSettings::t2AmpMax);
        c.t3Amp = uniformIn(rng, ControlSettings::t3AmpMin, ControlSettings::t3AmpMax);
        c.t2Phase = uniformIn(rng, 0.0, 360.0);
        c.t3Phase = uniformIn(rng, 0.0, 360.0);
        auto res = trackLattice(beam, c, lat);
        double prev = lat.inputCurrent;
        for (int n = 0; n < kMonitorCount; ++n) {
            CHECK(res.readings.current[n] <= prev + 1e-15);
            CHECK(res.readings.current[n] >= 0.0);
            CHECK(res.readings.lostPower[n] >= 0.0);
            CHECK(res.readings.lostPower[n] <= 1.0);
            prev = res.readings.current[n];
        }
        // conservation: alive + all per-region losses account for every particle
        long lost = 0;
        for (Eigen::Index i = 0; i < res.beam.count(); ++i)
            if (!res.beam.alive[i]) {
                ++lost;
                CHECK(res.beam.lossRegion[i] >= 0);
                CHECK(res.beam.lossRegion[i] < kSegmentCount);
            }
        CHECK(res.beam.aliveCount() + lost == res.beam.count());
    }
}

TEST_CASE("trackLattice: deterministic and rejects out-of-range controls") {
    const auto lat = defaultLattice<double>();
    const auto beam = makeInitialBeam<double>(256, 5, 0.20, 0.001077);
    ControlSettings c = designPoint(lat);
    auto r1 = trackLattice(beam, c, lat);
    auto r2 = trackLattice(beam, c, lat);
    for (int n = 0; n < kMonitorCount; ++n) {
        CHECK(r1.readings.current[n] == r2.readings.current[n]);
        CHECK(r1.readings.lostPower[n] == r2.readings.lostPower[n]);
    }
    CHECK(identicalBeams(r1.beam, r2.beam));

    c.t1Amp = 10.0;
    CHECK_THROWS_AS(trackLattice(beam, c, lat), std::invalid_argument);
}

TEST_CASE("trackLattice: transmission is finite along every control sweep") {
    const auto lat = defaultLattice<double>();
    const auto beam = makeInitialBeam<double>(256, 11, 0.20, 0.001077);
    auto sweep = [&](auto set, double lo, double hi) {
        for (int k = 0; k < 100; ++k) {
            ControlSettings c = designPoint(lat);
            set(c, lo + (hi - lo) * k / 99.0);
            auto res = trackLattice(beam, c, lat);
            for (int n = 0; n < kMonitorCount; ++n) {
                CHECK(std::isfinite(res.readings.current[n]));
                CHECK(std::isfinite(res.readings.lostPower[n]));
            }
        }
    };
    sweep([](ControlSettings& c, double v) { c.t1Amp = v; }, 37.0, 47.6);
    sweep([](ControlSettings& c, double v) { c.t2Amp = v; }, 61.7, 76.1);
    sweep([](ControlSettings& c, double v) { c.t3Amp = v; }, 60.3, 74.2);
    sweep([](ControlSettings& c, double v) { c.t2Phase = v; }, 0.0, 360.0);
    sweep([](ControlSettings& c, double v) { c.t3Phase = v; }, 0.0, 360.0);
}

TEST_CASE("dumpPhaseSpace: counts, emptiness, and index validation") {
    auto lat = defaultLattice<double>();
    const auto beam = makeInitialBeam<double>(512, 3, 0.20, 0.001077);

    auto res = trackLattice(beam, designPoint(lat), lat, SnapshotPolicy::record);
    auto m1 = dumpPhaseSpace(res, 1);
    CHECK(Eigen::Index(m1.size()) ==
          Eigen::Index(std::lround(res.readings.current[0] * double(beam.count()))));

    // design run: the bunched beam is far narrower than the downstream cut
    auto m5 = dumpPhaseSpace(res, 5);
    REQUIRE(m5.size() > 0);
    double mean = 0;
    for (auto& p : m5) mean += p.first;
    mean /= double(m5.size());
    double var = 0;
    for (auto& p : m5) var += (p.first - mean) * (p.first - mean);
    CHECK(std::sqrt(var / double(m5.size())) < lat.segments[4].acceptancePsi);

    CHECK_THROWS_AS(dumpPhaseSpace(res, 0), std::invalid_argument);
    CHECK_THROWS_AS(dumpPhaseSpace(res, 6), std::invalid_argument);
    auto noSnap = trackLattice(beam, designPoint(lat), lat);
    CHECK_THROWS_AS(dumpPhaseSpace(noSnap, 1), std::invalid_argument);

    // kill everything in tank 1: monitors beyond region 0 go empty
    lat.segments[0].acceptancePsi = 1e-9;
    auto dead = trackLattice(beam, designPoint(lat), lat, SnapshotPolicy::record);
    CHECK(dumpPhaseSpace(dead, 3).empty());
    CHECK(dead.beam.aliveCount() == 0);
}

TEST_CASE("calibrate: self-check, vacuous targets, impossible targets") {
    const auto lat = defaultLattice<double>();
    BeamSpec spec;
    spec.count = 512;   // smaller beam keeps the sweep quick

    SUBCASE("vacuous targets accept the first candidate") {
        CalibrationTargets easy{0.0, 1.0};
        CalibrationReport rep;
        auto out = calibrate(lat, spec, easy, &rep, 10, 11);
        CHECK(rep.accepted);
        CHECK(rep.candidatesTried == 1);
        CHECK(out.gain == lat.gain);
    }

    SUBCASE("impossible targets raise a calibration failure") {
        CalibrationTargets impossible{1.01, 1.0};
        CHECK_THROWS_AS(calibrate(lat, spec, impossible, static_cast<CalibrationReport*>(nullptr), 5, 11), CalibrationError);
    }

    SUBCASE("default sweep returns a config that re-simulates past the targets") {
        CalibrationTargets targets;   // design >= 0.95, random mean <= 0.5
        CalibrationReport rep;
        auto out = calibrate(lat, spec, targets, &rep, 40, 41);
        CHECK(rep.accepted);
        auto beam = makeInitialBeam<double>(spec.count, spec.seed, spec.psiSigma, spec.deltaSigma);
        auto res = trackLattice(beam, designPoint(out), out);
        CHECK(res.readings.current[4] / out.inputCurrent >= targets.minDesignTransmission);
    }
}
