// Command-line front end: calibrate, train, eval, rollout, report.
// Exit codes: 0 success, 1 usage/config error, 2 runtime failure.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "dtltune/config.hpp"
#include "dtltune/report.hpp"
#include "dtltune/trainer.hpp"

namespace fs = std::filesystem;
using namespace dtltune;

namespace {

constexpr int kExitOk = 0, kExitUsage = 1, kExitRuntime = 2;

RunConfig loadConfigOrDefault(const std::string& path, int mode) {
    RunConfig cfg = path.empty() ? defaultConfig(mode) : parseConfigFile(path);
    if (const char* env = std::getenv("DTLTUNE_OUTDIR")) cfg.outDir = env;
    return cfg;
}

int cmdCalibrate(const std::string& configPath, const std::string& outConfig, bool dryRun) {
    RunConfig cfg = loadConfigOrDefault(configPath, 3);
    if (dryRun) {
        cfg.validate();
        std::cout << "config ok: " << (configPath.empty() ? "<defaults>" : configPath) << "\n";
        return kExitOk;
    }
    CalibrationReport report;
    CalibrationTargets targets;
    try {
        cfg.lattice = calibrate(cfg.lattice, cfg.beam, targets, &report);
    } catch (const CalibrationError& e) {
        std::cerr << "calibration failed: " << e.what() << "\n";
        return kExitRuntime;
    }
    const std::string out = outConfig.empty()
                                ? (configPath.empty() ? "dtltune_calibrated.cfg"
                                                      : configPath + ".calibrated")
                                : outConfig;
    writeConfigFile(out, cfg);
    std::cout << "design transmission: " << report.designTransmission << "\n"
              << "random-point mean transmission: " << report.randomMeanTransmission << "\n"
              << "all-minima transmission: " << report.allMinTransmission << "\n"
              << "calibrated config written to " << out << "\n";
    return kExitOk;
}

int cmdTrain(const std::string& configPath, int mode, int workers, long episodes, bool monitor,
             bool resume, const std::string& outDir) {
    RunConfig cfg = loadConfigOrDefault(configPath, mode);
    if (mode != 0 && cfg.mode != mode && configPath.empty()) cfg = defaultConfig(mode);
    if (workers > 0) cfg.train.hp.workers = workers;
    if (episodes > 0) cfg.train.episodes = episodes;
    if (monitor) cfg.train.monitor = true;
    if (!outDir.empty()) cfg.outDir = outDir;
    cfg.validate();

    TrainOutcome out = trainRun(cfg, resume);
    if (out.nanAbort) {
        std::cerr << "training aborted: " << out.skippedUpdates << " of "
                  << (out.updates + out.skippedUpdates)
                  << " updates were skipped for non-finite gradients (>1%)\n";
        return kExitRuntime;
    }
    std::cout << "trained " << out.episodes << " episodes (" << out.steps << " env steps, "
              << out.updates << " gradient updates)\n"
              << "artifacts in " << cfg.outDir << "\n";
    return kExitOk;
}

int cmdEval(const std::string& checkpoint, const std::string& configPath, int sampleSize,
            int maxSteps, std::uint64_t seed, const std::string& outDir) {
    RunConfig cfg = loadConfigOrDefault(configPath, 3);
    NetworkParams actor = loadNetworkFile(checkpoint);
    const int stateDim = 2 * kMonitorCount + cfg.mode;
    if (actor.spec.inputDim != stateDim || actor.spec.actionDim != cfg.mode) {
        std::cerr << "checkpoint/config mismatch: checkpoint expects input "
                  << actor.spec.inputDim << "/actions " << actor.spec.actionDim
                  << ", config mode gives " << stateDim << "/" << cfg.mode << "\n";
        return kExitUsage;
    }
    if (sampleSize > 0) cfg.eval.sampleSize = sampleSize;
    if (maxSteps > 0) cfg.eval.maxSteps = maxSteps;
    if (seed) cfg.eval.seed = seed;
    const std::string dir = outDir.empty() ? cfg.outDir : outDir;
    fs::create_directories(dir);

    Environment env = cfg.makeEnvironment();
    std::vector<Trajectory> trajectories;
    EvalSummary sum = randomStartEval(actor, env, cfg.eval.sampleSize, cfg.eval.maxSteps,
                                      cfg.eval.seed, &trajectories);
    writeEvalSummaryCsv(dir + "/eval_summary.csv", sum);
    writeEvalSummaryJson(dir + "/eval_summary.json", sum);
    auto band = exportSolutionBand({sum}, designPoint(cfg.lattice));
    if (sum.successes == 0)
        std::cerr << "warning: no successful rollouts; solution band holds only the design row\n";
    writeSolutionBandCsv(dir + "/solution_band.csv", band);
    for (std::size_t k = 0; k < std::min<std::size_t>(trajectories.size(), 8); ++k)
        writeTrajectoryCsv(dir + "/trajectory_" + std::to_string(k) + ".csv", trajectories[k]);

    std::vector<int> sorted = sum.stepsPerRun;
    std::sort(sorted.begin(), sorted.end());
    auto pct = [&](double q) { return sorted[std::size_t(q * double(sorted.size() - 1))]; };
    std::cout << "success rate: " << sum.successRate << " (" << sum.successes << "/"
              << sum.sampleSize << ")\n"
              << "steps p50/p90: " << pct(0.5) << "/" << pct(0.9) << " (cap " << sum.maxSteps
              << ")\n";
    for (std::size_t i = 0; i < sum.underSteps.size(); ++i)
        std::cout << "finished under " << sum.underSteps[i] << " steps: "
                  << sum.underFraction[i] * 100 << "%\n";
    std::cout << "artifacts in " << dir << "\n";
    return kExitOk;
}

int cmdRollout(const std::string& checkpoint, const std::string& configPath,
               const std::vector<double>& startVals, const std::string& startKind,
               int maxSteps, std::uint64_t seed, const std::string& outDir) {
    RunConfig cfg = loadConfigOrDefault(configPath, 3);
    NetworkParams actor = loadNetworkFile(checkpoint);

    ControlSettings start = cfg.episode.startPoint;
    if (startKind == "expert") {
        start = designPoint(cfg.lattice);
    } else if (startKind == "random") {
        SplitMix64 rng(seed ? seed : cfg.eval.seed);
        start = randomStart(ActionBounds::table1(cfg.mode), cfg.episode.startPoint, rng);
    } else if (!startVals.empty()) {
        if (startVals.size() != 5) {
            std::cerr << "--start needs 5 values: t1Amp t2Amp t2Phase t3Amp t3Phase\n";
            return kExitUsage;
        }
        start = {startVals[0], startVals[1], startVals[3], startVals[2], startVals[4]};
    }
    try {
        start.validate();
    } catch (const std::exception& e) {
        std::cerr << "invalid start point: " << e.what() << "\n";
        return kExitUsage;
    }

    const std::string dir = outDir.empty() ? cfg.outDir : outDir;
    fs::create_directories(dir);
    Environment env = cfg.makeEnvironment();
    Trajectory traj = greedyRollout(actor, env, start,
                                    maxSteps > 0 ? maxSteps : cfg.eval.maxSteps);
    writeTrajectoryCsv(dir + "/trajectory.csv", traj);

    XySeries path{"path", {}, {}}, tip{"end", {}, {}};
    path.x.push_back(start.t1Amp);
    path.y.push_back(start.t2Amp);
    for (const auto& s : traj.steps) {
        path.x.push_back(s.controls.t1Amp);
        path.y.push_back(s.controls.t2Amp);
    }
    tip.x.push_back(traj.terminal().t1Amp);
    tip.y.push_back(traj.terminal().t2Amp);
    svgLineChart(dir + "/trajectory_t1_t2.svg", "rollout path: t1 amp vs t2 amp", {path});

    std::cout << (traj.success ? "success" : "step-limit") << " after " << traj.length()
              << " steps, final transmission "
              << (traj.steps.empty() ? traj.startTransmission : traj.steps.back().transmission)
              << "\nartifacts in " << dir << "\n";
    return kExitOk;
}

int cmdReport(const std::string& runDir, const std::string& outDir, long roundEpisodes) {
    const std::string out = outDir.empty() ? runDir + "/report" : outDir;
    long rounds = roundEpisodes;
    const std::string cfgPath = runDir + "/config.cfg";
    if (rounds <= 0 && fs::exists(cfgPath)) rounds = parseConfigFile(cfgPath).train.roundEpisodes;
    if (rounds <= 0) rounds = 200;
    auto missing = emitRunReport(runDir, out, rounds);
    if (!missing.empty()) {
        std::cerr << "missing run artifacts:\n";
        for (const auto& m : missing) std::cerr << "  " << m << "\n";
        return kExitRuntime;
    }
    std::cout << "report written to " << out << "\n";
    return kExitOk;
}

}   // namespace

int main(int argc, char** argv) {
    CLI::App app{"dtltune: RL tuning of a surrogate drift-tube-linac section"};
    app.require_subcommand(1);

    std::string configPath, outDir, checkpoint, startKind, outConfig, runDir;
    std::vector<double> startVals;
    int mode = 3, workers = 0, sampleSize = 0, maxSteps = 0;
    long episodes = 0, roundEpisodes = 0;
    std::uint64_t seed = 0;
    bool monitor = false, resume = false, dryRun = false;

    auto* cal = app.add_subcommand("calibrate", "sweep the surrogate constants and self-check");
    cal->add_option("--config", configPath, "input config file");
    cal->add_option("--out", outConfig, "calibrated config output path");
    cal->add_flag("--dry-run", dryRun, "validate the config schema only");

    auto* tr = app.add_subcommand("train", "run A3C training");
    tr->add_option("--config", configPath, "config file (defaults to built-in preset)");
    tr->add_option("--mode", mode, "3 or 5 action preset when no config given")
        ->check(CLI::IsMember({3, 5}));
    tr->add_option("--workers", workers, "override worker count");
    tr->add_option("--episodes", episodes, "override training episode budget");
    tr->add_flag("--monitor", monitor, "run the monitoring agent");
    tr->add_flag("--resume", resume, "continue from the run directory's checkpoint");
    tr->add_option("--out", outDir, "run directory override");

    auto* ev = app.add_subcommand("eval", "random-start greedy evaluation of a checkpoint");
    ev->add_option("checkpoint", checkpoint, "actor checkpoint file")->required();
    ev->add_option("--config", configPath, "config file");
    ev->add_option("--sample-size", sampleSize, "number of random starts");
    ev->add_option("--max-steps", maxSteps, "step cap per rollout");
    ev->add_option("--seed", seed, "evaluation seed");
    ev->add_option("--out", outDir, "output directory");

    auto* ro = app.add_subcommand("rollout", "single greedy rollout from a chosen start");
    ro->add_option("checkpoint", checkpoint, "actor checkpoint file")->required();
    ro->add_option("--config", configPath, "config file");
    ro->add_option("--start", startVals, "t1Amp t2Amp t2Phase t3Amp t3Phase")->expected(5);
    ro->add_option("--start-kind", startKind, "expert | random (overrides --start)");
    ro->add_option("--max-steps", maxSteps, "step cap");
    ro->add_option("--seed", seed, "seed for --start-kind random");
    ro->add_option("--out", outDir, "output directory");

    auto* rp = app.add_subcommand("report", "emit SVG/CSV report bundle for a run directory");
    rp->add_option("rundir", runDir, "training run directory")->required();
    rp->add_option("--out", outDir, "report output directory");
    rp->add_option("--round-episodes", roundEpisodes, "episodes per round for histograms");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) ? kExitUsage : kExitOk;
    }

    try {
        if (cal->parsed()) return cmdCalibrate(configPath, outConfig, dryRun);
        if (tr->parsed()) return cmdTrain(configPath, mode, workers, episodes, monitor, resume, outDir);
        if (ev->parsed()) return cmdEval(checkpoint, configPath, sampleSize, maxSteps, seed, outDir);
        if (ro->parsed())
            return cmdRollout(checkpoint, configPath, startVals, startKind, maxSteps, seed, outDir);
        if (rp->parsed()) return cmdReport(runDir, outDir, roundEpisodes);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid argument: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
