#include "dtltune/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <thread>
#include <vector>

namespace dtltune {

namespace fs = std::filesystem;
using nlohmann::json;

std::string actorCheckpointPath(const std::string& outDir) { return outDir + "/checkpoint_actor.txt"; }
std::string criticCheckpointPath(const std::string& outDir) { return outDir + "/checkpoint_critic.txt"; }
std::string countersPath(const std::string& outDir) { return outDir + "/counters.json"; }

void writeManifest(const RunConfig& cfg, const std::string& outDir) {
    json m;
    m["version"] = kVersionString;
    m["config_hash"] = configHash(cfg);
    m["config_file"] = "config.cfg";
    m["mode"] = cfg.mode == 3 ? "3action" : "5action";
    m["workers"] = cfg.train.hp.workers;
    m["seeds"] = {{"train", cfg.train.hp.seed},
                  {"beam", cfg.beam.seed},
                  {"network_init", cfg.network.initSeed},
                  {"eval", cfg.eval.seed}};
    std::ofstream os(outDir + "/manifest.json");
    os << m.dump(2) << '\n';
}

namespace {

class EpisodeCsv {
public:
    EpisodeCsv(const std::string& path, bool append) {
        const bool writeHeader = !append || !fs::exists(path);
        os_.open(path, append ? std::ios::app : std::ios::out);
        if (!os_) throw std::runtime_error("cannot open " + path);
        if (writeHeader) os_ << "episode,worker,length,total_reward,success,epsilon,wall_ms\n";
        os_ << std::setprecision(std::numeric_limits<double>::max_digits10);
    }

    void write(const EpisodeRecord& r) {
        std::scoped_lock lk(mu_);
        os_ << r.episodeIndex << ',' << r.workerId << ',' << r.length << ',' << r.totalReward
            << ',' << (r.success ? 1 : 0) << ',' << r.epsilonUsed << ',' << r.wallMs << '\n';
        os_.flush();
    }

private:
    std::mutex mu_;
    std::ofstream os_;
};

void saveCheckpoints(const GlobalModel& global, const RunConfig& cfg) {
    saveNetworkFile(actorCheckpointPath(cfg.outDir), global.snapshotActor());
    if (auto critic = global.snapshotCritic())
        saveNetworkFile(criticCheckpointPath(cfg.outDir), *critic);
    json c;
    c["episodes"] = global.episodesDone();
    c["steps"] = global.steps();
    std::ofstream os(countersPath(cfg.outDir));
    os << c.dump(2) << '\n';
}

}   // namespace

TrainOutcome trainRun(const RunConfig& cfg, bool resume) {
    cfg.validate();
    fs::create_directories(cfg.outDir);
    writeConfigFile(cfg.outDir + "/config.cfg", cfg);
    writeManifest(cfg, cfg.outDir);

    NetworkParams actor;
    std::optional<NetworkParams> critic;
    long resumeEpisodes = 0, resumeSteps = 0;
    if (resume && fs::exists(actorCheckpointPath(cfg.outDir))) {
        actor = loadNetworkFile(actorCheckpointPath(cfg.outDir));
        if (!cfg.network.shared) critic = loadNetworkFile(criticCheckpointPath(cfg.outDir));
        std::ifstream is(countersPath(cfg.outDir));
        if (is) {
            json c = json::parse(is);
            resumeEpisodes = c.value("episodes", 0L);
            resumeSteps = c.value("steps", 0L);
        }
    } else {
        actor = NetworkParams::init(cfg.actorSpec(), cfg.network.initSeed);
        if (!cfg.network.shared)
            critic = NetworkParams::init(cfg.criticSpec(), cfg.network.initSeed + 1);
    }

    GlobalModel global(std::move(actor), std::move(critic), cfg.train.hp);
    global.setCounters(resumeEpisodes, resumeSteps);

    EpisodeCsv episodeCsv(cfg.outDir + "/episodes.csv", resume);
    std::optional<EpisodeCsv> monitorCsv;
    if (cfg.train.monitor) monitorCsv.emplace(cfg.outDir + "/monitor.csv", resume);

    std::atomic<bool> stop{false};
    std::atomic<long> sinceCheckpoint{0};
    const long episodeTarget = resumeEpisodes + cfg.train.episodes;

    auto sink = [&](const EpisodeRecord& r) {
        episodeCsv.write(r);
        if (sinceCheckpoint.fetch_add(1) + 1 >= cfg.train.checkpointEvery) {
            sinceCheckpoint = 0;
            saveCheckpoints(global, cfg);
        }
    };
    auto monitorSink = [&](const EpisodeRecord& r) {
        if (monitorCsv) monitorCsv->write(r);
    };

    std::vector<std::thread> threads;
    std::vector<std::unique_ptr<Environment>> envs;
    for (int w = 0; w < cfg.train.hp.workers; ++w)
        envs.push_back(std::make_unique<Environment>(cfg.makeEnvironment()));
    std::unique_ptr<Environment> monitorEnv;
    if (cfg.train.monitor) monitorEnv = std::make_unique<Environment>(cfg.makeEnvironment());

    for (int w = 0; w < cfg.train.hp.workers; ++w)
        threads.emplace_back([&, w] {
            runWorker(w, *envs[w], global, cfg.train.hp, episodeTarget, stop, sink);
        });
    std::thread monitorThread;
    if (cfg.train.monitor)
        monitorThread = std::thread([&] {
            runMonitor(*monitorEnv, global, cfg.train.hp, cfg.train.monitorCadence,
                       episodeTarget, stop, monitorSink);
        });

    TrainOutcome out;
    // watch for NaN-dominated training
    while (true) {
        bool allDone = global.episodeStarts() >= episodeTarget;
        const long upd = global.updates();
        const long skip = global.skippedUpdates();
        if (upd + skip >= 200 && skip > (upd + skip) / 100) {
            out.nanAbort = true;
            stop = true;
            break;
        }
        if (allDone || stop.load()) break;
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    for (auto& t : threads) t.join();
    stop = true;
    if (monitorThread.joinable()) monitorThread.join();

    saveCheckpoints(global, cfg);
    out.episodes = global.episodesDone();
    out.steps = global.steps();
    out.updates = global.updates();
    out.skippedUpdates = global.skippedUpdates();
    out.checkpointBase = cfg.outDir;
    return out;
}

}   // namespace dtltune
