#ifndef DTLTUNE_TRAINER_HPP
#define DTLTUNE_TRAINER_HPP

#include <optional>
#include <string>

#include "dtltune/config.hpp"

namespace dtltune {

struct TrainOutcome {
    long episodes = 0;
    long steps = 0;
    long updates = 0;
    long skippedUpdates = 0;
    bool nanAbort = false;
    std::string checkpointBase;   // path prefix of the latest checkpoint pair
};

// Runs the configured training: N worker threads plus the optional
// monitoring agent, episode/monitor CSV logging, periodic checkpoints, and
// the reproducibility manifest. Resume continues counters and parameters
// from a previous run directory.
TrainOutcome trainRun(const RunConfig& cfg, bool resume = false);

// checkpoint file locations inside a run directory
std::string actorCheckpointPath(const std::string& outDir);
std::string criticCheckpointPath(const std::string& outDir);
std::string countersPath(const std::string& outDir);

void writeManifest(const RunConfig& cfg, const std::string& outDir);

}   // namespace dtltune

#endif
