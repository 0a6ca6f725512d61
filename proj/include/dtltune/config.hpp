#ifndef DTLTUNE_CONFIG_HPP
#define DTLTUNE_CONFIG_HPP

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "dtltune/a3c.hpp"
#include "dtltune/beamsim.hpp"
#include "dtltune/env.hpp"

namespace dtltune {

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct NetworkConfig {
    std::vector<int> hidden = {10};
    double dropout = 0.1;
    bool shared = false;
    std::uint64_t initSeed = 7;
};

struct TrainConfig {
    HyperParams hp;
    long episodes = 400;
    long checkpointEvery = 100;
    bool monitor = false;
    long monitorCadence = 10;
    long roundEpisodes = 200;   // logging epochs for round-over-round reports
};

struct EvalConfig {
    int sampleSize = 50;
    int maxSteps = 300;
    std::uint64_t seed = 123;
};

// Flat, sectioned key = value configuration; the whole run is reproducible
// from this plus the command line.
struct RunConfig {
    int mode = 3;   // active controls: 3 or 5
    std::string outDir = "runs/run";
    BeamSpec beam;
    LatticeConfig lattice = defaultLattice<double>();
    RewardParams reward;
    EpisodeConfig episode;
    NetworkConfig network;
    TrainConfig train;
    EvalConfig eval;

    void validate() const;
    Environment makeEnvironment() const;
    NetworkSpec actorSpec() const;
    NetworkSpec criticSpec() const;
};

// built-in presets for the two experiments
RunConfig defaultConfig(int mode);

RunConfig parseConfig(std::istream& in, const std::string& sourceName = "<stream>");
RunConfig parseConfigFile(const std::string& path);
std::string serializeConfig(const RunConfig& cfg);
void writeConfigFile(const std::string& path, const RunConfig& cfg);

// FNV-1a over the canonical serialization; stable across runs
std::uint64_t configHash(const RunConfig& cfg);

extern const char* const kVersionString;

}   // namespace dtltune

#endif
