#include "dtltune/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

namespace dtltune {

const char* const kVersionString = "dtltune 0.1.0";

void RunConfig::validate() const {
    if (mode != 3 && mode != 5) throw ConfigError("run.mode must be 3action or 5action");
    lattice.validate();
    episode.startPoint.validate();
    if (episode.activeControls != mode)
        throw ConfigError("env.active_controls inconsistent with run.mode");
    if (episode.maxSteps < 1) throw ConfigError("env.max_steps must be >= 1");
    if (beam.count < 1) throw ConfigError("beam.count must be >= 1");
    if (!(beam.psiSigma > 0) || !(beam.deltaSigma > 0))
        throw ConfigError("beam sigmas must be > 0");
    if (reward.actionNormWeight != 0.0)
        throw ConfigError("reward.action_norm_weight is a stub and must stay 0");
    for (int w : network.hidden)
        if (w < 1) throw ConfigError("network.hidden widths must be >= 1");
    if (network.dropout < 0 || network.dropout >= 1)
        throw ConfigError("network.dropout must lie in [0, 1)");
    train.hp.validate();
    if (train.episodes < 1) throw ConfigError("train.episodes must be >= 1");
    if (eval.sampleSize < 1) throw ConfigError("eval.sample_size must be >= 1");
}

Environment RunConfig::makeEnvironment() const {
    return Environment(lattice, beam, reward, episode);
}

NetworkSpec RunConfig::actorSpec() const {
    NetworkSpec s;
    s.inputDim = 2 * kMonitorCount + mode;
    s.hidden = network.hidden;
    s.head = network.shared ? HeadKind::shared : HeadKind::policy;
    s.actionDim = mode;
    s.dropoutRate = network.dropout;
    const ActionBounds b = ActionBounds::table1(mode);
    s.actionScale = b.maxSteps();
    return s;
}

NetworkSpec RunConfig::criticSpec() const {
    NetworkSpec s;
    s.inputDim = 2 * kMonitorCount + mode;
    s.hidden = network.hidden;
    s.head = HeadKind::value;
    s.actionDim = 0;
    s.dropoutRate = network.dropout;
    return s;
}

RunConfig defaultConfig(int mode) {
    RunConfig cfg;
    cfg.mode = mode;
    cfg.episode.activeControls = mode;
    if (mode == 3) {
        cfg.episode.maxSteps = 5000;
        cfg.episode.resetMode = ResetMode::fixedStart;
        cfg.episode.startPoint = {40.0, 66.0, 73.0, 135.0, 0.0};
        cfg.network.hidden = {10};
        cfg.train.hp.workers = 1;
        cfg.train.episodes = 400;
        cfg.train.monitor = false;
        cfg.eval.sampleSize = 50;
        cfg.eval.maxSteps = 300;
        cfg.outDir = "runs/3action";
    } else if (mode == 5) {
        cfg.episode.maxSteps = 700;
        cfg.episode.resetMode = ResetMode::randomStart;
        cfg.episode.startPoint = {40.0, 66.0, 64.0, 135.0, 200.0};
        cfg.network.hidden = {40, 20};
        cfg.train.hp.workers = 4;
        cfg.train.episodes = 2400;
        cfg.train.monitor = true;
        cfg.train.monitorCadence = 20;
        cfg.train.roundEpisodes = 1200;
        cfg.eval.sampleSize = 200;
        cfg.eval.maxSteps = 700;
        cfg.outDir = "runs/5action";
    } else {
        throw ConfigError("mode must be 3 or 5");
    }
    return cfg;
}

namespace {

struct KeyIO {
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
    return os.str();
}
std::string fmt(long v) { return std::to_string(v); }
std::string fmt(int v) { return std::to_string(v); }
std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

double toDouble(const std::string& s) {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw ConfigError("bad numeric value '" + s + "'");
    return v;
}
long toLong(const std::string& s) {
    std::size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos != s.size()) throw ConfigError("bad integer value '" + s + "'");
    return v;
}
bool toBool(const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError("bad boolean value '" + s + "' (use true/false)");
}

template <typename T>
KeyIO num(T RunConfig::* field);   // unused primary

KeyIO dbl(std::function<double&(RunConfig&)> ref) {
    return {[ref](RunConfig& c, const std::string& v) { ref(c) = toDouble(v); },
            [ref](const RunConfig& c) { return fmt(ref(const_cast<RunConfig&>(c))); }};
}
KeyIO lng(std::function<long&(RunConfig&)> ref) {
    return {[ref](RunConfig& c, const std::string& v) { ref(c) = toLong(v); },
            [ref](const RunConfig& c) { return fmt(ref(const_cast<RunConfig&>(c))); }};
}
KeyIO intg(std::function<int&(RunConfig&)> ref) {
    return {[ref](RunConfig& c, const std::string& v) { ref(c) = int(toLong(v)); },
            [ref](const RunConfig& c) { return fmt(ref(const_cast<RunConfig&>(c))); }};
}
KeyIO u64(std::function<std::uint64_t&(RunConfig&)> ref) {
    return {[ref](RunConfig& c, const std::string& v) { ref(c) = std::uint64_t(std::stoull(v)); },
            [ref](const RunConfig& c) { return fmt(ref(const_cast<RunConfig&>(c))); }};
}
KeyIO bl(std::function<bool&(RunConfig&)> ref) {
    return {[ref](RunConfig& c, const std::string& v) { ref(c) = toBool(v); },
            [ref](const RunConfig& c) { return fmt(ref(const_cast<RunConfig&>(c))); }};
}

// canonical key order doubles as the serialization layout
const std::vector<std::pair<std::string, KeyIO>>& schema() {
    static const std::vector<std::pair<std::string, KeyIO>> s = [] {
        std::vector<std::pair<std::string, KeyIO>> v;

        v.emplace_back("run.mode", KeyIO{[](RunConfig& c, const std::string& val) {
                                             if (val == "3action") c.mode = 3;
                                             else if (val == "5action") c.mode = 5;
                                             else throw ConfigError("run.mode must be 3action or 5action");
                                             c.episode.activeControls = c.mode;
                                         },
                                         [](const RunConfig& c) {
                                             return c.mode == 3 ? std::string("3action")
                                                                : std::string("5action");
                                         }});
        v.emplace_back("run.out_dir",
                       KeyIO{[](RunConfig& c, const std::string& val) { c.outDir = val; },
                             [](const RunConfig& c) { return c.outDir; }});

        v.emplace_back("beam.count", KeyIO{[](RunConfig& c, const std::string& val) {
                                               c.beam.count = toLong(val);
                                           },
                                           [](const RunConfig& c) {
                                               return fmt(long(c.beam.count));
                                           }});
        v.emplace_back("beam.seed", u64([](RunConfig& c) -> std::uint64_t& { return c.beam.seed; }));
        v.emplace_back("beam.psi_sigma", dbl([](RunConfig& c) -> double& { return c.beam.psiSigma; }));
        v.emplace_back("beam.delta_sigma",
                       dbl([](RunConfig& c) -> double& { return c.beam.deltaSigma; }));

        v.emplace_back("lattice.gain", dbl([](RunConfig& c) -> double& { return c.lattice.gain; }));
        v.emplace_back("lattice.input_current",
                       dbl([](RunConfig& c) -> double& { return c.lattice.inputCurrent; }));
        static const char* seg[] = {"tank1", "tank2", "tank3", "ds1", "ds2"};
        for (int i = 0; i < kSegmentCount; ++i) {
            const std::string p = std::string("lattice.") + seg[i] + ".";
            v.emplace_back(p + "cells", KeyIO{[i](RunConfig& c, const std::string& val) {
                                                  c.lattice.segments[i].cells = int(toLong(val));
                                              },
                                              [i](const RunConfig& c) {
                                                  return fmt(c.lattice.segments[i].cells);
                                              }});
            v.emplace_back(p + "design_amplitude",
                           dbl([i](RunConfig& c) -> double& {
                               return c.lattice.segments[i].designAmplitude;
                           }));
            v.emplace_back(p + "design_phase",
                           dbl([i](RunConfig& c) -> double& {
                               return c.lattice.segments[i].designPhase;
                           }));
            v.emplace_back(p + "coupling_k", dbl([i](RunConfig& c) -> double& {
                               return c.lattice.segments[i].couplingK;
                           }));
            v.emplace_back(p + "acceptance_psi",
                           dbl([i](RunConfig& c) -> double& {
                               return c.lattice.segments[i].acceptancePsi;
                           }));
            v.emplace_back(p + "acceptance_delta",
                           dbl([i](RunConfig& c) -> double& {
                               return c.lattice.segments[i].acceptanceDelta;
                           }));
            v.emplace_back(p + "sync_phase_rad",
                           dbl([i](RunConfig& c) -> double& {
                               return c.lattice.segments[i].syncPhaseRad;
                           }));
        }

        for (int n = 0; n < kMonitorCount; ++n)
            v.emplace_back("reward.a" + std::to_string(n + 1),
                           dbl([n](RunConfig& c) -> double& { return c.reward.A[n]; }));
        v.emplace_back("reward.b", dbl([](RunConfig& c) -> double& { return c.reward.B; }));
        v.emplace_back("reward.threshold",
                       dbl([](RunConfig& c) -> double& { return c.reward.threshold; }));
        v.emplace_back("reward.bonus", dbl([](RunConfig& c) -> double& { return c.reward.bonus; }));
        v.emplace_back("reward.action_norm_weight",
                       dbl([](RunConfig& c) -> double& { return c.reward.actionNormWeight; }));

        v.emplace_back("env.max_steps",
                       intg([](RunConfig& c) -> int& { return c.episode.maxSteps; }));
        v.emplace_back("env.reset_mode",
                       KeyIO{[](RunConfig& c, const std::string& val) {
                                 if (val == "fixed") c.episode.resetMode = ResetMode::fixedStart;
                                 else if (val == "random") c.episode.resetMode = ResetMode::randomStart;
                                 else throw ConfigError("env.reset_mode must be fixed or random");
                             },
                             [](const RunConfig& c) {
                                 return c.episode.resetMode == ResetMode::fixedStart
                                            ? std::string("fixed")
                                            : std::string("random");
                             }});
        v.emplace_back("env.stochastic_beam",
                       bl([](RunConfig& c) -> bool& { return c.episode.stochasticBeam; }));
        v.emplace_back("env.start.t1_amp",
                       dbl([](RunConfig& c) -> double& { return c.episode.startPoint.t1Amp; }));
        v.emplace_back("env.start.t2_amp",
                       dbl([](RunConfig& c) -> double& { return c.episode.startPoint.t2Amp; }));
        v.emplace_back("env.start.t2_phase",
                       dbl([](RunConfig& c) -> double& { return c.episode.startPoint.t2Phase; }));
        v.emplace_back("env.start.t3_amp",
                       dbl([](RunConfig& c) -> double& { return c.episode.startPoint.t3Amp; }));
        v.emplace_back("env.start.t3_phase",
                       dbl([](RunConfig& c) -> double& { return c.episode.startPoint.t3Phase; }));

        v.emplace_back("network.hidden",
                       KeyIO{[](RunConfig& c, const std::string& val) {
                                 std::istringstream is(val);
                                 c.network.hidden.clear();
                                 int w;
                                 while (is >> w) c.network.hidden.push_back(w);
                                 if (c.network.hidden.empty())
                                     throw ConfigError("network.hidden needs at least one width");
                             },
                             [](const RunConfig& c) {
                                 std::string s;
                                 for (std::size_t i = 0; i < c.network.hidden.size(); ++i)
                                     s += (i ? " " : "") + std::to_string(c.network.hidden[i]);
                                 return s;
                             }});
        v.emplace_back("network.dropout",
                       dbl([](RunConfig& c) -> double& { return c.network.dropout; }));
        v.emplace_back("network.shared",
                       bl([](RunConfig& c) -> bool& { return c.network.shared; }));
        v.emplace_back("network.init_seed",
                       u64([](RunConfig& c) -> std::uint64_t& { return c.network.initSeed; }));

        v.emplace_back("train.gamma", dbl([](RunConfig& c) -> double& { return c.train.hp.gamma; }));
        v.emplace_back("train.t_max", intg([](RunConfig& c) -> int& { return c.train.hp.tMax; }));
        v.emplace_back("train.lr_policy",
                       dbl([](RunConfig& c) -> double& { return c.train.hp.lrPolicy; }));
        v.emplace_back("train.lr_value",
                       dbl([](RunConfig& c) -> double& { return c.train.hp.lrValue; }));
        v.emplace_back("train.c1", dbl([](RunConfig& c) -> double& { return c.train.hp.c1; }));
        v.emplace_back("train.c2", dbl([](RunConfig& c) -> double& { return c.train.hp.c2; }));
        v.emplace_back("train.epsilon0",
                       dbl([](RunConfig& c) -> double& { return c.train.hp.epsilon0; }));
        v.emplace_back("train.epsilon_min",
                       dbl([](RunConfig& c) -> double& { return c.train.hp.epsilonMin; }));
        v.emplace_back("train.epsilon_decay",
                       dbl([](RunConfig& c) -> double& { return c.train.hp.epsilonDecay; }));
        v.emplace_back("train.loss_variant",
                       KeyIO{[](RunConfig& c, const std::string& val) {
                                 c.train.hp.lossVariant = lossVariantFromName(val);
                             },
                             [](const RunConfig& c) {
                                 return std::string(lossVariantName(c.train.hp.lossVariant));
                             }});
        v.emplace_back("train.workers",
                       intg([](RunConfig& c) -> int& { return c.train.hp.workers; }));
        v.emplace_back("train.sync_every",
                       intg([](RunConfig& c) -> int& { return c.train.hp.syncEvery; }));
        v.emplace_back("train.grad_clip",
                       dbl([](RunConfig& c) -> double& { return c.train.hp.gradClip; }));
        v.emplace_back("train.rms_decay",
                       dbl([](RunConfig& c) -> double& { return c.train.hp.rmsDecay; }));
        v.emplace_back("train.value_loss_weight",
                       dbl([](RunConfig& c) -> double& { return c.train.hp.valueLossWeight; }));
        v.emplace_back("train.seed", u64([](RunConfig& c) -> std::uint64_t& { return c.train.hp.seed; }));
        v.emplace_back("train.episodes",
                       lng([](RunConfig& c) -> long& { return c.train.episodes; }));
        v.emplace_back("train.checkpoint_every",
                       lng([](RunConfig& c) -> long& { return c.train.checkpointEvery; }));
        v.emplace_back("train.monitor", bl([](RunConfig& c) -> bool& { return c.train.monitor; }));
        v.emplace_back("train.monitor_cadence",
                       lng([](RunConfig& c) -> long& { return c.train.monitorCadence; }));
        v.emplace_back("train.round_episodes",
                       lng([](RunConfig& c) -> long& { return c.train.roundEpisodes; }));

        v.emplace_back("eval.sample_size",
                       intg([](RunConfig& c) -> int& { return c.eval.sampleSize; }));
        v.emplace_back("eval.max_steps",
                       intg([](RunConfig& c) -> int& { return c.eval.maxSteps; }));
        v.emplace_back("eval.seed", u64([](RunConfig& c) -> std::uint64_t& { return c.eval.seed; }));
        return v;
    }();
    return s;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}   // namespace

RunConfig parseConfig(std::istream& in, const std::string& sourceName) {
    std::map<std::string, const KeyIO*> lut;
    for (const auto& [k, io] : schema()) lut[k] = &io;

    RunConfig cfg = defaultConfig(3);
    std::string line;
    int lineNo = 0;
    // two passes so run.mode can re-seed mode-dependent defaults first
    std::vector<std::pair<std::string, std::string>> kvs;
    while (std::getline(in, line)) {
        ++lineNo;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(sourceName + ":" + std::to_string(lineNo) +
                              ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (!lut.count(key))
            throw ConfigError(sourceName + ":" + std::to_string(lineNo) + ": unknown key '" +
                              key + "'");
        kvs.emplace_back(key, val);
    }
    for (const auto& [k, v] : kvs)
        if (k == "run.mode") {
            cfg = defaultConfig(v == "5action" ? 5 : v == "3action" ? 3 : 0);
        }
    for (const auto& [k, v] : kvs) {
        try {
            lut.at(k)->set(cfg, v);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError(sourceName + ": key '" + k + "': " + e.what());
        }
    }
    cfg.validate();
    return cfg;
}

RunConfig parseConfigFile(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    return parseConfig(is, path);
}

std::string serializeConfig(const RunConfig& cfg) {
    std::ostringstream os;
    os << "# dtltune run configuration (" << kVersionString << ")\n";
    std::string section;
    for (const auto& [k, io] : schema()) {
        const std::string sec = k.substr(0, k.find('.'));
        if (sec != section) {
            os << '\n';
            section = sec;
        }
        os << k << " = " << io.get(cfg) << '\n';
    }
    return os.str();
}

void writeConfigFile(const std::string& path, const RunConfig& cfg) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot write config file: " + path);
    os << serializeConfig(cfg);
}

std::uint64_t configHash(const RunConfig& cfg) {
    const std::string s = serializeConfig(cfg);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}   // namespace dtltune
