#ifndef DTLTUNE_A3C_HPP
#define DTLTUNE_A3C_HPP

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "dtltune/env.hpp"
#include "dtltune/neural.hpp"

namespace dtltune {

enum class LossVariant { eq6, eq7 };

inline LossVariant lossVariantFromName(const std::string& s) {
    if (s == "eq6") return LossVariant::eq6;
    if (s == "eq7") return LossVariant::eq7;
    throw std::invalid_argument("unknown loss variant '" + s + "' (expected eq6 or eq7)");
}
inline const char* lossVariantName(LossVariant v) {
    return v == LossVariant::eq6 ? "eq6" : "eq7";
}

struct HyperParams {
    double gamma = 0.99;
    int tMax = 20;
    double lrPolicy = 1e-4;
    double lrValue = 1e-3;
    double c1 = 10.0;            // action-penalty weight
    double c2 = 0.0;             // entropy weight; epsilon-greedy replaces it
    double epsilon0 = 0.5;
    double epsilonMin = 0.02;
    double epsilonDecay = 0.995;
    LossVariant lossVariant = LossVariant::eq7;
    int workers = 1;
    int syncEvery = 20;          // steps between pulls from the global model
    double gradClip = 5.0;
    double rmsDecay = 0.99;
    double rmsEpsilon = 1e-8;
    double valueLossWeight = 0.5;   // shared-trunk mode only
    std::uint64_t seed = 1;

    void validate() const {
        if (!(gamma > 0 && gamma < 1)) throw std::invalid_argument("gamma must lie in (0, 1)");
        if (tMax < 1) throw std::invalid_argument("tMax must be >= 1");
        if (workers < 1) throw std::invalid_argument("workers must be >= 1");
        if (!(epsilon0 >= 0 && epsilon0 <= 1)) throw std::invalid_argument("epsilon0 in [0,1]");
    }
};

struct RolloutStep {
    Vec state;
    Vec sampledAction;     // pre-clamp action fed to the density
    Vec noise;             // standard-normal draws behind the sample (empty for random branch)
    ForwardTrace policyTrace;
    ForwardTrace valueTrace;   // unused in shared mode
    double value = 0;
    Vec feasLo, feasHi;
    double reward = 0;
    bool done = false;
    bool wasRandom = false;
};

struct RolloutBuffer {
    std::vector<RolloutStep> steps;
    double bootstrapValue = 0;   // V(s after last step); 0 when the episode ended

    std::size_t size() const { return steps.size(); }
};

struct ReturnsAdvantages {
    Vec returns;
    Vec advantages;
};

// Backward recursion R <- r + gamma*R seeded with the bootstrap value;
// a done flag resets the tail. A_t = R_t - V(s_t).
inline ReturnsAdvantages computeReturnsAdvantages(const RolloutBuffer& buffer, double gamma,
                                                  const Vec& valuesOfStates) {
    const int n = int(buffer.size());
    if (n == 0) throw std::invalid_argument("computeReturnsAdvantages: empty buffer");
    if (valuesOfStates.size() != n)
        throw std::invalid_argument("computeReturnsAdvantages: values size mismatch");
    ReturnsAdvantages out;
    out.returns.resize(n);
    out.advantages.resize(n);
    double r = buffer.bootstrapValue;
    for (int t = n - 1; t >= 0; --t) {
        if (buffer.steps[t].done) r = 0;
        r = buffer.steps[t].reward + gamma * r;
        out.returns[t] = r;
    }
    out.advantages = out.returns - valuesOfStates;
    return out;
}

struct LossResult {
    double loss = 0;
    Gradients grads;
};

// Mean over the buffer of the selected first term plus C1 * actionPenalty
// and the optional -C2 * entropy term. Advantages enter as constants.
inline LossResult policyLoss(const NetworkParams& params, const RolloutBuffer& buffer,
                             const Vec& advantages, LossVariant variant, double c1, double c2) {
    const int n = int(buffer.size());
    if (n == 0) throw std::invalid_argument("policyLoss: empty buffer");
    LossResult out;
    out.grads = Gradients::zeroLike(params);
    const double invN = 1.0 / double(n);

    for (int t = 0; t < n; ++t) {
        const auto& st = buffer.steps[t];
        const Vec& raw = st.policyTrace.rawOutput;
        const PolicyOutput po = policyHead(raw, params.spec);
        const double adv = advantages[t];

        GaussianEval lg = gaussianLogDensity(st.sampledAction, po.mu, po.sigma);
        Vec dMu, dSigma;
        double term = 0;
        if (variant == LossVariant::eq6) {
            term = -lg.value * adv;
            dMu = -adv * lg.dMu;
            dSigma = -adv * lg.dSigma;
        } else {
            const double dens = std::exp(lg.value);
            term = -dens * adv;
            dMu = -adv * dens * lg.dMu;
            dSigma = -adv * dens * lg.dSigma;
        }

        GaussianEval pen = tailMassOutside(st.feasLo, st.feasHi, po.mu, po.sigma);
        term += c1 * pen.value;
        dMu += c1 * pen.dMu;
        dSigma += c1 * pen.dSigma;

        if (c2 != 0) {
            GaussianEval ent = gaussianEntropy(po.sigma);
            term += -c2 * ent.value;
            dSigma += -c2 * ent.dSigma;
        }

        out.loss += term * invN;
        Vec dRaw = policyHeadBackward(raw, po, params.spec, dMu, dSigma);
        Gradients g = backward(st.policyTrace, params, dRaw);
        out.grads.add(g, invN);
    }
    return out;
}

// Mean squared (V(s_t) - R_t)^2 with the gradient flowing only through V.
inline LossResult valueLoss(const NetworkParams& params, const RolloutBuffer& buffer,
                            const Vec& returns) {
    const int n = int(buffer.size());
    if (n == 0) throw std::invalid_argument("valueLoss: empty buffer");
    LossResult out;
    out.grads = Gradients::zeroLike(params);
    const double invN = 1.0 / double(n);
    const bool shared = params.spec.head == HeadKind::shared;
    const Eigen::Index vIdx = valueHeadIndex(params.spec);

    for (int t = 0; t < n; ++t) {
        const auto& st = buffer.steps[t];
        const ForwardTrace& trace = shared ? st.policyTrace : st.valueTrace;
        const double v = trace.rawOutput[vIdx];
        const double diff = v - returns[t];
        out.loss += diff * diff * invN;
        Vec dRaw = Vec::Zero(params.spec.outputDim());
        dRaw[vIdx] = 2.0 * diff;
        Gradients g = backward(trace, params, dRaw);
        out.grads.add(g, invN);
    }
    return out;
}

inline double epsilonSchedule(long episodeIndex, const HyperParams& hp) {
    if (episodeIndex < 0) throw std::invalid_argument("episodeIndex must be >= 0");
    return std::max(hp.epsilonMin,
                    hp.epsilon0 * std::pow(hp.epsilonDecay, double(episodeIndex)));
}

// epsilon-greedy: with probability eps a uniform draw inside the feasible
// bounds, otherwise a Gaussian policy sample (unclamped).
inline std::pair<ActionDelta, bool> selectAction(const PolicyOutput& policy, double eps,
                                                 const Vec& feasLo, const Vec& feasHi,
                                                 SplitMix64& rng, Vec* zOut = nullptr) {
    if (!(eps >= 0 && eps <= 1)) throw std::invalid_argument("epsilon must lie in [0, 1]");
    if (rng.uniform() < eps) {
        const Eigen::Index n = policy.mu.size();
        Vec a(n);
        for (Eigen::Index d = 0; d < n; ++d) a[d] = uniformIn(rng, feasLo[d], feasHi[d]);
        if (zOut) zOut->resize(0);
        return {a, true};
    }
    GaussianSampler<double> gauss(rng.next());
    return {sampleAction(policy, gauss, zOut), false};
}

struct EpisodeRecord {
    long episodeIndex = 0;
    int workerId = 0;
    int length = 0;
    double totalReward = 0;
    bool success = false;
    double epsilonUsed = 0;
    double wallMs = 0;
};

struct GradientUpdate {
    Gradients actor;
    std::optional<Gradients> critic;
};

// The only shared mutable object: parameter store plus per-parameter
// squared-gradient accumulators and the global counters. All access is
// serialized, so reads always observe whole tensors.
class GlobalModel {
public:
    GlobalModel(NetworkParams actor, std::optional<NetworkParams> critic, HyperParams hp)
        : actor_(std::move(actor)), critic_(std::move(critic)), hp_(hp) {
        accActor_ = Gradients::zeroLike(actor_);
        if (critic_) accCritic_ = Gradients::zeroLike(*critic_);
    }

    bool shared() const { return !critic_.has_value(); }

    NetworkParams snapshotActor() const {
        std::scoped_lock lk(mu_);
        return actor_;
    }
    std::optional<NetworkParams> snapshotCritic() const {
        std::scoped_lock lk(mu_);
        return critic_;
    }

    void applyGradients(const GradientUpdate& upd) {
        if (upd.actor.weights.size() != actor_.weights.size())
            throw std::invalid_argument("applyGradients: actor gradient shape mismatch");
        if (upd.critic.has_value() != critic_.has_value())
            throw std::invalid_argument("applyGradients: critic gradient presence mismatch");
        if (!upd.actor.allFinite() || (upd.critic && !upd.critic->allFinite())) {
            skipped_.fetch_add(1, std::memory_order_relaxed);
            return;
        }
        std::scoped_lock lk(mu_);
        applyOne(actor_, accActor_, upd.actor, hp_.lrPolicy);
        if (critic_) applyOne(*critic_, accCritic_, *upd.critic, hp_.lrValue);
        ++updates_;
    }

    long beginEpisode() { return episodeStarts_.fetch_add(1, std::memory_order_relaxed); }
    long finishEpisode() { return episodesDone_.fetch_add(1, std::memory_order_relaxed); }
    long episodesDone() const { return episodesDone_.load(std::memory_order_relaxed); }
    long episodeStarts() const { return episodeStarts_.load(std::memory_order_relaxed); }
    void addSteps(long n) { steps_.fetch_add(n, std::memory_order_relaxed); }
    long steps() const { return steps_.load(std::memory_order_relaxed); }
    long updates() const {
        std::scoped_lock lk(mu_);
        return updates_;
    }
    long skippedUpdates() const { return skipped_.load(std::memory_order_relaxed); }

    // resume support
    void setCounters(long episodes, long steps) {
        episodeStarts_ = episodes;
        episodesDone_ = episodes;
        steps_ = steps;
    }

    const HyperParams& hyperParams() const { return hp_; }

private:
    static void clipInPlace(Gradients& g, double maxNorm) {
        const double norm = std::sqrt(g.squaredNorm());
        if (norm > maxNorm && norm > 0) g.scale(maxNorm / norm);
    }

    void applyOne(NetworkParams& p, Gradients& acc, Gradients g, double lr) {
        clipInPlace(g, hp_.gradClip);
        const double d = hp_.rmsDecay, e = hp_.rmsEpsilon;
        for (std::size_t i = 0; i < p.weights.size(); ++i) {
            acc.weights[i] = d * acc.weights[i].array() + (1 - d) * g.weights[i].array().square();
            p.weights[i].array() -=
                lr * g.weights[i].array() / (acc.weights[i].array() + e).sqrt();
            acc.biases[i] = d * acc.biases[i].array() + (1 - d) * g.biases[i].array().square();
            p.biases[i].array() -= lr * g.biases[i].array() / (acc.biases[i].array() + e).sqrt();
        }
        ++p.revision;
    }

    mutable std::mutex mu_;
    NetworkParams actor_;
    std::optional<NetworkParams> critic_;
    Gradients accActor_, accCritic_;
    HyperParams hp_;
    long updates_ = 0;
    std::atomic<long> episodeStarts_{0};
    std::atomic<long> episodesDone_{0};
    std::atomic<long> steps_{0};
    std::atomic<long> skipped_{0};
};

using EpisodeSink = std::function<void(const EpisodeRecord&)>;

// One exploration stream: sync local copies from the global model, collect
// up to tMax steps, turn them into gradients, push them back. Emits a record
// per finished episode.
inline void runWorker(int workerId, Environment& env, GlobalModel& global,
                      const HyperParams& hp, long episodeTarget,
                      const std::atomic<bool>& stop, const EpisodeSink& sink) {
    NetworkParams actor = global.snapshotActor();
    std::optional<NetworkParams> critic = global.snapshotCritic();
    const bool shared = !critic.has_value();

    SplitMix64 rng(hp.seed + 0x51ed2700ULL * std::uint64_t(workerId + 1));
    long localEpisode = 0;
    int stepsSinceSync = 0;

    while (!stop.load(std::memory_order_relaxed)) {
        const long globalEpisode = global.beginEpisode();
        if (globalEpisode >= episodeTarget) break;
        const double eps = epsilonSchedule(globalEpisode, hp);
        const std::uint64_t resetSeed = hp.seed ^ (0x9e3779b9ULL * std::uint64_t(workerId + 1)) ^
                                        (std::uint64_t(localEpisode) << 20);
        Vec state = env.reset(resetSeed);

        double total = 0;
        int length = 0;
        const auto t0 = std::chrono::steady_clock::now();

        while (!env.done() && !stop.load(std::memory_order_relaxed)) {
            if (stepsSinceSync >= hp.syncEvery) {
                actor = global.snapshotActor();
                critic = global.snapshotCritic();
                stepsSinceSync = 0;
            }

            RolloutBuffer buf;
            Vec valuesOfStates(hp.tMax);
            int collected = 0;
            for (; collected < hp.tMax && !env.done(); ++collected) {
                RolloutStep st;
                st.state = state;
                const std::uint64_t dropSeed = rng.next();
                forward(actor, state, ForwardMode::train, dropSeed, &st.policyTrace);
                const PolicyOutput po = policyHead(st.policyTrace.rawOutput, actor.spec);
                if (shared) {
                    st.value = valueHead(st.policyTrace.rawOutput, actor.spec);
                } else {
                    forward(*critic, state, ForwardMode::train, rng.next(), &st.valueTrace);
                    st.value = st.valueTrace.rawOutput[0];
                }
                feasibleBounds(env.controlVector(), env.bounds(), st.feasLo, st.feasHi);
                auto [action, wasRandom] = selectAction(po, eps, st.feasLo, st.feasHi, rng, &st.noise);
                st.sampledAction = action;
                st.wasRandom = wasRandom;

                StepResult res = env.step(action);
                st.reward = res.reward;
                st.done = res.done;
                total += res.reward;
                ++length;
                state = res.nextState;
                valuesOfStates[collected] = st.value;
                buf.steps.push_back(std::move(st));
            }
            if (buf.steps.empty()) break;

            if (buf.steps.back().done) {
                buf.bootstrapValue = 0;
            } else if (shared) {
                Vec raw = forward(actor, state, ForwardMode::eval, 0);
                buf.bootstrapValue = valueHead(raw, actor.spec);
            } else {
                buf.bootstrapValue = forward(*critic, state, ForwardMode::eval, 0)[0];
            }

            auto ra = computeReturnsAdvantages(buf, hp.gamma, valuesOfStates.head(collected));
            GradientUpdate upd;
            if (shared) {
                LossResult pl = policyLoss(actor, buf, ra.advantages, hp.lossVariant, hp.c1, hp.c2);
                LossResult vl = valueLoss(actor, buf, ra.returns);
                upd.actor = std::move(pl.grads);
                upd.actor.add(vl.grads, hp.valueLossWeight);
            } else {
                LossResult pl = policyLoss(actor, buf, ra.advantages, hp.lossVariant, hp.c1, hp.c2);
                LossResult vl = valueLoss(*critic, buf, ra.returns);
                upd.actor = std::move(pl.grads);
                upd.critic = std::move(vl.grads);
            }
            global.applyGradients(upd);
            global.addSteps(collected);
            stepsSinceSync += collected;
        }

        if (env.done()) {
            EpisodeRecord rec;
            rec.episodeIndex = global.finishEpisode();
            rec.workerId = workerId;
            rec.length = length;
            rec.totalReward = total;
            rec.success = env.transmission() >= env.rewardParams().threshold;
            rec.epsilonUsed = eps;
            rec.wallMs = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
            if (sink) sink(rec);
        }
        ++localEpisode;
    }
}

// Non-learning progress probe: every `cadence` finished episodes it runs one
// greedy episode (eps = 0, a = mu, eval-mode forward) from the predefined
// start against a snapshot of the global model. Never sends gradients.
inline void runMonitor(Environment& env, GlobalModel& global, const HyperParams& hp,
                       long cadence, long episodeTarget, const std::atomic<bool>& stop,
                       const EpisodeSink& sink) {
    long nextAt = cadence;
    while (!stop.load(std::memory_order_relaxed)) {
        const long done = global.episodesDone();
        if (done < nextAt) {
            if (done >= episodeTarget) break;
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
            continue;
        }
        nextAt += cadence;

        NetworkParams actor = global.snapshotActor();
        Vec state = env.resetTo(env.episodeConfig().startPoint);
        double total = 0;
        int length = 0;
        const auto t0 = std::chrono::steady_clock::now();
        while (!env.done() && !stop.load(std::memory_order_relaxed)) {
            Vec raw = forward(actor, state, ForwardMode::eval, 0);
            const PolicyOutput po = policyHead(raw, actor.spec);
            StepResult res = env.step(po.mu);
            total += res.reward;
            ++length;
            state = res.nextState;
        }
        EpisodeRecord rec;
        rec.episodeIndex = done;
        rec.workerId = -1;
        rec.length = length;
        rec.totalReward = total;
        rec.success = env.transmission() >= env.rewardParams().threshold;
        rec.epsilonUsed = 0;
        rec.wallMs =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();
        if (sink) sink(rec);
    }
}

}   // namespace dtltune

#endif
