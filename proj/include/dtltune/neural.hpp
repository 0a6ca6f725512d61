#ifndef DTLTUNE_NEURAL_HPP
#define DTLTUNE_NEURAL_HPP

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dtltune/rng.hpp"

namespace dtltune {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

enum class HeadKind { policy, value, shared };

constexpr double kSigmaMinFrac = 0.01;   // sigma clamp, fraction of maxStep
constexpr double kSigmaMaxFrac = 1.0;

struct NetworkSpec {
    int inputDim = 0;
    std::vector<int> hidden;       // presets: {10} for 3 actions, {40, 20} for 5
    HeadKind head = HeadKind::policy;
    int actionDim = 0;             // 0 for pure value nets
    double dropoutRate = 0.1;
    Vec actionScale;               // maxStep per action dim, scales the mu head

    int outputDim() const {
        switch (head) {
            case HeadKind::policy: return 2 * actionDim;
            case HeadKind::value: return 1;
            case HeadKind::shared: return 2 * actionDim + 1;
        }
        return 0;
    }

    void validate() const {
        if (inputDim < 1) throw std::invalid_argument("inputDim must be >= 1");
        for (int w : hidden)
            if (w < 1) throw std::invalid_argument("hidden widths must be >= 1");
        if (dropoutRate < 0 || dropoutRate >= 1)
            throw std::invalid_argument("dropoutRate must lie in [0, 1)");
        if (head != HeadKind::value) {
            if (actionDim < 1) throw std::invalid_argument("policy head needs actionDim >= 1");
            if (actionScale.size() != actionDim)
                throw std::invalid_argument("actionScale size must equal actionDim");
        }
    }
};

struct NetworkParams {
    NetworkSpec spec;
    std::vector<Mat> weights;
    std::vector<Vec> biases;
    std::uint64_t revision = 0;   // bumped on every mutation; guards stale traces

    static NetworkParams init(const NetworkSpec& spec, std::uint64_t seed) {
        spec.validate();
        NetworkParams p;
        p.spec = spec;
        SplitMix64 rng(seed);
        int in = spec.inputDim;
        std::vector<int> widths = spec.hidden;
        widths.push_back(spec.outputDim());
        for (int out : widths) {
            const double limit = std::sqrt(6.0 / double(in + out));
            Mat w(out, in);
            for (Eigen::Index r = 0; r < w.rows(); ++r)
                for (Eigen::Index c = 0; c < w.cols(); ++c)
                    w(r, c) = uniformIn(rng, -limit, limit);
            p.weights.push_back(std::move(w));
            p.biases.push_back(Vec::Zero(out));
            in = out;
        }
        return p;
    }

    int layerCount() const { return int(weights.size()); }

    std::size_t parameterCount() const {
        std::size_t n = 0;
        for (const auto& w : weights) n += std::size_t(w.size());
        for (const auto& b : biases) n += std::size_t(b.size());
        return n;
    }

    bool allFinite() const {
        for (const auto& w : weights)
            if (!w.allFinite()) return false;
        for (const auto& b : biases)
            if (!b.allFinite()) return false;
        return true;
    }
};

struct Gradients {
    std::vector<Mat> weights;
    std::vector<Vec> biases;

    static Gradients zeroLike(const NetworkParams& p) {
        Gradients g;
        for (const auto& w : p.weights) g.weights.push_back(Mat::Zero(w.rows(), w.cols()));
        for (const auto& b : p.biases) g.biases.push_back(Vec::Zero(b.size()));
        return g;
    }

    void add(const Gradients& o, double scale = 1.0) {
        for (std::size_t i = 0; i < weights.size(); ++i) weights[i] += scale * o.weights[i];
        for (std::size_t i = 0; i < biases.size(); ++i) biases[i] += scale * o.biases[i];
    }

    void scale(double s) {
        for (auto& w : weights) w *= s;
        for (auto& b : biases) b *= s;
    }

    double squaredNorm() const {
        double n = 0;
        for (const auto& w : weights) n += w.squaredNorm();
        for (const auto& b : biases) n += b.squaredNorm();
        return n;
    }

    bool allFinite() const {
        for (const auto& w : weights)
            if (!w.allFinite()) return false;
        for (const auto& b : biases)
            if (!b.allFinite()) return false;
        return true;
    }
};

enum class ForwardMode { train, eval };

struct ForwardTrace {
    Vec input;
    std::vector<Vec> preAct;        // z_l per hidden layer and output layer
    std::vector<Vec> tanhAct;       // tanh(z_l), hidden layers only
    std::vector<Vec> dropMask;      // inverted-dropout factors, hidden layers only
    Vec rawOutput;
    ForwardMode mode = ForwardMode::eval;
    const NetworkParams* source = nullptr;
    std::uint64_t revision = 0;

    // replaying forward with the stored masks reproduces rawOutput exactly
};

inline Vec forward(const NetworkParams& params, const Vec& input, ForwardMode mode,
                   std::uint64_t dropoutSeed, ForwardTrace* trace = nullptr) {
    if (input.size() != params.spec.inputDim)
        throw std::invalid_argument("forward: input dimension mismatch");

    const int nHidden = int(params.spec.hidden.size());
    if (trace) {
        *trace = ForwardTrace{};
        trace->input = input;
        trace->mode = mode;
        trace->source = &params;
        trace->revision = params.revision;
    }

    SplitMix64 dropRng(dropoutSeed);
    const double p = params.spec.dropoutRate;
    Vec a = input;
    for (int l = 0; l < nHidden; ++l) {
        Vec z = params.weights[l] * a + params.biases[l];
        Vec t = z.array().tanh();
        Vec mask = Vec::Ones(t.size());
        if (mode == ForwardMode::train && p > 0) {
            for (Eigen::Index i = 0; i < mask.size(); ++i)
                mask[i] = dropRng.uniform() < p ? 0.0 : 1.0 / (1.0 - p);
        }
        a = t.cwiseProduct(mask);
        if (trace) {
            trace->preAct.push_back(std::move(z));
            trace->tanhAct.push_back(std::move(t));
            trace->dropMask.push_back(std::move(mask));
        }
    }
    Vec out = params.weights[nHidden] * a + params.biases[nHidden];
    if (trace) {
        trace->preAct.push_back(out);
        trace->rawOutput = out;
    }
    return out;
}

// Exact reverse-mode gradient of rawOutput . outputGradient wrt every
// parameter, honouring the dropout masks stored in the trace.
inline Gradients backward(const ForwardTrace& trace, const NetworkParams& params,
                          const Vec& outputGradient) {
    if (trace.source != &params || trace.revision != params.revision)
        throw std::logic_error("backward: trace does not match current parameters");
    if (outputGradient.size() != params.spec.outputDim())
        throw std::invalid_argument("backward: output gradient dimension mismatch");

    const int nHidden = int(params.spec.hidden.size());
    Gradients g = Gradients::zeroLike(params);

    Vec delta = outputGradient;
    for (int l = nHidden; l >= 0; --l) {
        const Vec& below =
            l == 0 ? trace.input
                   : Vec(trace.tanhAct[l - 1].cwiseProduct(trace.dropMask[l - 1]));
        g.weights[l] = delta * below.transpose();
        g.biases[l] = delta;
        if (l > 0) {
            Vec back = params.weights[l].transpose() * delta;
            const Vec& t = trace.tanhAct[l - 1];
            delta = back.cwiseProduct(trace.dropMask[l - 1])
                        .cwiseProduct((1.0 - t.array().square()).matrix());
        }
    }
    return g;
}

struct PolicyOutput {
    Vec mu;          // action units, |mu_d| <= maxStep_d via tanh scaling
    Vec sigma;       // clamped softplus
    Vec softplus;    // pre-clamp softplus values, needed for gradients
};

inline double softplus(double z) { return z > 30 ? z : std::log1p(std::exp(std::min(z, 30.0))); }

inline PolicyOutput policyHead(const Vec& raw, const NetworkSpec& spec) {
    const int n = spec.actionDim;
    PolicyOutput o;
    o.mu.resize(n);
    o.sigma.resize(n);
    o.softplus.resize(n);
    for (int d = 0; d < n; ++d) {
        const double ms = spec.actionScale[d];
        o.mu[d] = ms * std::tanh(raw[d]);
        o.softplus[d] = softplus(raw[n + d]);
        o.sigma[d] = std::clamp(o.softplus[d], kSigmaMinFrac * ms, kSigmaMaxFrac * ms);
    }
    return o;
}

// chain dL/dmu, dL/dsigma back to the raw policy outputs
inline Vec policyHeadBackward(const Vec& raw, const PolicyOutput& out, const NetworkSpec& spec,
                              const Vec& dMu, const Vec& dSigma) {
    const int n = spec.actionDim;
    Vec dRaw = Vec::Zero(spec.outputDim());
    for (int d = 0; d < n; ++d) {
        const double ms = spec.actionScale[d];
        const double th = out.mu[d] / ms;
        dRaw[d] = dMu[d] * ms * (1.0 - th * th);
        const bool inside = out.softplus[d] > kSigmaMinFrac * ms &&
                            out.softplus[d] < kSigmaMaxFrac * ms;
        if (inside) {
            const double sig = 1.0 / (1.0 + std::exp(-std::clamp(raw[n + d], -30.0, 30.0)));
            dRaw[n + d] = dSigma[d] * sig;
        }
    }
    return dRaw;
}

inline double valueHead(const Vec& raw, const NetworkSpec& spec) {
    return spec.head == HeadKind::shared ? raw[2 * spec.actionDim] : raw[0];
}

inline Eigen::Index valueHeadIndex(const NetworkSpec& spec) {
    return spec.head == HeadKind::shared ? 2 * spec.actionDim : 0;
}

struct GaussianEval {
    double value = 0;
    Vec dMu;
    Vec dSigma;
};

// log N(a | mu, diag(sigma^2)) with analytic gradients wrt mu and sigma
inline GaussianEval gaussianLogDensity(const Vec& a, const Vec& mu, const Vec& sigma) {
    if ((sigma.array() <= 0).any()) throw std::invalid_argument("sigma must be > 0");
    GaussianEval e;
    const Eigen::Index n = a.size();
    e.dMu.resize(n);
    e.dSigma.resize(n);
    double lp = 0;
    for (Eigen::Index d = 0; d < n; ++d) {
        const double z = (a[d] - mu[d]) / sigma[d];
        lp += -0.5 * z * z - std::log(sigma[d]) - 0.5 * std::log(2.0 * M_PI);
        e.dMu[d] = z / sigma[d];
        e.dSigma[d] = (z * z - 1.0) / sigma[d];
    }
    e.value = lp;
    return e;
}

inline GaussianEval gaussianDensity(const Vec& a, const Vec& mu, const Vec& sigma) {
    GaussianEval lg = gaussianLogDensity(a, mu, sigma);
    GaussianEval e;
    e.value = std::exp(lg.value);
    e.dMu = e.value * lg.dMu;
    e.dSigma = e.value * lg.dSigma;
    return e;
}

inline double normalCdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }
inline double normalPdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
}

// Probability mass of N(mu, sigma) outside [lo, hi], summed over dimensions;
// the actionPenalty term of the policy losses.
inline GaussianEval tailMassOutside(const Vec& lo, const Vec& hi, const Vec& mu,
                                    const Vec& sigma) {
    if ((sigma.array() <= 0).any()) throw std::invalid_argument("sigma must be > 0");
    if ((lo.array() > hi.array()).any()) throw std::invalid_argument("lo must be <= hi");
    GaussianEval e;
    const Eigen::Index n = mu.size();
    e.dMu = Vec::Zero(n);
    e.dSigma = Vec::Zero(n);
    double total = 0;
    for (Eigen::Index d = 0; d < n; ++d) {
        const double al = (lo[d] - mu[d]) / sigma[d];
        const double be = (hi[d] - mu[d]) / sigma[d];
        total += normalCdf(al) + 1.0 - normalCdf(be);
        e.dMu[d] = (-normalPdf(al) + normalPdf(be)) / sigma[d];
        e.dSigma[d] = (-normalPdf(al) * al + normalPdf(be) * be) / sigma[d];
    }
    e.value = total;
    return e;
}

// differential entropy of the diagonal Gaussian
inline GaussianEval gaussianEntropy(const Vec& sigma) {
    GaussianEval e;
    const Eigen::Index n = sigma.size();
    e.dMu = Vec::Zero(n);
    e.dSigma.resize(n);
    double h = 0;
    for (Eigen::Index d = 0; d < n; ++d) {
        h += 0.5 * std::log(2.0 * M_PI * M_E * sigma[d] * sigma[d]);
        e.dSigma[d] = 1.0 / sigma[d];
    }
    e.value = h;
    return e;
}

// a = mu + sigma * z; the raw sample is returned unclamped, bounds are the
// environment's business. zOut records the normal draws for replay.
inline Vec sampleAction(const PolicyOutput& policy, GaussianSampler<double>& gauss,
                        Vec* zOut = nullptr) {
    const Eigen::Index n = policy.mu.size();
    Vec a(n);
    if (zOut) zOut->resize(n);
    for (Eigen::Index d = 0; d < n; ++d) {
        const double z = gauss();
        if (zOut) (*zOut)[d] = z;
        a[d] = policy.mu[d] + policy.sigma[d] * z;
    }
    return a;
}

inline Vec sampleAction(const PolicyOutput& policy, std::uint64_t seed, Vec* zOut = nullptr) {
    GaussianSampler<double> gauss(seed);
    return sampleAction(policy, gauss, zOut);
}

// ---- checkpoint I/O: versioned plain text, bit-exact round trip ----

namespace detail {
inline const char* headName(HeadKind h) {
    switch (h) {
        case HeadKind::policy: return "policy";
        case HeadKind::value: return "value";
        case HeadKind::shared: return "shared";
    }
    return "?";
}
inline HeadKind headFromName(const std::string& s) {
    if (s == "policy") return HeadKind::policy;
    if (s == "value") return HeadKind::value;
    if (s == "shared") return HeadKind::shared;
    throw std::runtime_error("checkpoint: unknown head kind '" + s + "'");
}
}   // namespace detail

inline void saveNetwork(std::ostream& os, const NetworkParams& p) {
    os << "dtltune-net 1\n";
    os << "head " << detail::headName(p.spec.head) << " input " << p.spec.inputDim
       << " action " << p.spec.actionDim << " dropout ";
    os << std::setprecision(std::numeric_limits<double>::max_digits10) << p.spec.dropoutRate;
    os << " hidden " << p.spec.hidden.size();
    for (int w : p.spec.hidden) os << ' ' << w;
    os << '\n';
    os << "scale " << p.spec.actionScale.size();
    for (Eigen::Index i = 0; i < p.spec.actionScale.size(); ++i)
        os << ' ' << p.spec.actionScale[i];
    os << '\n';
    for (int l = 0; l < p.layerCount(); ++l) {
        const Mat& w = p.weights[l];
        os << "W " << l << ' ' << w.rows() << ' ' << w.cols() << '\n';
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            for (Eigen::Index c = 0; c < w.cols(); ++c)
                os << (c ? " " : "") << w(r, c);
            os << '\n';
        }
        const Vec& b = p.biases[l];
        os << "b " << l << ' ' << b.size() << '\n';
        for (Eigen::Index i = 0; i < b.size(); ++i) os << (i ? " " : "") << b[i];
        os << '\n';
    }
    os << "end\n";
}

inline NetworkParams loadNetwork(std::istream& is) {
    std::string magic;
    int version = 0;
    is >> magic >> version;
    if (magic != "dtltune-net" || version != 1)
        throw std::runtime_error("checkpoint: bad magic/version");

    NetworkParams p;
    std::string tok, headName;
    std::size_t nHidden = 0;
    is >> tok >> headName;
    if (tok != "head") throw std::runtime_error("checkpoint: expected 'head'");
    p.spec.head = detail::headFromName(headName);
    is >> tok >> p.spec.inputDim;
    is >> tok >> p.spec.actionDim;
    is >> tok >> p.spec.dropoutRate;
    is >> tok >> nHidden;
    p.spec.hidden.resize(nHidden);
    for (auto& w : p.spec.hidden) is >> w;
    Eigen::Index nScale = 0;
    is >> tok >> nScale;
    if (tok != "scale") throw std::runtime_error("checkpoint: expected 'scale'");
    p.spec.actionScale.resize(nScale);
    for (Eigen::Index i = 0; i < nScale; ++i) is >> p.spec.actionScale[i];

    const int layers = int(nHidden) + 1;
    p.weights.resize(layers);
    p.biases.resize(layers);
    for (int l = 0; l < layers; ++l) {
        int idx = 0;
        Eigen::Index rows = 0, cols = 0, len = 0;
        is >> tok >> idx >> rows >> cols;
        if (tok != "W" || idx != l) throw std::runtime_error("checkpoint: expected weight tensor");
        p.weights[l].resize(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c) is >> p.weights[l](r, c);
        is >> tok >> idx >> len;
        if (tok != "b" || idx != l) throw std::runtime_error("checkpoint: expected bias tensor");
        p.biases[l].resize(len);
        for (Eigen::Index i = 0; i < len; ++i) is >> p.biases[l][i];
    }
    is >> tok;
    if (tok != "end") throw std::runtime_error("checkpoint: missing end marker");
    if (!is) throw std::runtime_error("checkpoint: truncated stream");
    p.spec.validate();
    return p;
}

inline void saveNetworkFile(const std::string& path, const NetworkParams& p) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    saveNetwork(os, p);
}

inline NetworkParams loadNetworkFile(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    return loadNetwork(is);
}

}   // namespace dtltune

#endif
