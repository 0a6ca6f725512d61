#ifndef DTLTUNE_RNG_HPP
#define DTLTUNE_RNG_HPP

#include <cmath>
#include <cstdint>

namespace dtltune {

// SplitMix64: tiny, fast, and identical on every platform, which keeps
// seeded runs reproducible across standard libraries.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return double(next() >> 11) * 0x1.0p-53; }

private:
    std::uint64_t state_;
};

template <typename Scalar, typename Rng>
Scalar uniformIn(Rng& rng, Scalar lo, Scalar hi) {
    return lo + (hi - lo) * Scalar(rng.uniform());
}

// Box-Muller standard normals with an optional symmetric truncation.
template <typename Scalar>
class GaussianSampler {
public:
    explicit GaussianSampler(std::uint64_t seed) : rng_(seed) {}

    Scalar operator()() {
        if (haveSpare_) {
            haveSpare_ = false;
            return spare_;
        }
        Scalar u1 = Scalar(rng_.uniform());
        while (u1 <= Scalar(0)) u1 = Scalar(rng_.uniform());
        const Scalar u2 = Scalar(rng_.uniform());
        const Scalar r = std::sqrt(Scalar(-2) * std::log(u1));
        const Scalar a = Scalar(2) * Scalar(M_PI) * u2;
        spare_ = r * std::sin(a);
        haveSpare_ = true;
        return r * std::cos(a);
    }

    Scalar truncated(Scalar bound) {
        Scalar z = (*this)();
        while (std::abs(z) > bound) z = (*this)();
        return z;
    }

private:
    SplitMix64 rng_;
    Scalar spare_ = 0;
    bool haveSpare_ = false;
};

}   // namespace dtltune

#endif
