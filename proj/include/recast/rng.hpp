#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace recast {

/// splitmix64; used to derive independent stream seeds from (seed, stream id)
/// so that toggling one component never shifts another component's draws.
inline std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/**
 * Seeded generator with hand-rolled draws. Distribution code lives here (not
 * std::uniform_*) so trajectories are pinned by this repo, not the standard
 * library implementation.
 */
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    /// uniform in [0,1)
    double unit() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

    /// uniform integer in [0, n)
    std::size_t index(std::size_t n) {
        return static_cast<std::size_t>(eng_() % static_cast<std::uint64_t>(n));
    }

    /// standard normal via Box-Muller (cached pair)
    double normal(double mean = 0.0, double sd = 1.0) {
        if (has_cached_) {
            has_cached_ = false;
            return mean + sd * cached_;
        }
        double u1 = 0.0;
        do {
            u1 = unit();
        } while (u1 <= 0.0);
        const double u2 = unit();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        cached_ = r * std::sin(theta);
        has_cached_ = true;
        return mean + sd * r * std::cos(theta);
    }

    /// Fisher-Yates
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[index(i)]);
        }
    }

    /// k distinct indices from [0, n), order-stable sample without replacement
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
        std::vector<std::size_t> all(n);
        for (std::size_t i = 0; i < n; ++i) all[i] = i;
        shuffle(all);
        all.resize(k);
        return all;
    }

private:
    std::mt19937_64 eng_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace recast
