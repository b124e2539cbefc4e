#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>

namespace mfgl {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Substream key hash(seed, ids...) by chained SplitMix64.
inline std::uint64_t stream_key(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) noexcept {
    std::uint64_t h = mix64(seed);
    for (std::uint64_t id : ids) h = mix64(h ^ mix64(id + 0x632be59bd9b4e019ULL));
    return h;
}

/// Per-substream generator: mt19937_64 seeded with a SplitMix64 key. Variates
/// are derived from raw 64-bit outputs so streams are identical across
/// standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t key) : engine_(key) {}
    Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> ids) : engine_(stream_key(seed, ids)) {}

    /// Uniform on [0, 1).
    double uniform() noexcept { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    /// Uniform on (0, 1].
    double uniform_open0() noexcept { return 1.0 - uniform(); }
    double exponential(double rate) noexcept { return -std::log(uniform_open0()) / rate; }
    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double r = std::sqrt(-2.0 * std::log(uniform_open0()));
        const double th = 2.0 * std::numbers::pi * uniform();
        spare_ = r * std::sin(th);
        has_spare_ = true;
        return r * std::cos(th);
    }
    /// Index drawn from a probability vector by inversion.
    template <class Weights>
    std::size_t categorical(const Weights& w) noexcept {
        const double u = uniform();
        double acc = 0.0;
        for (std::size_t k = 0; k < w.size(); ++k) {
            acc += w[k];
            if (u < acc) return k;
        }
        for (std::size_t k = w.size(); k-- > 0;) {
            if (w[k] > 0.0) return k;
        }
        return 0;
    }
    /// Poisson variate by exponential gaps (small means only).
    std::uint64_t poisson(double mean) noexcept {
        std::uint64_t count = 0;
        double t = exponential(1.0);
        while (t < mean) {
            ++count;
            t += exponential(1.0);
        }
        return count;
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace mfgl
