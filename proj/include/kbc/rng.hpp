#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace kbc {

inline constexpr std::uint64_t splitmix64(std::uint64_t z)
{
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Counter-based stream: draw n is splitmix64(key + n * golden). The state is
// (key, counter), so a checkpoint only needs the counter.
//
// Streams for replicas: key = splitmix64(seed ^ splitmix64(stream + 1)).
class Rng {
public:
    Rng() = default;
    Rng(std::uint64_t seed, std::uint64_t stream) : key_(splitmix64(seed ^ splitmix64(stream + 1))) {}

    std::uint64_t next()
    {
        ++counter_;
        return splitmix64(key_ + counter_ * 0x9e3779b97f4a7c15ULL);
    }

    // [0, 1)
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // (0, 1]
    double uniform_pos() { return (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53; }

    double exponential(double rate) { return -std::log(uniform_pos()) / rate; }

    // Uniform integer in [0, n), Lemire's multiply-shift with rejection.
    std::uint64_t below(std::uint64_t n)
    {
        std::uint64_t x = next();
        __uint128_t m = static_cast<__uint128_t>(x) * n;
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < n) {
            std::uint64_t t = (0 - n) % n;
            while (lo < t) {
                x = next();
                m = static_cast<__uint128_t>(x) * n;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    // Box-Muller; both variates of a pair are used, the spare is part of the state.
    double normal()
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u = uniform_pos();
        double v = uniform();
        double r = std::sqrt(-2.0 * std::log(u));
        double a = 2.0 * std::numbers::pi * v;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    struct State {
        std::uint64_t key = 0;
        std::uint64_t counter = 0;
        bool has_spare = false;
        double spare = 0.0;
    };

    State state() const { return {key_, counter_, has_spare_, spare_}; }
    void restore(const State& s)
    {
        key_ = s.key;
        counter_ = s.counter;
        has_spare_ = s.has_spare;
        spare_ = s.spare;
    }
    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace kbc
