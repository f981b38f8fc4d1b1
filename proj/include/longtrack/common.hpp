#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace longtrack {

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct InvalidBoxError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct ConfigError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct StateError : std::logic_error {
    using std::logic_error::logic_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct EvalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic stream generator. All randomness in the engine flows from one
// config seed; sub-streams are derived by key so that frames and modules can be
// generated independently and in any order. splitmix64 is the core generator
// (stdlib distributions are implementation-defined, which would break
// bit-identical re-runs across toolchains).
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {
        // decorrelate trivially related seeds
        next_u64();
        next_u64();
    }

    static Rng derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                      std::uint64_t c = 0) {
        std::uint64_t s = seed;
        std::uint64_t k = splitmix64(s);
        s ^= a * 0x9e3779b97f4a7c15ULL;
        k ^= splitmix64(s);
        s ^= b * 0xc2b2ae3d27d4eb4fULL;
        k ^= splitmix64(s);
        s ^= c * 0x165667b19e3779f9ULL;
        k ^= splitmix64(s);
        return Rng(k);
    }

    std::uint64_t next_u64() { return splitmix64(state_); }

    // [0, 1)
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // inclusive bounds
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(next_u64() %
                                     static_cast<std::uint64_t>(hi - lo + 1));
    }

    // Box-Muller; one spare draw cached
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mu, double sigma) { return mu + sigma * normal(); }

  private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

}  // namespace longtrack
