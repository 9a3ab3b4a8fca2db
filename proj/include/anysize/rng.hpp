#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "anysize/tensor.hpp"

namespace anysize {

/// Deterministic random source. All draws go through explicit transforms of
/// mt19937_64 output rather than std:: distributions, so a given seed yields
/// the same stream on every standard library. State round-trips through a
/// string for checkpointing.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 1) : gen_(seed) {}

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n), rejection sampled (no modulo bias).
    std::int64_t uniform_int(std::int64_t n) {
        const std::uint64_t un = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
        std::uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return static_cast<std::int64_t>(x % un);
    }

    /// Standard normal via Box-Muller. Draws two uniforms per call and keeps
    /// no spare, so the stream position is a pure function of call count.
    double normal() {
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    template <class S>
    void fill_normal(TensorT<S>& t, double mean, double sd) {
        for (std::int64_t i = 0; i < t.numel(); ++i)
            t[i] = static_cast<S>(normal(mean, sd));
    }

    template <class S>
    void fill_uniform(TensorT<S>& t, double lo, double hi) {
        for (std::int64_t i = 0; i < t.numel(); ++i)
            t[i] = static_cast<S>(uniform(lo, hi));
    }

    /// Fisher-Yates shuffle.
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::int64_t i = static_cast<std::int64_t>(v.size()) - 1; i > 0; --i)
            std::swap(v[static_cast<std::size_t>(i)],
                      v[static_cast<std::size_t>(uniform_int(i + 1))]);
    }

    std::string state() const {
        std::ostringstream os;
        os << gen_;
        return os.str();
    }

    void restore(const std::string& s) {
        std::istringstream is(s);
        is >> gen_;
        if (is.fail()) throw std::runtime_error("rng: malformed state string");
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace anysize
