// ============================================================================
// rng.hpp - deterministic random numbers
//
// std::uniform_*_distribution / std::normal_distribution are
// implementation-defined, so golden fixtures generated with them would not
// reproduce across standard libraries. Everything here is pinned to the
// mt19937_64 bit stream.
// ============================================================================

#pragma once
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace con2 {

class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0) : gen_(seed) {}

    std::uint64_t u64() { return gen_(); }

    // Unbiased integer in [0, n)
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) return 0;
        std::uint64_t mask = ~std::uint64_t{0};
        std::uint64_t rem = mask % n;
        std::uint64_t limit = mask - rem;  // multiples of n fit below limit+1
        std::uint64_t x;
        do {
            x = gen_();
        } while (x > limit);
        return x % n;
    }

    // double in [0, 1) with 53 random bits
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller; the sine branch is discarded to keep the generator stateless
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // mt19937_64 stream state; the textual format is defined by the standard
    std::string state() const {
        std::ostringstream os;
        os << gen_;
        return os.str();
    }

    void set_state(const std::string& s) {
        std::istringstream is(s);
        is >> gen_;
    }

  private:
    std::mt19937_64 gen_;
};

}  // namespace con2
