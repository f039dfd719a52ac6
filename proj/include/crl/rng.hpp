// Seeded random number generation. One Rng instance per training run keeps
// every stochastic choice (init, shuffling, bank sampling, k-means seeding)
// reproducible from the run seed alone.
#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

namespace crl {

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1)
    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(gen_); }

    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(gen_);
    }

    double normal(double mean = 0.0, double stddev = 1.0) {
        return std::normal_distribution<double>(mean, stddev)(gen_);
    }

    // uniform integer in [0, n)
    std::size_t below(std::size_t n) {
        return std::uniform_int_distribution<std::size_t>(0, n - 1)(gen_);
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        std::shuffle(v.begin(), v.end(), gen_);
    }

    // Independent generator for a named sub-stream; advancing the child does
    // not perturb the parent's sequence.
    Rng fork(std::uint64_t stream) {
        std::uint64_t s = next_u64();
        // splitmix64 finalizer to decorrelate the stream id
        std::uint64_t z = s + 0x9e3779b97f4a7c15ULL * (stream + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return Rng(z ^ (z >> 31));
    }

    std::mt19937_64& engine() { return gen_; }

  private:
    std::mt19937_64 gen_;
};

}  // namespace crl
