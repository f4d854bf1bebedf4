#pragma once

#include <cstdint>
#include <random>

#include "dv/tensor.hpp"

namespace dv {

// splitmix64; used to derive independent sub-stream seeds.
uint64_t mix_seed(uint64_t seed, uint64_t stream);

// Deterministic random stream. mt19937_64 produces a standard-specified
// integer sequence and all real-valued mappings below are implemented here
// rather than with std distributions, so the draw sequence is identical on
// every platform for a given seed.
class RandomStream {
  public:
    explicit RandomStream(uint64_t seed) : seed_(seed), eng_(seed) {}

    uint64_t seed() const { return seed_; }
    uint64_t next_u64() { return eng_(); }

    // [0, 1)
    double uniform();
    double uniform(double lo, double hi);
    // [0, n)
    int64_t uniform_int(int64_t n);
    bool bernoulli(double p);

    // Standard normal via Box-Muller; second value of each pair is cached.
    double normal();
    void fill_normal(Tensor& t);
    Tensor normal_tensor(Shape dims);

    RandomStream fork(uint64_t stream) const { return RandomStream(mix_seed(seed_, stream)); }

  private:
    uint64_t seed_;
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace dv
