#include "dv/random.hpp"

#include <cmath>

namespace dv {

uint64_t mix_seed(uint64_t seed, uint64_t stream) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double RandomStream::uniform() {
    // 53 high bits -> [0, 1)
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomStream::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

int64_t RandomStream::uniform_int(int64_t n) {
    if (n <= 0) throw invalid_argument("uniform_int: n must be positive");
    // rejection sampling to avoid modulo bias
    const uint64_t un = static_cast<uint64_t>(n);
    const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return static_cast<int64_t>(x % un);
}

bool RandomStream::bernoulli(double p) {
    return uniform() < p;
}

double RandomStream::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // u1 in (0,1] so the log is finite.
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
}

void RandomStream::fill_normal(Tensor& t) {
    double* p = t.data();
    for (int64_t i = 0; i < t.size(); ++i) p[i] = normal();
}

Tensor RandomStream::normal_tensor(Shape dims) {
    Tensor t(std::move(dims));
    fill_normal(t);
    return t;
}

}  // namespace dv
