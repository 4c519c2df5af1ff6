#include "attnconv/positional.hpp"

#include <cmath>
#include <random>

namespace attnconv {

PosRelative sinusoidal_embedding(int64_t seq_len, int64_t d) {
    if (seq_len < 1) throw ConfigError("sinusoidal_embedding: seq_len must be >= 1");
    if (d < 2 || d % 2 != 0) throw ConfigError("sinusoidal_embedding: d must be even, got " + std::to_string(d));
    std::vector<double> table(static_cast<size_t>(seq_len * d));
    for (int64_t i = 0; i < seq_len; ++i) {
        for (int64_t j = 0; j < d; j += 2) {
            const double angle = static_cast<double>(i) / std::pow(10000.0, static_cast<double>(j) / static_cast<double>(d));
            table[i * d + j] = std::sin(angle);
            table[i * d + j + 1] = std::cos(angle);
        }
    }
    return PosRelative{Tensor({seq_len, d}, std::move(table), false)};
}

PosAbs init_learned_embedding(int64_t n_pred, int64_t d, uint64_t seed, double stddev) {
    if (n_pred < 1 || d < 1) throw ConfigError("init_learned_embedding: n_pred and d must be >= 1");
    std::mt19937_64 rng(seed);
    return PosAbs{Tensor::randn({n_pred, d}, stddev, rng, true)};
}

}  // namespace attnconv
