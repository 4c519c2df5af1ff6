#pragma once

#include <cstdint>

#include "attnconv/backbone.hpp"
#include "attnconv/tensor.hpp"

namespace attnconv {

// Fixed sinusoidal table over the flattened feature positions:
//   table[i][2t]   = sin(i / 10000^(2t/d))
//   table[i][2t+1] = cos(i / 10000^(2t/d))
struct PosRelative {
    Tensor table;  // [(H·W)×d], not trainable
    int64_t length() const { return table.dim(0); }
    int64_t dim() const { return table.dim(1); }
};

// Learned per-slot query embedding; its row count sets the prediction-set size.
struct PosAbs {
    Tensor table;  // [N_pred×d], trainable
    int64_t n_pred() const { return table.dim(0); }
    int64_t dim() const { return table.dim(1); }
};

PosRelative sinusoidal_embedding(int64_t seq_len, int64_t d);
PosAbs init_learned_embedding(int64_t n_pred, int64_t d, uint64_t seed, double stddev = 0.1);

}  // namespace attnconv
