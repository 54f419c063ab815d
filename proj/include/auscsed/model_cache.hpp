#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "auscsed/model.hpp"
#include "auscsed/tensor.hpp"

namespace auscsed {

/// Everything a conv+BN+ReLU layer needs for its backward pass.
struct ConvLayerCache {
    Tensor input;   // (C_in, T, F)
    Tensor xhat;    // normalized pre-scale activations (C, T, F)
    Tensor output;  // post-ReLU (C, T, F)
    std::vector<double> mean, var; // per-channel statistics used
    bool batch_stats = true;       // false when a degenerate batch fell back to running stats
};

struct GruDirectionCache {
    Tensor z, r, c, h; // (T, H) each, indexed by absolute time step
};

struct CrnnCache {
    std::vector<ConvLayerCache> conv; // forward order, convs_per_block per block
    std::vector<size_t> block_out_freq; // frequency width after each block's pool
    Tensor seq;    // GRU input (T, C)
    GruDirectionCache fwd, bwd;
    Tensor concat; // (T, 2H)
    Tensor posteriors; // (T, M), clamped sigmoid outputs
};

struct TcnBlockCache {
    Tensor input;    // (F, T)
    Tensor xhat;     // (F, T)
    Tensor relu_out; // (F, T)
    std::vector<double> mean, var;
    bool batch_stats = true;
};

struct TcnCache {
    Tensor x_seq;     // embedding input (T, n_mels)
    std::vector<TcnBlockCache> blocks;
    Tensor final_seq; // head input (F, T)
    Tensor posteriors;
};

struct ForwardCache {
    Architecture arch = Architecture::crnn;
    uint64_t weights_version = 0;
    std::unique_ptr<CrnnCache> crnn;
    std::unique_ptr<TcnCache> tcn;
};

} // namespace auscsed
