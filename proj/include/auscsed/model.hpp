#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "auscsed/features.hpp"
#include "auscsed/labels.hpp"
#include "auscsed/tensor.hpp"

namespace auscsed {

enum class Architecture { crnn, tcn };
enum class RunMode { train, eval };

/// CNN-BiGRU for polyphonic sound event detection: conv blocks of two 3x3
/// conv+BN+ReLU layers each, 2x1 average pooling over frequency per block,
/// frequency mean, bidirectional GRU, time-distributed dense + sigmoid.
struct CrnnConfig {
    int n_mels = 64;
    int n_classes = 8;
    int conv_blocks = 3;
    int convs_per_block = 2;
    int kernel = 3; // square
    std::vector<int> channels = {64, 128, 256};
    int freq_pool = 2;
    int gru_hidden = 256;
    double bn_epsilon = 1e-5;
    double bn_momentum = 0.9;

    void validate() const;

    /// Reduced widths for single-core CPU training; same architecture.
    static CrnnConfig desk_scale();
};

/// Dilated temporal convolution variant: a per-frame linear embedding of the
/// mel axis followed by residual blocks {dilated conv -> BN -> ReLU -> 1x1
/// conv -> residual add} and the same dense+sigmoid head.
struct TcnConfig {
    int n_mels = 64;
    int n_classes = 8;
    int n_filters = 256;
    std::vector<int> dilations = {1, 2, 4, 8, 16};
    int kernel = 3; // time axis, symmetric zero padding
    double bn_epsilon = 1e-5;
    double bn_momentum = 0.9;

    void validate() const;
    int receptive_field() const;

    static TcnConfig desk_scale();
};

using ModelConfig = std::variant<CrnnConfig, TcnConfig>;

struct NamedTensor {
    std::string name;
    Tensor value;
    bool learnable = true; // BN running stats are state, not parameters
};

/// Ordered name->tensor container used for gradients and optimizer moments.
class TensorMap {
public:
    Tensor& add(const std::string& name, Tensor t);
    bool has(const std::string& name) const;
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    std::vector<std::pair<std::string, Tensor>>& items() { return items_; }
    const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
    size_t size() const { return items_.size(); }

private:
    std::vector<std::pair<std::string, Tensor>> items_;
};

using GradientMap = TensorMap;

/// All learnable tensors plus BN running statistics, the architecture config
/// and the init seed. The version counter tracks learnable-parameter
/// mutations so stale backward caches can be detected.
class ModelWeights {
public:
    ModelWeights() = default;
    ModelWeights(ModelConfig cfg, uint64_t seed);

    Architecture architecture() const;
    const ModelConfig& config() const { return config_; }
    const CrnnConfig& crnn() const;
    const TcnConfig& tcn() const;
    uint64_t seed() const { return seed_; }
    int n_classes() const;
    int n_mels() const;

    Tensor& add(const std::string& name, Tensor t, bool learnable = true);
    bool has(const std::string& name) const;
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    std::vector<NamedTensor>& tensors() { return tensors_; }
    const std::vector<NamedTensor>& tensors() const { return tensors_; }

    uint64_t version() const { return version_; }
    /// Call after mutating learnable tensors (the optimizer does).
    void note_mutation() { ++version_; }

private:
    ModelConfig config_;
    uint64_t seed_ = 0;
    std::vector<NamedTensor> tensors_;
    uint64_t version_ = 0;
};

/// Glorot-uniform conv/dense weights, orthogonal GRU recurrent matrices,
/// zero biases, BN scale 1 / shift 0 / running mean 0 / running var 1.
/// Deterministic in the seed.
ModelWeights init_weights(const CrnnConfig& cfg, uint64_t seed);
ModelWeights init_weights(const TcnConfig& cfg, uint64_t seed);

struct ForwardCache; // defined in model_internal.hpp; opaque to callers

using ForwardCachePtr = std::shared_ptr<ForwardCache>;

/// Run the network. Train mode normalizes with batch statistics and, when a
/// cache pointer is supplied, records every intermediate needed by
/// model_backward. Eval mode uses running statistics and never mutates the
/// weights; repeated eval passes are bit-identical.
FramePosteriors model_forward(const ModelWeights& weights, const LogMelSpectrogram& x,
                              RunMode mode, ForwardCachePtr* cache = nullptr);

/// Fold the batch statistics recorded in the cache into the BN running
/// estimates (running = momentum * running + (1-momentum) * batch).
void update_bn_running(ModelWeights& weights, const ForwardCache& cache);

/// Reverse-mode gradients for every learnable tensor given dL/dposteriors.
/// The cache must come from a train-mode forward on the same weights version.
GradientMap model_backward(const ModelWeights& weights, const ForwardCache& cache,
                           const Tensor& dLdp);

/// Weight file: "ASWF" magic, u32 JSON manifest length, JSON manifest
/// {format_version, architecture, config, seed, tensors}, contiguous
/// little-endian float32 blob, trailing CRC32 over everything before it.
void save_weights(const std::filesystem::path& path, const ModelWeights& weights);
ModelWeights load_weights(const std::filesystem::path& path);

uint32_t crc32(const uint8_t* data, size_t len, uint32_t seed = 0);

} // namespace auscsed
