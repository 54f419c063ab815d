#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "auscsed/augment.hpp"
#include "auscsed/decode.hpp"
#include "auscsed/features.hpp"
#include "auscsed/model.hpp"

namespace auscsed {

enum class LossKind { bce, afl };

struct TrainConfig {
    LossKind loss = LossKind::afl;
    double gamma = 0.0625;
    double zeta = 1.0;
    double lr = 1e-4;
    int batch_size = 8; // reference recipe uses 64; 8 is the CPU default
    int epochs = 25;
    double window_s = 10.0;
    double threshold = 0.5;
    int early_stop_patience = 5; // <= 0 disables early stopping
    uint64_t seed = 0;
    std::vector<WaveAugment> wave_augments;
    std::vector<SpecAugment> spec_augments;

    void validate() const;
};

/// One training recording: decoded audio, strong labels, the supervised task
/// (which class columns the loss sees) and optional excluded time spans.
struct TrainRecording {
    AudioClip clip;
    EventList labels;
    VitalsTask task = VitalsTask::both;
    std::vector<std::pair<double, double>> excluded_spans;
    std::string name;
};

struct TrainSet {
    std::vector<TrainRecording> recordings;
};

struct EpochStats {
    int epoch = 0; // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainHooks {
    /// Called after each epoch; returning true stops training (the current
    /// weights become the result if no better validation epoch exists).
    std::function<bool(const ModelWeights&, const EpochStats&)> should_stop;
};

struct TrainResult {
    ModelWeights best;
    std::vector<EpochStats> history;
    int best_epoch = 0;
};

/// Class mask for a supervised task: heart exposes S1/S2, lung the six lung
/// classes, both everything.
std::vector<uint8_t> task_class_mask(VitalsTask task, int n_classes);

/// 25-epoch style training: per epoch, shuffle recordings, sample one random
/// window per recording per visit, augment, forward, loss, backward, Adam.
/// Validation loss on deterministic leading windows drives early stopping;
/// the best-validation weights are returned. Fully deterministic in the seed.
TrainResult train_loop(const TrainSet& train, const TrainSet& val,
                       const ModelConfig& arch, const FeatureConfig& features,
                       const TrainConfig& cfg, const TrainHooks& hooks = {});

/// history CSV: "epoch,train_loss,val_loss" rows.
void save_history(const std::filesystem::path& path,
                  const std::vector<EpochStats>& history);

} // namespace auscsed
