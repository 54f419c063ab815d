#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "auscsed/decode.hpp"
#include "auscsed/model.hpp"
#include "auscsed/synth.hpp"
#include "auscsed/trainer.hpp"

namespace auscsed {

struct ManifestEntry {
    std::filesystem::path audio;
    std::filesystem::path labels; // empty for unlabeled corpora
    std::string split = "train";  // train | val | test
    LabelOrigin origin = LabelOrigin::Gt;
    VitalsTask task = VitalsTask::both;
    std::filesystem::path mask; // optional excluded-span file: "<start_s> <end_s>" lines
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
};

/// JSON array of {audio, labels, split, origin, task, mask?}. Relative paths
/// resolve against the manifest's directory.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

/// Load the recordings of one split (empty split string = all), resampling to
/// the feature sample rate when needed.
TrainSet load_train_set(const DatasetManifest& manifest, const std::string& split,
                        const FeatureConfig& features);

/// Decode one clip with the model: log-mel, eval forward, binarize, extract.
EventList infer_events(const ModelWeights& weights, const AudioClip& clip,
                       const FeatureConfig& features, double threshold);

struct RejectionRecord {
    std::string clip;
    double heart_rate = 0.0;
    double respiratory_rate = 0.0;
    std::string reason;
};

struct PseudoLabelResult {
    DatasetManifest accepted;
    std::vector<RejectionRecord> rejections;
    std::map<SoundClass, size_t> event_totals; // accepted pseudo-events per class
};

/// Stage 2: run the model over a corpus, keep only `keep_classes`, derive the
/// vitals and keep the clip only when they are physiologically plausible.
/// Accepted clips get a pseudo-label file under out_dir.
PseudoLabelResult generate_pseudo_labels(const ModelWeights& weights,
                                         const DatasetManifest& corpus,
                                         const std::vector<SoundClass>& keep_classes,
                                         const FeatureConfig& features, double threshold,
                                         const PlausibilityBounds& bounds,
                                         const std::filesystem::path& out_dir);

/// Task implied by a pseudo-label class subset; drives which vital is gated.
VitalsTask gate_task_for_classes(const std::vector<SoundClass>& classes);

struct MergeConflict {
    std::string clip;
    SoundClass cls = SoundClass::S1;
};

struct MergeResult {
    DatasetManifest merged;
    std::vector<MergeConflict> conflicts; // pseudo labels dropped because GT had the class
};

/// Stage-3 input: per clip, GT events plus pseudo events of classes the GT
/// does not cover, written as one label file with a provenance column.
/// GT wins conflicts; no clip ever loses a GT event.
MergeResult merge_datasets(const DatasetManifest& gt, const DatasetManifest& pl,
                           const std::filesystem::path& out_dir);

struct StrategyConfig {
    std::filesystem::path heart_manifest; // GT heart labels
    std::filesystem::path lung_manifest;  // GT lung labels
    std::filesystem::path work_dir;
    FeatureConfig features;
    ModelConfig model = CrnnConfig::desk_scale();
    TrainConfig train;
    PlausibilityBounds bounds;
    double threshold = 0.5;
};

struct StrategyArtifacts {
    std::filesystem::path heart_weights;
    std::filesystem::path lung_weights;
    std::filesystem::path merged_manifest;
    std::filesystem::path unified_weights;
    size_t pl_accepted = 0;
    size_t pl_rejected = 0;
};

/// The three-step semi-supervised strategy. Stage 1 trains the two
/// specialists (loss-masked to their task's classes); stage 2 cross-labels
/// the corpora with plausibility gating and writes the merged manifest;
/// stage 3 trains the unified 8-class model on the merged data.
StrategyArtifacts run_strategy(int stage, const StrategyConfig& cfg);

void save_rejections(const std::filesystem::path& path,
                     const std::vector<RejectionRecord>& rejections);

} // namespace auscsed
