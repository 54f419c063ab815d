#pragma once

#include <array>
#include <map>
#include <vector>

#include "auscsed/labels.hpp"

namespace auscsed {

struct Counts {
    long tp = 0;
    long fp = 0;
    long fn = 0;

    Counts& operator+=(const Counts& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        return *this;
    }
};

using ClassCounts = std::map<SoundClass, Counts>;

/// Event-matching tolerances. Collar defaults are task-keyed: 60 ms for
/// heart sounds, 500 ms for lung sounds.
struct EvalConfig {
    double t_collar = 0.060;      // seconds
    double offset_ratio = 0.5;    // offset tolerance = max(collar, ratio * gt duration)
    double segment_length = 0.0;  // seconds; 0 means one frame
    double ji_tp_threshold = 0.5;
};

constexpr double kHeartCollar = 0.060;
constexpr double kLungCollar = 0.500;

/// Collar-based event matching. A (gt, pred) pair of the same class matches
/// when |onset delta| <= collar and |offset delta| <= max(collar,
/// offset_ratio * gt duration). One-to-one greedy resolution in ascending GT
/// onset order, taking the earliest-onset valid unmatched prediction.
ClassCounts match_events_collar(const EventList& gt, const EventList& pred,
                                const EvalConfig& cfg);

/// Frame/segment-wise comparison. For segment_length > one frame, frames
/// aggregate by any-active within each segment before comparison.
ClassCounts segment_scores(const ActivityMatrix& gt, const ActivityMatrix& pred,
                           const EvalConfig& cfg);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

/// Interval similarity: |a n b|^2 / (|a| * |b|), the product of the two
/// overlap fractions. 1 for identical intervals, 0 for disjoint ones.
double jaccard(const Interval& a, const Interval& b);

/// HF-lung style scoring: a prediction whose best Jaccard index against the
/// not-yet-consumed GT events exceeds the threshold is a tp (consuming that
/// GT); partial overlap leaves the GT unconsumed; zero overlap is a fp.
/// Every GT event not consumed by a tp counts as fn.
ClassCounts ji_scores(const EventList& gt, const EventList& pred, const EvalConfig& cfg);

/// F1 = 2tp / (2tp + fp + fn); 0 when the denominator is 0.
double f1(const Counts& c);
double precision(const Counts& c);
double recall(const Counts& c);

/// Unweighted mean F1 over the given classes (missing classes count as 0/0/0).
double macro_f1(const ClassCounts& counts, const std::vector<SoundClass>& classes);

enum class ScoreBasis { segment, event, ji };

/// One recording's material for threshold sweeps.
struct ScoredRecording {
    FramePosteriors posteriors;
    EventList gt;
};

struct PrPoint {
    double threshold = 0.0;
    double precision = 0.0;
    double recall = 0.0;
};

struct MapePoint {
    double threshold = 0.0;
    double mape = 0.0;
};

std::vector<double> default_threshold_grid(); // 0.05 .. 0.95 step 0.05

/// Per class: binarize at each threshold, score on the chosen basis over the
/// whole set, report precision/recall.
std::map<SoundClass, std::vector<PrPoint>> pr_curve(
    const std::vector<ScoredRecording>& set, const std::vector<double>& thresholds,
    ScoreBasis basis, const EvalConfig& cfg,
    const std::vector<SoundClass>& classes = train_classes());

/// Per class and threshold: mean over recordings (with at least one GT event
/// of the class) of min(1, |pred event count - gt event count| / gt count).
std::map<SoundClass, std::vector<MapePoint>> mape_curve(
    const std::vector<ScoredRecording>& set, const std::vector<double>& thresholds,
    const std::vector<SoundClass>& classes = train_classes());

} // namespace auscsed
