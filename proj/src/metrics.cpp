#include "auscsed/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "auscsed/error.hpp"
#include "auscsed/decode.hpp"

namespace auscsed {

namespace {

std::set<SoundClass> classes_present(const EventList& a, const EventList& b) {
    std::set<SoundClass> out;
    for (const auto& e : a.events) out.insert(e.cls);
    for (const auto& e : b.events) out.insert(e.cls);
    return out;
}

} // namespace

ClassCounts match_events_collar(const EventList& gt, const EventList& pred,
                                const EvalConfig& cfg) {
    ClassCounts counts;
    for (SoundClass c : classes_present(gt, pred)) {
        const auto g = gt.of_class(c);
        const auto p = pred.of_class(c);
        std::vector<bool> used(p.size(), false);
        Counts cnt;
        for (const auto& ge : g) {
            const double offset_tol = std::max(cfg.t_collar, cfg.offset_ratio * ge.duration());
            bool matched = false;
            for (size_t j = 0; j < p.size(); ++j) {
                if (used[j]) continue;
                if (std::abs(p[j].onset - ge.onset) <= cfg.t_collar &&
                    std::abs(p[j].offset - ge.offset) <= offset_tol) {
                    used[j] = true;
                    matched = true;
                    break;
                }
            }
            if (matched) ++cnt.tp; else ++cnt.fn;
        }
        for (bool u : used)
            if (!u) ++cnt.fp;
        counts[c] = cnt;
    }
    return counts;
}

ClassCounts segment_scores(const ActivityMatrix& gt, const ActivityMatrix& pred,
                           const EvalConfig& cfg) {
    if (gt.n_frames != pred.n_frames || gt.classes != pred.classes)
        raise(ErrorKind::ShapeMismatch, "ground truth and prediction matrices differ");

    size_t frames_per_segment = 1;
    if (cfg.segment_length > 0.0 && gt.frame_duration > 0.0) {
        frames_per_segment = std::max<size_t>(
            1, static_cast<size_t>(std::llround(cfg.segment_length / gt.frame_duration)));
    }
    const size_t n_segments = (gt.n_frames + frames_per_segment - 1) / frames_per_segment;

    ClassCounts counts;
    for (size_t c = 0; c < gt.n_classes(); ++c) {
        Counts cnt;
        for (size_t s = 0; s < n_segments; ++s) {
            const size_t t0 = s * frames_per_segment;
            const size_t t1 = std::min(gt.n_frames, t0 + frames_per_segment);
            bool g = false, pr = false;
            for (size_t t = t0; t < t1; ++t) {
                g = g || gt.at(t, c);
                pr = pr || pred.at(t, c);
            }
            if (g && pr) ++cnt.tp;
            else if (pr) ++cnt.fp;
            else if (g) ++cnt.fn;
        }
        counts[gt.classes[c]] = cnt;
    }
    return counts;
}

double jaccard(const Interval& a, const Interval& b) {
    if (!(a.hi > a.lo) || !(b.hi > b.lo))
        raise(ErrorKind::DegenerateInterval, "intervals must have positive length");
    const double inter = std::max(0.0, std::min(a.hi, b.hi) - std::max(a.lo, b.lo));
    if (inter <= 0.0) return 0.0;
    // Product of the overlap fractions of the two intervals. 1 for identical
    // intervals, 0 when disjoint; this is the normative event-similarity
    // measure for this codebase.
    return inter * inter / ((a.hi - a.lo) * (b.hi - b.lo));
}

ClassCounts ji_scores(const EventList& gt, const EventList& pred, const EvalConfig& cfg) {
    ClassCounts counts;
    for (SoundClass c : classes_present(gt, pred)) {
        const auto g = gt.of_class(c);
        const auto p = pred.of_class(c);
        std::vector<bool> consumed(g.size(), false);
        Counts cnt;
        for (const auto& pe : p) {
            double best = 0.0;
            size_t best_i = g.size();
            for (size_t i = 0; i < g.size(); ++i) {
                if (consumed[i]) continue;
                const double ji = jaccard({g[i].onset, g[i].offset}, {pe.onset, pe.offset});
                if (ji > best) { // ties keep the earlier-onset GT
                    best = ji;
                    best_i = i;
                }
            }
            if (best > cfg.ji_tp_threshold) {
                consumed[best_i] = true;
                ++cnt.tp;
            } else if (best == 0.0) {
                ++cnt.fp;
            }
            // 0 < JI <= threshold: the miss is charged to the GT event,
            // which stays unconsumed and falls out as fn below.
        }
        for (bool u : consumed)
            if (!u) ++cnt.fn;
        counts[c] = cnt;
    }
    return counts;
}

double f1(const Counts& c) {
    const double denom = static_cast<double>(2 * c.tp + c.fp + c.fn);
    return denom > 0.0 ? 2.0 * static_cast<double>(c.tp) / denom : 0.0;
}

double precision(const Counts& c) {
    const double denom = static_cast<double>(c.tp + c.fp);
    return denom > 0.0 ? static_cast<double>(c.tp) / denom : 0.0;
}

double recall(const Counts& c) {
    const double denom = static_cast<double>(c.tp + c.fn);
    return denom > 0.0 ? static_cast<double>(c.tp) / denom : 0.0;
}

double macro_f1(const ClassCounts& counts, const std::vector<SoundClass>& classes) {
    if (classes.empty()) return 0.0;
    double sum = 0.0;
    for (SoundClass c : classes) {
        auto it = counts.find(c);
        sum += it != counts.end() ? f1(it->second) : 0.0;
    }
    return sum / static_cast<double>(classes.size());
}

std::vector<double> default_threshold_grid() {
    std::vector<double> grid;
    for (int i = 1; i <= 19; ++i) grid.push_back(0.05 * i);
    return grid;
}

std::map<SoundClass, std::vector<PrPoint>> pr_curve(
    const std::vector<ScoredRecording>& set, const std::vector<double>& thresholds,
    ScoreBasis basis, const EvalConfig& cfg, const std::vector<SoundClass>& classes) {
    if (set.empty())
        raise(ErrorKind::EmptyDataset, "no recordings to score");

    std::map<SoundClass, std::vector<PrPoint>> curves;
    for (double th : thresholds) {
        ClassCounts totals;
        for (const auto& rec : set) {
            const ActivityMatrix pred = binarize(rec.posteriors, th);
            ClassCounts rc;
            if (basis == ScoreBasis::segment) {
                const ActivityMatrix gtm = encode_frames(
                    rec.gt, pred.n_frames, rec.posteriors.frame_duration, pred.classes);
                rc = segment_scores(gtm, pred, cfg);
            } else {
                const EventList pe = extract_events(pred, rec.posteriors.frame_duration);
                rc = basis == ScoreBasis::event ? match_events_collar(rec.gt, pe, cfg)
                                                : ji_scores(rec.gt, pe, cfg);
            }
            for (const auto& [cls, cnt] : rc) totals[cls] += cnt;
        }
        for (SoundClass c : classes) {
            const Counts cnt = totals.count(c) ? totals[c] : Counts{};
            curves[c].push_back({th, precision(cnt), recall(cnt)});
        }
    }
    return curves;
}

std::map<SoundClass, std::vector<MapePoint>> mape_curve(
    const std::vector<ScoredRecording>& set, const std::vector<double>& thresholds,
    const std::vector<SoundClass>& classes) {
    // Count GT events per recording per class once.
    std::vector<std::map<SoundClass, long>> gt_counts(set.size());
    for (size_t i = 0; i < set.size(); ++i)
        for (const auto& e : set[i].gt.events) ++gt_counts[i][e.cls];

    std::map<SoundClass, std::vector<MapePoint>> curves;
    bool any_class_eligible = false;
    for (SoundClass c : classes) {
        bool eligible = false;
        for (size_t i = 0; i < set.size(); ++i)
            if (gt_counts[i].count(c)) eligible = true;
        if (eligible) any_class_eligible = true;
    }
    if (set.empty() || !any_class_eligible)
        raise(ErrorKind::NoEligibleRecordings,
              "no recording has ground-truth events for any requested class");

    for (double th : thresholds) {
        std::map<SoundClass, std::pair<double, long>> acc; // sum of errors, n recordings
        for (size_t i = 0; i < set.size(); ++i) {
            const ActivityMatrix pred = binarize(set[i].posteriors, th);
            const EventList pe = extract_events(pred, set[i].posteriors.frame_duration);
            std::map<SoundClass, long> pred_counts;
            for (const auto& e : pe.events) ++pred_counts[e.cls];
            for (SoundClass c : classes) {
                auto it = gt_counts[i].find(c);
                if (it == gt_counts[i].end()) continue; // recording excluded for class
                const long gtn = it->second;
                const long pn = pred_counts.count(c) ? pred_counts[c] : 0;
                const double err = std::min(
                    1.0, std::abs(static_cast<double>(pn - gtn)) / static_cast<double>(gtn));
                acc[c].first += err;
                acc[c].second += 1;
            }
        }
        for (SoundClass c : classes) {
            if (!acc.count(c)) continue;
            curves[c].push_back({th, acc[c].first / static_cast<double>(acc[c].second)});
        }
    }
    return curves;
}

} // namespace auscsed
