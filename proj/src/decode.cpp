#include "auscsed/decode.hpp"

#include <algorithm>

#include "auscsed/error.hpp"

namespace auscsed {

ActivityMatrix binarize(const FramePosteriors& posteriors, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0))
        raise(ErrorKind::InvalidParam, "threshold must be in (0,1)");
    if (posteriors.n_classes() > train_classes().size())
        raise(ErrorKind::ShapeMismatch, "posteriors have more columns than classes");
    ActivityMatrix m;
    m.n_frames = posteriors.n_frames();
    m.frame_duration = posteriors.frame_duration;
    // Model posteriors always carry the 8 train classes; narrower matrices
    // (used in tests) map onto the leading classes.
    m.classes.assign(train_classes().begin(),
                     train_classes().begin() + posteriors.n_classes());
    m.values.resize(posteriors.n_frames() * posteriors.n_classes());
    for (size_t i = 0; i < m.values.size(); ++i)
        m.values[i] = posteriors.values[i] > threshold ? 1 : 0;
    return m;
}

EventList extract_events(const ActivityMatrix& activity, double frame_duration) {
    EventList out;
    out.clip_duration = static_cast<double>(activity.n_frames) * frame_duration;
    for (size_t c = 0; c < activity.n_classes(); ++c) {
        size_t t = 0;
        while (t < activity.n_frames) {
            if (!activity.at(t, c)) {
                ++t;
                continue;
            }
            size_t start = t;
            while (t < activity.n_frames && activity.at(t, c)) ++t;
            out.events.push_back({activity.classes[c],
                                  static_cast<double>(start) * frame_duration,
                                  static_cast<double>(t) * frame_duration,
                                  LabelOrigin::Gt});
        }
    }
    out.normalize();
    return out;
}

EventList postprocess_events(const EventList& events, double min_duration_s,
                             double max_gap_s) {
    EventList out;
    out.clip_duration = events.clip_duration;
    for (SoundClass c : train_classes()) {
        std::vector<SoundEvent> run = events.of_class(c);
        std::vector<SoundEvent> merged;
        for (const auto& e : run) {
            if (!merged.empty() && e.onset - merged.back().offset < max_gap_s)
                merged.back().offset = e.offset;
            else
                merged.push_back(e);
        }
        for (const auto& e : merged)
            if (e.duration() >= min_duration_s) out.events.push_back(e);
    }
    out.normalize();
    return out;
}

Vitals estimate_vitals(const EventList& events, double duration_s) {
    if (!(duration_s > 0.0))
        raise(ErrorKind::NonPositiveDuration, "observed duration must be positive");
    size_t s1 = 0, insp = 0;
    for (const auto& e : events.events) {
        if (e.cls == SoundClass::S1) ++s1;
        if (e.cls == SoundClass::Inspiration) ++insp;
    }
    Vitals v;
    v.observed_duration = duration_s;
    v.heart_rate = static_cast<double>(s1) * 60.0 / duration_s;
    v.respiratory_rate = static_cast<double>(insp) * 60.0 / duration_s;
    return v;
}

GateResult plausibility_filter(const Vitals& vitals, VitalsTask task,
                               const PlausibilityBounds& bounds) {
    GateResult r;
    if (task == VitalsTask::heart || task == VitalsTask::both) {
        if (vitals.heart_rate < bounds.hr_min) return {false, "hr_low"};
        if (vitals.heart_rate > bounds.hr_max) return {false, "hr_high"};
    }
    if (task == VitalsTask::lung || task == VitalsTask::both) {
        if (vitals.respiratory_rate < bounds.rr_min) return {false, "rr_low"};
        if (vitals.respiratory_rate > bounds.rr_max) return {false, "rr_high"};
    }
    return r;
}

} // namespace auscsed
