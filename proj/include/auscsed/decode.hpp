#pragma once

#include <string>

#include "auscsed/labels.hpp"

namespace auscsed {

/// Vital signs implied by decoded events: heart rate from the S1 count,
/// respiratory rate from the inspiration count.
struct Vitals {
    double heart_rate = 0.0;       // beats/min
    double respiratory_rate = 0.0; // breaths/min
    double observed_duration = 0.0;
};

/// Inclusive physiological bounds used to gate pseudo-labels.
struct PlausibilityBounds {
    double hr_min = 40.0;
    double hr_max = 240.0;
    double rr_min = 0.0;
    double rr_max = 35.0;
};

enum class VitalsTask { heart, lung, both };

struct GateResult {
    bool accepted = true;
    std::string reason; // hr_low | hr_high | rr_low | rr_high, empty when accepted
};

/// Threshold binarization with a strict '>' comparison: a value exactly equal
/// to the threshold maps to 0.
ActivityMatrix binarize(const FramePosteriors& posteriors, double threshold);

/// Each maximal run of active frames [i..j] becomes one event spanning
/// [i*dt, (j+1)*dt). No gap merging, no minimum duration.
EventList extract_events(const ActivityMatrix& activity, double frame_duration);

/// Optional post-processing, off by default: drop events shorter than
/// `min_duration_s`, then merge same-class events separated by gaps below
/// `max_gap_s`.
EventList postprocess_events(const EventList& events, double min_duration_s,
                             double max_gap_s);

Vitals estimate_vitals(const EventList& events, double duration_s);

GateResult plausibility_filter(const Vitals& vitals, VitalsTask task,
                               const PlausibilityBounds& bounds = {});

} // namespace auscsed
