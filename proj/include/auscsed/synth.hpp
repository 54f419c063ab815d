#pragma once

#include <cstdint>

#include "auscsed/audio.hpp"
#include "auscsed/labels.hpp"

namespace auscsed {

/// Parameters of the synthetic auscultation generator used for desk-scale
/// verification. Heart sounds are tone bursts, breath phases are band-limited
/// noise, wheezes are tonal overlays inside breath phases and crackles short
/// impulses. Spectral bands are separated so the classes stay learnable.
struct SynthSpec {
    double duration_s = 10.0;
    double heart_rate = 80.0;       // beats/min, 0 disables heart sounds
    double respiratory_rate = 15.0; // breaths/min, 0 disables breath sounds
    double s1_duration_s = 0.10;
    double s2_duration_s = 0.08;
    double systole_fraction = 0.35; // S2 onset as a fraction of the cycle
    double insp_fraction = 0.35;    // of the breath cycle
    double exp_fraction = 0.40;
    double wheeze_hz = 0.0;     // > 0 adds a wheeze tone during inspirations
    double crackle_rate = 0.0;  // expected crackles per second of breath phase
    double noise_floor_db = -50.0;
    int sample_rate = 4000;
    uint64_t seed = 0;

    double s1_hz = 55.0;
    double s2_hz = 120.0;
    double insp_band_lo = 400.0, insp_band_hi = 800.0;
    double exp_band_lo = 900.0, exp_band_hi = 1500.0;

    void validate() const;
};

struct SynthResult {
    AudioClip clip;
    EventList labels; // exact ground truth for everything synthesized
};

/// Deterministic in the seed: same spec + seed give identical audio and labels.
SynthResult synth_clip(const SynthSpec& spec);

} // namespace auscsed
