#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "auscsed/audio.hpp"
#include "auscsed/features.hpp"

namespace auscsed {

enum class WaveAugmentKind {
    gain,
    highpass,
    lowpass,
    white_noise,
    time_dropout,
    noise_injection,
    pitch_shift, // declared but unsupported
    reverb,      // declared but unsupported
};

struct WaveAugment {
    WaveAugmentKind kind = WaveAugmentKind::gain;
    double gain_db = 0.0;      // gain
    double cutoff_hz = 100.0;  // highpass / lowpass
    double snr_db = 20.0;      // white_noise / noise_injection
    double dropout_min_s = 0.1; // time_dropout span length range
    double dropout_max_s = 0.1;
    double dropout_start_s = -1.0; // fixed start when >= 0, random otherwise
    std::shared_ptr<const AudioClip> noise; // noise_injection source
};

/// Apply the ops in order. Every op preserves the sample count; randomness
/// (noise draws, dropout placement) is fully determined by the seed.
AudioClip augment_wave(const AudioClip& clip, const std::vector<WaveAugment>& ops,
                       uint64_t seed);

enum class SpecAugmentKind {
    masks,         // SpecAugment time/frequency masks, filled with the clip mean
    filter_gain,   // piecewise-constant per-band gain in the log domain
    freq_stretch,  // resample the mel axis, crop/pad back to shape
};

struct SpecAugment {
    SpecAugmentKind kind = SpecAugmentKind::masks;
    int n_time_masks = 0;
    int time_mask_min = 0, time_mask_max = 0; // frames
    int n_freq_masks = 0;
    int freq_mask_min = 0, freq_mask_max = 0; // bands
    int gain_bands_min = 2, gain_bands_max = 4;
    double gain_db_min = 0.0, gain_db_max = 0.0;
    double stretch_min = 0.9, stretch_max = 1.1;
};

/// Shape-preserving spectrogram augmentation, deterministic in the seed.
/// Values never drop below log(log_floor).
LogMelSpectrogram augment_spec(const LogMelSpectrogram& spec,
                               const std::vector<SpecAugment>& ops, uint64_t seed,
                               double log_floor = 1e-10);

} // namespace auscsed
