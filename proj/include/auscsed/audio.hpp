#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace auscsed {

/// Mono auscultation waveform. Samples are dimensionless amplitudes with
/// nominal range [-1, 1].
struct AudioClip {
    std::vector<double> samples;
    int sample_rate = 0;

    double duration_s() const {
        return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }
};

/// Read a RIFF/WAV file. Accepts mono PCM16 and IEEE float32 only.
/// PCM16 samples are scaled by 1/32768 so -32768 maps to exactly -1.0.
AudioClip load_audio(const std::filesystem::path& path);

/// Write a mono WAV file. `pcm16` selects 16-bit integer output (with
/// clamping), otherwise IEEE float32 is written.
void save_audio(const std::filesystem::path& path, const AudioClip& clip, bool pcm16 = false);

/// Windowed-sinc resampler, linear phase. Per-sample kernel renormalization
/// keeps constant signals exactly constant, including at the edges.
AudioClip resample(const AudioClip& clip, int target_rate);

} // namespace auscsed
