#pragma once

#include <complex>
#include <cstddef>
#include <filesystem>
#include <vector>

#include "auscsed/audio.hpp"
#include "auscsed/tensor.hpp"

namespace auscsed {

enum class MelScale { htk, slaney };
enum class FilterNorm { peak, area };

/// Log-mel front-end parameters. Defaults produce 622 frames x 64 bands for
/// a 10 s clip at 4 kHz (window 256, hop 64, no padding or centering).
struct FeatureConfig {
    int sample_rate = 4000;
    int window_len = 256;
    int hop_len = 64;
    int n_mels = 64;
    double log_floor = 1e-10;
    double fmin = 0.0;
    double fmax = 0.0; // 0 means sample_rate / 2
    MelScale mel_scale = MelScale::htk;
    FilterNorm filter_norm = FilterNorm::peak;

    double effective_fmax() const { return fmax > 0.0 ? fmax : sample_rate / 2.0; }
    double frame_duration() const { return static_cast<double>(hop_len) / sample_rate; }
    void validate() const;
};

/// N x n_mels matrix of natural-log mel powers. No per-clip normalization.
struct LogMelSpectrogram {
    Tensor values; // (n_frames, n_mels)
    double frame_duration = 0.0;

    size_t n_frames() const { return values.rank() == 2 ? values.dim(0) : 0; }
    size_t n_mels() const { return values.rank() == 2 ? values.dim(1) : 0; }
};

/// Number of full analysis windows: 1 + floor((n - window) / hop).
/// Throws TooShort when the clip cannot fill a single window.
size_t frame_count(size_t n_samples, size_t window_len, size_t hop_len);

/// Real-input FFT, returns the n/2+1 non-negative-frequency bins.
/// Radix-2 fast path for power-of-two sizes, direct DFT otherwise.
std::vector<std::complex<double>> rfft(const std::vector<double>& x);

/// Triangular filterbank, one row per mel band over window/2+1 FFT bins.
Tensor mel_filterbank(const FeatureConfig& cfg);

/// Hann window -> power spectrum -> mel filterbank -> log(max(p, floor)).
LogMelSpectrogram log_mel(const AudioClip& clip, const FeatureConfig& cfg);

/// Binary feature dump: 16-byte header {"LMEL", u32 frames, u32 mels,
/// u32 reserved} followed by row-major little-endian float32.
void save_features(const std::filesystem::path& path, const LogMelSpectrogram& spec);
LogMelSpectrogram load_features(const std::filesystem::path& path);

} // namespace auscsed
