#include "auscsed/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "auscsed/error.hpp"

namespace auscsed {

namespace {

constexpr double kPi = 3.14159265358979323846;

double hz_to_mel(double f, MelScale scale) {
    if (scale == MelScale::htk)
        return 2595.0 * std::log10(1.0 + f / 700.0);
    // Slaney: linear below 1 kHz, logarithmic above.
    const double f_sp = 200.0 / 3.0;
    const double min_log_hz = 1000.0;
    const double min_log_mel = min_log_hz / f_sp;
    const double logstep = std::log(6.4) / 27.0;
    if (f < min_log_hz) return f / f_sp;
    return min_log_mel + std::log(f / min_log_hz) / logstep;
}

double mel_to_hz(double m, MelScale scale) {
    if (scale == MelScale::htk)
        return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0);
    const double f_sp = 200.0 / 3.0;
    const double min_log_hz = 1000.0;
    const double min_log_mel = min_log_hz / f_sp;
    const double logstep = std::log(6.4) / 27.0;
    if (m < min_log_mel) return m * f_sp;
    return min_log_hz * std::exp(logstep * (m - min_log_mel));
}

bool is_power_of_two(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// Iterative in-place radix-2 Cooley-Tukey on a complex buffer.
void fft_pow2(std::vector<std::complex<double>>& a) {
    const size_t n = a.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * kPi / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                std::complex<double> u = a[i + k];
                std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

} // namespace

void FeatureConfig::validate() const {
    if (sample_rate <= 0)
        raise(ErrorKind::InvalidConfig, "sample_rate must be positive");
    if (window_len <= 0 || hop_len <= 0)
        raise(ErrorKind::InvalidConfig, "window_len and hop_len must be positive");
    if (hop_len > window_len)
        raise(ErrorKind::InvalidConfig, "hop_len must not exceed window_len");
    if (n_mels < 1)
        raise(ErrorKind::InvalidConfig, "n_mels must be at least 1");
    if (log_floor <= 0.0)
        raise(ErrorKind::InvalidConfig, "log_floor must be positive");
    const double top = effective_fmax();
    if (!(fmin < top) || top > sample_rate / 2.0 + 1e-9)
        raise(ErrorKind::InvalidConfig, "need fmin < fmax <= sample_rate/2");
}

size_t frame_count(size_t n_samples, size_t window_len, size_t hop_len) {
    if (n_samples < window_len)
        raise(ErrorKind::TooShort,
              std::to_string(n_samples) + " samples < window of " +
                  std::to_string(window_len));
    return 1 + (n_samples - window_len) / hop_len;
}

std::vector<std::complex<double>> rfft(const std::vector<double>& x) {
    const size_t n = x.size();
    std::vector<std::complex<double>> out(n / 2 + 1);
    if (n == 0) return out;
    if (is_power_of_two(n)) {
        std::vector<std::complex<double>> buf(n);
        for (size_t i = 0; i < n; ++i) buf[i] = x[i];
        fft_pow2(buf);
        for (size_t k = 0; k <= n / 2; ++k) out[k] = buf[k];
    } else {
        // Direct DFT; only hit for non-power-of-two window lengths.
        for (size_t k = 0; k <= n / 2; ++k) {
            double re = 0.0, im = 0.0;
            for (size_t i = 0; i < n; ++i) {
                const double ang = -2.0 * kPi * static_cast<double>(k) *
                                   static_cast<double>(i) / static_cast<double>(n);
                re += x[i] * std::cos(ang);
                im += x[i] * std::sin(ang);
            }
            out[k] = {re, im};
        }
    }
    return out;
}

Tensor mel_filterbank(const FeatureConfig& cfg) {
    cfg.validate();
    const size_t n_bins = static_cast<size_t>(cfg.window_len) / 2 + 1;
    const size_t n_mels = static_cast<size_t>(cfg.n_mels);
    Tensor fb({n_mels, n_bins});

    const double mel_lo = hz_to_mel(cfg.fmin, cfg.mel_scale);
    const double mel_hi = hz_to_mel(cfg.effective_fmax(), cfg.mel_scale);
    std::vector<double> edges(n_mels + 2);
    for (size_t i = 0; i < edges.size(); ++i) {
        const double m = mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(n_mels + 1);
        edges[i] = mel_to_hz(m, cfg.mel_scale);
    }

    const double hz_per_bin = static_cast<double>(cfg.sample_rate) / cfg.window_len;
    for (size_t m = 0; m < n_mels; ++m) {
        const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
        for (size_t k = 0; k < n_bins; ++k) {
            const double f = hz_per_bin * static_cast<double>(k);
            double w = 0.0;
            if (f > left && f < center) {
                w = (f - left) / (center - left);
            } else if (f >= center && f < right) {
                w = (right - f) / (right - center);
            }
            fb.at(m, k) = w;
        }
        if (cfg.filter_norm == FilterNorm::area) {
            const double inv_area = 2.0 / (right - left);
            for (size_t k = 0; k < n_bins; ++k) fb.at(m, k) *= inv_area;
        }
    }
    return fb;
}

LogMelSpectrogram log_mel(const AudioClip& clip, const FeatureConfig& cfg) {
    cfg.validate();
    if (clip.sample_rate != cfg.sample_rate)
        raise(ErrorKind::RateMismatch,
              "clip rate " + std::to_string(clip.sample_rate) + " != config rate " +
                  std::to_string(cfg.sample_rate));

    const size_t win = static_cast<size_t>(cfg.window_len);
    const size_t hop = static_cast<size_t>(cfg.hop_len);
    const size_t n_frames = frame_count(clip.samples.size(), win, hop);
    const size_t n_bins = win / 2 + 1;
    const size_t n_mels = static_cast<size_t>(cfg.n_mels);

    // Periodic Hann.
    std::vector<double> window(win);
    for (size_t i = 0; i < win; ++i)
        window[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) /
                                         static_cast<double>(win));

    const Tensor fb = mel_filterbank(cfg);

    LogMelSpectrogram spec;
    spec.values = Tensor({n_frames, n_mels});
    spec.frame_duration = cfg.frame_duration();

    std::vector<double> frame(win);
    std::vector<double> power(n_bins);
    for (size_t t = 0; t < n_frames; ++t) {
        const double* src = clip.samples.data() + t * hop;
        for (size_t i = 0; i < win; ++i) frame[i] = src[i] * window[i];
        const auto bins = rfft(frame);
        for (size_t k = 0; k < n_bins; ++k) power[k] = std::norm(bins[k]);
        for (size_t m = 0; m < n_mels; ++m) {
            double acc = 0.0;
            const double* w = fb.data() + m * n_bins;
            for (size_t k = 0; k < n_bins; ++k) acc += w[k] * power[k];
            spec.values.at(t, m) = std::log(std::max(acc, cfg.log_floor));
        }
    }
    return spec;
}

void save_features(const std::filesystem::path& path, const LogMelSpectrogram& spec) {
    std::ofstream os(path, std::ios::binary);
    if (!os)
        raise(ErrorKind::IoError, "cannot write " + path.string());
    const uint32_t n_frames = static_cast<uint32_t>(spec.n_frames());
    const uint32_t n_mels = static_cast<uint32_t>(spec.n_mels());
    const uint32_t reserved = 0;
    os.write("LMEL", 4);
    os.write(reinterpret_cast<const char*>(&n_frames), 4);
    os.write(reinterpret_cast<const char*>(&n_mels), 4);
    os.write(reinterpret_cast<const char*>(&reserved), 4);
    for (double v : spec.values.values()) {
        const float f = static_cast<float>(v);
        os.write(reinterpret_cast<const char*>(&f), 4);
    }
}

LogMelSpectrogram load_features(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        raise(ErrorKind::NotFound, "cannot open " + path.string());
    char magic[4];
    uint32_t n_frames = 0, n_mels = 0, reserved = 0;
    in.read(magic, 4);
    in.read(reinterpret_cast<char*>(&n_frames), 4);
    in.read(reinterpret_cast<char*>(&n_mels), 4);
    in.read(reinterpret_cast<char*>(&reserved), 4);
    if (!in || std::memcmp(magic, "LMEL", 4) != 0)
        raise(ErrorKind::CorruptHeader, "bad feature header: " + path.string());
    LogMelSpectrogram spec;
    spec.values = Tensor({n_frames, n_mels});
    for (size_t i = 0; i < spec.values.size(); ++i) {
        float f;
        in.read(reinterpret_cast<char*>(&f), 4);
        spec.values[i] = static_cast<double>(f);
    }
    if (!in)
        raise(ErrorKind::CorruptHeader, "truncated feature file: " + path.string());
    return spec;
}

} // namespace auscsed
