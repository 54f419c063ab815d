#include "auscsed/augment.hpp"

#include <algorithm>
#include <cmath>

#include "auscsed/error.hpp"
#include "auscsed/rng.hpp"

namespace auscsed {

namespace {

constexpr double kPi = 3.14159265358979323846;

double mean_power(const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return x.empty() ? 0.0 : s / static_cast<double>(x.size());
}

void apply_gain(std::vector<double>& x, double db) {
    const double g = std::pow(10.0, db / 20.0);
    for (double& v : x) v *= g;
}

// One-pole RC filters.
void apply_lowpass(std::vector<double>& x, double cutoff_hz, int sample_rate) {
    if (cutoff_hz <= 0.0)
        raise(ErrorKind::InvalidParam, "lowpass cutoff must be positive");
    const double dt = 1.0 / sample_rate;
    const double rc = 1.0 / (2.0 * kPi * cutoff_hz);
    const double alpha = dt / (rc + dt);
    double y = 0.0;
    for (double& v : x) {
        y += alpha * (v - y);
        v = y;
    }
}

void apply_highpass(std::vector<double>& x, double cutoff_hz, int sample_rate) {
    if (cutoff_hz <= 0.0)
        raise(ErrorKind::InvalidParam, "highpass cutoff must be positive");
    const double dt = 1.0 / sample_rate;
    const double rc = 1.0 / (2.0 * kPi * cutoff_hz);
    const double alpha = rc / (rc + dt);
    double y = 0.0, x_prev = 0.0;
    for (double& v : x) {
        const double cur = v;
        y = alpha * (y + cur - x_prev);
        x_prev = cur;
        v = y;
    }
}

void apply_white_noise(std::vector<double>& x, double snr_db, Rng& rng) {
    const double ps = mean_power(x);
    if (ps <= 0.0) return; // silent signal, SNR undefined
    const double pn = ps / std::pow(10.0, snr_db / 10.0);
    const double sd = std::sqrt(pn);
    for (double& v : x) v += sd * rng.gaussian();
}

void apply_time_dropout(std::vector<double>& x, const WaveAugment& op, int sample_rate,
                        Rng& rng) {
    if (op.dropout_min_s < 0.0 || op.dropout_max_s < op.dropout_min_s)
        raise(ErrorKind::InvalidParam, "bad time dropout span");
    const double total = static_cast<double>(x.size()) / sample_rate;
    const double span = std::min(total, rng.uniform(op.dropout_min_s, op.dropout_max_s));
    double start = op.dropout_start_s;
    if (start < 0.0) start = rng.uniform(0.0, std::max(0.0, total - span));
    const size_t i0 = static_cast<size_t>(std::llround(start * sample_rate));
    const size_t i1 = std::min(
        x.size(), i0 + static_cast<size_t>(std::llround(span * sample_rate)));
    for (size_t i = i0; i < i1 && i < x.size(); ++i) x[i] = 0.0;
}

void apply_noise_injection(std::vector<double>& x, const WaveAugment& op, Rng& rng) {
    if (!op.noise || op.noise->samples.empty())
        raise(ErrorKind::InvalidParam, "noise injection requires a noise clip");
    const double ps = mean_power(x);
    if (ps <= 0.0) return;
    const std::vector<double>& n = op.noise->samples;
    const double pn_src = mean_power(n);
    if (pn_src <= 0.0) return;
    const double pn_target = ps / std::pow(10.0, op.snr_db / 10.0);
    const double scale = std::sqrt(pn_target / pn_src);
    // Random circular offset into the noise clip.
    const size_t offset = rng.index(n.size());
    for (size_t i = 0; i < x.size(); ++i) x[i] += scale * n[(offset + i) % n.size()];
}

} // namespace

AudioClip augment_wave(const AudioClip& clip, const std::vector<WaveAugment>& ops,
                       uint64_t seed) {
    if (clip.samples.empty())
        raise(ErrorKind::EmptyClip, "cannot augment an empty clip");
    AudioClip out = clip;
    Rng rng(seed);
    for (const auto& op : ops) {
        switch (op.kind) {
            case WaveAugmentKind::gain:
                apply_gain(out.samples, op.gain_db);
                break;
            case WaveAugmentKind::highpass:
                apply_highpass(out.samples, op.cutoff_hz, out.sample_rate);
                break;
            case WaveAugmentKind::lowpass:
                apply_lowpass(out.samples, op.cutoff_hz, out.sample_rate);
                break;
            case WaveAugmentKind::white_noise:
                apply_white_noise(out.samples, op.snr_db, rng);
                break;
            case WaveAugmentKind::time_dropout:
                apply_time_dropout(out.samples, op, out.sample_rate, rng);
                break;
            case WaveAugmentKind::noise_injection:
                apply_noise_injection(out.samples, op, rng);
                break;
            case WaveAugmentKind::pitch_shift:
                raise(ErrorKind::UnsupportedAugment, "pitch_shift is not supported");
            case WaveAugmentKind::reverb:
                raise(ErrorKind::UnsupportedAugment, "reverb is not supported");
        }
    }
    return out;
}

namespace {

double clip_mean(const Tensor& v) {
    double s = 0.0;
    for (size_t i = 0; i < v.size(); ++i) s += v[i];
    return v.size() ? s / static_cast<double>(v.size()) : 0.0;
}

void apply_masks(Tensor& v, const SpecAugment& op, Rng& rng) {
    const size_t T = v.dim(0), M = v.dim(1);
    const double fill = clip_mean(v);
    for (int i = 0; i < op.n_time_masks; ++i) {
        const int w = op.time_mask_min +
                      static_cast<int>(rng.index(
                          static_cast<size_t>(op.time_mask_max - op.time_mask_min) + 1));
        if (w <= 0) continue;
        const size_t t0 = rng.index(T >= static_cast<size_t>(w) ? T - w + 1 : 1);
        for (size_t t = t0; t < std::min(T, t0 + static_cast<size_t>(w)); ++t)
            for (size_t m = 0; m < M; ++m) v.at(t, m) = fill;
    }
    for (int i = 0; i < op.n_freq_masks; ++i) {
        const int w = op.freq_mask_min +
                      static_cast<int>(rng.index(
                          static_cast<size_t>(op.freq_mask_max - op.freq_mask_min) + 1));
        if (w <= 0) continue;
        const size_t m0 = rng.index(M >= static_cast<size_t>(w) ? M - w + 1 : 1);
        for (size_t t = 0; t < T; ++t)
            for (size_t m = m0; m < std::min(M, m0 + static_cast<size_t>(w)); ++m)
                v.at(t, m) = fill;
    }
}

void apply_filter_gain(Tensor& v, const SpecAugment& op, Rng& rng) {
    const size_t T = v.dim(0), M = v.dim(1);
    const int n_bands =
        op.gain_bands_min +
        static_cast<int>(rng.index(
            static_cast<size_t>(op.gain_bands_max - op.gain_bands_min) + 1));
    if (n_bands < 1)
        raise(ErrorKind::InvalidParam, "filter augment needs at least one band");
    // Random interior boundaries, then a dB gain per band. dB converts to an
    // additive shift of ln(power): g * ln(10) / 10.
    std::vector<size_t> bounds = {0, M};
    for (int i = 1; i < n_bands; ++i) bounds.push_back(rng.index(M + 1));
    std::sort(bounds.begin(), bounds.end());
    for (size_t b = 0; b + 1 < bounds.size(); ++b) {
        const double db = rng.uniform(op.gain_db_min, op.gain_db_max);
        const double shift = db * std::log(10.0) / 10.0;
        for (size_t t = 0; t < T; ++t)
            for (size_t m = bounds[b]; m < bounds[b + 1]; ++m) v.at(t, m) += shift;
    }
}

void apply_freq_stretch(Tensor& v, const SpecAugment& op, Rng& rng) {
    const size_t T = v.dim(0), M = v.dim(1);
    const double factor = rng.uniform(op.stretch_min, op.stretch_max);
    if (factor <= 0.0)
        raise(ErrorKind::InvalidParam, "stretch factor must be positive");
    const double fill = clip_mean(v);
    Tensor out(v.shape());
    for (size_t t = 0; t < T; ++t) {
        for (size_t m = 0; m < M; ++m) {
            const double src = static_cast<double>(m) / factor;
            if (src > static_cast<double>(M - 1)) {
                out.at(t, m) = fill;
                continue;
            }
            const size_t lo = static_cast<size_t>(src);
            const size_t hi = std::min(M - 1, lo + 1);
            const double frac = src - static_cast<double>(lo);
            out.at(t, m) = (1.0 - frac) * v.at(t, lo) + frac * v.at(t, hi);
        }
    }
    v = std::move(out);
}

} // namespace

LogMelSpectrogram augment_spec(const LogMelSpectrogram& spec,
                               const std::vector<SpecAugment>& ops, uint64_t seed,
                               double log_floor) {
    LogMelSpectrogram out = spec;
    Rng rng(seed);
    for (const auto& op : ops) {
        switch (op.kind) {
            case SpecAugmentKind::masks:
                if (op.time_mask_max < op.time_mask_min ||
                    op.freq_mask_max < op.freq_mask_min)
                    raise(ErrorKind::InvalidParam, "bad mask width range");
                apply_masks(out.values, op, rng);
                break;
            case SpecAugmentKind::filter_gain:
                apply_filter_gain(out.values, op, rng);
                break;
            case SpecAugmentKind::freq_stretch:
                apply_freq_stretch(out.values, op, rng);
                break;
        }
    }
    const double floor_value = std::log(log_floor);
    for (size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = std::max(out.values[i], floor_value);
    return out;
}

} // namespace auscsed
