#include "auscsed/synth.hpp"

#include <algorithm>
#include <cmath>

#include "auscsed/error.hpp"
#include "auscsed/rng.hpp"

namespace auscsed {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kCrackleDuration = 0.012; // under the 20 ms crackle bound

double hann_env(double u) { return 0.5 - 0.5 * std::cos(2.0 * kPi * u); }

void add_tone_burst(std::vector<double>& x, int sr, double t0, double dur, double hz,
                    double amp) {
    const size_t i0 = static_cast<size_t>(std::llround(t0 * sr));
    const size_t n = static_cast<size_t>(std::llround(dur * sr));
    for (size_t i = 0; i < n && i0 + i < x.size(); ++i) {
        const double t = static_cast<double>(i) / sr;
        x[i0 + i] += amp * hann_env(t / dur) * std::sin(2.0 * kPi * hz * t);
    }
}

// Band-limited noise as a sum of random-phase sinusoids.
void add_band_noise(std::vector<double>& x, int sr, double t0, double dur, double f_lo,
                    double f_hi, double rms, Rng& rng) {
    constexpr int kComponents = 24;
    std::vector<double> freqs(kComponents), phases(kComponents);
    for (int k = 0; k < kComponents; ++k) {
        freqs[k] = rng.uniform(f_lo, f_hi);
        phases[k] = rng.uniform(0.0, 2.0 * kPi);
    }
    const double amp = rms * std::sqrt(2.0 / kComponents);
    const size_t i0 = static_cast<size_t>(std::llround(t0 * sr));
    const size_t n = static_cast<size_t>(std::llround(dur * sr));
    for (size_t i = 0; i < n && i0 + i < x.size(); ++i) {
        const double t = static_cast<double>(i) / sr;
        double s = 0.0;
        for (int k = 0; k < kComponents; ++k)
            s += std::sin(2.0 * kPi * freqs[k] * t + phases[k]);
        x[i0 + i] += amp * hann_env(t / dur) * s;
    }
}

} // namespace

void SynthSpec::validate() const {
    if (duration_s <= 0.0)
        raise(ErrorKind::InfeasibleSpec, "duration must be positive");
    if (heart_rate < 0.0 || respiratory_rate < 0.0)
        raise(ErrorKind::InfeasibleSpec, "rates must be non-negative");
    if (sample_rate <= 0)
        raise(ErrorKind::InfeasibleSpec, "sample rate must be positive");
    const double nyquist = sample_rate / 2.0;
    for (double f : {s1_hz, s2_hz, insp_band_hi, exp_band_hi, wheeze_hz})
        if (f >= nyquist)
            raise(ErrorKind::InfeasibleSpec, "component frequency above Nyquist");
    if (heart_rate > 0.0) {
        const double cycle = 60.0 / heart_rate;
        if (!(systole_fraction > 0.0 && systole_fraction < 1.0))
            raise(ErrorKind::InfeasibleSpec, "systole fraction must be in (0,1)");
        if (s1_duration_s <= 0.0 || s2_duration_s <= 0.0)
            raise(ErrorKind::InfeasibleSpec, "heart sound durations must be positive");
        if (s1_duration_s >= systole_fraction * cycle)
            raise(ErrorKind::InfeasibleSpec, "S1 does not fit inside systole");
        if (systole_fraction * cycle + s2_duration_s >= cycle)
            raise(ErrorKind::InfeasibleSpec, "S2 does not fit inside the cycle");
    }
    if (respiratory_rate > 0.0) {
        if (insp_fraction <= 0.0 || exp_fraction <= 0.0 ||
            insp_fraction + exp_fraction > 1.0)
            raise(ErrorKind::InfeasibleSpec, "breath phase fractions are infeasible");
    }
    if (crackle_rate < 0.0)
        raise(ErrorKind::InfeasibleSpec, "crackle rate must be non-negative");
}

SynthResult synth_clip(const SynthSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);

    SynthResult out;
    out.clip.sample_rate = spec.sample_rate;
    out.clip.samples.assign(
        static_cast<size_t>(std::llround(spec.duration_s * spec.sample_rate)), 0.0);
    out.labels.clip_duration = spec.duration_s;
    auto& x = out.clip.samples;
    auto& events = out.labels.events;

    if (spec.heart_rate > 0.0) {
        const double cycle = 60.0 / spec.heart_rate;
        for (int k = 0;; ++k) {
            const double t_s1 = k * cycle;
            if (t_s1 + spec.s1_duration_s > spec.duration_s) break;
            add_tone_burst(x, spec.sample_rate, t_s1, spec.s1_duration_s, spec.s1_hz, 0.45);
            events.push_back({SoundClass::S1, t_s1, t_s1 + spec.s1_duration_s});
            const double t_s2 = t_s1 + spec.systole_fraction * cycle;
            if (t_s2 + spec.s2_duration_s > spec.duration_s) continue;
            add_tone_burst(x, spec.sample_rate, t_s2, spec.s2_duration_s, spec.s2_hz, 0.40);
            events.push_back({SoundClass::S2, t_s2, t_s2 + spec.s2_duration_s});
        }
    }

    if (spec.respiratory_rate > 0.0) {
        const double cycle = 60.0 / spec.respiratory_rate;
        std::vector<std::pair<double, double>> breath_phases;
        for (int k = 0;; ++k) {
            const double t0 = k * cycle;
            const double insp_dur = spec.insp_fraction * cycle;
            const double exp_dur = spec.exp_fraction * cycle;
            if (t0 + insp_dur > spec.duration_s) break;
            add_band_noise(x, spec.sample_rate, t0, insp_dur, spec.insp_band_lo,
                           spec.insp_band_hi, 0.22, rng);
            events.push_back({SoundClass::Inspiration, t0, t0 + insp_dur});
            breath_phases.emplace_back(t0, t0 + insp_dur);
            if (spec.wheeze_hz > 0.0) {
                add_tone_burst(x, spec.sample_rate, t0, insp_dur, spec.wheeze_hz, 0.15);
                events.push_back({SoundClass::Wheeze, t0, t0 + insp_dur});
            }
            const double t_exp = t0 + insp_dur;
            if (t_exp + exp_dur > spec.duration_s) continue;
            add_band_noise(x, spec.sample_rate, t_exp, exp_dur, spec.exp_band_lo,
                           spec.exp_band_hi, 0.18, rng);
            events.push_back({SoundClass::Expiration, t_exp, t_exp + exp_dur});
            breath_phases.emplace_back(t_exp, t_exp + exp_dur);
        }
        if (spec.crackle_rate > 0.0) {
            std::vector<double> times;
            for (const auto& [p0, p1] : breath_phases) {
                const double dur = p1 - p0;
                const int n = static_cast<int>(std::floor(spec.crackle_rate * dur));
                for (int i = 0; i < n; ++i)
                    times.push_back(rng.uniform(p0, p1 - kCrackleDuration));
            }
            std::sort(times.begin(), times.end());
            double last_end = -1.0;
            for (double t : times) {
                if (t < last_end + kCrackleDuration) continue; // keep crackles disjoint
                add_tone_burst(x, spec.sample_rate, t, kCrackleDuration, 1700.0, 0.5);
                events.push_back({SoundClass::Crackle, t, t + kCrackleDuration});
                last_end = t + kCrackleDuration;
            }
        }
    }

    if (spec.noise_floor_db > -120.0) {
        const double sd = std::pow(10.0, spec.noise_floor_db / 20.0);
        for (double& v : x) v += sd * rng.gaussian();
    }
    for (double& v : x) v = std::clamp(v, -1.0, 1.0);

    out.labels.normalize();
    return out;
}

} // namespace auscsed
