#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "auscsed/audio.hpp"
#include "auscsed/error.hpp"
#include "auscsed/features.hpp"
#include "test_util.hpp"

using namespace auscsed;
using testutil::TempDir;

namespace {

AudioClip sine_clip(double hz, double seconds, int rate, double amp = 0.5) {
    AudioClip clip;
    clip.sample_rate = rate;
    const size_t n = static_cast<size_t>(std::llround(seconds * rate));
    clip.samples.resize(n);
    for (size_t i = 0; i < n; ++i)
        clip.samples[i] = amp * std::sin(2.0 * M_PI * hz * static_cast<double>(i) / rate);
    return clip;
}

} // namespace

TEST_CASE("wav round trip: pcm16 header arithmetic") {
    TempDir dir("wav");
    AudioClip clip;
    clip.sample_rate = 4000;
    clip.samples.assign(40000, 0.0);
    clip.samples[0] = -1.0;
    clip.samples[1] = 0.5;
    save_audio(dir / "a.wav", clip, /*pcm16=*/true);

    const AudioClip loaded = load_audio(dir / "a.wav");
    CHECK(loaded.sample_rate == 4000);
    CHECK(loaded.samples.size() == 40000);
}

TEST_CASE("wav loader: 16-bit -32768 maps to -1.0 exactly") {
    TempDir dir("wav");
    // Hand-build a 3-sample PCM16 file to pin the raw encoding.
    std::vector<int16_t> raw = {-32768, 0, 32767};
    std::ofstream os(dir / "raw.wav", std::ios::binary);
    auto u32 = [&](uint32_t v) { os.write(reinterpret_cast<char*>(&v), 4); };
    auto u16 = [&](uint16_t v) { os.write(reinterpret_cast<char*>(&v), 2); };
    os.write("RIFF", 4);
    u32(36 + 6);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    u32(16);
    u16(1); // PCM
    u16(1); // mono
    u32(4000);
    u32(8000);
    u16(2);
    u16(16);
    os.write("data", 4);
    u32(6);
    for (int16_t v : raw) u16(static_cast<uint16_t>(v));
    os.close();

    const AudioClip clip = load_audio(dir / "raw.wav");
    REQUIRE(clip.samples.size() == 3);
    CHECK(clip.samples[0] == -1.0);
    CHECK(clip.samples[1] == 0.0);
    CHECK(clip.samples[2] == doctest::Approx(32767.0 / 32768.0));
}

TEST_CASE("wav loader rejects stereo and garbage") {
    TempDir dir("wav");
    // Stereo header.
    std::ofstream os(dir / "stereo.wav", std::ios::binary);
    auto u32 = [&](uint32_t v) { os.write(reinterpret_cast<char*>(&v), 4); };
    auto u16 = [&](uint16_t v) { os.write(reinterpret_cast<char*>(&v), 2); };
    os.write("RIFF", 4);
    u32(36 + 8);
    os.write("WAVE", 4);
    os.write("fmt ", 4);
    u32(16);
    u16(1);
    u16(2); // stereo
    u32(4000);
    u32(16000);
    u16(4);
    u16(16);
    os.write("data", 4);
    u32(8);
    u32(0);
    u32(0);
    os.close();

    CHECK_THROWS_WITH_AS(load_audio(dir / "stereo.wav"),
                         doctest::Contains("2-channel"), Error);
    try {
        load_audio(dir / "stereo.wav");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::UnsupportedFormat);
    }

    std::ofstream bad(dir / "bad.wav", std::ios::binary);
    bad << "this is not a wav file at all, just text padding.....";
    bad.close();
    try {
        load_audio(dir / "bad.wav");
        FAIL("expected CorruptHeader");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::CorruptHeader);
    }

    try {
        load_audio(dir / "missing.wav");
        FAIL("expected NotFound");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NotFound);
    }
}

TEST_CASE("wav float32 round trip preserves samples") {
    TempDir dir("wav");
    AudioClip clip;
    clip.sample_rate = 4000;
    clip.samples = testutil::random_samples(1000, 7);
    save_audio(dir / "f.wav", clip, /*pcm16=*/false);
    const AudioClip loaded = load_audio(dir / "f.wav");
    REQUIRE(loaded.samples.size() == clip.samples.size());
    for (size_t i = 0; i < clip.samples.size(); ++i)
        CHECK(loaded.samples[i] ==
              doctest::Approx(clip.samples[i]).epsilon(1e-7));
}

TEST_CASE("resample: identity at equal rates") {
    AudioClip clip = sine_clip(100.0, 1.0, 4000);
    const AudioClip out = resample(clip, 4000);
    REQUIRE(out.samples.size() == clip.samples.size());
    CHECK(out.samples == clip.samples);
}

TEST_CASE("resample: duration conservation 2000 -> 4000") {
    AudioClip clip = sine_clip(100.0, 2.0, 2000);
    const AudioClip out = resample(clip, 4000);
    CHECK(out.sample_rate == 4000);
    CHECK(std::llabs(static_cast<long long>(out.samples.size()) - 8000) <= 1);
}

TEST_CASE("resample: constant signal is a fixed point") {
    AudioClip clip;
    clip.sample_rate = 8000;
    clip.samples.assign(8000, 0.5);
    const AudioClip out = resample(clip, 4000);
    REQUIRE(out.samples.size() >= 3000);
    for (size_t i = 100; i + 100 < out.samples.size(); ++i)
        CHECK(std::abs(out.samples[i] - 0.5) < 1e-3);
}

TEST_CASE("resample: empty clip throws") {
    AudioClip clip;
    clip.sample_rate = 4000;
    try {
        resample(clip, 8000);
        FAIL("expected EmptyClip");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::EmptyClip);
    }
}

TEST_CASE("frame_count matches the no-padding formula") {
    CHECK(frame_count(40000, 256, 64) == 622);
    CHECK(frame_count(256, 256, 64) == 1);
    CHECK(frame_count(320, 256, 64) == 2);
    try {
        frame_count(255, 256, 64);
        FAIL("expected TooShort");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::TooShort);
    }
}

TEST_CASE("rfft agrees with the direct DFT") {
    for (size_t n : {256u, 64u, 100u}) { // non-power-of-two takes the DFT path
        const auto x = testutil::random_samples(n, 1234 + n);
        const auto fast = rfft(x);
        const auto slow = testutil::naive_rdft(x);
        REQUIRE(fast.size() == slow.size());
        for (size_t k = 0; k < fast.size(); ++k)
            CHECK(std::abs(fast[k] - slow[k]) < 1e-9);
    }
}

TEST_CASE("mel filterbank shape and coverage") {
    FeatureConfig cfg;
    const Tensor fb = mel_filterbank(cfg);
    REQUIRE(fb.shape() == std::vector<size_t>({64, 129}));
    for (size_t i = 0; i < fb.size(); ++i) CHECK(fb[i] >= 0.0);
    // Interior FFT bins all see at least one filter.
    for (size_t k = 1; k + 1 < 129; ++k) {
        double colsum = 0.0;
        for (size_t m = 0; m < 64; ++m) colsum += fb.at(m, k);
        CHECK(colsum > 0.0);
    }
}

TEST_CASE("mel filterbank rejects bad configs") {
    FeatureConfig cfg;
    cfg.fmin = 3000.0; // above fmax = 2000
    try {
        mel_filterbank(cfg);
        FAIL("expected InvalidConfig");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InvalidConfig);
    }
}

TEST_CASE("log_mel: 10 s at 4 kHz gives 622 x 64") {
    AudioClip clip = sine_clip(300.0, 10.0, 4000);
    FeatureConfig cfg;
    const LogMelSpectrogram spec = log_mel(clip, cfg);
    CHECK(spec.n_frames() == 622);
    CHECK(spec.n_mels() == 64);
    CHECK(spec.frame_duration == doctest::Approx(0.016));
}

TEST_CASE("log_mel: all-zero clip sits exactly on the floor") {
    AudioClip clip;
    clip.sample_rate = 4000;
    clip.samples.assign(4000, 0.0);
    FeatureConfig cfg;
    const LogMelSpectrogram spec = log_mel(clip, cfg);
    const double floor_value = std::log(1e-10);
    for (size_t i = 0; i < spec.values.size(); ++i)
        CHECK(spec.values[i] == floor_value);
}

TEST_CASE("log_mel: pure tone at a band center peaks in that band") {
    FeatureConfig cfg;
    // Recover band 32's center frequency from the constructed filterbank.
    const Tensor fb = mel_filterbank(cfg);
    const size_t band = 32;
    size_t center_bin = 0;
    double best = -1.0;
    for (size_t k = 0; k < fb.dim(1); ++k)
        if (fb.at(band, k) > best) {
            best = fb.at(band, k);
            center_bin = k;
        }
    const double hz = static_cast<double>(center_bin) * cfg.sample_rate / cfg.window_len;

    AudioClip clip = sine_clip(hz, 2.0, 4000);
    const LogMelSpectrogram spec = log_mel(clip, cfg);
    std::vector<double> mean(spec.n_mels(), 0.0);
    for (size_t t = 0; t < spec.n_frames(); ++t)
        for (size_t m = 0; m < spec.n_mels(); ++m) mean[m] += spec.values.at(t, m);
    size_t argmax = 0;
    for (size_t m = 1; m < mean.size(); ++m)
        if (mean[m] > mean[argmax]) argmax = m;
    CHECK(argmax == band);
}

TEST_CASE("log_mel: rate mismatch and short clips throw") {
    FeatureConfig cfg;
    AudioClip clip = sine_clip(100.0, 1.0, 8000);
    try {
        log_mel(clip, cfg);
        FAIL("expected RateMismatch");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::RateMismatch);
    }
    AudioClip tiny;
    tiny.sample_rate = 4000;
    tiny.samples.assign(100, 0.1);
    try {
        log_mel(tiny, cfg);
        FAIL("expected TooShort");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::TooShort);
    }
}

TEST_CASE("log_mel determinism and gain monotonicity") {
    FeatureConfig cfg;
    AudioClip clip;
    clip.sample_rate = 4000;
    clip.samples = testutil::random_samples(4000, 99, 0.4);

    const LogMelSpectrogram a = log_mel(clip, cfg);
    const LogMelSpectrogram b = log_mel(clip, cfg);
    CHECK(a.values.values() == b.values.values()); // bit-identical

    AudioClip louder = clip;
    for (double& v : louder.samples) v *= 2.0;
    const LogMelSpectrogram c = log_mel(louder, cfg);
    const double floor_value = std::log(cfg.log_floor);
    for (size_t i = 0; i < a.values.size(); ++i) {
        if (a.values[i] > floor_value) CHECK(c.values[i] >= a.values[i]);
    }
}

TEST_CASE("feature dump round trip") {
    TempDir dir("lmel");
    FeatureConfig cfg;
    AudioClip clip = sine_clip(440.0, 1.0, 4000);
    const LogMelSpectrogram spec = log_mel(clip, cfg);
    save_features(dir / "a.lmel", spec);
    const LogMelSpectrogram loaded = load_features(dir / "a.lmel");
    REQUIRE(loaded.n_frames() == spec.n_frames());
    REQUIRE(loaded.n_mels() == spec.n_mels());
    for (size_t i = 0; i < spec.values.size(); ++i)
        CHECK(loaded.values[i] == doctest::Approx(spec.values[i]).epsilon(1e-6));

    std::ofstream junk(dir / "junk.lmel", std::ios::binary);
    junk << "XXXX";
    junk.close();
    try {
        load_features(dir / "junk.lmel");
        FAIL("expected CorruptHeader");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::CorruptHeader);
    }
}
