#include "auscsed/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "auscsed/error.hpp"

namespace auscsed {

namespace {

uint32_t read_u32(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t read_u16(const uint8_t* p) {
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xff));
    out.push_back(static_cast<uint8_t>((v >> 8) & 0xff));
    out.push_back(static_cast<uint8_t>((v >> 16) & 0xff));
    out.push_back(static_cast<uint8_t>((v >> 24) & 0xff));
}

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xff));
    out.push_back(static_cast<uint8_t>((v >> 8) & 0xff));
}

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;

} // namespace

AudioClip load_audio(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        raise(ErrorKind::NotFound, "cannot open " + path.string());

    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        raise(ErrorKind::CorruptHeader, "not a RIFF/WAVE file: " + path.string());

    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    bool have_fmt = false;
    const uint8_t* data = nullptr;
    uint32_t data_len = 0;

    size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const uint8_t* chunk = bytes.data() + pos;
        uint32_t chunk_len = read_u32(chunk + 4);
        if (pos + 8 + chunk_len > bytes.size())
            raise(ErrorKind::CorruptHeader,
                  "chunk overruns file: " + path.string());
        if (std::memcmp(chunk, "fmt ", 4) == 0) {
            if (chunk_len < 16)
                raise(ErrorKind::CorruptHeader, "fmt chunk too short: " + path.string());
            format = read_u16(chunk + 8);
            channels = read_u16(chunk + 10);
            rate = read_u32(chunk + 12);
            bits = read_u16(chunk + 22);
            have_fmt = true;
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            data = chunk + 8;
            data_len = chunk_len;
        }
        pos += 8 + chunk_len + (chunk_len & 1); // chunks are word-aligned
    }

    if (!have_fmt || data == nullptr)
        raise(ErrorKind::CorruptHeader, "missing fmt/data chunk: " + path.string());
    if (channels != 1)
        raise(ErrorKind::UnsupportedFormat,
              std::to_string(channels) + "-channel audio not supported (mono only): " +
                  path.string());
    if (rate == 0)
        raise(ErrorKind::CorruptHeader, "zero sample rate: " + path.string());

    AudioClip clip;
    clip.sample_rate = static_cast<int>(rate);

    if (format == kFormatPcm && bits == 16) {
        size_t n = data_len / 2;
        clip.samples.resize(n);
        for (size_t i = 0; i < n; ++i) {
            int16_t v = static_cast<int16_t>(read_u16(data + 2 * i));
            clip.samples[i] = static_cast<double>(v) / 32768.0;
        }
    } else if (format == kFormatFloat && bits == 32) {
        size_t n = data_len / 4;
        clip.samples.resize(n);
        for (size_t i = 0; i < n; ++i) {
            uint32_t u = read_u32(data + 4 * i);
            float f;
            std::memcpy(&f, &u, 4);
            clip.samples[i] = static_cast<double>(f);
        }
    } else {
        raise(ErrorKind::UnsupportedFormat,
              "format tag " + std::to_string(format) + " / " + std::to_string(bits) +
                  " bits not supported (PCM16 or float32): " + path.string());
    }
    return clip;
}

void save_audio(const std::filesystem::path& path, const AudioClip& clip, bool pcm16) {
    if (clip.sample_rate <= 0)
        raise(ErrorKind::InvalidArgument, "sample rate must be positive");

    uint16_t bits = pcm16 ? 16 : 32;
    uint16_t block = static_cast<uint16_t>(bits / 8);
    uint32_t data_len = static_cast<uint32_t>(clip.samples.size() * block);

    std::vector<uint8_t> out;
    out.reserve(44 + data_len);
    out.insert(out.end(), {'R', 'I', 'F', 'F'});
    put_u32(out, 36 + data_len);
    out.insert(out.end(), {'W', 'A', 'V', 'E'});
    out.insert(out.end(), {'f', 'm', 't', ' '});
    put_u32(out, 16);
    put_u16(out, pcm16 ? kFormatPcm : kFormatFloat);
    put_u16(out, 1);
    put_u32(out, static_cast<uint32_t>(clip.sample_rate));
    put_u32(out, static_cast<uint32_t>(clip.sample_rate) * block);
    put_u16(out, block);
    put_u16(out, bits);
    out.insert(out.end(), {'d', 'a', 't', 'a'});
    put_u32(out, data_len);

    for (double s : clip.samples) {
        if (pcm16) {
            double x = std::clamp(s, -1.0, 1.0);
            int v = static_cast<int>(std::lrint(x * 32767.0));
            put_u16(out, static_cast<uint16_t>(static_cast<int16_t>(v)));
        } else {
            float f = static_cast<float>(s);
            uint32_t u;
            std::memcpy(&u, &f, 4);
            put_u32(out, u);
        }
    }

    std::ofstream os(path, std::ios::binary);
    if (!os)
        raise(ErrorKind::IoError, "cannot write " + path.string());
    os.write(reinterpret_cast<const char*>(out.data()),
             static_cast<std::streamsize>(out.size()));
}

AudioClip resample(const AudioClip& clip, int target_rate) {
    if (target_rate <= 0)
        raise(ErrorKind::InvalidArgument, "target rate must be positive");
    if (clip.samples.empty())
        raise(ErrorKind::EmptyClip, "cannot resample an empty clip");
    if (clip.sample_rate == target_rate)
        return clip;

    const double ratio = static_cast<double>(target_rate) / clip.sample_rate;
    const size_t out_len = static_cast<size_t>(
        std::llround(static_cast<double>(clip.samples.size()) * ratio));

    // Anti-alias cutoff at the narrower Nyquist, slightly backed off.
    const double cutoff = 0.95 * std::min(1.0, ratio);
    const int half_taps = 24;
    const double pi = 3.14159265358979323846;

    AudioClip out;
    out.sample_rate = target_rate;
    out.samples.resize(out_len);

    const std::vector<double>& x = clip.samples;
    const long n_in = static_cast<long>(x.size());
    for (size_t i = 0; i < out_len; ++i) {
        const double center = static_cast<double>(i) / ratio;
        const long k0 = static_cast<long>(std::floor(center)) - half_taps + 1;
        const long k1 = static_cast<long>(std::floor(center)) + half_taps;
        double acc = 0.0, wsum = 0.0;
        for (long k = std::max(0L, k0); k <= std::min(n_in - 1, k1); ++k) {
            const double t = static_cast<double>(k) - center;
            double w;
            if (std::abs(t) < 1e-12) {
                w = cutoff;
            } else {
                w = std::sin(pi * cutoff * t) / (pi * t);
            }
            // Hann taper over the finite support.
            w *= 0.5 + 0.5 * std::cos(pi * t / half_taps);
            acc += w * x[static_cast<size_t>(k)];
            wsum += w;
        }
        out.samples[i] = wsum != 0.0 ? acc / wsum : 0.0;
    }
    return out;
}

} // namespace auscsed
