#include <array>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "auscsed/error.hpp"
#include "auscsed/model.hpp"

namespace auscsed {

namespace {

constexpr uint32_t kFormatVersion = 1;
constexpr std::array<char, 4> kMagic = {'A', 'S', 'W', 'F'};

using nlohmann::json;

json crnn_to_json(const CrnnConfig& c) {
    return json{{"n_mels", c.n_mels},
                {"n_classes", c.n_classes},
                {"conv_blocks", c.conv_blocks},
                {"convs_per_block", c.convs_per_block},
                {"kernel", c.kernel},
                {"channels", c.channels},
                {"freq_pool", c.freq_pool},
                {"gru_hidden", c.gru_hidden},
                {"bn_epsilon", c.bn_epsilon},
                {"bn_momentum", c.bn_momentum}};
}

CrnnConfig crnn_from_json(const json& j) {
    CrnnConfig c;
    c.n_mels = j.at("n_mels");
    c.n_classes = j.at("n_classes");
    c.conv_blocks = j.at("conv_blocks");
    c.convs_per_block = j.at("convs_per_block");
    c.kernel = j.at("kernel");
    c.channels = j.at("channels").get<std::vector<int>>();
    c.freq_pool = j.at("freq_pool");
    c.gru_hidden = j.at("gru_hidden");
    c.bn_epsilon = j.at("bn_epsilon");
    c.bn_momentum = j.at("bn_momentum");
    return c;
}

json tcn_to_json(const TcnConfig& c) {
    return json{{"n_mels", c.n_mels},     {"n_classes", c.n_classes},
                {"n_filters", c.n_filters}, {"dilations", c.dilations},
                {"kernel", c.kernel},     {"bn_epsilon", c.bn_epsilon},
                {"bn_momentum", c.bn_momentum}};
}

TcnConfig tcn_from_json(const json& j) {
    TcnConfig c;
    c.n_mels = j.at("n_mels");
    c.n_classes = j.at("n_classes");
    c.n_filters = j.at("n_filters");
    c.dilations = j.at("dilations").get<std::vector<int>>();
    c.kernel = j.at("kernel");
    c.bn_epsilon = j.at("bn_epsilon");
    c.bn_momentum = j.at("bn_momentum");
    return c;
}

} // namespace

uint32_t crc32(const uint8_t* data, size_t len, uint32_t seed) {
    static const auto table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    uint32_t crc = seed ^ 0xFFFFFFFFu;
    for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

void save_weights(const std::filesystem::path& path, const ModelWeights& weights) {
    json manifest;
    manifest["format_version"] = kFormatVersion;
    manifest["architecture"] =
        weights.architecture() == Architecture::crnn ? "crnn" : "tcn";
    manifest["config"] = weights.architecture() == Architecture::crnn
                             ? crnn_to_json(weights.crnn())
                             : tcn_to_json(weights.tcn());
    manifest["seed"] = weights.seed();

    json table = json::object();
    uint64_t offset = 0;
    for (const auto& nt : weights.tensors()) {
        table[nt.name] = {{"dtype", "f32"},
                          {"shape", nt.value.shape()},
                          {"offset", offset},
                          {"kind", nt.learnable ? "param" : "state"}};
        offset += nt.value.size() * 4;
    }
    manifest["tensors"] = table;

    const std::string manifest_text = manifest.dump();
    std::vector<uint8_t> bytes;
    bytes.reserve(8 + manifest_text.size() + offset + 4);
    bytes.insert(bytes.end(), kMagic.begin(), kMagic.end());
    const uint32_t mlen = static_cast<uint32_t>(manifest_text.size());
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<uint8_t>((mlen >> (8 * i)) & 0xFF));
    bytes.insert(bytes.end(), manifest_text.begin(), manifest_text.end());
    for (const auto& nt : weights.tensors()) {
        for (size_t i = 0; i < nt.value.size(); ++i) {
            const float f = static_cast<float>(nt.value[i]);
            uint32_t u;
            std::memcpy(&u, &f, 4);
            for (int b = 0; b < 4; ++b)
                bytes.push_back(static_cast<uint8_t>((u >> (8 * b)) & 0xFF));
        }
    }
    const uint32_t crc = crc32(bytes.data(), bytes.size());
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<uint8_t>((crc >> (8 * i)) & 0xFF));

    std::ofstream os(path, std::ios::binary);
    if (!os)
        raise(ErrorKind::IoError, "cannot write " + path.string());
    os.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
}

ModelWeights load_weights(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        raise(ErrorKind::NotFound, "cannot open " + path.string());
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic.data(), 4) != 0)
        raise(ErrorKind::ChecksumError, "not a weight file: " + path.string());

    uint32_t stored_crc = 0;
    for (int i = 0; i < 4; ++i)
        stored_crc |= static_cast<uint32_t>(bytes[bytes.size() - 4 + i]) << (8 * i);
    if (crc32(bytes.data(), bytes.size() - 4) != stored_crc)
        raise(ErrorKind::ChecksumError, "checksum mismatch (truncated or corrupt): " +
                                            path.string());

    uint32_t mlen = 0;
    for (int i = 0; i < 4; ++i) mlen |= static_cast<uint32_t>(bytes[4 + i]) << (8 * i);
    if (8 + static_cast<size_t>(mlen) + 4 > bytes.size())
        raise(ErrorKind::ChecksumError, "manifest overruns file: " + path.string());

    json manifest;
    try {
        manifest = json::parse(bytes.begin() + 8, bytes.begin() + 8 + mlen);
    } catch (const json::exception& e) {
        raise(ErrorKind::ChecksumError, "bad manifest: " + std::string(e.what()));
    }
    if (manifest.at("format_version").get<uint32_t>() != kFormatVersion)
        raise(ErrorKind::VersionMismatch,
              "unsupported format version " +
                  std::to_string(manifest.at("format_version").get<uint32_t>()));

    const std::string arch = manifest.at("architecture");
    ModelConfig cfg;
    if (arch == "crnn")
        cfg = crnn_from_json(manifest.at("config"));
    else if (arch == "tcn")
        cfg = tcn_from_json(manifest.at("config"));
    else
        raise(ErrorKind::VersionMismatch, "unknown architecture " + arch);

    const uint64_t seed = manifest.at("seed");

    // Rebuild the expected tensor layout from the config, then fill values
    // from the blob; any disagreement is a ShapeMismatch.
    ModelWeights expected = std::holds_alternative<CrnnConfig>(cfg)
                                ? init_weights(std::get<CrnnConfig>(cfg), 0)
                                : init_weights(std::get<TcnConfig>(cfg), 0);
    ModelWeights out(cfg, seed);

    const json& table = manifest.at("tensors");
    const uint8_t* blob = bytes.data() + 8 + mlen;
    const size_t blob_len = bytes.size() - 8 - mlen - 4;

    for (const auto& nt : expected.tensors()) {
        if (!table.contains(nt.name))
            raise(ErrorKind::ShapeMismatch, "missing tensor " + nt.name);
        const json& entry = table.at(nt.name);
        if (entry.at("dtype") != "f32")
            raise(ErrorKind::VersionMismatch, "unsupported dtype for " + nt.name);
        const auto shape = entry.at("shape").get<std::vector<size_t>>();
        if (shape != nt.value.shape())
            raise(ErrorKind::ShapeMismatch,
                  "tensor " + nt.name + " shape disagrees with config");
        const uint64_t off = entry.at("offset");
        Tensor t(shape);
        if (off + t.size() * 4 > blob_len)
            raise(ErrorKind::ChecksumError, "tensor " + nt.name + " overruns blob");
        for (size_t i = 0; i < t.size(); ++i) {
            uint32_t u = 0;
            for (int b = 0; b < 4; ++b)
                u |= static_cast<uint32_t>(blob[off + i * 4 + b]) << (8 * b);
            float f;
            std::memcpy(&f, &u, 4);
            t[i] = static_cast<double>(f);
        }
        out.add(nt.name, std::move(t), nt.learnable);
    }
    out.note_mutation();
    return out;
}

} // namespace auscsed
