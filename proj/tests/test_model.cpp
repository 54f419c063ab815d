#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "auscsed/error.hpp"
#include "auscsed/losses.hpp"
#include "auscsed/model.hpp"
#include "auscsed/model_cache.hpp"
#include "auscsed/optim.hpp"
#include "auscsed/rng.hpp"
#include "test_util.hpp"

using namespace auscsed;
using testutil::TempDir;

namespace {

CrnnConfig tiny_crnn() {
    CrnnConfig cfg;
    cfg.n_mels = 8;
    cfg.n_classes = 3;
    cfg.conv_blocks = 1;
    cfg.convs_per_block = 2;
    cfg.channels = {3};
    cfg.gru_hidden = 4;
    return cfg;
}

TcnConfig tiny_tcn() {
    TcnConfig cfg;
    cfg.n_mels = 8;
    cfg.n_classes = 3;
    cfg.n_filters = 5;
    cfg.dilations = {1, 2};
    return cfg;
}

LogMelSpectrogram random_spec(size_t n_frames, size_t n_mels, uint64_t seed) {
    LogMelSpectrogram spec;
    spec.frame_duration = 0.016;
    spec.values = Tensor({n_frames, n_mels});
    Rng rng(seed);
    for (size_t i = 0; i < spec.values.size(); ++i)
        spec.values[i] = rng.uniform(-2.0, 2.0);
    return spec;
}

ActivityMatrix random_targets(size_t n_frames, size_t n_classes, uint64_t seed) {
    ActivityMatrix y;
    y.n_frames = n_frames;
    y.classes.assign(train_classes().begin(), train_classes().begin() + n_classes);
    y.frame_duration = 0.016;
    y.values.resize(n_frames * n_classes);
    Rng rng(seed);
    for (auto& v : y.values) v = rng.uniform() < 0.4 ? 1 : 0;
    return y;
}

double loss_at(const ModelWeights& w, const LogMelSpectrogram& x,
               const ActivityMatrix& y) {
    const FramePosteriors p = model_forward(w, x, RunMode::train);
    return afl_loss(p, y, 0.25, 1.0, {}).value;
}

/// Central finite differences against the analytic backward pass.
/// Returns the max relative error over every learnable parameter.
double gradient_check(ModelWeights& w, const LogMelSpectrogram& x,
                      const ActivityMatrix& y, double h = 1e-5) {
    ForwardCachePtr cache;
    const FramePosteriors p = model_forward(w, x, RunMode::train, &cache);
    const LossResult loss = afl_loss(p, y, 0.25, 1.0, {});
    const GradientMap grads = model_backward(w, *cache, loss.grad);

    double worst = 0.0;
    for (auto& nt : w.tensors()) {
        if (!nt.learnable) continue;
        const Tensor& g = grads.get(nt.name);
        for (size_t i = 0; i < nt.value.size(); ++i) {
            const double keep = nt.value[i];
            nt.value[i] = keep + h;
            const double up = loss_at(w, x, y);
            nt.value[i] = keep - h;
            const double down = loss_at(w, x, y);
            nt.value[i] = keep;
            const double fd = (up - down) / (2.0 * h);
            const double rel =
                std::abs(fd - g[i]) / std::max({std::abs(fd), std::abs(g[i]), 1e-6});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

} // namespace

TEST_CASE("init is deterministic and shaped by the config") {
    const CrnnConfig cfg; // paper-scale defaults
    const ModelWeights a = init_weights(cfg, 17);
    const ModelWeights b = init_weights(cfg, 17);
    REQUIRE(a.tensors().size() == b.tensors().size());
    for (size_t i = 0; i < a.tensors().size(); ++i) {
        CHECK(a.tensors()[i].name == b.tensors()[i].name);
        CHECK(a.tensors()[i].value.values() == b.tensors()[i].value.values());
    }
    // First conv kernel: 64 maps over 1 input channel, 3x3.
    CHECK(a.get("conv0_0.kernel").shape() == std::vector<size_t>({64, 1, 3, 3}));
    CHECK(a.get("conv2_1.kernel").shape() == std::vector<size_t>({256, 256, 3, 3}));
    CHECK(a.get("gru.fwd.w_z").shape() == std::vector<size_t>({256, 256}));
    CHECK(a.get("head.weight").shape() == std::vector<size_t>({8, 512}));
    // BN state starts at mean 0, var 1.
    for (size_t i = 0; i < 64; ++i) {
        CHECK(a.get("conv0_0.bn.running_var")[i] == 1.0);
        CHECK(a.get("conv0_0.bn.running_mean")[i] == 0.0);
        CHECK(a.get("conv0_0.bn.gamma")[i] == 1.0);
        CHECK(a.get("conv0_0.bn.beta")[i] == 0.0);
    }
    const ModelWeights c = init_weights(cfg, 18);
    CHECK(c.get("conv0_0.kernel").values() != a.get("conv0_0.kernel").values());
}

TEST_CASE("GRU recurrent matrices are orthogonal") {
    const ModelWeights w = init_weights(tiny_crnn(), 3);
    const Tensor& u = w.get("gru.fwd.u_h");
    const size_t n = u.dim(0);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) {
            double dot = 0.0;
            for (size_t k = 0; k < n; ++k) dot += u.at(k, i) * u.at(k, j);
            CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-9));
        }
}

TEST_CASE("zero input with a zeroed head gives posteriors of exactly 0.5") {
    for (bool use_tcn : {false, true}) {
        ModelWeights w = use_tcn ? init_weights(tiny_tcn(), 5)
                                 : init_weights(tiny_crnn(), 5);
        w.get("head.weight").fill(0.0);
        w.get("head.bias").fill(0.0);
        LogMelSpectrogram x;
        x.frame_duration = 0.016;
        x.values = Tensor({12, 8});
        if (use_tcn) {
            // Zero the embedding bias path too so the stream stays zero.
            w.get("embed.bias").fill(0.0);
        }
        for (RunMode mode : {RunMode::eval, RunMode::train}) {
            const FramePosteriors p = model_forward(w, x, mode);
            for (size_t i = 0; i < p.values.size(); ++i) CHECK(p.values[i] == 0.5);
        }
    }
}

TEST_CASE("output is N x n_classes and time length is preserved") {
    const ModelWeights crnn = init_weights(CrnnConfig::desk_scale(), 7);
    const ModelWeights tcn = init_weights(TcnConfig::desk_scale(), 7);
    for (size_t n : {1u, 5u, 31u, 622u}) {
        const LogMelSpectrogram x = random_spec(n, 64, 100 + n);
        const FramePosteriors pc = model_forward(crnn, x, RunMode::eval);
        CHECK(pc.n_frames() == n);
        CHECK(pc.n_classes() == 8);
        const FramePosteriors pt = model_forward(tcn, x, RunMode::eval);
        CHECK(pt.n_frames() == n);
        CHECK(pt.n_classes() == 8);
        for (size_t i = 0; i < pc.values.size(); ++i) {
            CHECK(pc.values[i] > 0.0);
            CHECK(pc.values[i] < 1.0);
        }
    }
}

TEST_CASE("eval mode is pure: repeated passes bit-identical, no state change") {
    const ModelWeights w = init_weights(tiny_crnn(), 11);
    const std::vector<double> rm_before = w.get("conv0_0.bn.running_mean").values();
    const LogMelSpectrogram x = random_spec(20, 8, 1);
    const FramePosteriors a = model_forward(w, x, RunMode::eval);
    const FramePosteriors b = model_forward(w, x, RunMode::eval);
    CHECK(a.values.values() == b.values.values());
    CHECK(w.get("conv0_0.bn.running_mean").values() == rm_before);
}

TEST_CASE("train mode records batch stats; committing moves the running stats") {
    ModelWeights w = init_weights(tiny_crnn(), 11);
    const LogMelSpectrogram x = random_spec(20, 8, 2);
    ForwardCachePtr cache;
    model_forward(w, x, RunMode::train, &cache);
    const std::vector<double> rm_before = w.get("conv0_0.bn.running_mean").values();
    update_bn_running(w, *cache);
    const std::vector<double>& rm_after = w.get("conv0_0.bn.running_mean").values();
    CHECK(rm_after != rm_before);
    // momentum 0.9 keeps most of the old value.
    for (size_t c = 0; c < rm_after.size(); ++c) {
        const double batch = cache->crnn->conv[0].mean[c];
        CHECK(rm_after[c] == doctest::Approx(0.9 * rm_before[c] + 0.1 * batch));
    }
}

TEST_CASE("frequency width halves per block: 64 -> 32 -> 16 -> 8") {
    ModelWeights w = init_weights(CrnnConfig::desk_scale(), 13);
    const LogMelSpectrogram x = random_spec(6, 64, 3);
    ForwardCachePtr cache;
    model_forward(w, x, RunMode::train, &cache);
    REQUIRE(cache->crnn != nullptr);
    CHECK(cache->crnn->block_out_freq ==
          std::vector<size_t>({32, 16, 8}));
    CHECK(cache->crnn->seq.shape() == std::vector<size_t>({6, 16}));
}

TEST_CASE("tcn receptive field spans 63 frames for dilations 1,2,4,8,16") {
    TcnConfig cfg = TcnConfig::desk_scale();
    CHECK(cfg.receptive_field() == 63);

    const ModelWeights w = init_weights(cfg, 21);
    const size_t n = 160, center = 80;
    const LogMelSpectrogram base = random_spec(n, 64, 4);
    const FramePosteriors p0 = model_forward(w, base, RunMode::eval);
    LogMelSpectrogram bumped = base;
    for (size_t m = 0; m < 64; ++m) bumped.values.at(center, m) += 1.0;
    const FramePosteriors p1 = model_forward(w, bumped, RunMode::eval);

    size_t lo = n, hi = 0;
    for (size_t t = 0; t < n; ++t)
        for (size_t c = 0; c < p0.n_classes(); ++c)
            if (std::abs(p0.values.at(t, c) - p1.values.at(t, c)) > 1e-12) {
                lo = std::min(lo, t);
                hi = std::max(hi, t);
            }
    // Influence reaches exactly +-31 frames with batch-norm in eval mode.
    CHECK(lo >= center - 31);
    CHECK(hi <= center + 31);
    CHECK(lo <= center);
    CHECK(hi >= center);
    CHECK(hi - lo + 1 == 63);
}

TEST_CASE("tcn config validation") {
    TcnConfig cfg = tiny_tcn();
    cfg.dilations = {1, 2, 2};
    try {
        init_weights(cfg, 1);
        FAIL("expected InvalidConfig");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InvalidConfig);
    }
    CrnnConfig bad = tiny_crnn();
    bad.n_mels = 9; // not divisible by 2
    try {
        init_weights(bad, 1);
        FAIL("expected InvalidConfig");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InvalidConfig);
    }
}

TEST_CASE("analytic gradients match central finite differences (CRNN)") {
    for (uint64_t seed : {101u, 102u, 103u}) {
        ModelWeights w = init_weights(tiny_crnn(), seed);
        const LogMelSpectrogram x = random_spec(12, 8, seed * 7);
        const ActivityMatrix y = random_targets(12, 3, seed * 13);
        const double worst = gradient_check(w, x, y);
        CHECK(worst < 1e-4);
        MESSAGE("crnn seed ", seed, " max rel err ", worst);
    }
}

TEST_CASE("analytic gradients match central finite differences (TCN)") {
    for (uint64_t seed : {201u, 202u, 203u}) {
        ModelWeights w = init_weights(tiny_tcn(), seed);
        const LogMelSpectrogram x = random_spec(12, 8, seed * 7);
        const ActivityMatrix y = random_targets(12, 3, seed * 13);
        const double worst = gradient_check(w, x, y);
        CHECK(worst < 1e-4);
        MESSAGE("tcn seed ", seed, " max rel err ", worst);
    }
}

TEST_CASE("zero upstream gradient produces zero weight gradients") {
    ModelWeights w = init_weights(tiny_crnn(), 31);
    const LogMelSpectrogram x = random_spec(10, 8, 5);
    ForwardCachePtr cache;
    const FramePosteriors p = model_forward(w, x, RunMode::train, &cache);
    Tensor zero(p.values.shape());
    const GradientMap grads = model_backward(w, *cache, zero);
    for (const auto& [name, g] : grads.items())
        for (size_t i = 0; i < g.size(); ++i) CHECK(g[i] == 0.0);
}

TEST_CASE("stale caches are rejected after an optimizer step") {
    ModelWeights w = init_weights(tiny_crnn(), 37);
    const LogMelSpectrogram x = random_spec(10, 8, 6);
    const ActivityMatrix y = random_targets(10, 3, 7);
    ForwardCachePtr cache;
    const FramePosteriors p = model_forward(w, x, RunMode::train, &cache);
    const LossResult loss = afl_loss(p, y, 0.0625, 1.0, {});
    const GradientMap grads = model_backward(w, *cache, loss.grad);
    AdamState adam = AdamState::init(w);
    adam_step(w, grads, adam, 1e-3);
    try {
        model_backward(w, *cache, loss.grad);
        FAIL("expected StaleCache");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::StaleCache);
    }
}

TEST_CASE("non-finite weights surface as NonFiniteActivation") {
    ModelWeights w = init_weights(tiny_crnn(), 41);
    w.get("head.bias")[0] = std::numeric_limits<double>::quiet_NaN();
    const LogMelSpectrogram x = random_spec(4, 8, 8);
    try {
        model_forward(w, x, RunMode::eval);
        FAIL("expected NonFiniteActivation");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NonFiniteActivation);
    }
}

TEST_CASE("mel width mismatch is a ShapeMismatch") {
    const ModelWeights w = init_weights(tiny_crnn(), 43);
    const LogMelSpectrogram x = random_spec(4, 16, 9);
    try {
        model_forward(w, x, RunMode::eval);
        FAIL("expected ShapeMismatch");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ShapeMismatch);
    }
}

TEST_CASE("weight files: round trip, corruption, version and shape checks") {
    TempDir dir("weights");
    const ModelWeights w = init_weights(tiny_crnn(), 47);
    const auto path = dir / "model.weights";
    save_weights(path, w);

    const ModelWeights loaded = load_weights(path);
    CHECK(loaded.architecture() == Architecture::crnn);
    CHECK(loaded.seed() == 47);
    REQUIRE(loaded.tensors().size() == w.tensors().size());
    for (size_t i = 0; i < w.tensors().size(); ++i) {
        const auto& orig = w.tensors()[i];
        const auto& back = loaded.tensors()[i];
        CHECK(back.name == orig.name);
        CHECK(back.learnable == orig.learnable);
        REQUIRE(back.value.size() == orig.value.size());
        for (size_t j = 0; j < orig.value.size(); ++j)
            CHECK(back.value[j] ==
                  static_cast<double>(static_cast<float>(orig.value[j])));
    }
    // A second save of the loaded weights is byte-identical (f32 fixpoint).
    const auto path2 = dir / "model2.weights";
    save_weights(path2, loaded);
    const std::string bytes1 = testutil::read_file(path);
    const std::string bytes2 = testutil::read_file(path2);
    CHECK(bytes1 == bytes2);

    // Truncation.
    std::ofstream(dir / "trunc.weights", std::ios::binary)
        << bytes1.substr(0, bytes1.size() - 9);
    try {
        load_weights(dir / "trunc.weights");
        FAIL("expected ChecksumError");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ChecksumError);
    }

    // Single corrupt byte in the blob.
    std::string corrupt = bytes1;
    corrupt[corrupt.size() / 2] ^= 0x40;
    std::ofstream(dir / "corrupt.weights", std::ios::binary) << corrupt;
    try {
        load_weights(dir / "corrupt.weights");
        FAIL("expected ChecksumError");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ChecksumError);
    }

    // Version bump (re-checksummed so only the version trips).
    std::string versioned = bytes1;
    const auto vpos = versioned.find("\"format_version\":1");
    REQUIRE(vpos != std::string::npos);
    versioned[vpos + 17] = '2';
    const uint32_t crc = crc32(reinterpret_cast<const uint8_t*>(versioned.data()),
                               versioned.size() - 4);
    for (int i = 0; i < 4; ++i)
        versioned[versioned.size() - 4 + static_cast<size_t>(i)] =
            static_cast<char>((crc >> (8 * i)) & 0xFF);
    std::ofstream(dir / "version.weights", std::ios::binary) << versioned;
    try {
        load_weights(dir / "version.weights");
        FAIL("expected VersionMismatch");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::VersionMismatch);
    }

    // Config/tensor disagreement: declare gru_hidden 8 while tensors are 4-wide.
    std::string reshaped = bytes1;
    const auto hpos = reshaped.find("\"gru_hidden\":4");
    REQUIRE(hpos != std::string::npos);
    reshaped[hpos + 13] = '8';
    const uint32_t crc2 = crc32(reinterpret_cast<const uint8_t*>(reshaped.data()),
                                reshaped.size() - 4);
    for (int i = 0; i < 4; ++i)
        reshaped[reshaped.size() - 4 + static_cast<size_t>(i)] =
            static_cast<char>((crc2 >> (8 * i)) & 0xFF);
    std::ofstream(dir / "reshaped.weights", std::ios::binary) << reshaped;
    try {
        load_weights(dir / "reshaped.weights");
        FAIL("expected ShapeMismatch");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::ShapeMismatch);
    }
}

TEST_CASE("adam: zero gradients keep the weights, one step moves by ~lr") {
    // Single-tensor model stand-in.
    ModelWeights w(tiny_crnn(), 0);
    w.add("w", Tensor({1}));
    AdamState st = AdamState::init(w);
    GradientMap zeros;
    zeros.add("w", Tensor({1}));
    adam_step(w, zeros, st, 1e-4);
    CHECK(w.get("w")[0] == 0.0);
    CHECK(st.step == 1);

    GradientMap ones;
    Tensor g({1});
    g[0] = 1.0;
    ones.add("w", std::move(g));
    adam_step(w, ones, st, 1e-4);
    CHECK(w.get("w")[0] == doctest::Approx(-1e-4).epsilon(1e-6));
}

TEST_CASE("adam trajectories are reproducible") {
    auto run = [] {
        ModelWeights w = init_weights(tiny_crnn(), 71);
        AdamState st = AdamState::init(w);
        const LogMelSpectrogram x = random_spec(10, 8, 10);
        const ActivityMatrix y = random_targets(10, 3, 11);
        for (int i = 0; i < 3; ++i) {
            ForwardCachePtr cache;
            const FramePosteriors p = model_forward(w, x, RunMode::train, &cache);
            const LossResult loss = afl_loss(p, y, 0.0625, 1.0, {});
            adam_step(w, model_backward(w, *cache, loss.grad), st, 1e-3);
            update_bn_running(w, *cache);
        }
        return w;
    };
    const ModelWeights a = run();
    const ModelWeights b = run();
    for (size_t i = 0; i < a.tensors().size(); ++i)
        CHECK(a.tensors()[i].value.values() == b.tensors()[i].value.values());
}
