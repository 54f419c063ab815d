#include "auscsed/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "auscsed/error.hpp"
#include "auscsed/losses.hpp"
#include "auscsed/model_cache.hpp"
#include "auscsed/optim.hpp"
#include "auscsed/rng.hpp"

namespace auscsed {

namespace {

struct Window {
    LogMelSpectrogram spec;
    ActivityMatrix targets;
    LossMask mask;
};

// Slice a training window starting at `start` samples, zero-padding on the
// right when the clip is shorter than the window.
Window make_window(const TrainRecording& rec, size_t start, size_t window_samples,
                   const FeatureConfig& features, const TrainConfig& cfg,
                   bool augment, Rng* rng) {
    AudioClip piece;
    piece.sample_rate = rec.clip.sample_rate;
    piece.samples.assign(window_samples, 0.0);
    const size_t avail = rec.clip.samples.size() > start
                             ? std::min(window_samples, rec.clip.samples.size() - start)
                             : 0;
    std::copy(rec.clip.samples.begin() + static_cast<long>(start),
              rec.clip.samples.begin() + static_cast<long>(start + avail),
              piece.samples.begin());

    if (augment && !cfg.wave_augments.empty())
        piece = augment_wave(piece, cfg.wave_augments, rng->fork_seed());

    Window w;
    w.spec = log_mel(piece, features);
    if (augment && !cfg.spec_augments.empty())
        w.spec = augment_spec(w.spec, cfg.spec_augments, rng->fork_seed(),
                              features.log_floor);

    // Shift labels into window time and encode with the midpoint rule.
    const double start_s = static_cast<double>(start) / rec.clip.sample_rate;
    const double window_dur =
        static_cast<double>(window_samples) / rec.clip.sample_rate;
    EventList shifted;
    shifted.clip_duration = window_dur;
    for (const auto& e : rec.labels.events) {
        const double onset = std::max(0.0, e.onset - start_s);
        const double offset = std::min(window_dur, e.offset - start_s);
        if (offset > onset) shifted.events.push_back({e.cls, onset, offset, e.origin});
    }
    const size_t n_frames = w.spec.n_frames();
    const double dt = w.spec.frame_duration;
    w.targets = encode_frames(shifted, n_frames, dt);

    // Frame mask: padded tail plus any excluded spans.
    const double valid_s = static_cast<double>(avail) / rec.clip.sample_rate;
    w.mask.frames.assign(n_frames, 1);
    for (size_t t = 0; t < n_frames; ++t) {
        const double mid = (static_cast<double>(t) + 0.5) * dt;
        if (mid >= valid_s) w.mask.frames[t] = 0;
        for (const auto& [lo, hi] : rec.excluded_spans)
            if (mid >= lo - start_s && mid < hi - start_s) w.mask.frames[t] = 0;
    }
    w.mask.classes = task_class_mask(rec.task, static_cast<int>(w.targets.n_classes()));
    return w;
}

LossResult window_loss(const FramePosteriors& p, const Window& w, const TrainConfig& cfg) {
    return cfg.loss == LossKind::bce
               ? bce_loss(p, w.targets, w.mask)
               : afl_loss(p, w.targets, cfg.gamma, cfg.zeta, w.mask);
}

} // namespace

void TrainConfig::validate() const {
    if (lr <= 0.0)
        raise(ErrorKind::InvalidConfig, "learning rate must be positive");
    if (gamma < 0.0 || zeta < 0.0)
        raise(ErrorKind::InvalidConfig, "gamma and zeta must be non-negative");
    if (!(threshold > 0.0 && threshold < 1.0))
        raise(ErrorKind::InvalidConfig, "threshold must be in (0,1)");
    if (batch_size < 1 || epochs < 1)
        raise(ErrorKind::InvalidConfig, "batch_size and epochs must be positive");
    if (window_s <= 0.0)
        raise(ErrorKind::InvalidConfig, "window_s must be positive");
}

std::vector<uint8_t> task_class_mask(VitalsTask task, int n_classes) {
    std::vector<uint8_t> mask(static_cast<size_t>(n_classes), 1);
    if (task == VitalsTask::both) return mask;
    for (int c = 0; c < n_classes; ++c) {
        const bool heart_class = c == class_index(SoundClass::S1) ||
                                 c == class_index(SoundClass::S2);
        mask[static_cast<size_t>(c)] = (task == VitalsTask::heart) == heart_class ? 1 : 0;
    }
    return mask;
}

TrainResult train_loop(const TrainSet& train, const TrainSet& val,
                       const ModelConfig& arch, const FeatureConfig& features,
                       const TrainConfig& cfg, const TrainHooks& hooks) {
    cfg.validate();
    if (train.recordings.empty())
        raise(ErrorKind::EmptyDataset, "training set is empty");

    const size_t window_samples =
        static_cast<size_t>(std::llround(cfg.window_s * features.sample_rate));
    for (const auto& rec : train.recordings)
        if (rec.clip.sample_rate != features.sample_rate)
            raise(ErrorKind::RateMismatch,
                  "recording " + rec.name + " is not at the feature sample rate");

    ModelWeights weights =
        std::holds_alternative<CrnnConfig>(arch)
            ? init_weights(std::get<CrnnConfig>(arch), cfg.seed)
            : init_weights(std::get<TcnConfig>(arch), cfg.seed);
    AdamState adam = AdamState::init(weights);
    Rng rng(cfg.seed ^ 0xA5A5A5A5A5A5A5A5ULL);

    TrainResult result;
    double best_val = std::numeric_limits<double>::infinity();
    int epochs_since_best = 0;

    std::vector<size_t> order(train.recordings.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        size_t n_windows = 0;

        for (size_t batch_start = 0; batch_start < order.size();
             batch_start += static_cast<size_t>(cfg.batch_size)) {
            const size_t batch_end =
                std::min(order.size(), batch_start + static_cast<size_t>(cfg.batch_size));
            GradientMap batch_grads;
            size_t batch_count = 0;
            ForwardCachePtr cache;
            for (size_t bi = batch_start; bi < batch_end; ++bi) {
                const TrainRecording& rec = train.recordings[order[bi]];
                size_t start = 0;
                if (rec.clip.samples.size() > window_samples)
                    start = rng.index(rec.clip.samples.size() - window_samples + 1);
                Window w = make_window(rec, start, window_samples, features, cfg,
                                       /*augment=*/true, &rng);
                const FramePosteriors p =
                    model_forward(weights, w.spec, RunMode::train, &cache);
                const LossResult loss = window_loss(p, w, cfg);
                if (!std::isfinite(loss.value))
                    raise(ErrorKind::DivergedLoss,
                          "loss diverged at epoch " + std::to_string(epoch));
                epoch_loss += loss.value;
                ++n_windows;
                GradientMap grads = model_backward(weights, *cache, loss.grad);
                update_bn_running(weights, *cache);
                if (batch_grads.size() == 0) {
                    batch_grads = std::move(grads);
                } else {
                    for (auto& [name, g] : batch_grads.items()) {
                        const Tensor& add = grads.get(name);
                        for (size_t i = 0; i < g.size(); ++i) g[i] += add[i];
                    }
                }
                ++batch_count;
            }
            if (batch_count > 1) {
                const double inv = 1.0 / static_cast<double>(batch_count);
                for (auto& [name, g] : batch_grads.items())
                    for (size_t i = 0; i < g.size(); ++i) g[i] *= inv;
            }
            adam_step(weights, batch_grads, adam, cfg.lr);
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = epoch_loss / static_cast<double>(std::max<size_t>(1, n_windows));

        if (!val.recordings.empty()) {
            double val_loss = 0.0;
            for (const auto& rec : val.recordings) {
                Window w = make_window(rec, 0, window_samples, features, cfg,
                                       /*augment=*/false, nullptr);
                const FramePosteriors p = model_forward(weights, w.spec, RunMode::eval);
                val_loss += window_loss(p, w, cfg).value;
            }
            stats.val_loss = val_loss / static_cast<double>(val.recordings.size());
        } else {
            stats.val_loss = stats.train_loss;
        }
        result.history.push_back(stats);

        if (stats.val_loss < best_val) {
            best_val = stats.val_loss;
            result.best = weights;
            result.best_epoch = epoch;
            epochs_since_best = 0;
        } else {
            ++epochs_since_best;
        }

        if (hooks.should_stop && hooks.should_stop(weights, stats)) {
            // The predicate accepted the current weights; return them.
            result.best = weights;
            result.best_epoch = epoch;
            break;
        }
        if (cfg.early_stop_patience > 0 && epochs_since_best >= cfg.early_stop_patience)
            break;
    }

    if (result.best_epoch == 0) {
        result.best = weights;
        result.best_epoch = static_cast<int>(result.history.size());
    }
    return result;
}

void save_history(const std::filesystem::path& path,
                  const std::vector<EpochStats>& history) {
    std::ofstream os(path);
    if (!os)
        raise(ErrorKind::IoError, "cannot write " + path.string());
    os << "epoch,train_loss,val_loss\n";
    char line[96];
    for (const auto& e : history) {
        std::snprintf(line, sizeof(line), "%d,%.9g,%.9g\n", e.epoch, e.train_loss,
                      e.val_loss);
        os << line;
    }
}

} // namespace auscsed
