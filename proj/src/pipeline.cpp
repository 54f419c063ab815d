#include "auscsed/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "auscsed/error.hpp"

namespace auscsed {

namespace {

using nlohmann::json;

std::string task_name(VitalsTask t) {
    switch (t) {
        case VitalsTask::heart: return "heart";
        case VitalsTask::lung: return "lung";
        case VitalsTask::both: return "both";
    }
    return "both";
}

VitalsTask task_from_name(const std::string& s) {
    if (s == "heart") return VitalsTask::heart;
    if (s == "lung") return VitalsTask::lung;
    if (s == "both") return VitalsTask::both;
    raise(ErrorKind::InvalidArgument, "unknown task '" + s + "'");
}

std::filesystem::path resolve(const std::filesystem::path& base,
                              const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

std::vector<std::pair<double, double>> load_excluded_spans(
    const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        raise(ErrorKind::NotFound, "cannot open mask file " + path.string());
    std::vector<std::pair<double, double>> spans;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream fields(line);
        double lo, hi;
        if (!(fields >> lo)) continue;
        if (!(fields >> hi) || hi <= lo)
            raise(ErrorKind::SyntaxError,
                  path.string() + " line " + std::to_string(line_no) +
                      ": expected '<start_s> <end_s>'");
        spans.emplace_back(lo, hi);
    }
    return spans;
}

} // namespace

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        raise(ErrorKind::NotFound, "cannot open manifest " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        raise(ErrorKind::SyntaxError, "bad manifest JSON: " + std::string(e.what()));
    }
    if (!doc.is_array())
        raise(ErrorKind::SyntaxError, "manifest must be a JSON array");

    const std::filesystem::path base = path.parent_path();
    DatasetManifest m;
    for (const auto& item : doc) {
        ManifestEntry e;
        e.audio = resolve(base, item.at("audio").get<std::string>());
        if (item.contains("labels") && !item.at("labels").get<std::string>().empty())
            e.labels = resolve(base, item.at("labels").get<std::string>());
        e.split = item.value("split", "train");
        if (e.split != "train" && e.split != "val" && e.split != "test")
            raise(ErrorKind::SyntaxError, "bad split '" + e.split + "'");
        const std::string origin = item.value("origin", "gt");
        if (origin == "gt") e.origin = LabelOrigin::Gt;
        else if (origin == "pseudo") e.origin = LabelOrigin::Pseudo;
        else raise(ErrorKind::SyntaxError, "bad origin '" + origin + "'");
        e.task = task_from_name(item.value("task", "both"));
        if (item.contains("mask") && !item.at("mask").get<std::string>().empty())
            e.mask = resolve(base, item.at("mask").get<std::string>());
        m.entries.push_back(std::move(e));
    }
    return m;
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
    json doc = json::array();
    for (const auto& e : manifest.entries) {
        json item = {{"audio", e.audio.string()},
                     {"labels", e.labels.string()},
                     {"split", e.split},
                     {"origin", e.origin == LabelOrigin::Gt ? "gt" : "pseudo"},
                     {"task", task_name(e.task)}};
        if (!e.mask.empty()) item["mask"] = e.mask.string();
        doc.push_back(std::move(item));
    }
    std::ofstream os(path);
    if (!os)
        raise(ErrorKind::IoError, "cannot write " + path.string());
    os << doc.dump(2) << "\n";
}

TrainSet load_train_set(const DatasetManifest& manifest, const std::string& split,
                        const FeatureConfig& features) {
    TrainSet set;
    for (const auto& e : manifest.entries) {
        if (!split.empty() && e.split != split) continue;
        TrainRecording rec;
        rec.name = e.audio.filename().string();
        rec.task = e.task;
        AudioClip clip = load_audio(e.audio);
        if (clip.sample_rate != features.sample_rate)
            clip = resample(clip, features.sample_rate);
        rec.clip = std::move(clip);
        if (!e.labels.empty())
            rec.labels = load_strong_labels(e.labels, rec.clip.duration_s()).events;
        else
            rec.labels.clip_duration = rec.clip.duration_s();
        if (!e.mask.empty()) rec.excluded_spans = load_excluded_spans(e.mask);
        set.recordings.push_back(std::move(rec));
    }
    return set;
}

EventList infer_events(const ModelWeights& weights, const AudioClip& clip,
                       const FeatureConfig& features, double threshold) {
    AudioClip input = clip;
    if (input.sample_rate != features.sample_rate)
        input = resample(input, features.sample_rate);
    const LogMelSpectrogram spec = log_mel(input, features);
    const FramePosteriors p = model_forward(weights, spec, RunMode::eval);
    return extract_events(binarize(p, threshold), spec.frame_duration);
}

VitalsTask gate_task_for_classes(const std::vector<SoundClass>& classes) {
    bool heart = false, lung = false;
    for (SoundClass c : classes) {
        if (c == SoundClass::S1 || c == SoundClass::S2) heart = true;
        else lung = true;
    }
    if (heart && lung) return VitalsTask::both;
    return heart ? VitalsTask::heart : VitalsTask::lung;
}

PseudoLabelResult generate_pseudo_labels(const ModelWeights& weights,
                                         const DatasetManifest& corpus,
                                         const std::vector<SoundClass>& keep_classes,
                                         const FeatureConfig& features, double threshold,
                                         const PlausibilityBounds& bounds,
                                         const std::filesystem::path& out_dir) {
    if (weights.n_mels() != features.n_mels)
        raise(ErrorKind::IncompatibleModel, "model mel width differs from feature config");
    if (weights.n_classes() != kNumTrainClasses)
        raise(ErrorKind::IncompatibleModel, "pseudo-labeling needs an 8-class model");
    std::filesystem::create_directories(out_dir);

    const VitalsTask gate_task = gate_task_for_classes(keep_classes);
    PseudoLabelResult result;
    for (const auto& entry : corpus.entries) {
        if (!std::filesystem::exists(entry.audio))
            raise(ErrorKind::MissingAudio, entry.audio.string());
        const AudioClip clip = load_audio(entry.audio);
        EventList decoded = infer_events(weights, clip, features, threshold);

        EventList kept;
        kept.clip_duration = decoded.clip_duration;
        for (auto e : decoded.events) {
            if (std::find(keep_classes.begin(), keep_classes.end(), e.cls) ==
                keep_classes.end())
                continue;
            e.origin = LabelOrigin::Pseudo;
            kept.events.push_back(e);
        }

        const Vitals vitals = estimate_vitals(kept, clip.duration_s());
        const GateResult gate = plausibility_filter(vitals, gate_task, bounds);
        if (!gate.accepted) {
            result.rejections.push_back({entry.audio.filename().string(),
                                         vitals.heart_rate, vitals.respiratory_rate,
                                         gate.reason});
            continue;
        }
        const std::filesystem::path label_path =
            out_dir / (entry.audio.stem().string() + ".pseudo.txt");
        save_strong_labels(label_path, kept, /*with_origin=*/true);
        ManifestEntry out_entry;
        out_entry.audio = entry.audio;
        out_entry.labels = label_path;
        out_entry.split = entry.split;
        out_entry.origin = LabelOrigin::Pseudo;
        out_entry.task = gate_task;
        result.accepted.entries.push_back(std::move(out_entry));
        for (const auto& e : kept.events) ++result.event_totals[e.cls];
    }
    return result;
}

MergeResult merge_datasets(const DatasetManifest& gt, const DatasetManifest& pl,
                           const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    MergeResult result;

    std::map<std::string, const ManifestEntry*> pl_by_audio;
    for (const auto& e : pl.entries)
        pl_by_audio[std::filesystem::weakly_canonical(e.audio).string()] = &e;

    std::set<std::string> consumed_pl;
    for (const auto& entry : gt.entries) {
        const AudioClip clip = load_audio(entry.audio);
        EventList merged;
        merged.clip_duration = clip.duration_s();
        std::set<SoundClass> gt_classes;
        if (!entry.labels.empty()) {
            EventList gt_events =
                load_strong_labels(entry.labels, merged.clip_duration).events;
            for (auto& e : gt_events.events) {
                e.origin = LabelOrigin::Gt;
                gt_classes.insert(e.cls);
                merged.events.push_back(e);
            }
        }
        const std::string key = std::filesystem::weakly_canonical(entry.audio).string();
        auto it = pl_by_audio.find(key);
        if (it != pl_by_audio.end()) {
            consumed_pl.insert(key);
            EventList pl_events =
                load_strong_labels(it->second->labels, merged.clip_duration).events;
            std::set<SoundClass> conflicted;
            for (auto& e : pl_events.events) {
                if (gt_classes.count(e.cls)) {
                    conflicted.insert(e.cls); // GT wins
                    continue;
                }
                e.origin = LabelOrigin::Pseudo;
                merged.events.push_back(e);
            }
            for (SoundClass c : conflicted)
                result.conflicts.push_back({entry.audio.filename().string(), c});
        }
        merged.normalize();
        const std::filesystem::path label_path =
            out_dir / (entry.audio.stem().string() + ".merged.txt");
        save_strong_labels(label_path, merged, /*with_origin=*/true);
        ManifestEntry out_entry = entry;
        out_entry.labels = label_path;
        out_entry.task = VitalsTask::both;
        result.merged.entries.push_back(std::move(out_entry));
    }
    // Pseudo-only clips (no GT side) pass through unchanged.
    for (const auto& e : pl.entries) {
        const std::string key = std::filesystem::weakly_canonical(e.audio).string();
        if (!consumed_pl.count(key)) result.merged.entries.push_back(e);
    }
    return result;
}

StrategyArtifacts run_strategy(int stage, const StrategyConfig& cfg) {
    namespace fs = std::filesystem;
    StrategyArtifacts art;
    art.heart_weights = cfg.work_dir / "stage1" / "heart.weights";
    art.lung_weights = cfg.work_dir / "stage1" / "lung.weights";
    art.merged_manifest = cfg.work_dir / "stage2" / "merged" / "manifest.json";
    art.unified_weights = cfg.work_dir / "stage3" / "unified.weights";

    if (stage == 1) {
        fs::create_directories(cfg.work_dir / "stage1");
        const DatasetManifest heart = load_manifest(cfg.heart_manifest);
        const DatasetManifest lung = load_manifest(cfg.lung_manifest);
        for (auto [manifest, task, out] :
             {std::tuple{&heart, VitalsTask::heart, &art.heart_weights},
              std::tuple{&lung, VitalsTask::lung, &art.lung_weights}}) {
            TrainSet train = load_train_set(*manifest, "train", cfg.features);
            for (auto& rec : train.recordings) rec.task = task;
            TrainSet val = load_train_set(*manifest, "val", cfg.features);
            for (auto& rec : val.recordings) rec.task = task;
            const TrainResult r =
                train_loop(train, val, cfg.model, cfg.features, cfg.train);
            save_weights(*out, r.best);
            save_history(out->parent_path() / (out->stem().string() + "_history.csv"),
                         r.history);
        }
        return art;
    }

    if (stage == 2) {
        if (!fs::exists(art.heart_weights) || !fs::exists(art.lung_weights))
            raise(ErrorKind::MissingStageInput,
                  "stage 2 needs the stage-1 specialist weights");
        const DatasetManifest heart = load_manifest(cfg.heart_manifest);
        const DatasetManifest lung = load_manifest(cfg.lung_manifest);
        const ModelWeights heart_model = load_weights(art.heart_weights);
        const ModelWeights lung_model = load_weights(art.lung_weights);

        const std::vector<SoundClass> heart_classes = {SoundClass::S1, SoundClass::S2};
        std::vector<SoundClass> lung_classes;
        for (SoundClass c : train_classes())
            if (c != SoundClass::S1 && c != SoundClass::S2) lung_classes.push_back(c);

        // Heart specialist labels the lung corpus's background and vice versa.
        const auto pl_heart = generate_pseudo_labels(
            heart_model, lung, heart_classes, cfg.features, cfg.threshold, cfg.bounds,
            cfg.work_dir / "stage2" / "pl_heart");
        const auto pl_lung = generate_pseudo_labels(
            lung_model, heart, lung_classes, cfg.features, cfg.threshold, cfg.bounds,
            cfg.work_dir / "stage2" / "pl_lung");
        art.pl_accepted = pl_heart.accepted.entries.size() + pl_lung.accepted.entries.size();
        art.pl_rejected = pl_heart.rejections.size() + pl_lung.rejections.size();
        save_rejections(cfg.work_dir / "stage2" / "rejections.csv", [&] {
            auto all = pl_heart.rejections;
            all.insert(all.end(), pl_lung.rejections.begin(), pl_lung.rejections.end());
            return all;
        }());

        DatasetManifest pl_all = pl_heart.accepted;
        pl_all.entries.insert(pl_all.entries.end(), pl_lung.accepted.entries.begin(),
                              pl_lung.accepted.entries.end());
        DatasetManifest gt_all = heart;
        gt_all.entries.insert(gt_all.entries.end(), lung.entries.begin(),
                              lung.entries.end());
        const MergeResult merged =
            merge_datasets(gt_all, pl_all, cfg.work_dir / "stage2" / "merged");
        save_manifest(art.merged_manifest, merged.merged);
        return art;
    }

    if (stage == 3) {
        if (!fs::exists(art.merged_manifest))
            raise(ErrorKind::MissingStageInput, "stage 3 needs the merged manifest");
        fs::create_directories(cfg.work_dir / "stage3");
        const DatasetManifest merged = load_manifest(art.merged_manifest);
        TrainSet train = load_train_set(merged, "train", cfg.features);
        TrainSet val = load_train_set(merged, "val", cfg.features);
        const TrainResult r = train_loop(train, val, cfg.model, cfg.features, cfg.train);
        save_weights(art.unified_weights, r.best);
        save_history(cfg.work_dir / "stage3" / "unified_history.csv", r.history);
        return art;
    }

    raise(ErrorKind::InvalidArgument, "stage must be 1, 2 or 3");
}

void save_rejections(const std::filesystem::path& path,
                     const std::vector<RejectionRecord>& rejections) {
    std::ofstream os(path);
    if (!os)
        raise(ErrorKind::IoError, "cannot write " + path.string());
    os << "clip,hr,rr,reason\n";
    char line[256];
    for (const auto& r : rejections) {
        std::snprintf(line, sizeof(line), "%s,%.3f,%.3f,%s\n", r.clip.c_str(),
                      r.heart_rate, r.respiratory_rate, r.reason.c_str());
        os << line;
    }
}

} // namespace auscsed
