#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "auscsed/tensor.hpp"

namespace auscsed {

/// The eight trainable sound classes with fixed indices, plus the two
/// evaluation-only aggregates. CAS = wheeze|rhonchi|stridor, DAS = crackle.
enum class SoundClass : int {
    S1 = 0,
    S2 = 1,
    Inspiration = 2,
    Expiration = 3,
    Wheeze = 4,
    Crackle = 5,
    Rhonchi = 6,
    Stridor = 7,
    Cas = 8,
    Das = 9,
};

constexpr int kNumTrainClasses = 8;
constexpr int kNumClasses = 10;

constexpr int class_index(SoundClass c) { return static_cast<int>(c); }
bool is_aggregate(SoundClass c);
const char* class_name(SoundClass c);

/// Resolve a label token (case-insensitive, with aliases such as I, E, D).
/// Returns false if the token is not a known class.
bool lookup_class(const std::string& token, SoundClass& out);

enum class LabelOrigin { Gt, Pseudo };

struct SoundEvent {
    SoundClass cls = SoundClass::S1;
    double onset = 0.0;  // seconds
    double offset = 0.0; // seconds
    LabelOrigin origin = LabelOrigin::Gt;

    double duration() const { return offset - onset; }
};

/// Strong labels for one clip. Within a class events are sorted by onset and
/// non-overlapping; S1 and S2 additionally never overlap each other.
struct EventList {
    std::vector<SoundEvent> events;
    double clip_duration = 0.0;

    /// Events of one class, in onset order.
    std::vector<SoundEvent> of_class(SoundClass c) const;
    /// Sorts by (class, onset) and rejects within-class overlap. Heart
    /// monophony is checked separately: prediction lists may violate it
    /// (per-class sigmoid outputs are independent), ground truth may not.
    void normalize();
};

/// True when no S1 event overlaps an S2 event.
bool heart_monophonic(const EventList& events);

/// {0,1} frame-by-class activity. Rows are hop-aligned frames of
/// `frame_duration` seconds; columns follow `classes`.
struct ActivityMatrix {
    std::vector<uint8_t> values; // n_frames * classes.size(), row-major
    size_t n_frames = 0;
    std::vector<SoundClass> classes;
    double frame_duration = 0.0;

    size_t n_classes() const { return classes.size(); }
    uint8_t& at(size_t t, size_t c) { return values[t * classes.size() + c]; }
    uint8_t at(size_t t, size_t c) const { return values[t * classes.size() + c]; }
};

/// Sigmoid outputs in (0,1), same layout as ActivityMatrix.
struct FramePosteriors {
    Tensor values; // (n_frames, n_classes)
    double frame_duration = 0.0;

    size_t n_frames() const { return values.rank() == 2 ? values.dim(0) : 0; }
    size_t n_classes() const { return values.rank() == 2 ? values.dim(1) : 0; }
};

struct ParseDiagnostic {
    int line = 0;
    std::string message;
};

struct ParseResult {
    EventList events;
    std::vector<ParseDiagnostic> diagnostics;
};

/// Parse the canonical strong-label text: one `<class> <onset_s> <offset_s>
/// [origin]` per line, '#' starts a comment. Events outside
/// [0, clip_duration] are clamped (with a diagnostic); malformed lines,
/// unknown classes, non-positive durations and within-class overlaps throw.
ParseResult parse_strong_labels(const std::string& text, double clip_duration);

ParseResult load_strong_labels(const std::filesystem::path& path, double clip_duration);

/// Write events in the same format. The origin column is emitted only when
/// `with_origin` is set (merged gt+pseudo files).
std::string format_strong_labels(const EventList& events, bool with_origin = false);
void save_strong_labels(const std::filesystem::path& path, const EventList& events,
                        bool with_origin = false);

const std::vector<SoundClass>& train_classes();

/// Multi-hot frame encoding: frame t is active for a class iff the frame
/// midpoint (t + 0.5) * dt falls inside one of its events. Events whose class
/// is not in `classes` are ignored; events beyond the clip are clipped.
ActivityMatrix encode_frames(const EventList& events, size_t n_frames,
                             double frame_duration,
                             const std::vector<SoundClass>& classes = train_classes());

enum class EvalScheme { raw8, hf_lung4 };

/// raw8 is the identity. hf_lung4 renames wheeze/rhonchi/stridor to CAS and
/// crackle to DAS, then unions any same-class intervals that now overlap.
EventList to_eval_classes(const EventList& events, EvalScheme scheme);

} // namespace auscsed
