#include "auscsed/labels.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "auscsed/error.hpp"

namespace auscsed {

bool is_aggregate(SoundClass c) {
    return c == SoundClass::Cas || c == SoundClass::Das;
}

const char* class_name(SoundClass c) {
    switch (c) {
        case SoundClass::S1: return "S1";
        case SoundClass::S2: return "S2";
        case SoundClass::Inspiration: return "Inspiration";
        case SoundClass::Expiration: return "Expiration";
        case SoundClass::Wheeze: return "Wheeze";
        case SoundClass::Crackle: return "Crackle";
        case SoundClass::Rhonchi: return "Rhonchi";
        case SoundClass::Stridor: return "Stridor";
        case SoundClass::Cas: return "CAS";
        case SoundClass::Das: return "DAS";
    }
    return "?";
}

bool lookup_class(const std::string& token, SoundClass& out) {
    std::string key;
    key.reserve(token.size());
    for (char ch : token) key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));

    static const std::map<std::string, SoundClass> table = {
        {"s1", SoundClass::S1},
        {"s2", SoundClass::S2},
        {"i", SoundClass::Inspiration},
        {"in", SoundClass::Inspiration},
        {"inspiration", SoundClass::Inspiration},
        {"inhalation", SoundClass::Inspiration},
        {"e", SoundClass::Expiration},
        {"ex", SoundClass::Expiration},
        {"expiration", SoundClass::Expiration},
        {"exhalation", SoundClass::Expiration},
        {"w", SoundClass::Wheeze},
        {"wheeze", SoundClass::Wheeze},
        {"wheezes", SoundClass::Wheeze},
        {"c", SoundClass::Crackle},
        {"d", SoundClass::Crackle},
        {"crackle", SoundClass::Crackle},
        {"crackles", SoundClass::Crackle},
        {"r", SoundClass::Rhonchi},
        {"rhonchi", SoundClass::Rhonchi},
        {"stridor", SoundClass::Stridor},
        {"cas", SoundClass::Cas},
        {"das", SoundClass::Das},
    };
    auto it = table.find(key);
    if (it == table.end()) return false;
    out = it->second;
    return true;
}

const std::vector<SoundClass>& train_classes() {
    static const std::vector<SoundClass> classes = {
        SoundClass::S1,          SoundClass::S2,      SoundClass::Inspiration,
        SoundClass::Expiration,  SoundClass::Wheeze,  SoundClass::Crackle,
        SoundClass::Rhonchi,     SoundClass::Stridor,
    };
    return classes;
}

std::vector<SoundEvent> EventList::of_class(SoundClass c) const {
    std::vector<SoundEvent> out;
    for (const auto& e : events)
        if (e.cls == c) out.push_back(e);
    std::sort(out.begin(), out.end(),
              [](const SoundEvent& a, const SoundEvent& b) { return a.onset < b.onset; });
    return out;
}

void EventList::normalize() {
    std::sort(events.begin(), events.end(), [](const SoundEvent& a, const SoundEvent& b) {
        if (a.cls != b.cls) return class_index(a.cls) < class_index(b.cls);
        return a.onset < b.onset;
    });
    for (size_t i = 1; i < events.size(); ++i) {
        const auto& prev = events[i - 1];
        const auto& cur = events[i];
        if (cur.cls == prev.cls && cur.onset < prev.offset)
            raise(ErrorKind::OverlapWithinClass,
                  std::string(class_name(cur.cls)) + " events overlap at " +
                      std::to_string(cur.onset) + "s");
    }
}

bool heart_monophonic(const EventList& events) {
    auto s1 = events.of_class(SoundClass::S1);
    auto s2 = events.of_class(SoundClass::S2);
    size_t i = 0, j = 0;
    while (i < s1.size() && j < s2.size()) {
        const auto& a = s1[i];
        const auto& b = s2[j];
        if (a.onset < b.offset && b.onset < a.offset) return false;
        if (a.offset <= b.offset) ++i; else ++j;
    }
    return true;
}

ParseResult parse_strong_labels(const std::string& text, double clip_duration) {
    ParseResult result;
    result.events.clip_duration = clip_duration;

    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream fields(line);
        std::string cls_token;
        if (!(fields >> cls_token)) continue; // blank or comment-only line

        SoundClass cls;
        if (!lookup_class(cls_token, cls))
            raise(ErrorKind::UnknownClass,
                  "line " + std::to_string(line_no) + ": unknown class '" + cls_token + "'");

        double onset = 0.0, offset = 0.0;
        if (!(fields >> onset >> offset))
            raise(ErrorKind::SyntaxError,
                  "line " + std::to_string(line_no) + ": expected '<class> <onset> <offset>'");

        LabelOrigin origin = LabelOrigin::Gt;
        std::string origin_token;
        if (fields >> origin_token) {
            if (origin_token == "gt") origin = LabelOrigin::Gt;
            else if (origin_token == "pseudo") origin = LabelOrigin::Pseudo;
            else
                raise(ErrorKind::SyntaxError,
                      "line " + std::to_string(line_no) + ": bad origin '" + origin_token + "'");
        }
        std::string extra;
        if (fields >> extra)
            raise(ErrorKind::SyntaxError,
                  "line " + std::to_string(line_no) + ": trailing token '" + extra + "'");

        if (!(offset > onset) || onset < 0.0)
            raise(ErrorKind::NonPositiveDuration,
                  "line " + std::to_string(line_no) + ": need 0 <= onset < offset");

        if (offset > clip_duration) {
            result.diagnostics.push_back(
                {line_no, std::string(class_name(cls)) + " clamped to clip end"});
            offset = clip_duration;
            if (!(offset > onset)) continue; // entirely past the clip
        }
        result.events.events.push_back({cls, onset, offset, origin});
    }
    result.events.normalize();
    return result;
}

ParseResult load_strong_labels(const std::filesystem::path& path, double clip_duration) {
    std::ifstream in(path);
    if (!in)
        raise(ErrorKind::NotFound, "cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_strong_labels(buf.str(), clip_duration);
}

std::string format_strong_labels(const EventList& events, bool with_origin) {
    std::string out;
    char line[128];
    for (const auto& e : events.events) {
        if (with_origin) {
            std::snprintf(line, sizeof(line), "%s %.6f %.6f %s\n", class_name(e.cls),
                          e.onset, e.offset, e.origin == LabelOrigin::Gt ? "gt" : "pseudo");
        } else {
            std::snprintf(line, sizeof(line), "%s %.6f %.6f\n", class_name(e.cls),
                          e.onset, e.offset);
        }
        out += line;
    }
    return out;
}

void save_strong_labels(const std::filesystem::path& path, const EventList& events,
                        bool with_origin) {
    std::ofstream os(path);
    if (!os)
        raise(ErrorKind::IoError, "cannot write " + path.string());
    os << format_strong_labels(events, with_origin);
}

ActivityMatrix encode_frames(const EventList& events, size_t n_frames,
                             double frame_duration, const std::vector<SoundClass>& classes) {
    ActivityMatrix m;
    m.n_frames = n_frames;
    m.classes = classes;
    m.frame_duration = frame_duration;
    m.values.assign(n_frames * classes.size(), 0);

    for (size_t c = 0; c < classes.size(); ++c) {
        for (const auto& e : events.events) {
            if (e.cls != classes[c]) continue;
            // Frames whose midpoint (t + 0.5) * dt lies in [onset, offset).
            const double lo = e.onset / frame_duration - 0.5;
            const double hi = e.offset / frame_duration - 0.5;
            const long first = static_cast<long>(std::ceil(lo - 1e-9));
            long t = std::max(0L, first);
            for (; t < static_cast<long>(n_frames); ++t) {
                const double mid = static_cast<double>(t);
                if (!(mid < hi - 1e-9)) break;
                m.at(static_cast<size_t>(t), c) = 1;
            }
        }
    }
    return m;
}

EventList to_eval_classes(const EventList& events, EvalScheme scheme) {
    if (scheme == EvalScheme::raw8) return events;

    EventList mapped;
    mapped.clip_duration = events.clip_duration;
    for (auto e : events.events) {
        switch (e.cls) {
            case SoundClass::Wheeze:
            case SoundClass::Rhonchi:
            case SoundClass::Stridor:
                e.cls = SoundClass::Cas;
                break;
            case SoundClass::Crackle:
                e.cls = SoundClass::Das;
                break;
            default:
                break;
        }
        mapped.events.push_back(e);
    }

    // Union overlapping or touching intervals per class.
    std::sort(mapped.events.begin(), mapped.events.end(),
              [](const SoundEvent& a, const SoundEvent& b) {
                  if (a.cls != b.cls) return class_index(a.cls) < class_index(b.cls);
                  return a.onset < b.onset;
              });
    EventList merged;
    merged.clip_duration = mapped.clip_duration;
    for (const auto& e : mapped.events) {
        if (!merged.events.empty()) {
            auto& last = merged.events.back();
            if (last.cls == e.cls && e.onset <= last.offset) {
                last.offset = std::max(last.offset, e.offset);
                if (e.origin == LabelOrigin::Pseudo) last.origin = LabelOrigin::Pseudo;
                continue;
            }
        }
        merged.events.push_back(e);
    }
    return merged;
}

} // namespace auscsed
