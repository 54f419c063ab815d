#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "auscsed/error.hpp"
#include "auscsed/labels.hpp"
#include "test_util.hpp"

using namespace auscsed;

TEST_CASE("parse: well-formed lines, sorted per class") {
    const auto r = parse_strong_labels("S1 1.000 1.100\nI 0.5 2.0\n", 10.0);
    REQUIRE(r.events.events.size() == 2);
    CHECK(r.events.events[0].cls == SoundClass::S1);
    CHECK(r.events.events[0].onset == doctest::Approx(1.0));
    CHECK(r.events.events[1].cls == SoundClass::Inspiration);
    CHECK(r.diagnostics.empty());
}

TEST_CASE("parse: aliases and case folding") {
    const auto r = parse_strong_labels(
        "s1 0 1\nE 1 2\nd 2 2.02\nWHEEZES 3 4\ninhalation 5 6\n", 10.0);
    REQUIRE(r.events.events.size() == 5);
    CHECK(r.events.of_class(SoundClass::Expiration).size() == 1);
    CHECK(r.events.of_class(SoundClass::Crackle).size() == 1);
    CHECK(r.events.of_class(SoundClass::Wheeze).size() == 1);
    CHECK(r.events.of_class(SoundClass::Inspiration).size() == 1);
}

TEST_CASE("parse: comments, blank lines, origin column") {
    const auto r = parse_strong_labels(
        "# header comment\n\nS1 0 0.1 gt\nS2 0.2 0.3 pseudo # trailing\n", 10.0);
    REQUIRE(r.events.events.size() == 2);
    CHECK(r.events.events[0].origin == LabelOrigin::Gt);
    CHECK(r.events.events[1].origin == LabelOrigin::Pseudo);
}

TEST_CASE("parse: error cases carry line numbers") {
    try {
        parse_strong_labels("S1 2.0 1.0\n", 10.0);
        FAIL("expected NonPositiveDuration");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NonPositiveDuration);
        CHECK(std::string(e.what()).find("line 1") != std::string::npos);
    }
    try {
        parse_strong_labels("S1 0 1\nQ 0 1\n", 10.0);
        FAIL("expected UnknownClass");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::UnknownClass);
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    try {
        parse_strong_labels("S1 0\n", 10.0);
        FAIL("expected SyntaxError");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::SyntaxError);
    }
    try {
        parse_strong_labels("S1 0 1\nS1 0.5 1.5\n", 10.0);
        FAIL("expected OverlapWithinClass");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::OverlapWithinClass);
    }
}

TEST_CASE("heart monophony check flags overlapping S1/S2") {
    // Parsing tolerates it (prediction files are parsed too); the check is a
    // separate predicate applied to ground-truth producers.
    const auto bad = parse_strong_labels("S1 0 0.2\nS2 0.1 0.3\n", 10.0);
    CHECK(!heart_monophonic(bad.events));
    const auto good = parse_strong_labels("S1 0 0.1\nS2 0.15 0.25\n", 10.0);
    CHECK(heart_monophonic(good.events));
}

TEST_CASE("parse: events clamped to the clip with a diagnostic") {
    const auto r = parse_strong_labels("I 9.5 12.0\n", 10.0);
    REQUIRE(r.events.events.size() == 1);
    CHECK(r.events.events[0].offset == doctest::Approx(10.0));
    REQUIRE(r.diagnostics.size() == 1);
    CHECK(r.diagnostics[0].line == 1);
}

TEST_CASE("format/parse round trip") {
    const auto r = parse_strong_labels("S1 0.25 0.5\nI 1 2\nW 1 1.5\n", 10.0);
    const std::string text = format_strong_labels(r.events);
    const auto r2 = parse_strong_labels(text, 10.0);
    REQUIRE(r2.events.events.size() == r.events.events.size());
    for (size_t i = 0; i < r.events.events.size(); ++i) {
        CHECK(r2.events.events[i].cls == r.events.events[i].cls);
        CHECK(r2.events.events[i].onset ==
              doctest::Approx(r.events.events[i].onset).epsilon(1e-9));
    }
}

TEST_CASE("encode_frames: midpoint rule on the 32 ms example") {
    EventList events;
    events.clip_duration = 0.064;
    events.events.push_back({SoundClass::Inspiration, 0.0, 0.032});
    const ActivityMatrix m = encode_frames(events, 4, 0.016);
    REQUIRE(m.n_frames == 4);
    REQUIRE(m.n_classes() == 8);
    const int insp = class_index(SoundClass::Inspiration);
    CHECK(m.at(0, insp) == 1); // midpoint 0.008
    CHECK(m.at(1, insp) == 1); // midpoint 0.024
    CHECK(m.at(2, insp) == 0); // midpoint 0.040
    CHECK(m.at(3, insp) == 0);
    size_t total = 0;
    for (uint8_t v : m.values) total += v;
    CHECK(total == 2);
}

TEST_CASE("encode_frames: empty list is all zero; polyphony shares frames") {
    EventList empty;
    empty.clip_duration = 1.0;
    const ActivityMatrix z = encode_frames(empty, 10, 0.016);
    for (uint8_t v : z.values) CHECK(v == 0);

    EventList poly;
    poly.clip_duration = 1.0;
    poly.events.push_back({SoundClass::S1, 0.0, 0.1});
    poly.events.push_back({SoundClass::Inspiration, 0.0, 0.2});
    const ActivityMatrix m = encode_frames(poly, 10, 0.016);
    CHECK(m.at(2, class_index(SoundClass::S1)) == 1);
    CHECK(m.at(2, class_index(SoundClass::Inspiration)) == 1);
}

TEST_CASE("encode_frames is monotone in the event list") {
    auscsed::Rng rng(42);
    for (int trial = 0; trial < 50; ++trial) {
        EventList a;
        a.clip_duration = 2.0;
        const int n = 1 + static_cast<int>(rng.index(4));
        double t = 0.0;
        for (int i = 0; i < n; ++i) {
            const double onset = t + rng.uniform(0.0, 0.2);
            const double offset = onset + rng.uniform(0.02, 0.3);
            a.events.push_back({SoundClass::Wheeze, onset, offset});
            t = offset + 0.01;
        }
        EventList b = a;
        b.events.push_back({SoundClass::Crackle, 0.5, 0.6});
        const ActivityMatrix ma = encode_frames(a, 100, 0.016);
        const ActivityMatrix mb = encode_frames(b, 100, 0.016);
        for (size_t i = 0; i < ma.values.size(); ++i) CHECK(mb.values[i] >= ma.values[i]);
    }
}

TEST_CASE("encode_frames: column sums track event durations within a frame") {
    EventList events;
    events.clip_duration = 5.0;
    events.events.push_back({SoundClass::Expiration, 0.5, 1.5});
    events.events.push_back({SoundClass::Expiration, 2.0, 2.25});
    const double dt = 0.016;
    const ActivityMatrix m = encode_frames(events, 300, dt);
    long active = 0;
    for (size_t t = 0; t < m.n_frames; ++t) active += m.at(t, class_index(SoundClass::Expiration));
    const double expect = (1.0 + 0.25) / dt;
    CHECK(std::abs(active - expect) <= 2.0); // one frame of rounding per event
}

TEST_CASE("to_eval_classes: hf_lung4 unions CAS intervals") {
    EventList events;
    events.clip_duration = 10.0;
    events.events.push_back({SoundClass::Wheeze, 1.0, 2.0});
    events.events.push_back({SoundClass::Rhonchi, 1.5, 3.0});
    const EventList out = to_eval_classes(events, EvalScheme::hf_lung4);
    REQUIRE(out.events.size() == 1);
    CHECK(out.events[0].cls == SoundClass::Cas);
    CHECK(out.events[0].onset == doctest::Approx(1.0));
    CHECK(out.events[0].offset == doctest::Approx(3.0));
}

TEST_CASE("to_eval_classes: raw8 identity; crackle renames to DAS") {
    EventList events;
    events.clip_duration = 10.0;
    events.events.push_back({SoundClass::Crackle, 0.0, 0.02});
    events.events.push_back({SoundClass::S1, 1.0, 1.1});

    const EventList raw = to_eval_classes(events, EvalScheme::raw8);
    REQUIRE(raw.events.size() == 2);
    CHECK(raw.events[0].cls == events.events[0].cls);

    const EventList hf = to_eval_classes(events, EvalScheme::hf_lung4);
    REQUIRE(hf.events.size() == 2);
    bool saw_das = false;
    for (const auto& e : hf.events) {
        if (e.cls == SoundClass::Das) {
            saw_das = true;
            CHECK(e.offset == doctest::Approx(0.02));
        }
        CHECK(e.cls != SoundClass::Crackle);
    }
    CHECK(saw_das);
}

TEST_CASE("aggregate events are ignored by the default training encode") {
    EventList events;
    events.clip_duration = 1.0;
    events.events.push_back({SoundClass::Cas, 0.0, 0.5});
    const ActivityMatrix m = encode_frames(events, 10, 0.016);
    for (uint8_t v : m.values) CHECK(v == 0);
    // But an explicit evaluation class set sees them.
    const ActivityMatrix me = encode_frames(events, 10, 0.016, {SoundClass::Cas});
    CHECK(me.at(0, 0) == 1);
}
