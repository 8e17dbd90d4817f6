/*
    Licensed under the Apache License, Version 2.0 (the "License");
    you may not use this file except in compliance with the License.
    You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

    Unless required by applicable law or agreed to in writing, software
    distributed under the License is distributed on an "AS IS" BASIS,
    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
    See the License for the specific language governing permissions and
    limitations under the License.
*/

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fedstream/error.hpp"
#include "fedstream/pipeline.hpp"

#include <cstdio>
#include <string>

using namespace fedstream;

namespace {

MessageId id(std::uint64_t lo) { return MessageId{0, lo}; }

SurgePipeline fresh(Tick window = 10, Tick grace = 5) {
    return SurgePipeline("surge", "east", window, grace);
}

Errc decode_error(const std::string& payload) {
    try {
        decode_trip(payload);
    } catch (const SimError& error) {
        return error.code();
    }
    FAIL("expected a SimError for payload: ", payload);
    return Errc::ConfigError;
}

} // namespace

TEST_CASE("surge ratio is demand over supply, reduced and floored at parity") {
    CHECK(surge_ratio(0, 0) == Ratio{1, 1});
    CHECK(surge_ratio(0, 5) == Ratio{1, 1});
    CHECK(surge_ratio(1, 1) == Ratio{1, 1});
    CHECK(surge_ratio(2, 5) == Ratio{1, 1});
    CHECK(surge_ratio(4, 6) == Ratio{1, 1});
    CHECK(surge_ratio(6, 2) == Ratio{3, 1});
    CHECK(surge_ratio(7, 3) == Ratio{7, 3});
    CHECK(surge_ratio(9, 6) == Ratio{3, 2});
    CHECK(surge_ratio(5, 0) == Ratio{5, 1}); // zero supply behaves as one driver
    CHECK(to_string(Ratio{3, 2}) == "3/2");
}

TEST_CASE("trip payloads round-trip exactly") {
    TripEvent demand{"gf-03", true, 47};
    TripEvent supply{"gf-11", false, 0};
    for (const TripEvent& event : {demand, supply}) {
        TripEvent back = decode_trip(encode_trip(event));
        CHECK(back.geofence == event.geofence);
        CHECK(back.is_demand == event.is_demand);
        CHECK(back.app_timestamp == event.app_timestamp);
    }
}

TEST_CASE("malformed trip payloads are rejected, never guessed at") {
    CHECK(decode_error("not json") == Errc::ProtocolViolation);
    CHECK(decode_error("[]") == Errc::ProtocolViolation);
    CHECK(decode_error(R"({"geofence":"g","ts":3})") == Errc::ProtocolViolation);
    CHECK(decode_error(R"({"geofence":"g","kind":"demand","ts":-1})") ==
          Errc::ProtocolViolation);
    CHECK(decode_error(R"({"geofence":"g","kind":"runway","ts":3})") ==
          Errc::ProtocolViolation);
    CHECK(decode_error(R"({"geofence":7,"kind":"demand","ts":3})") ==
          Errc::ProtocolViolation);
}

TEST_CASE("a zero-width window is a configuration error") {
    CHECK_THROWS_AS(SurgePipeline("s", "r", 0, 5), SimError);
}

TEST_CASE("events bucket by application timestamp, not arrival time") {
    auto p = fresh();
    CHECK(p.ingest(id(1), {"gf", true, 0}, 99) == IngestResult::Applied);
    CHECK(p.ingest(id(2), {"gf", true, 9}, 99) == IngestResult::Applied);
    CHECK(p.ingest(id(3), {"gf", false, 10}, 99) == IngestResult::Applied);
    auto sealed = p.seal_all();
    REQUIRE(sealed.size() == 2);
    CHECK(sealed[0].window_start == 0);
    CHECK(sealed[0].demand == 2);
    CHECK(sealed[1].window_start == 10);
    CHECK(sealed[1].supply == 1);
}

TEST_CASE("replayed message ids change nothing") {
    auto p = fresh();
    CHECK(p.ingest(id(1), {"gf", true, 3}, 5) == IngestResult::Applied);
    CHECK(p.ingest(id(1), {"gf", true, 3}, 6) == IngestResult::Duplicate);
    // Same id with different content is still the same message to us.
    CHECK(p.ingest(id(1), {"other", false, 14}, 7) == IngestResult::Duplicate);
    CHECK(p.applied_count() == 1);
    CHECK(p.duplicate_count() == 2);
    auto sealed = p.seal_all();
    REQUIRE(sealed.size() == 1);
    CHECK(sealed[0].demand == 1);
    CHECK(sealed[0].supply == 0);
}

TEST_CASE("windows seal only after close plus grace") {
    auto p = fresh(10, 5);
    p.ingest(id(1), {"gf", true, 4}, 4);
    CHECK(p.seal_due(14).empty()); // deadline is 0 + 10 + 5
    auto sealed = p.seal_due(15);
    REQUIRE(sealed.size() == 1);
    CHECK(sealed[0].window_start == 0);
    CHECK_FALSE(p.has_open_windows());
}

TEST_CASE("a record inside the grace period still lands in its window") {
    auto p = fresh(10, 5);
    p.ingest(id(1), {"gf", true, 4}, 4);
    p.seal_due(14);
    CHECK(p.ingest(id(2), {"gf", true, 9}, 14) == IngestResult::Applied);
    auto sealed = p.seal_due(15);
    REQUIRE(sealed.size() == 1);
    CHECK(sealed[0].demand == 2);
}

TEST_CASE("late events are counted and dropped once the window is sealed") {
    auto p = fresh(10, 5);
    p.ingest(id(1), {"gf", true, 4}, 4);
    p.seal_due(15);
    CHECK(p.ingest(id(2), {"gf", true, 7}, 16) == IngestResult::Late);
    CHECK(p.late_count() == 1);
    CHECK(p.applied_count() == 1);
    // Sealed results are immutable; the late event left no trace.
    CHECK(p.sealed().at({0, "gf"}).demand == 1);
}

TEST_CASE("sealing an empty window publishes nothing but blocks late events") {
    auto p = fresh();
    CHECK(p.seal_window(20).empty());
    CHECK(p.ingest(id(1), {"gf", true, 25}, 30) == IngestResult::Late);
    CHECK_THROWS_AS(p.seal_window(20), SimError);
}

TEST_CASE("sealing the same window twice is an error") {
    auto p = fresh();
    p.ingest(id(1), {"gf", true, 3}, 3);
    CHECK(p.seal_window(0).size() == 1);
    try {
        p.seal_window(0);
        FAIL("second seal must throw");
    } catch (const SimError& error) {
        CHECK(error.code() == Errc::AlreadySealed);
    }
}

TEST_CASE("seal output is ordered by window start, then geofence") {
    auto p = fresh();
    p.ingest(id(1), {"zeta", true, 12}, 12);
    p.ingest(id(2), {"alpha", true, 15}, 15);
    p.ingest(id(3), {"mid", false, 3}, 3);
    auto sealed = p.seal_all();
    REQUIRE(sealed.size() == 3);
    CHECK(sealed[0].window_start == 0);
    CHECK(sealed[0].geofence == "mid");
    CHECK(sealed[1].geofence == "alpha");
    CHECK(sealed[2].geofence == "zeta");
}

TEST_CASE("multipliers in sealed aggregates come from the exact ratio") {
    auto p = fresh();
    for (std::uint64_t i = 0; i < 6; ++i) {
        p.ingest(id(100 + i), {"hot", true, 2}, 2);
    }
    p.ingest(id(200), {"hot", false, 2}, 2);
    p.ingest(id(201), {"hot", false, 2}, 2);
    p.ingest(id(300), {"calm", false, 2}, 2);
    p.seal_all();
    CHECK(p.sealed().at({0, "hot"}).multiplier == Ratio{3, 1});
    CHECK(p.sealed().at({0, "calm"}).multiplier == Ratio{1, 1});
}

TEST_CASE("the digest is refused while windows are still open") {
    auto p = fresh();
    p.ingest(id(1), {"gf", true, 3}, 3);
    try {
        p.state_digest();
        FAIL("digest with open windows must throw");
    } catch (const SimError& error) {
        CHECK(error.code() == Errc::DigestUnavailable);
    }
    p.seal_all();
    CHECK(p.state_digest().size() == 16);
}

TEST_CASE("an empty pipeline digests to the hash seed") {
    auto p = fresh();
    p.seal_all();
    CHECK(p.state_digest() == "cbf29ce484222325");
}

TEST_CASE("one sealed row digests to its hand-computed hash") {
    auto p = fresh();
    p.ingest(id(1), {"gf", true, 0}, 0);
    p.ingest(id(2), {"gf", true, 1}, 1);
    p.ingest(id(3), {"gf", false, 2}, 2);
    p.seal_all();
    char expected[17];
    std::snprintf(expected, sizeof(expected), "%016llx",
                  static_cast<unsigned long long>(fnv1a64("gf|0|2|1|2/1\n")));
    CHECK(p.state_digest() == std::string(expected));
}

TEST_CASE("digests agree across delivery orders and disagree on content") {
    auto a = fresh();
    auto b = fresh();
    auto c = fresh();
    struct Row {
        std::uint64_t lo;
        TripEvent event;
    };
    const Row rows[] = {
        {1, {"gf-1", true, 3}},  {2, {"gf-1", false, 7}}, {3, {"gf-2", true, 12}},
        {4, {"gf-2", true, 14}}, {5, {"gf-1", true, 18}}, {6, {"gf-3", false, 1}},
    };
    for (const Row& r : rows) {
        a.ingest(id(r.lo), r.event, 50);
    }
    for (int i = 5; i >= 0; --i) {
        b.ingest(id(rows[i].lo), rows[i].event, 50);
    }
    for (const Row& r : rows) {
        if (r.lo != 4) {
            c.ingest(id(r.lo), r.event, 50); // drop one demand event
        }
    }
    a.seal_all();
    b.seal_all();
    c.seal_all();
    CHECK(a.state_digest() == b.state_digest());
    CHECK(a.state_digest() != c.state_digest());
}
