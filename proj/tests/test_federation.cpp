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
#include "fedstream/federation.hpp"

#include <functional>
#include <string>
#include <vector>

using namespace fedstream;

namespace {

struct Fixture {
    Cluster alpha{ClusterId{"core", "alpha"}};
    Cluster beta{ClusterId{"core", "beta"}};
    Federation federation{"core"};

    Fixture(int alpha_nodes = 3, int beta_nodes = 2, int max_nodes = 150) {
        federation.add_cluster("alpha", alpha_nodes, max_nodes, &alpha);
        federation.add_cluster("beta", beta_nodes, max_nodes, &beta);
    }
};

AuditMeta meta(std::uint64_t id) { return AuditMeta{MessageId{0, id}, 0, "svc", "1"}; }

Errc code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const SimError& error) {
        return error.code();
    }
    FAIL("expected a SimError");
    return Errc::ConfigError;
}

} // namespace

TEST_CASE("capacity placement picks the fewest-topics cluster, ties lexicographic") {
    Fixture f;
    CHECK(f.federation.create_logical_topic("t1", TopicConfig{1, {}, false}).name == "alpha");
    CHECK(f.federation.create_logical_topic("t2", TopicConfig{1, {}, false}).name == "beta");
    CHECK(f.federation.create_logical_topic("t3", TopicConfig{1, {}, false}).name == "alpha");
    CHECK(f.alpha.has_topic("t1"));
    CHECK(f.beta.has_topic("t2"));
}

TEST_CASE("a cluster at its node cap stops receiving placements") {
    Cluster full{ClusterId{"core", "full"}};
    Cluster open{ClusterId{"core", "open"}};
    Federation federation{"core"};
    federation.add_cluster("full", 150, 150, &full); // at the cap, not placeable
    federation.add_cluster("open", 149, 150, &open); // one below: placeable
    CHECK(federation.create_logical_topic("t", TopicConfig{1, {}, false}).name == "open");
}

TEST_CASE("a federation with only full clusters rejects placement") {
    Cluster full{ClusterId{"core", "full"}};
    Federation federation{"core"};
    federation.add_cluster("full", 150, 150, &full);
    CHECK(code_of([&] { federation.create_logical_topic("t", TopicConfig{1, {}, false}); }) ==
          Errc::FederationFull);
}

TEST_CASE("pinned placement bypasses the capacity rule") {
    Fixture f;
    CHECK(f.federation.create_logical_topic_on("t", TopicConfig{2, {}, false}, "beta").name ==
          "beta");
    CHECK(f.beta.has_topic("t"));
    CHECK(code_of([&] {
        f.federation.create_logical_topic_on("u", TopicConfig{1, {}, false}, "gamma");
    }) == Errc::UnknownCluster);
}

TEST_CASE("producers follow a migration immediately, draining groups lag") {
    Fixture f;
    f.federation.create_logical_topic_on("t", TopicConfig{1, {}, false}, "alpha");
    TopicPartition tp{"t", 0};
    for (std::uint64_t i = 1; i <= 4; ++i) {
        f.alpha.produce("t", std::nullopt, "x", meta(i), 0);
    }
    f.federation.migrate_topic("t", "beta", {"g"}, 10);
    CHECK(f.federation.migration_in_progress("t"));
    CHECK(f.federation.resolve_for_produce("t").name == "beta");
    CHECK(f.beta.has_topic("t"));
    // The group still reads the old placement until fully committed there.
    CHECK(f.federation.resolve_for_group("t", "g", 10).name == "alpha");
    f.alpha.commit("g", tp, 2);
    CHECK(f.federation.resolve_for_group("t", "g", 11).name == "alpha");
    // Old data stays fetchable during the drain: zero loss.
    CHECK(f.alpha.fetch(tp, 0, 10).size() == 4);
    f.alpha.commit("g", tp, 4);
    std::vector<std::pair<std::string, Tick>> switched;
    f.federation.on_group_switched = [&](const std::string& topic, const std::string& group,
                                         Tick now) {
        switched.emplace_back(topic + "/" + group, now);
        CHECK_FALSE(f.federation.migration_in_progress(topic));
    };
    CHECK(f.federation.resolve_for_group("t", "g", 12).name == "beta");
    REQUIRE(switched.size() == 1);
    CHECK(switched[0] == std::pair<std::string, Tick>{"t/g", 12});
    CHECK_FALSE(f.federation.migration_in_progress("t"));
    // The switch is permanent even if commits on beta are behind.
    CHECK(f.federation.resolve_for_group("t", "g", 13).name == "beta");
}

TEST_CASE("messages produced during the drain reach the new placement") {
    Fixture f;
    f.federation.create_logical_topic_on("t", TopicConfig{1, {}, false}, "alpha");
    TopicPartition tp{"t", 0};
    f.alpha.produce("t", std::nullopt, "old", meta(1), 0);
    f.federation.migrate_topic("t", "beta", {"g"}, 1);
    ClusterId target = f.federation.resolve_for_produce("t");
    f.federation.cluster(target).produce("t", std::nullopt, "new", meta(2), 1);
    // Frozen high was 1; committing past it flips the group.
    f.alpha.commit("g", tp, 1);
    CHECK(f.federation.resolve_for_group("t", "g", 2).name == "beta");
    auto fresh = f.beta.fetch(tp, 0, 10);
    REQUIRE(fresh.size() == 1);
    CHECK(fresh[0].second.payload == "new");
}

TEST_CASE("groups outside the coordinated set follow the new placement at once") {
    Fixture f;
    f.federation.create_logical_topic_on("t", TopicConfig{1, {}, false}, "alpha");
    f.alpha.produce("t", std::nullopt, "x", meta(1), 0);
    f.federation.migrate_topic("t", "beta", {"g"}, 1);
    CHECK(f.federation.resolve_for_group("t", "other", 1).name == "beta");
    CHECK(f.federation.resolve_for_group("t", "g", 1).name == "alpha");
}

TEST_CASE("a migration with no coordinated groups completes instantly") {
    Fixture f;
    f.federation.create_logical_topic_on("t", TopicConfig{1, {}, false}, "alpha");
    f.federation.migrate_topic("t", "beta", {}, 1);
    CHECK_FALSE(f.federation.migration_in_progress("t"));
    CHECK(f.federation.resolve_for_produce("t").name == "beta");
}

TEST_CASE("migration preconditions are enforced") {
    Fixture f;
    f.federation.create_logical_topic_on("t", TopicConfig{1, {}, false}, "alpha");
    CHECK(code_of([&] { f.federation.migrate_topic("t", "gamma", {}, 0); }) ==
          Errc::UnknownCluster);
    CHECK(code_of([&] { f.federation.migrate_topic("t", "alpha", {}, 0); }) ==
          Errc::InvalidMigration);
    CHECK(code_of([&] { f.federation.migrate_topic("nope", "beta", {}, 0); }) ==
          Errc::UnknownTopic);
    f.federation.migrate_topic("t", "beta", {"g"}, 0);
    CHECK(code_of([&] { f.federation.migrate_topic("t", "alpha", {}, 1); }) ==
          Errc::MigrationInProgress);
}

TEST_CASE("a group that committed nothing drains only an empty topic instantly") {
    Fixture f;
    f.federation.create_logical_topic_on("t", TopicConfig{1, {}, false}, "alpha");
    // Nothing produced: frozen high is 0, so the group switches on first resolve.
    f.federation.migrate_topic("t", "beta", {"g"}, 1);
    CHECK(f.federation.resolve_for_group("t", "g", 1).name == "beta");
    CHECK_FALSE(f.federation.migration_in_progress("t"));
}
