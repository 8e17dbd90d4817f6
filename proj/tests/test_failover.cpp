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
#include "fedstream/failover.hpp"

#include <functional>

using namespace fedstream;

namespace {

Errc code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const SimError& error) {
        return error.code();
    }
    FAIL("expected a SimError");
    return Errc::ConfigError;
}

OffsetCheckpoint cp(Offset src, Offset dst) {
    return OffsetCheckpoint{"r", TopicPartition{"t", 0}, src, dst, 0};
}

// One source feeding two destination regions, with real checkpoints laid
// down by hand: (100, 100) and (200, 200) on both routes.
struct SyncFixture {
    Cluster src{ClusterId{"origin", "src"}};
    Cluster east{ClusterId{"east", "east-agg"}};
    Cluster west{ClusterId{"west", "west-agg"}};
    OffsetMappingStore store;
    OffsetTranslator translator;
    OffsetSyncService sync;

    SyncFixture()
        : translator(store, [this](const ClusterId& id) -> Cluster& { return by_id(id); }),
          sync(translator, [this](const ClusterId& id) -> Cluster& { return by_id(id); }) {
        TopicConfig config{1, 10, true};
        src.create_topic("t", config);
        east.create_topic("t", config);
        west.create_topic("t", config);
        translator.add_route(ReplicationRoute{"to-east", src.id(), east.id(), "t", 100});
        translator.add_route(ReplicationRoute{"to-west", src.id(), west.id(), "t", 100});
        // Both copies materialized identically far enough for the offsets.
        for (std::uint64_t i = 0; i < 260; ++i) {
            AuditMeta meta{MessageId{0, i + 1}, 0, "s", "1"};
            src.produce("t", std::nullopt, "m", meta, 0);
            east.append(TopicPartition{"t", 0}, Message{meta, std::nullopt, "m"}, 0);
            west.append(TopicPartition{"t", 0}, Message{meta, std::nullopt, "m"}, 0);
        }
        for (Offset mark : {100u, 200u}) {
            store.add(OffsetCheckpoint{"to-east", TopicPartition{"t", 0}, mark, mark, 0});
            store.add(OffsetCheckpoint{"to-west", TopicPartition{"t", 0}, mark, mark, 0});
        }
        sync.register_consumer({"c", "t",
                                {{"east", east.id()}, {"west", west.id()}},
                                "east"});
    }

    Cluster& by_id(const ClusterId& id) {
        if (id.name == "src") {
            return src;
        }
        return id.name == "east-agg" ? east : west;
    }
};

} // namespace

TEST_CASE("checkpoints must increase strictly in both coordinates") {
    OffsetMappingStore store;
    store.add(cp(100, 90));
    CHECK(code_of([&] { store.add(cp(100, 95)); }) == Errc::InvalidCheckpoint);
    CHECK(code_of([&] { store.add(cp(150, 90)); }) == Errc::InvalidCheckpoint);
    CHECK(code_of([&] { store.add(cp(90, 100)); }) == Errc::InvalidCheckpoint);
    store.add(cp(150, 120));
    CHECK(store.size() == 2);
    CHECK(store.last("r", TopicPartition{"t", 0})->src_offset == 150);
}

TEST_CASE("floor lookups return the largest checkpoint at or below the query") {
    OffsetMappingStore store;
    store.add(cp(100, 90));
    store.add(cp(200, 185));
    TopicPartition tp{"t", 0};
    CHECK(store.floor_dst("r", tp, 99) == std::nullopt);
    CHECK(store.floor_dst("r", tp, 100) == Offset{90});
    CHECK(store.floor_dst("r", tp, 150) == Offset{90});
    CHECK(store.floor_dst("r", tp, 200) == Offset{185});
    CHECK(store.floor_dst("r", tp, 10000) == Offset{185});
    CHECK(store.floor_src_for_dst("r", tp, 89) == std::nullopt);
    CHECK(store.floor_src_for_dst("r", tp, 90) == Offset{100});
    CHECK(store.floor_src_for_dst("r", tp, 184) == Offset{100});
    CHECK(store.floor_src_for_dst("r", tp, 185) == Offset{200});
    CHECK(store.find("r", TopicPartition{"t", 1}) == nullptr);
}

TEST_CASE("offset translation floors to a checkpoint, never interpolating") {
    SyncFixture f;
    TopicPartition tp{"t", 0};
    CHECK(f.translator.translate_offset("to-east", tp, 150) == 100);
    CHECK(f.translator.translate_offset("to-east", tp, 200) == 200);
    CHECK(f.translator.translate_offset("to-east", tp, 260) == 200);
    // Below the first checkpoint: the destination low watermark, which
    // re-reads rather than skips.
    CHECK(f.translator.translate_offset("to-east", tp, 50) == 0);
    f.east.truncate_readable(tp); // low watermark moves to 260
    CHECK(f.translator.translate_offset("to-east", tp, 50) == 260);
}

TEST_CASE("translation is monotone in the source offset") {
    SyncFixture f;
    TopicPartition tp{"t", 0};
    Offset previous = 0;
    for (Offset query = 0; query <= 260; query += 10) {
        Offset mapped = f.translator.translate_offset("to-west", tp, query);
        CHECK(mapped >= previous);
        CHECK(mapped <= query); // a floor can only be at or behind the source
        previous = mapped;
    }
}

TEST_CASE("sync translates the active commit into every standby region") {
    SyncFixture f;
    TopicPartition tp{"t", 0};
    f.east.commit("c", tp, 150);
    CHECK(f.sync.sync_consumer("c", 10) == 1);
    // src position for east dst 150 floors to 100; west copy of src 100 is 100.
    CHECK(f.west.committed("c", tp) == 100);
    f.east.commit("c", tp, 230);
    CHECK(f.sync.sync_consumer("c", 20) == 1);
    CHECK(f.west.committed("c", tp) == 200);
}

TEST_CASE("sync never regresses a standby commit") {
    SyncFixture f;
    TopicPartition tp{"t", 0};
    f.west.commit("c", tp, 180); // standby already ahead of what sync would write
    f.east.commit("c", tp, 150); // would map to 100
    f.sync.sync_consumer("c", 10);
    CHECK(f.west.committed("c", tp) == 180);
}

TEST_CASE("sync registers the group on the standby even when nothing maps yet") {
    SyncFixture f;
    TopicPartition tp{"t", 0};
    f.east.commit("c", tp, 50); // below the first checkpoint: maps to low (0)
    f.sync.sync_consumer("c", 10);
    // Registration at offset 0 pins the lossless floor there: even with
    // another group done with the whole log, nothing may expire.
    f.west.commit("other", tp, 260);
    CHECK(f.west.enforce_retention(1000000) == 0);
    CHECK(f.west.watermarks(tp).first == 0);
}

TEST_CASE("sync skips unreachable regions instead of failing") {
    SyncFixture f;
    TopicPartition tp{"t", 0};
    f.east.commit("c", tp, 230);
    f.west.set_available(false);
    CHECK(f.sync.sync_consumer("c", 10) == 0);
    f.west.set_available(true);
    CHECK(f.sync.sync_consumer("c", 11) == 1);
    CHECK(f.west.committed("c", tp) == 200);
}

TEST_CASE("failover resumes at the synced offset, not low or high") {
    SyncFixture f;
    TopicPartition tp{"t", 0};
    f.east.commit("c", tp, 230);
    f.sync.sync_consumer("c", 10);
    auto resume = f.sync.failover_consumer("c", "west", 20);
    REQUIRE(resume.size() == 1);
    CHECK(resume[0] == 200);                   // behind the active position (230)...
    CHECK(resume[0] > 0);                      // ...but not a full re-read
    CHECK(resume[0] < f.west.watermarks(tp).second);
    CHECK(f.sync.info("c").current_region == "west");
    CHECK(code_of([&] { f.sync.failover_consumer("c", "west", 21); }) ==
          Errc::AlreadyInRegion);
    // Syncs now flow the other way: west is the active region.
    f.west.commit("c", tp, 260);
    f.sync.sync_consumer("c", 30);
    CHECK(f.east.committed("c", tp) == 230); // forward-only kept the larger value
}

TEST_CASE("failover before any sync restarts from the low watermark") {
    SyncFixture f;
    auto resume = f.sync.failover_consumer("c", "west", 5);
    REQUIRE(resume.size() == 1);
    CHECK(resume[0] == 0);
}

TEST_CASE("unknown consumers and regions are rejected") {
    SyncFixture f;
    CHECK(code_of([&] { f.sync.sync_consumer("nope", 0); }) == Errc::UnknownConsumer);
    CHECK(code_of([&] { f.sync.failover_consumer("c", "north", 0); }) ==
          Errc::UnknownCluster);
}

TEST_CASE("primary labels bump the epoch only on real changes") {
    AllActiveCoordinator coordinator;
    const PrimaryLabel& first = coordinator.set_primary("svc", "east", 0);
    CHECK(first.epoch == 1);
    CHECK(first.primary_region == "east");
    const PrimaryLabel& same = coordinator.set_primary("svc", "east", 5);
    CHECK(same.epoch == 1); // relabeling the current primary is a no-op
    const PrimaryLabel& moved = coordinator.set_primary("svc", "west", 9);
    CHECK(moved.epoch == 2);
    CHECK(moved.primary_region == "west");
    CHECK(coordinator.current("svc").epoch == 2);
    CHECK(coordinator.has_service("svc"));
    CHECK_FALSE(coordinator.has_service("other"));
    CHECK_THROWS_AS(coordinator.current("other"), SimError);
}

TEST_CASE("a dead region cannot become primary") {
    AllActiveCoordinator coordinator;
    coordinator.region_live = [](const std::string& region) { return region != "west"; };
    coordinator.set_primary("svc", "east", 0);
    CHECK(code_of([&] { coordinator.set_primary("svc", "west", 1); }) ==
          Errc::RegionUnavailable);
    CHECK(coordinator.current("svc").primary_region == "east");
}

TEST_CASE("the results store accepts only current-epoch primary writes") {
    AllActiveCoordinator coordinator;
    coordinator.set_primary("svc", "east", 0);
    ResultsStore results(coordinator);
    CHECK(results.write("svc", "east", 1, "k", "v1", 1));
    CHECK_FALSE(results.write("svc", "west", 1, "k", "v2", 1)); // not the primary
    coordinator.set_primary("svc", "west", 2);
    CHECK_FALSE(results.write("svc", "east", 1, "k", "v3", 3)); // stale epoch and region
    CHECK_FALSE(results.write("svc", "west", 1, "k", "v4", 3)); // right region, old epoch
    CHECK(results.write("svc", "west", 2, "k", "v5", 3));
    CHECK(results.accepted_count() == 2);
    CHECK(results.discarded_count() == 3);
    CHECK(results.entries().at("svc").at("k") == "v5");
    REQUIRE(results.log().size() == 5);
    CHECK(results.log()[2].accepted == false);
    CHECK(results.log()[4].accepted == true);
}
