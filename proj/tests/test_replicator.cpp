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
#include "fedstream/replicator.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

using namespace fedstream;

namespace {

struct Fixture {
    Cluster src{ClusterId{"north", "src"}};
    Cluster dst{ClusterId{"south", "dst"}};
    OffsetMappingStore store;
    Replicator replicator;
    Tick now = 0;

    explicit Fixture(std::uint32_t partitions = 2, std::uint64_t interval = 100)
        : replicator(store, [this](const ClusterId& id) -> Cluster& {
              return id.name == "src" ? src : dst;
          }) {
        TopicConfig config{partitions, {}, false};
        src.create_topic("t", config);
        dst.create_topic("t", config);
        replicator.add_route(ReplicationRoute{"r", src.id(), dst.id(), "t", interval});
    }

    void produce(std::uint64_t count) {
        for (std::uint64_t i = 0; i < count; ++i) {
            src.produce("t", std::nullopt, "m", AuditMeta{MessageId{0, next_id}, now, "s", "1"},
                        now);
            ++next_id;
        }
    }

    std::uint64_t step_all() {
        std::uint64_t copied = 0;
        for (const std::string& worker : replicator.active_workers()) {
            copied += replicator.replicate_step(worker, now);
        }
        ++now;
        return copied;
    }

    void drain(int limit = 500) {
        for (int i = 0; i < limit && !replicator.all_caught_up(); ++i) {
            step_all();
        }
        CHECK(replicator.all_caught_up());
    }

    std::uint64_t next_id = 1;
};

// All balanced assignments reachable by brute force, used to prove the
// sticky rebalance moves the minimum number of partitions.
std::uint64_t brute_force_min_moves(const std::vector<RoutePartition>& partitions,
                                    const Assignment& current,
                                    const std::vector<std::string>& workers) {
    std::uint64_t best = partitions.size() + 1;
    std::vector<std::size_t> pick(partitions.size(), 0);
    while (true) {
        std::map<std::string, std::uint64_t> load;
        std::uint64_t moves = 0;
        for (std::size_t i = 0; i < partitions.size(); ++i) {
            const std::string& worker = workers[pick[i]];
            ++load[worker];
            auto it = current.find(partitions[i]);
            if (it != current.end() && it->second != worker) {
                ++moves;
            }
            if (it == current.end()) {
                ++moves; // unassigned partitions count as placements
            }
        }
        std::uint64_t lo = partitions.size(), hi = 0;
        for (const std::string& worker : workers) {
            std::uint64_t l = load.contains(worker) ? load.at(worker) : 0;
            lo = std::min(lo, l);
            hi = std::max(hi, l);
        }
        if (hi - lo <= 1) {
            best = std::min(best, moves);
        }
        std::size_t i = 0;
        for (; i < pick.size(); ++i) {
            if (++pick[i] < workers.size()) {
                break;
            }
            pick[i] = 0;
        }
        if (i == pick.size()) {
            break;
        }
    }
    return best;
}

std::uint64_t moves_between(const Assignment& before, const Assignment& after) {
    std::uint64_t moves = 0;
    for (const auto& [rp, worker] : after) {
        auto it = before.find(rp);
        if (it == before.end() || it->second != worker) {
            ++moves;
        }
    }
    return moves;
}

std::vector<RoutePartition> make_partitions(std::uint32_t count) {
    std::vector<RoutePartition> partitions;
    for (std::uint32_t p = 0; p < count; ++p) {
        partitions.emplace_back("r", p);
    }
    return partitions;
}

} // namespace

TEST_CASE("rebalance splits partitions evenly and deterministically") {
    auto partitions = make_partitions(8);
    Assignment a = rebalance_assignments(partitions, {}, {"w1", "w2"});
    std::map<std::string, int> load;
    for (const auto& [rp, worker] : a) {
        ++load[worker];
    }
    CHECK(load["w1"] == 4);
    CHECK(load["w2"] == 4);
    CHECK(a == rebalance_assignments(partitions, {}, {"w1", "w2"}));
}

TEST_CASE("adding a worker moves only the excess partitions") {
    auto partitions = make_partitions(8);
    Assignment before = rebalance_assignments(partitions, {}, {"w1", "w2"});
    Assignment after = rebalance_assignments(partitions, before, {"w1", "w2", "w3"});
    CHECK(moves_between(before, after) == 2); // 4+4 -> 3+3+2: exactly two move
    std::map<std::string, int> load;
    for (const auto& [rp, worker] : after) {
        ++load[worker];
    }
    CHECK(load["w3"] == 2);
}

TEST_CASE("removing a worker moves only its orphans") {
    auto partitions = make_partitions(8);
    Assignment before = rebalance_assignments(partitions, {}, {"w1", "w2", "w3"});
    Assignment after = rebalance_assignments(partitions, before, {"w1", "w3"});
    std::uint64_t orphans = 0;
    for (const auto& [rp, worker] : before) {
        if (worker == "w2") {
            ++orphans;
        }
    }
    CHECK(moves_between(before, after) == orphans);
    for (const auto& [rp, worker] : before) {
        if (worker != "w2") {
            CHECK(after.at(rp) == worker); // survivors keep their partitions
        }
    }
}

TEST_CASE("rebalance is a no-op when already balanced") {
    auto partitions = make_partitions(7);
    Assignment before = rebalance_assignments(partitions, {}, {"w1", "w2", "w3"});
    CHECK(moves_between(before, rebalance_assignments(partitions, before,
                                                      {"w1", "w2", "w3"})) == 0);
}

TEST_CASE("rebalance matches the brute-force minimum on small instances") {
    std::vector<std::string> workers{"w1", "w2", "w3"};
    for (std::uint32_t parts = 1; parts <= 6; ++parts) {
        auto partitions = make_partitions(parts);
        // Start from a deliberately skewed assignment: everything on w1.
        Assignment skewed;
        for (const auto& rp : partitions) {
            skewed[rp] = "w1";
        }
        for (std::size_t n_workers = 1; n_workers <= workers.size(); ++n_workers) {
            std::vector<std::string> subset(workers.begin(), workers.begin() + n_workers);
            std::set<std::string> active(subset.begin(), subset.end());
            Assignment result = rebalance_assignments(partitions, skewed, active);
            std::map<std::string, std::uint64_t> load;
            for (const auto& [rp, worker] : result) {
                CHECK(active.contains(worker));
                ++load[worker];
            }
            std::uint64_t lo = parts, hi = 0;
            for (const std::string& worker : subset) {
                std::uint64_t l = load.contains(worker) ? load.at(worker) : 0;
                lo = std::min(lo, l);
                hi = std::max(hi, l);
            }
            CHECK(hi - lo <= 1);
            CHECK(moves_between(skewed, result) ==
                  brute_force_min_moves(partitions, skewed, subset));
        }
    }
}

TEST_CASE("rebalance with no workers throws") {
    CHECK_THROWS_AS(rebalance_assignments(make_partitions(2), {}, {}), SimError);
}

TEST_CASE("replication copies to the same partition index in order") {
    Fixture f;
    f.replicator.set_workers({"w1"}, {}, 100);
    f.produce(10);
    f.drain();
    for (std::uint32_t p = 0; p < 2; ++p) {
        TopicPartition tp{"t", p};
        auto from_src = f.src.fetch(tp, 0, 100);
        auto from_dst = f.dst.fetch(tp, 0, 100);
        REQUIRE(from_src.size() == from_dst.size());
        for (std::size_t i = 0; i < from_src.size(); ++i) {
            CHECK(from_src[i].second.audit.message_id ==
                  from_dst[i].second.audit.message_id);
        }
    }
}

TEST_CASE("the per-tick budget caps copies and round-robins partitions") {
    Fixture f;
    f.replicator.set_workers({"w1"}, {}, 3);
    f.produce(10); // 5 per partition
    CHECK(f.replicator.replicate_step("w1", 0) == 3);
    // One message per assigned partition per round: 2, then 1 more.
    CHECK(f.replicator.cursor("r", 0) + f.replicator.cursor("r", 1) == 3);
    CHECK(std::max(f.replicator.cursor("r", 0), f.replicator.cursor("r", 1)) == 2);
}

TEST_CASE("checkpoints land every interval and at the final flush") {
    Fixture f(1, 100);
    f.replicator.set_workers({"w1"}, {}, 60);
    std::vector<std::pair<Offset, Offset>> checkpoints;
    f.replicator.on_checkpoint = [&](const OffsetCheckpoint& checkpoint) {
        checkpoints.emplace_back(checkpoint.src_offset, checkpoint.dst_offset);
    };
    f.produce(250);
    f.drain();
    REQUIRE(checkpoints.size() == 2);
    CHECK(checkpoints[0] == std::pair<Offset, Offset>{100, 100});
    CHECK(checkpoints[1] == std::pair<Offset, Offset>{200, 200});
    CHECK(f.replicator.flush_checkpoints(f.now) == 1);
    REQUIRE(checkpoints.size() == 3);
    CHECK(checkpoints[2] == std::pair<Offset, Offset>{250, 250});
    CHECK(f.replicator.flush_checkpoints(f.now) == 0); // nothing new to record
    CHECK(f.store.size() == 3);
}

TEST_CASE("an unavailable destination stalls the route without losing place") {
    Fixture f;
    f.replicator.set_workers({"w1"}, {}, 100);
    f.produce(4);
    f.dst.set_available(false);
    CHECK(f.replicator.replicate_step("w1", 0) == 0);
    CHECK(f.replicator.cursor("r", 0) == 0);
    f.dst.set_available(true);
    f.drain();
    CHECK(f.dst.watermarks(TopicPartition{"t", 0}).second == 2);
}

TEST_CASE("expired source offsets surface as data loss and skip ahead") {
    Cluster src{ClusterId{"north", "src"}};
    Cluster dst{ClusterId{"south", "dst"}};
    OffsetMappingStore store;
    Replicator replicator(store, [&](const ClusterId& id) -> Cluster& {
        return id.name == "src" ? src : dst;
    });
    src.create_topic("t", TopicConfig{1, std::uint64_t{5}, false});
    dst.create_topic("t", TopicConfig{1, {}, false});
    replicator.add_route(ReplicationRoute{"r", src.id(), dst.id(), "t", 100});
    replicator.set_workers({"w1"}, {}, 100);
    for (std::uint64_t i = 1; i <= 3; ++i) {
        src.produce("t", std::nullopt, "m", AuditMeta{MessageId{0, i}, 0, "s", "1"}, 0);
    }
    src.enforce_retention(100); // everything below offset 3 expires
    std::vector<std::uint64_t> losses;
    replicator.on_data_loss = [&](const ReplicationRoute&, std::uint32_t, std::uint64_t lost,
                                  Tick) { losses.push_back(lost); };
    CHECK(replicator.replicate_step("w1", 101) == 0);
    CHECK(losses == std::vector<std::uint64_t>{3});
    CHECK(replicator.cursor("r", 0) == 3);
    src.produce("t", std::nullopt, "m", AuditMeta{MessageId{0, 4}, 101, "s", "1"}, 101);
    CHECK(replicator.replicate_step("w1", 102) == 1);
    auto copied = dst.fetch(TopicPartition{"t", 0}, 0, 10);
    REQUIRE(copied.size() == 1);
    CHECK(copied[0].second.audit.message_id == MessageId{0, 4});
}

TEST_CASE("a crash rewinds orphans to the checkpoint, duplicating under the interval") {
    Fixture f(1, 10);
    f.replicator.set_workers({"w1", "w2"}, {}, 100);
    std::vector<std::string> reasons;
    std::vector<std::uint64_t> move_counts;
    f.replicator.on_rebalance = [&](std::uint64_t moves, const std::string& reason, Tick) {
        reasons.push_back(reason);
        move_counts.push_back(moves);
    };
    f.produce(25);
    f.drain();
    CHECK(f.dst.watermarks(TopicPartition{"t", 0}).second == 25);
    const std::string owner = f.replicator.assignment().at(RoutePartition{"r", 0});
    const std::string survivor = owner == "w1" ? "w2" : "w1";
    f.replicator.crash_worker(owner, f.now);
    REQUIRE(reasons.size() == 1);
    CHECK(reasons[0] == "worker_crash");
    CHECK(move_counts[0] == 1);
    CHECK(f.replicator.active_workers() == std::set<std::string>{survivor});
    CHECK(f.replicator.assignment().at(RoutePartition{"r", 0}) == survivor);
    // Cursor rewound to the last checkpoint (20), not to zero.
    CHECK(f.replicator.cursor("r", 0) == 20);
    f.drain();
    // Offsets 20..24 were copied twice: 5 duplicates, bounded by interval - 1.
    CHECK(f.dst.watermarks(TopicPartition{"t", 0}).second == 30);
    CHECK(30 - 25 <= 10 - 1);
    CHECK_THROWS_AS(f.replicator.crash_worker(owner, f.now), SimError); // already gone
}

TEST_CASE("crashing the last worker leaves the routes unserved") {
    Fixture f;
    f.replicator.set_workers({"w1"}, {}, 100);
    f.produce(2);
    bool rebalanced = false;
    f.replicator.on_rebalance = [&](std::uint64_t moves, const std::string& reason, Tick) {
        rebalanced = true;
        CHECK(moves == 0);
        CHECK(reason == "worker_crash");
    };
    f.replicator.crash_worker("w1", 0);
    CHECK(rebalanced);
    CHECK(f.replicator.active_workers().empty());
    CHECK_FALSE(f.replicator.all_caught_up());
}

TEST_CASE("drop filter skips messages without copying them") {
    Fixture f(1, 100);
    f.replicator.set_workers({"w1"}, {}, 100);
    std::vector<std::uint64_t> dropped;
    f.replicator.drop_filter = [](const std::string&, const Message& message, Tick) {
        return message.audit.message_id.lo == 2;
    };
    f.replicator.on_dropped = [&](const ReplicationRoute&, const Message& message, Tick) {
        dropped.push_back(message.audit.message_id.lo);
    };
    f.produce(3);
    f.drain();
    CHECK(dropped == std::vector<std::uint64_t>{2});
    auto copied = f.dst.fetch(TopicPartition{"t", 0}, 0, 10);
    REQUIRE(copied.size() == 2);
    CHECK(copied[0].second.audit.message_id == MessageId{0, 1});
    CHECK(copied[1].second.audit.message_id == MessageId{0, 3});
}

TEST_CASE("burst redistribution promotes standbys only under lag pressure") {
    Fixture f(4, 1000);
    f.replicator.set_workers({"w1"}, {"w2"}, 4);
    std::vector<std::string> reasons;
    f.replicator.on_rebalance = [&](std::uint64_t moves, const std::string& reason, Tick) {
        reasons.push_back(reason);
        CHECK(moves > 0);
    };
    f.produce(40);
    CHECK(f.replicator.redistribute_on_burst(100, 0) == 0); // lag 40 under threshold
    CHECK(reasons.empty());
    f.produce(80);
    CHECK(f.replicator.redistribute_on_burst(100, 0) > 0); // lag 120 over threshold
    REQUIRE(reasons.size() == 1);
    CHECK(reasons[0] == "burst");
    CHECK(f.replicator.active_workers() == std::set<std::string>{"w1", "w2"});
    CHECK(f.replicator.standby_workers().empty());
    f.drain();
    CHECK(f.replicator.worker_lag("w1") == 0);
    CHECK(f.replicator.worker_lag("w2") == 0);
}

TEST_CASE("routes must connect equal partition counts") {
    Cluster src{ClusterId{"a", "src"}};
    Cluster dst{ClusterId{"b", "dst"}};
    OffsetMappingStore store;
    Replicator replicator(store, [&](const ClusterId& id) -> Cluster& {
        return id.name == "src" ? src : dst;
    });
    src.create_topic("t", TopicConfig{2, {}, false});
    dst.create_topic("t", TopicConfig{3, {}, false});
    CHECK_THROWS_AS(
        replicator.add_route(ReplicationRoute{"r", src.id(), dst.id(), "t", 100}), SimError);
}
