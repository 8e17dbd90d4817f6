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

#pragma once

#include "fedstream/broker.hpp"
#include "fedstream/checkpoint.hpp"
#include "fedstream/core.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace fedstream {

/// One directed copy stream: messages flow from the topic's partitions on
/// the source cluster to the same partition indexes on the destination.
struct ReplicationRoute {
    std::string id;
    ClusterId src_cluster;
    ClusterId dst_cluster;
    std::string topic;
    std::uint64_t checkpoint_interval = 100;
};

using RoutePartition = std::pair<std::string, std::uint32_t>; // (route id, partition)
using Assignment = std::map<RoutePartition, std::string>;     // -> worker id

/// Balanced sticky assignment. Partitions keep their current worker where
/// possible; per-worker counts end up differing by at most one; the number
/// of reassigned partitions is the minimum any balanced assignment allows.
/// Throws NoWorkers when `active` is empty.
Assignment rebalance_assignments(const std::vector<RoutePartition>& partitions,
                                 const Assignment& current,
                                 const std::set<std::string>& active);

/// Cross-cluster replication service: a pool of workers copies route
/// partitions under a per-tick message budget, periodically checkpointing
/// the source-to-destination offset mapping. Worker crashes rebalance the
/// orphaned partitions and restart them from the last checkpoint, which
/// bounds destination duplicates by the checkpoint interval. Sustained lag
/// can be shed onto standby workers, hottest partitions first.
class Replicator {
public:
    Replicator(OffsetMappingStore& store, std::function<Cluster&(const ClusterId&)> cluster_of)
        : store_(store), cluster_of_(std::move(cluster_of)) {}

    /// Validates that both ends exist with equal partition counts.
    void add_route(const ReplicationRoute& route);

    void set_workers(const std::vector<std::string>& active,
                     const std::vector<std::string>& standby, std::uint64_t budget_per_tick);

    const Assignment& assignment() const { return assignment_; }
    const std::set<std::string>& active_workers() const { return active_; }
    const std::set<std::string>& standby_workers() const { return standby_; }
    Offset cursor(const std::string& route, std::uint32_t partition) const;

    /// Copies up to the worker's budget, one message per assigned partition
    /// per round. An unreachable end leaves the cursor where it is.
    std::uint64_t replicate_step(const std::string& worker, Tick now);

    /// Removes a crashed worker; its partitions move to survivors and their
    /// cursors rewind to the last checkpoint (never inspecting dst state).
    void crash_worker(const std::string& worker, Tick now);

    /// Moves partitions, largest lag first, from workers whose total lag
    /// exceeds the threshold onto promoted standby workers. Returns the
    /// number of partitions moved; promoted workers become active.
    std::uint64_t redistribute_on_burst(std::uint64_t lag_threshold, Tick now);

    /// Final checkpoints at quiescence for cursors past their last recorded
    /// checkpoint. Returns how many were written.
    std::uint64_t flush_checkpoints(Tick now);

    bool all_caught_up() const;
    std::uint64_t worker_lag(const std::string& worker) const;
    std::uint64_t partition_lag(const RoutePartition& rp) const;

    // Harness hooks; all optional.
    std::function<bool(const std::string& route, const Message&, Tick now)> drop_filter;
    std::function<void(const ReplicationRoute&, const TopicPartition& dst_tp, const Message&,
                       Offset dst_offset, Tick now)>
        on_copied;
    std::function<void(const ReplicationRoute&, const Message&, Tick now)> on_dropped;
    std::function<void(const ReplicationRoute&, std::uint32_t partition, std::uint64_t lost,
                       Tick now)>
        on_data_loss;
    std::function<void(const OffsetCheckpoint&)> on_checkpoint;
    std::function<void(std::uint64_t moves, const std::string& reason, Tick now)> on_rebalance;

private:
    struct LastCheckpoint {
        Offset src = 0;
        Offset dst = 0;
        bool any = false;
    };

    std::vector<RoutePartition> all_partitions() const;
    const ReplicationRoute& route_ref(const std::string& id) const;
    void maybe_checkpoint(const RoutePartition& rp, Tick now);

    OffsetMappingStore& store_;
    std::function<Cluster&(const ClusterId&)> cluster_of_;
    std::map<std::string, ReplicationRoute> routes_;
    std::set<std::string> active_;
    std::set<std::string> standby_;
    std::uint64_t budget_ = 100;
    Assignment assignment_;
    std::map<RoutePartition, Offset> cursors_;
    std::map<RoutePartition, LastCheckpoint> last_checkpoint_;
};

} // namespace fedstream
