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
#include "fedstream/core.hpp"

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>

namespace fedstream {

/// Metadata layer presenting the clusters of one region as a single logical
/// cluster. Clients resolve topic names here instead of holding cluster
/// addresses, which lets topics move between physical clusters without
/// client restarts.
///
/// Live migration: producers follow the new placement immediately; each
/// consumer group keeps reading the old placement until its committed
/// offsets reach the high watermarks frozen at migration start, then
/// switches to the new placement at offset 0.
class Federation {
public:
    explicit Federation(std::string region) : region_(std::move(region)) {}

    const std::string& region() const { return region_; }

    /// node_count below max_nodes marks the cluster placeable; a cluster at
    /// the cap only serves what it already hosts.
    void add_cluster(const std::string& name, int node_count, int max_nodes, Cluster* handle);

    bool has_cluster(const std::string& name) const;
    Cluster& cluster(const std::string& name) const;
    Cluster& cluster(const ClusterId& id) const;

    /// Places the topic on the placeable cluster hosting the fewest logical
    /// topics; ties break to the lexicographically smallest cluster id.
    ClusterId create_logical_topic(const std::string& name, const TopicConfig& config);

    /// Places the topic on an explicitly chosen cluster, bypassing the
    /// capacity rule. Scenario setup uses this for fixed topologies.
    ClusterId create_logical_topic_on(const std::string& name, const TopicConfig& config,
                                      const std::string& cluster_name);

    bool has_topic(const std::string& name) const;
    const TopicConfig& topic_config(const std::string& name) const;

    /// Producer view: always the current placement.
    ClusterId resolve_for_produce(const std::string& topic) const;

    /// Consumer view: a draining group stays on the old placement until its
    /// commits reach the frozen high watermarks, then flips permanently.
    /// The flip is evaluated lazily on resolve.
    ClusterId resolve_for_group(const std::string& topic, const std::string& group, Tick now);

    /// Starts a live migration. The new placement is created fresh with the
    /// same config; produces route there immediately; `groups` drain the old
    /// placement first. At most one migration per topic may be in flight.
    void migrate_topic(const std::string& topic, const std::string& to_cluster,
                       const std::set<std::string>& groups, Tick now);

    bool migration_in_progress(const std::string& topic) const;

    /// Invoked when a draining group's switch to the new placement becomes
    /// visible. Wired up by the harness for the report timeline.
    std::function<void(const std::string& topic, const std::string& group, Tick now)>
        on_group_switched;

private:
    enum class SwitchState { Draining, Switched };

    struct Migration {
        ClusterId old_cluster;
        std::map<std::uint32_t, Offset> frozen_high;
        std::map<std::string, SwitchState> groups;
    };

    struct Record {
        ClusterId current;
        TopicConfig config;
        std::optional<Migration> migration;
    };

    struct ClusterMeta {
        ClusterId id;
        int node_count = 0;
        int max_nodes = 150;
        std::set<std::string> topics;
        Cluster* handle = nullptr;
    };

    Record& record_ref(const std::string& topic);
    const Record& record_ref(const std::string& topic) const;

    std::string region_;
    std::map<std::string, ClusterMeta> clusters_;
    std::map<std::string, Record> topics_;
};

} // namespace fedstream
