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

#include "fedstream/core.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fedstream {

/// Parsed scenario file. Structure mirrors the JSON schema; see README for
/// the field-by-field description. Parsing is strict: unknown keys, wrong
/// types and dangling references raise ConfigError with the JSON path.

struct ClusterSpec {
    std::string name;
    int node_count = 0;
    int max_nodes = 150;
};

struct RegionSpec {
    std::string name;
    std::vector<ClusterSpec> clusters;
};

/// Where one copy of a topic lives. A bare `federated_region` places by the
/// capacity rule; region plus `cluster` pins the placement; a bare `cluster`
/// creates a direct, non-federated copy (aggregate clusters use this).
struct PlacementSpec {
    std::optional<std::string> federated_region;
    std::optional<std::string> cluster;
};

struct TripSpec {
    std::vector<std::string> geofences;
    std::uint32_t demand_pct = 50;
    Tick late_by = 0;
};

struct ProducerSpec {
    std::optional<std::string> region;  // produce through this region's federation
    std::optional<std::string> cluster; // or produce straight to this cluster
    std::uint64_t rate = 0;             // messages per tick in [from, until)
    Tick from = 0;
    Tick until = 0;
    std::vector<std::string> keys; // empty selects keyless round-robin
    std::optional<TripSpec> trips; // trip payloads instead of opaque ones
    std::string service = "svc";
    std::string tier = "1";
};

struct MigrateSpec {
    Tick at = 0;
    std::string region;
    std::string to_cluster;
};

struct AuditSpec {
    Tick window_ticks = 0;
    Tick grace_ticks = 0;
    std::vector<std::string> stages; // "produced" or "cluster:<name>"
};

struct TopicSpec {
    std::string name;
    std::uint32_t partitions = 1;
    std::optional<std::uint64_t> retention_ticks;
    bool lossless = false;
    std::vector<PlacementSpec> placements;
    std::vector<ProducerSpec> producers;
    std::optional<MigrateSpec> migrate;
    std::optional<AuditSpec> audit;
};

struct RouteSpec {
    std::string id;
    std::string src; // cluster names; unique across regions by validation
    std::string dst;
    std::string topic;
    std::uint64_t checkpoint_interval = 100;
};

struct WorkerSpec {
    std::string name;
    bool standby = false;
};

struct WorkersSpec {
    std::vector<WorkerSpec> pool;
    std::uint64_t budget = 100;
    std::optional<std::uint64_t> lag_threshold; // enables burst shedding
};

struct BehaviorSpec {
    std::string type; // always_ack | always_fail | fail_first_k | fail_ids_list
    std::uint32_t k = 0;
    std::vector<std::uint64_t> ids;
};

struct DlqActionSpec {
    Tick at = 0;
    std::string action; // merge | purge
};

struct ProxyConsumerSpec {
    std::string group;
    std::string topic;
    std::string region;
    std::uint32_t window = 1;
    std::uint32_t max_retries = 0;
    Tick backoff_ticks = 1;
    Tick processing_delay = 1;
    std::string endpoint;
    BehaviorSpec behavior;
    std::vector<DlqActionSpec> dlq_actions;
};

struct ApFailoverSpec {
    Tick at = 0;
    std::string to;
};

struct ApConsumerSpec {
    std::string name; // doubles as the consumer group
    std::string topic;
    std::map<std::string, std::string> cluster_by_region;
    std::string primary_region;
    std::uint64_t rate = 1;
    Tick sync_interval = 1;
    std::optional<ApFailoverSpec> failover;
};

struct PollConsumerSpec {
    std::string group;
    std::string topic;
    std::string cluster;
    std::uint64_t rate = 1;
};

struct ConsumerSpec {
    std::string kind; // proxy | active_passive | poll
    std::optional<ProxyConsumerSpec> proxy;
    std::optional<ApConsumerSpec> active_passive;
    std::optional<PollConsumerSpec> poll;
};

struct PipelineInstanceSpec {
    std::string region;
    std::string cluster;
};

struct SetPrimarySpec {
    Tick at = 0;
    std::string region;
};

struct PipelineSpec {
    std::string service;
    std::string topic;
    Tick window_ticks = 0;
    Tick grace_ticks = 0;
    std::vector<PipelineInstanceSpec> instances;
    std::string primary_region;
    std::vector<SetPrimarySpec> set_primary;
};

struct FaultSpec {
    std::string kind; // cluster_down | region_down | worker_crash |
                      // endpoint_behavior_change | drop_message_ids
    std::string target;
    Tick from = 0;
    Tick until = 0; // point faults have until == from
    std::vector<std::uint64_t> ids;
    std::optional<BehaviorSpec> behavior;
};

struct ScenarioConfig {
    std::uint64_t seed = 0;
    Tick run_until = 0;
    std::vector<RegionSpec> regions;
    std::vector<TopicSpec> topics;
    std::vector<RouteSpec> routes;
    WorkersSpec workers;
    std::vector<ConsumerSpec> consumers;
    std::vector<PipelineSpec> pipelines;
    std::vector<FaultSpec> faults;
};

/// Parses and validates scenario JSON text. Throws ConfigError whose message
/// starts with the path of the offending field.
ScenarioConfig parse_scenario_text(const std::string& text);

/// Reads the file and parses it. Throws ConfigError when unreadable.
ScenarioConfig load_scenario_file(const std::string& path);

} // namespace fedstream
