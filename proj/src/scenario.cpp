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

#include "fedstream/scenario.hpp"

#include "fedstream/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>

namespace fedstream {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& message) {
    throw SimError(Errc::ConfigError, path + ": " + message);
}

void expect_object(const json& j, const std::string& path,
                   std::initializer_list<const char*> required,
                   std::initializer_list<const char*> optional) {
    if (!j.is_object()) {
        fail(path, "expected an object");
    }
    for (const auto& [key, value] : j.items()) {
        bool known = std::find_if(required.begin(), required.end(),
                                  [&](const char* k) { return key == k; }) != required.end() ||
                     std::find_if(optional.begin(), optional.end(),
                                  [&](const char* k) { return key == k; }) != optional.end();
        if (!known) {
            fail(path, "unknown key '" + key + "'");
        }
    }
    for (const char* key : required) {
        if (!j.contains(key)) {
            fail(path, std::string("missing key '") + key + "'");
        }
    }
}

const json& get_array(const json& j, const std::string& path, const std::string& key) {
    const json& v = j.at(key);
    if (!v.is_array()) {
        fail(path + "/" + key, "expected an array");
    }
    return v;
}

std::uint64_t get_uint(const json& j, const std::string& path, const std::string& key) {
    const json& v = j.at(key);
    if (!v.is_number_unsigned()) {
        fail(path + "/" + key, "expected an unsigned integer");
    }
    return v.get<std::uint64_t>();
}

std::uint64_t opt_uint(const json& j, const std::string& path, const std::string& key,
                       std::uint64_t fallback) {
    return j.contains(key) ? get_uint(j, path, key) : fallback;
}

std::string get_string(const json& j, const std::string& path, const std::string& key) {
    const json& v = j.at(key);
    if (!v.is_string() || v.get<std::string>().empty()) {
        fail(path + "/" + key, "expected a non-empty string");
    }
    return v.get<std::string>();
}

std::string opt_string(const json& j, const std::string& path, const std::string& key,
                       const std::string& fallback) {
    return j.contains(key) ? get_string(j, path, key) : fallback;
}

bool opt_bool(const json& j, const std::string& path, const std::string& key, bool fallback) {
    if (!j.contains(key)) {
        return fallback;
    }
    const json& v = j.at(key);
    if (!v.is_boolean()) {
        fail(path + "/" + key, "expected a boolean");
    }
    return v.get<bool>();
}

std::vector<std::string> string_list(const json& arr, const std::string& path) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        if (!arr[i].is_string() || arr[i].get<std::string>().empty()) {
            fail(path + "/" + std::to_string(i), "expected a non-empty string");
        }
        out.push_back(arr[i].get<std::string>());
    }
    return out;
}

std::vector<std::uint64_t> uint_list(const json& arr, const std::string& path) {
    std::vector<std::uint64_t> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        if (!arr[i].is_number_unsigned()) {
            fail(path + "/" + std::to_string(i), "expected an unsigned integer");
        }
        out.push_back(arr[i].get<std::uint64_t>());
    }
    return out;
}

BehaviorSpec parse_behavior(const json& j, const std::string& path) {
    expect_object(j, path, {"type"}, {"k", "ids"});
    BehaviorSpec spec;
    spec.type = get_string(j, path, "type");
    if (spec.type != "always_ack" && spec.type != "always_fail" &&
        spec.type != "fail_first_k" && spec.type != "fail_ids_list") {
        fail(path + "/type", "unknown behavior '" + spec.type + "'");
    }
    if (spec.type == "fail_first_k") {
        spec.k = static_cast<std::uint32_t>(get_uint(j, path, "k"));
    } else if (j.contains("k")) {
        fail(path + "/k", "only valid for fail_first_k");
    }
    if (spec.type == "fail_ids_list") {
        spec.ids = uint_list(get_array(j, path, "ids"), path + "/ids");
        if (spec.ids.empty()) {
            fail(path + "/ids", "expected at least one id");
        }
    } else if (j.contains("ids")) {
        fail(path + "/ids", "only valid for fail_ids_list");
    }
    return spec;
}

ProducerSpec parse_producer(const json& j, const std::string& path) {
    expect_object(j, path, {"rate", "from", "until"},
                  {"region", "cluster", "keys", "trips", "service", "tier"});
    ProducerSpec spec;
    if (j.contains("region")) {
        spec.region = get_string(j, path, "region");
    }
    if (j.contains("cluster")) {
        spec.cluster = get_string(j, path, "cluster");
    }
    if (spec.region.has_value() == spec.cluster.has_value()) {
        fail(path, "exactly one of 'region' and 'cluster' is required");
    }
    spec.rate = get_uint(j, path, "rate");
    if (spec.rate == 0) {
        fail(path + "/rate", "expected a positive rate");
    }
    spec.from = get_uint(j, path, "from");
    spec.until = get_uint(j, path, "until");
    if (spec.until <= spec.from) {
        fail(path + "/until", "expected until > from");
    }
    if (j.contains("keys")) {
        spec.keys = string_list(get_array(j, path, "keys"), path + "/keys");
        if (spec.keys.empty()) {
            fail(path + "/keys", "expected at least one key");
        }
    }
    if (j.contains("trips")) {
        const json& t = j.at("trips");
        const std::string tpath = path + "/trips";
        expect_object(t, tpath, {"geofences"}, {"demand_pct", "late_by"});
        TripSpec trips;
        trips.geofences = string_list(get_array(t, tpath, "geofences"), tpath + "/geofences");
        if (trips.geofences.empty()) {
            fail(tpath + "/geofences", "expected at least one geofence");
        }
        trips.demand_pct = static_cast<std::uint32_t>(opt_uint(t, tpath, "demand_pct", 50));
        if (trips.demand_pct > 100) {
            fail(tpath + "/demand_pct", "expected a percentage (0-100)");
        }
        trips.late_by = opt_uint(t, tpath, "late_by", 0);
        spec.trips = std::move(trips);
    }
    spec.service = opt_string(j, path, "service", "svc");
    spec.tier = opt_string(j, path, "tier", "1");
    return spec;
}

TopicSpec parse_topic(const json& j, const std::string& path) {
    expect_object(j, path, {"name", "partitions", "placements"},
                  {"retention_ticks", "lossless", "producers", "migrate", "audit"});
    TopicSpec spec;
    spec.name = get_string(j, path, "name");
    spec.partitions = static_cast<std::uint32_t>(get_uint(j, path, "partitions"));
    if (spec.partitions == 0) {
        fail(path + "/partitions", "expected at least one partition");
    }
    if (j.contains("retention_ticks")) {
        spec.retention_ticks = get_uint(j, path, "retention_ticks");
    }
    spec.lossless = opt_bool(j, path, "lossless", false);
    const json& placements = get_array(j, path, "placements");
    if (placements.empty()) {
        fail(path + "/placements", "expected at least one placement");
    }
    for (std::size_t i = 0; i < placements.size(); ++i) {
        const std::string ppath = path + "/placements/" + std::to_string(i);
        expect_object(placements[i], ppath, {}, {"federated_region", "cluster"});
        PlacementSpec placement;
        if (placements[i].contains("federated_region")) {
            placement.federated_region = get_string(placements[i], ppath, "federated_region");
        }
        if (placements[i].contains("cluster")) {
            placement.cluster = get_string(placements[i], ppath, "cluster");
        }
        if (!placement.federated_region && !placement.cluster) {
            fail(ppath, "expected 'federated_region' and/or 'cluster'");
        }
        spec.placements.push_back(std::move(placement));
    }
    if (j.contains("producers")) {
        const json& producers = get_array(j, path, "producers");
        for (std::size_t i = 0; i < producers.size(); ++i) {
            spec.producers.push_back(
                parse_producer(producers[i], path + "/producers/" + std::to_string(i)));
        }
    }
    if (j.contains("migrate")) {
        const json& m = j.at("migrate");
        const std::string mpath = path + "/migrate";
        expect_object(m, mpath, {"at", "region", "to_cluster"}, {});
        spec.migrate = MigrateSpec{get_uint(m, mpath, "at"), get_string(m, mpath, "region"),
                                   get_string(m, mpath, "to_cluster")};
    }
    if (j.contains("audit")) {
        const json& a = j.at("audit");
        const std::string apath = path + "/audit";
        expect_object(a, apath, {"window_ticks", "stages"}, {"grace_ticks"});
        AuditSpec audit;
        audit.window_ticks = get_uint(a, apath, "window_ticks");
        if (audit.window_ticks == 0) {
            fail(apath + "/window_ticks", "expected a positive window");
        }
        audit.grace_ticks = opt_uint(a, apath, "grace_ticks", 0);
        audit.stages = string_list(get_array(a, apath, "stages"), apath + "/stages");
        if (audit.stages.size() < 2) {
            fail(apath + "/stages", "expected at least two stages");
        }
        spec.audit = std::move(audit);
    }
    return spec;
}

ConsumerSpec parse_consumer(const json& j, const std::string& path) {
    if (!j.is_object() || !j.contains("kind")) {
        fail(path, "expected an object with a 'kind'");
    }
    ConsumerSpec spec;
    spec.kind = get_string(j, path, "kind");
    if (spec.kind == "proxy") {
        expect_object(j, path, {"kind", "group", "topic", "region", "window", "endpoint"},
                      {"max_retries", "backoff_ticks", "processing_delay", "behavior",
                       "dlq_actions"});
        ProxyConsumerSpec p;
        p.group = get_string(j, path, "group");
        p.topic = get_string(j, path, "topic");
        p.region = get_string(j, path, "region");
        p.window = static_cast<std::uint32_t>(get_uint(j, path, "window"));
        if (p.window == 0) {
            fail(path + "/window", "expected a positive window");
        }
        p.max_retries = static_cast<std::uint32_t>(opt_uint(j, path, "max_retries", 0));
        p.backoff_ticks = opt_uint(j, path, "backoff_ticks", 1);
        p.processing_delay = opt_uint(j, path, "processing_delay", 1);
        p.endpoint = get_string(j, path, "endpoint");
        if (j.contains("behavior")) {
            p.behavior = parse_behavior(j.at("behavior"), path + "/behavior");
        } else {
            p.behavior.type = "always_ack";
        }
        if (j.contains("dlq_actions")) {
            const json& actions = get_array(j, path, "dlq_actions");
            for (std::size_t i = 0; i < actions.size(); ++i) {
                const std::string apath = path + "/dlq_actions/" + std::to_string(i);
                expect_object(actions[i], apath, {"at", "action"}, {});
                DlqActionSpec action{get_uint(actions[i], apath, "at"),
                                     get_string(actions[i], apath, "action")};
                if (action.action != "merge" && action.action != "purge") {
                    fail(apath + "/action", "expected 'merge' or 'purge'");
                }
                p.dlq_actions.push_back(std::move(action));
            }
        }
        spec.proxy = std::move(p);
    } else if (spec.kind == "active_passive") {
        expect_object(j, path,
                      {"kind", "name", "topic", "cluster_by_region", "primary_region", "rate",
                       "sync_interval"},
                      {"failover"});
        ApConsumerSpec a;
        a.name = get_string(j, path, "name");
        a.topic = get_string(j, path, "topic");
        const json& map = j.at("cluster_by_region");
        if (!map.is_object() || map.empty()) {
            fail(path + "/cluster_by_region", "expected a non-empty object");
        }
        for (const auto& [region, cluster] : map.items()) {
            if (!cluster.is_string() || cluster.get<std::string>().empty()) {
                fail(path + "/cluster_by_region/" + region, "expected a non-empty string");
            }
            a.cluster_by_region[region] = cluster.get<std::string>();
        }
        a.primary_region = get_string(j, path, "primary_region");
        a.rate = get_uint(j, path, "rate");
        if (a.rate == 0) {
            fail(path + "/rate", "expected a positive rate");
        }
        a.sync_interval = get_uint(j, path, "sync_interval");
        if (a.sync_interval == 0) {
            fail(path + "/sync_interval", "expected a positive interval");
        }
        if (j.contains("failover")) {
            const json& f = j.at("failover");
            const std::string fpath = path + "/failover";
            expect_object(f, fpath, {"at", "to"}, {});
            a.failover = ApFailoverSpec{get_uint(f, fpath, "at"), get_string(f, fpath, "to")};
        }
        spec.active_passive = std::move(a);
    } else if (spec.kind == "poll") {
        expect_object(j, path, {"kind", "group", "topic", "cluster", "rate"}, {});
        PollConsumerSpec p;
        p.group = get_string(j, path, "group");
        p.topic = get_string(j, path, "topic");
        p.cluster = get_string(j, path, "cluster");
        p.rate = get_uint(j, path, "rate");
        if (p.rate == 0) {
            fail(path + "/rate", "expected a positive rate");
        }
        spec.poll = std::move(p);
    } else {
        fail(path + "/kind", "unknown consumer kind '" + spec.kind + "'");
    }
    return spec;
}

PipelineSpec parse_pipeline(const json& j, const std::string& path) {
    expect_object(j, path,
                  {"service", "topic", "window_ticks", "instances", "primary_region"},
                  {"grace_ticks", "set_primary"});
    PipelineSpec spec;
    spec.service = get_string(j, path, "service");
    spec.topic = get_string(j, path, "topic");
    spec.window_ticks = get_uint(j, path, "window_ticks");
    if (spec.window_ticks == 0) {
        fail(path + "/window_ticks", "expected a positive window");
    }
    spec.grace_ticks = opt_uint(j, path, "grace_ticks", 0);
    const json& instances = get_array(j, path, "instances");
    if (instances.empty()) {
        fail(path + "/instances", "expected at least one instance");
    }
    for (std::size_t i = 0; i < instances.size(); ++i) {
        const std::string ipath = path + "/instances/" + std::to_string(i);
        expect_object(instances[i], ipath, {"region", "cluster"}, {});
        spec.instances.push_back(PipelineInstanceSpec{
            get_string(instances[i], ipath, "region"),
            get_string(instances[i], ipath, "cluster")});
    }
    spec.primary_region = get_string(j, path, "primary_region");
    if (j.contains("set_primary")) {
        const json& actions = get_array(j, path, "set_primary");
        for (std::size_t i = 0; i < actions.size(); ++i) {
            const std::string apath = path + "/set_primary/" + std::to_string(i);
            expect_object(actions[i], apath, {"at", "region"}, {});
            spec.set_primary.push_back(SetPrimarySpec{
                get_uint(actions[i], apath, "at"),
                get_string(actions[i], apath, "region")});
        }
    }
    return spec;
}

FaultSpec parse_fault(const json& j, const std::string& path) {
    if (!j.is_object() || !j.contains("kind")) {
        fail(path, "expected an object with a 'kind'");
    }
    FaultSpec spec;
    spec.kind = get_string(j, path, "kind");
    if (spec.kind == "cluster_down" || spec.kind == "region_down") {
        const char* target_key = spec.kind == "cluster_down" ? "cluster" : "region";
        expect_object(j, path, {"kind", target_key, "from", "until"}, {});
        spec.target = get_string(j, path, target_key);
        spec.from = get_uint(j, path, "from");
        spec.until = get_uint(j, path, "until");
        if (spec.until <= spec.from) {
            fail(path + "/until", "expected until > from");
        }
    } else if (spec.kind == "worker_crash") {
        expect_object(j, path, {"kind", "worker", "at"}, {});
        spec.target = get_string(j, path, "worker");
        spec.from = spec.until = get_uint(j, path, "at");
    } else if (spec.kind == "endpoint_behavior_change") {
        expect_object(j, path, {"kind", "endpoint", "at", "behavior"}, {});
        spec.target = get_string(j, path, "endpoint");
        spec.from = spec.until = get_uint(j, path, "at");
        spec.behavior = parse_behavior(j.at("behavior"), path + "/behavior");
    } else if (spec.kind == "drop_message_ids") {
        expect_object(j, path, {"kind", "route", "ids", "from", "until"}, {});
        spec.target = get_string(j, path, "route");
        spec.ids = uint_list(get_array(j, path, "ids"), path + "/ids");
        if (spec.ids.empty()) {
            fail(path + "/ids", "expected at least one id");
        }
        spec.from = get_uint(j, path, "from");
        spec.until = get_uint(j, path, "until");
        if (spec.until <= spec.from) {
            fail(path + "/until", "expected until > from");
        }
    } else {
        fail(path + "/kind", "unknown fault kind '" + spec.kind + "'");
    }
    return spec;
}

/// Referential validation across the parsed structure.
void validate(const ScenarioConfig& cfg) {
    std::map<std::string, std::string> cluster_region; // cluster -> region
    std::set<std::string> regions;
    for (std::size_t r = 0; r < cfg.regions.size(); ++r) {
        const RegionSpec& region = cfg.regions[r];
        const std::string rpath = "/regions/" + std::to_string(r);
        if (!regions.insert(region.name).second) {
            fail(rpath + "/name", "duplicate region '" + region.name + "'");
        }
        for (std::size_t c = 0; c < region.clusters.size(); ++c) {
            const ClusterSpec& cluster = region.clusters[c];
            const std::string cpath = rpath + "/clusters/" + std::to_string(c);
            if (cluster.max_nodes <= 0) {
                fail(cpath + "/max_nodes", "expected a positive node cap");
            }
            if (!cluster_region.emplace(cluster.name, region.name).second) {
                fail(cpath + "/name",
                     "cluster names must be unique across regions: '" + cluster.name + "'");
            }
        }
    }

    auto require_region = [&](const std::string& name, const std::string& path) {
        if (!regions.contains(name)) {
            fail(path, "unknown region '" + name + "'");
        }
    };
    auto require_cluster = [&](const std::string& name, const std::string& path) {
        if (!cluster_region.contains(name)) {
            fail(path, "unknown cluster '" + name + "'");
        }
    };

    std::set<std::string> topic_names;
    for (std::size_t t = 0; t < cfg.topics.size(); ++t) {
        const TopicSpec& topic = cfg.topics[t];
        const std::string tpath = "/topics/" + std::to_string(t);
        if (topic.name.ends_with(".dlq")) {
            fail(tpath + "/name", "'.dlq' suffix is reserved for dead-letter queues");
        }
        if (!topic_names.insert(topic.name).second) {
            fail(tpath + "/name", "duplicate topic '" + topic.name + "'");
        }
    }

    // hosts[topic] collects where copies provably live; capacity placements
    // register at region granularity ("@<region>").
    std::map<std::string, std::set<std::string>> hosts;
    std::map<std::string, std::set<std::string>> federated_in; // topic -> regions

    for (std::size_t t = 0; t < cfg.topics.size(); ++t) {
        const TopicSpec& topic = cfg.topics[t];
        const std::string tpath = "/topics/" + std::to_string(t);
        for (std::size_t p = 0; p < topic.placements.size(); ++p) {
            const PlacementSpec& placement = topic.placements[p];
            const std::string ppath = tpath + "/placements/" + std::to_string(p);
            if (placement.federated_region) {
                require_region(*placement.federated_region, ppath + "/federated_region");
                if (!federated_in[topic.name].insert(*placement.federated_region).second) {
                    fail(ppath, "topic placed twice in region '" +
                                    *placement.federated_region + "'");
                }
            }
            if (placement.cluster) {
                require_cluster(*placement.cluster, ppath + "/cluster");
                if (placement.federated_region &&
                    cluster_region.at(*placement.cluster) != *placement.federated_region) {
                    fail(ppath + "/cluster", "cluster '" + *placement.cluster +
                                                 "' is not in region '" +
                                                 *placement.federated_region + "'");
                }
                if (!hosts[topic.name].insert(*placement.cluster).second) {
                    fail(ppath + "/cluster",
                         "topic placed twice on cluster '" + *placement.cluster + "'");
                }
            } else {
                hosts[topic.name].insert("@" + *placement.federated_region);
            }
        }
    }

    // A cluster provably hosts the topic when pinned or placed directly on
    // it, or when the topic is capacity-placed in the cluster's region.
    auto hosts_topic = [&](const std::string& topic, const std::string& cluster) {
        const auto it = hosts.find(topic);
        if (it == hosts.end()) {
            return false;
        }
        return it->second.contains(cluster) ||
               it->second.contains("@" + cluster_region.at(cluster));
    };

    std::set<std::string> route_ids;
    std::map<std::string, std::set<std::string>> route_dst_clusters; // topic -> dst clusters
    for (std::size_t r = 0; r < cfg.routes.size(); ++r) {
        const RouteSpec& route = cfg.routes[r];
        const std::string rpath = "/routes/" + std::to_string(r);
        if (!route_ids.insert(route.id).second) {
            fail(rpath + "/id", "duplicate route '" + route.id + "'");
        }
        require_cluster(route.src, rpath + "/src");
        require_cluster(route.dst, rpath + "/dst");
        if (route.src == route.dst) {
            fail(rpath + "/dst", "source and destination must differ");
        }
        if (!topic_names.contains(route.topic)) {
            fail(rpath + "/topic", "unknown topic '" + route.topic + "'");
        }
        if (!hosts_topic(route.topic, route.src)) {
            fail(rpath + "/src", "topic '" + route.topic + "' has no placement on '" +
                                     route.src + "'");
        }
        if (!hosts_topic(route.topic, route.dst)) {
            fail(rpath + "/dst", "topic '" + route.topic + "' has no placement on '" +
                                     route.dst + "'");
        }
        if (route.checkpoint_interval == 0) {
            fail(rpath + "/checkpoint_interval", "expected a positive interval");
        }
        route_dst_clusters[route.topic].insert(route.dst);
    }

    std::set<std::string> worker_names;
    std::size_t active_workers = 0;
    for (std::size_t w = 0; w < cfg.workers.pool.size(); ++w) {
        const WorkerSpec& worker = cfg.workers.pool[w];
        const std::string wpath = "/workers/pool/" + std::to_string(w);
        if (!worker_names.insert(worker.name).second) {
            fail(wpath + "/name", "duplicate worker '" + worker.name + "'");
        }
        if (!worker.standby) {
            ++active_workers;
        }
    }
    if (!cfg.routes.empty() && active_workers == 0) {
        fail("/workers/pool", "routes need at least one non-standby worker");
    }
    if (cfg.workers.budget == 0) {
        fail("/workers/budget", "expected a positive budget");
    }

    for (std::size_t t = 0; t < cfg.topics.size(); ++t) {
        const TopicSpec& topic = cfg.topics[t];
        const std::string tpath = "/topics/" + std::to_string(t);
        for (std::size_t p = 0; p < topic.producers.size(); ++p) {
            const ProducerSpec& producer = topic.producers[p];
            const std::string ppath = tpath + "/producers/" + std::to_string(p);
            if (producer.region) {
                require_region(*producer.region, ppath + "/region");
                if (!federated_in[topic.name].contains(*producer.region)) {
                    fail(ppath + "/region", "topic '" + topic.name +
                                                "' is not federated in region '" +
                                                *producer.region + "'");
                }
            } else {
                require_cluster(*producer.cluster, ppath + "/cluster");
                if (!hosts[topic.name].contains(*producer.cluster)) {
                    fail(ppath + "/cluster", "topic '" + topic.name +
                                                 "' has no direct placement on '" +
                                                 *producer.cluster + "'");
                }
            }
        }
        if (topic.migrate) {
            const std::string mpath = tpath + "/migrate";
            require_region(topic.migrate->region, mpath + "/region");
            if (!federated_in[topic.name].contains(topic.migrate->region)) {
                fail(mpath + "/region", "topic '" + topic.name +
                                            "' is not federated in region '" +
                                            topic.migrate->region + "'");
            }
            require_cluster(topic.migrate->to_cluster, mpath + "/to_cluster");
            if (cluster_region.at(topic.migrate->to_cluster) != topic.migrate->region) {
                fail(mpath + "/to_cluster", "cluster '" + topic.migrate->to_cluster +
                                                "' is not in region '" +
                                                topic.migrate->region + "'");
            }
        }
        if (topic.audit) {
            const std::string apath = tpath + "/audit";
            std::set<std::string> seen_stages;
            for (std::size_t s = 0; s < topic.audit->stages.size(); ++s) {
                const std::string& stage = topic.audit->stages[s];
                const std::string spath = apath + "/stages/" + std::to_string(s);
                if (!seen_stages.insert(stage).second) {
                    fail(spath, "duplicate stage '" + stage + "'");
                }
                if (stage == "produced") {
                    continue;
                }
                if (!stage.starts_with("cluster:")) {
                    fail(spath, "expected 'produced' or 'cluster:<name>'");
                }
                const std::string cluster = stage.substr(8);
                require_cluster(cluster, spath);
                if (!route_dst_clusters[topic.name].contains(cluster)) {
                    fail(spath, "no route replicates '" + topic.name + "' into '" +
                                    cluster + "'");
                }
            }
        }
    }

    std::set<std::string> group_names;
    std::set<std::string> endpoint_names;
    for (std::size_t c = 0; c < cfg.consumers.size(); ++c) {
        const ConsumerSpec& consumer = cfg.consumers[c];
        const std::string cpath = "/consumers/" + std::to_string(c);
        if (consumer.proxy) {
            const ProxyConsumerSpec& p = *consumer.proxy;
            if (!group_names.insert(p.group).second) {
                fail(cpath + "/group", "duplicate consumer name '" + p.group + "'");
            }
            if (!endpoint_names.insert(p.endpoint).second) {
                fail(cpath + "/endpoint", "duplicate endpoint '" + p.endpoint + "'");
            }
            if (!topic_names.contains(p.topic)) {
                fail(cpath + "/topic", "unknown topic '" + p.topic + "'");
            }
            require_region(p.region, cpath + "/region");
            if (!federated_in[p.topic].contains(p.region)) {
                fail(cpath + "/region", "topic '" + p.topic +
                                            "' is not federated in region '" + p.region + "'");
            }
        } else if (consumer.active_passive) {
            const ApConsumerSpec& a = *consumer.active_passive;
            if (!group_names.insert(a.name).second) {
                fail(cpath + "/name", "duplicate consumer name '" + a.name + "'");
            }
            if (!topic_names.contains(a.topic)) {
                fail(cpath + "/topic", "unknown topic '" + a.topic + "'");
            }
            for (const auto& [region, cluster] : a.cluster_by_region) {
                const std::string mpath = cpath + "/cluster_by_region/" + region;
                require_region(region, mpath);
                require_cluster(cluster, mpath);
                if (cluster_region.at(cluster) != region) {
                    fail(mpath, "cluster '" + cluster + "' is not in region '" + region + "'");
                }
                if (!hosts_topic(a.topic, cluster)) {
                    fail(mpath, "topic '" + a.topic + "' has no placement on '" + cluster + "'");
                }
            }
            if (!a.cluster_by_region.contains(a.primary_region)) {
                fail(cpath + "/primary_region", "not a key of cluster_by_region");
            }
            if (a.failover) {
                if (!a.cluster_by_region.contains(a.failover->to)) {
                    fail(cpath + "/failover/to", "not a key of cluster_by_region");
                }
                if (a.failover->to == a.primary_region) {
                    fail(cpath + "/failover/to", "already the primary region");
                }
            }
        } else if (consumer.poll) {
            const PollConsumerSpec& p = *consumer.poll;
            if (!group_names.insert(p.group).second) {
                fail(cpath + "/group", "duplicate consumer name '" + p.group + "'");
            }
            if (!topic_names.contains(p.topic)) {
                fail(cpath + "/topic", "unknown topic '" + p.topic + "'");
            }
            require_cluster(p.cluster, cpath + "/cluster");
            if (!hosts_topic(p.topic, p.cluster)) {
                fail(cpath + "/cluster",
                     "topic '" + p.topic + "' has no placement on '" + p.cluster + "'");
            }
        }
    }

    std::set<std::string> services;
    for (std::size_t p = 0; p < cfg.pipelines.size(); ++p) {
        const PipelineSpec& pipeline = cfg.pipelines[p];
        const std::string ppath = "/pipelines/" + std::to_string(p);
        if (!services.insert(pipeline.service).second) {
            fail(ppath + "/service", "duplicate service '" + pipeline.service + "'");
        }
        if (!topic_names.contains(pipeline.topic)) {
            fail(ppath + "/topic", "unknown topic '" + pipeline.topic + "'");
        }
        for (std::size_t t = 0; t < cfg.topics.size(); ++t) {
            if (cfg.topics[t].name != pipeline.topic) {
                continue;
            }
            for (std::size_t pr = 0; pr < cfg.topics[t].producers.size(); ++pr) {
                if (!cfg.topics[t].producers[pr].trips) {
                    fail(ppath + "/topic", "pipeline topic '" + pipeline.topic +
                                               "' has a non-trip producer (/topics/" +
                                               std::to_string(t) + "/producers/" +
                                               std::to_string(pr) + ")");
                }
            }
        }
        std::set<std::string> instance_regions;
        for (std::size_t i = 0; i < pipeline.instances.size(); ++i) {
            const PipelineInstanceSpec& instance = pipeline.instances[i];
            const std::string ipath = ppath + "/instances/" + std::to_string(i);
            require_region(instance.region, ipath + "/region");
            if (!instance_regions.insert(instance.region).second) {
                fail(ipath + "/region", "duplicate instance region '" + instance.region + "'");
            }
            require_cluster(instance.cluster, ipath + "/cluster");
            if (cluster_region.at(instance.cluster) != instance.region) {
                fail(ipath + "/cluster", "cluster '" + instance.cluster +
                                             "' is not in region '" + instance.region + "'");
            }
            if (!hosts_topic(pipeline.topic, instance.cluster)) {
                fail(ipath + "/cluster", "topic '" + pipeline.topic +
                                             "' has no placement on '" + instance.cluster + "'");
            }
        }
        if (!instance_regions.contains(pipeline.primary_region)) {
            fail(ppath + "/primary_region", "no pipeline instance in that region");
        }
        for (std::size_t s = 0; s < pipeline.set_primary.size(); ++s) {
            if (!instance_regions.contains(pipeline.set_primary[s].region)) {
                fail(ppath + "/set_primary/" + std::to_string(s) + "/region",
                     "no pipeline instance in that region");
            }
        }
    }

    for (std::size_t f = 0; f < cfg.faults.size(); ++f) {
        const FaultSpec& fault = cfg.faults[f];
        const std::string fpath = "/faults/" + std::to_string(f);
        if (fault.kind == "cluster_down") {
            require_cluster(fault.target, fpath + "/cluster");
        } else if (fault.kind == "region_down") {
            require_region(fault.target, fpath + "/region");
        } else if (fault.kind == "worker_crash") {
            if (!worker_names.contains(fault.target)) {
                fail(fpath + "/worker", "unknown worker '" + fault.target + "'");
            }
        } else if (fault.kind == "endpoint_behavior_change") {
            if (!endpoint_names.contains(fault.target)) {
                fail(fpath + "/endpoint", "unknown endpoint '" + fault.target + "'");
            }
        } else if (fault.kind == "drop_message_ids") {
            if (!route_ids.contains(fault.target)) {
                fail(fpath + "/route", "unknown route '" + fault.target + "'");
            }
        }
    }
}

} // namespace

ScenarioConfig parse_scenario_text(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) {
        fail("/", "not valid JSON");
    }
    expect_object(j, "/",
                  {"seed", "regions", "topics", "routes", "workers", "consumers", "pipelines",
                   "faults", "run_until"},
                  {});
    ScenarioConfig cfg;
    cfg.seed = get_uint(j, "", "seed");
    cfg.run_until = get_uint(j, "", "run_until");

    const json& regions = get_array(j, "", "regions");
    for (std::size_t r = 0; r < regions.size(); ++r) {
        const std::string rpath = "/regions/" + std::to_string(r);
        expect_object(regions[r], rpath, {"name", "clusters"}, {});
        RegionSpec region;
        region.name = get_string(regions[r], rpath, "name");
        const json& clusters = get_array(regions[r], rpath, "clusters");
        for (std::size_t c = 0; c < clusters.size(); ++c) {
            const std::string cpath = rpath + "/clusters/" + std::to_string(c);
            expect_object(clusters[c], cpath, {"name"}, {"node_count", "max_nodes"});
            ClusterSpec cluster;
            cluster.name = get_string(clusters[c], cpath, "name");
            cluster.node_count =
                static_cast<int>(opt_uint(clusters[c], cpath, "node_count", 1));
            cluster.max_nodes =
                static_cast<int>(opt_uint(clusters[c], cpath, "max_nodes", 150));
            region.clusters.push_back(std::move(cluster));
        }
        cfg.regions.push_back(std::move(region));
    }

    const json& topics = get_array(j, "", "topics");
    for (std::size_t t = 0; t < topics.size(); ++t) {
        cfg.topics.push_back(parse_topic(topics[t], "/topics/" + std::to_string(t)));
    }

    const json& routes = get_array(j, "", "routes");
    for (std::size_t r = 0; r < routes.size(); ++r) {
        const std::string rpath = "/routes/" + std::to_string(r);
        expect_object(routes[r], rpath, {"id", "src", "dst", "topic"},
                      {"checkpoint_interval"});
        RouteSpec route;
        route.id = get_string(routes[r], rpath, "id");
        route.src = get_string(routes[r], rpath, "src");
        route.dst = get_string(routes[r], rpath, "dst");
        route.topic = get_string(routes[r], rpath, "topic");
        route.checkpoint_interval = opt_uint(routes[r], rpath, "checkpoint_interval", 100);
        cfg.routes.push_back(std::move(route));
    }

    const json& workers = j.at("workers");
    expect_object(workers, "/workers", {"pool"}, {"budget", "lag_threshold"});
    const json& pool = get_array(workers, "/workers", "pool");
    for (std::size_t w = 0; w < pool.size(); ++w) {
        const std::string wpath = "/workers/pool/" + std::to_string(w);
        expect_object(pool[w], wpath, {"name"}, {"standby"});
        cfg.workers.pool.push_back(WorkerSpec{get_string(pool[w], wpath, "name"),
                                              opt_bool(pool[w], wpath, "standby", false)});
    }
    cfg.workers.budget = opt_uint(workers, "/workers", "budget", 100);
    if (workers.contains("lag_threshold")) {
        cfg.workers.lag_threshold = get_uint(workers, "/workers", "lag_threshold");
        if (*cfg.workers.lag_threshold == 0) {
            fail("/workers/lag_threshold", "expected a positive threshold");
        }
    }

    const json& consumers = get_array(j, "", "consumers");
    for (std::size_t c = 0; c < consumers.size(); ++c) {
        cfg.consumers.push_back(
            parse_consumer(consumers[c], "/consumers/" + std::to_string(c)));
    }

    const json& pipelines = get_array(j, "", "pipelines");
    for (std::size_t p = 0; p < pipelines.size(); ++p) {
        cfg.pipelines.push_back(
            parse_pipeline(pipelines[p], "/pipelines/" + std::to_string(p)));
    }

    const json& faults = get_array(j, "", "faults");
    for (std::size_t f = 0; f < faults.size(); ++f) {
        cfg.faults.push_back(parse_fault(faults[f], "/faults/" + std::to_string(f)));
    }

    validate(cfg);
    return cfg;
}

ScenarioConfig load_scenario_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail("/", "cannot read scenario file: " + path);
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_scenario_text(buffer.str());
}

} // namespace fedstream
