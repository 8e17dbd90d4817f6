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

#include "fedstream/simulation.hpp"

#include "fedstream/error.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>

namespace fedstream {

namespace {

using nlohmann::json;

EndpointBehavior to_behavior(const BehaviorSpec& spec) {
    EndpointBehavior behavior;
    if (spec.type == "always_ack") {
        behavior.type = EndpointBehavior::Type::AlwaysAck;
    } else if (spec.type == "always_fail") {
        behavior.type = EndpointBehavior::Type::AlwaysFail;
    } else if (spec.type == "fail_first_k") {
        behavior.type = EndpointBehavior::Type::FailFirstK;
        behavior.k = spec.k;
    } else {
        behavior.type = EndpointBehavior::Type::FailIdsList;
        for (std::uint64_t id : spec.ids) {
            behavior.ids.insert(MessageId{0, id});
        }
    }
    return behavior;
}

json sorted_id_array(const std::set<MessageId>& ids) {
    json arr = json::array();
    for (const MessageId& id : ids) {
        arr.push_back(id.lo);
    }
    return arr;
}

} // namespace

struct Simulation::State {
    ScenarioConfig cfg;
    std::string name;
    std::mt19937_64 rng;
    Tick now = 0;
    std::uint64_t seq = 0;
    std::uint64_t next_id = 1;
    Tick max_event_tick = 0;
    std::uint64_t activity = 0; // bumps whenever anything observable happens

    std::map<std::string, ClusterId> cluster_ids; // global name -> id
    std::map<std::string, std::unique_ptr<Cluster>> clusters;
    std::map<std::string, std::unique_ptr<Federation>> federations;
    std::map<std::string, bool> region_up;

    OffsetMappingStore store;
    std::unique_ptr<Replicator> replicator;
    std::unique_ptr<OffsetTranslator> translator;
    std::unique_ptr<OffsetSyncService> syncsvc;
    AllActiveCoordinator coordinator;
    std::unique_ptr<ResultsStore> results;
    AuditService audit;
    std::map<std::string, std::unique_ptr<ConsumerProxy>> proxies; // by region

    struct Producer {
        const TopicSpec* topic = nullptr;
        const ProducerSpec* spec = nullptr;
    };
    std::vector<Producer> producers;

    struct Sink { // poll and active-passive consumers
        const ApConsumerSpec* ap = nullptr;
        const PollConsumerSpec* poll = nullptr;
        std::string group;
        std::string topic;
        std::string current_cluster;
        std::string current_region;
        std::uint64_t rate = 1;
        std::vector<std::uint64_t> delivered;
        std::vector<std::set<MessageId>> unique;
        std::map<std::string, std::vector<Offset>> high_at_sync; // region -> highs
        Tick last_sync_tick = 0;
        json failovers = json::array();
        std::vector<std::uint64_t> bound; // per partition, set at failover
        bool failed_over = false;
    };
    std::vector<Sink> sinks;

    struct PipeInstance {
        std::string region;
        std::string cluster;
        std::unique_ptr<SurgePipeline> pipe;
        std::vector<Offset> cursors;
        std::uint64_t delivered = 0;
    };
    struct PipeService {
        const PipelineSpec* spec = nullptr;
        std::vector<PipeInstance> instances;
        json primary_history = json::array();
    };
    std::vector<PipeService> pipelines;

    struct ProxyTrack {
        const ProxyConsumerSpec* spec = nullptr;
        std::uint64_t delivered = 0;
        std::set<MessageId> unique;
        std::vector<std::string> cluster_sequence; // distinct acked clusters in order
    };
    std::map<std::string, ProxyTrack> proxy_tracks; // by group
    std::map<std::string, std::string> endpoint_region;

    std::map<std::string, std::set<MessageId>> produced_ids;
    std::map<std::string, std::set<MessageId>> consumed_ids;
    std::map<std::string, std::set<MessageId>> dlq_remaining; // main topic -> ids
    std::map<std::string, std::uint64_t> dlq_merged;

    struct RouteStats {
        std::uint64_t copied = 0;
        std::uint64_t dropped = 0;
        std::uint64_t data_loss = 0;
        std::uint64_t checkpoints = 0;
        std::vector<std::uint64_t> dropped_ids;
    };
    std::map<std::string, RouteStats> route_stats;
    std::vector<DropEvent> drop_events;

    struct DropRule {
        Tick from = 0;
        Tick until = 0;
        std::set<std::uint64_t> ids;
    };
    std::map<std::string, std::vector<DropRule>> drop_rules; // by route

    // audit tap per route: stage name to record on copy, if any
    std::map<std::string, std::string> route_stage;
    std::set<std::string> produced_stage_topics;

    struct MigRecord {
        std::string topic;
        std::string region;
        std::string from;
        std::string to;
        Tick started_at = 0;
        bool completed = false;
        Tick completed_at = 0;
        json groups = json::array();
    };
    std::map<std::string, MigRecord> migrations; // by topic

    json timeline = json::array();
    json rebalances = json::array();
    std::vector<std::string> violations;

    // ---- helpers ----

    Cluster& cluster_by_name(const std::string& name_) { return *clusters.at(name_); }
    Cluster& cluster_of(const ClusterId& id) { return *clusters.at(id.name); }

    void emit(std::string event, json fields) {
        fields["event"] = std::move(event);
        fields["tick"] = now;
        fields["seq"] = seq++;
        timeline.push_back(std::move(fields));
    }

    void violation(std::string what) { violations.push_back(std::move(what)); }

    // ---- setup ----

    void setup() {
        rng.seed(cfg.seed);

        for (const RegionSpec& region : cfg.regions) {
            region_up[region.name] = true;
            auto federation = std::make_unique<Federation>(region.name);
            for (const ClusterSpec& spec : region.clusters) {
                ClusterId id{region.name, spec.name};
                auto cluster = std::make_unique<Cluster>(id);
                federation->add_cluster(spec.name, spec.node_count, spec.max_nodes,
                                        cluster.get());
                cluster_ids.emplace(spec.name, id);
                clusters.emplace(spec.name, std::move(cluster));
            }
            federation->on_group_switched = [this](const std::string& topic,
                                                   const std::string& group, Tick when) {
                on_group_switched(topic, group, when);
            };
            federations.emplace(region.name, std::move(federation));
        }

        coordinator.region_live = [this](const std::string& region) {
            auto it = region_up.find(region);
            return it == region_up.end() ? true : it->second;
        };
        results = std::make_unique<ResultsStore>(coordinator);

        auto cluster_fn = [this](const ClusterId& id) -> Cluster& { return cluster_of(id); };
        replicator = std::make_unique<Replicator>(store, cluster_fn);
        translator = std::make_unique<OffsetTranslator>(store, cluster_fn);
        syncsvc = std::make_unique<OffsetSyncService>(*translator, cluster_fn);

        for (const TopicSpec& topic : cfg.topics) {
            TopicConfig config{topic.partitions, topic.retention_ticks, topic.lossless};
            for (const PlacementSpec& placement : topic.placements) {
                if (placement.federated_region && placement.cluster) {
                    federations.at(*placement.federated_region)
                        ->create_logical_topic_on(topic.name, config, *placement.cluster);
                } else if (placement.federated_region) {
                    federations.at(*placement.federated_region)
                        ->create_logical_topic(topic.name, config);
                } else {
                    cluster_by_name(*placement.cluster).create_topic(topic.name, config);
                }
            }
            for (const ProducerSpec& producer : topic.producers) {
                producers.push_back(Producer{&topic, &producer});
            }
            if (topic.audit) {
                audit.register_topic(topic.name,
                                     AuditService::TopicAuditConfig{topic.audit->window_ticks,
                                                                    topic.audit->grace_ticks,
                                                                    topic.audit->stages});
                for (const std::string& stage : topic.audit->stages) {
                    if (stage == "produced") {
                        produced_stage_topics.insert(topic.name);
                    }
                }
            }
            produced_ids[topic.name]; // materialize for all-zero reports
            consumed_ids[topic.name];
        }

        for (const RouteSpec& spec : cfg.routes) {
            ReplicationRoute route{spec.id, cluster_ids.at(spec.src), cluster_ids.at(spec.dst),
                                   spec.topic, spec.checkpoint_interval};
            replicator->add_route(route);
            translator->add_route(route);
            route_stats[spec.id];
            for (const TopicSpec& topic : cfg.topics) {
                if (topic.name != spec.topic || !topic.audit) {
                    continue;
                }
                const std::string stage = "cluster:" + spec.dst;
                for (const std::string& configured : topic.audit->stages) {
                    if (configured == stage) {
                        route_stage[spec.id] = stage;
                    }
                }
            }
        }

        std::vector<std::string> active;
        std::vector<std::string> standby;
        for (const WorkerSpec& worker : cfg.workers.pool) {
            (worker.standby ? standby : active).push_back(worker.name);
        }
        if (!cfg.workers.pool.empty()) {
            replicator->set_workers(active, standby, cfg.workers.budget);
        }

        wire_replicator();

        for (const FaultSpec& fault : cfg.faults) {
            if (fault.kind == "drop_message_ids") {
                DropRule rule;
                rule.from = fault.from;
                rule.until = fault.until;
                rule.ids.insert(fault.ids.begin(), fault.ids.end());
                drop_rules[fault.target].push_back(std::move(rule));
            }
        }

        for (const ConsumerSpec& consumer : cfg.consumers) {
            if (consumer.proxy) {
                setup_proxy_consumer(*consumer.proxy);
            } else if (consumer.active_passive) {
                setup_ap_consumer(*consumer.active_passive);
            } else if (consumer.poll) {
                setup_poll_consumer(*consumer.poll);
            }
        }

        for (const PipelineSpec& spec : cfg.pipelines) {
            PipeService service;
            service.spec = &spec;
            for (const PipelineInstanceSpec& instance : spec.instances) {
                PipeInstance inst;
                inst.region = instance.region;
                inst.cluster = instance.cluster;
                inst.pipe = std::make_unique<SurgePipeline>(spec.service, instance.region,
                                                            spec.window_ticks, spec.grace_ticks);
                inst.cursors.assign(
                    cluster_by_name(instance.cluster).partition_count(spec.topic), 0);
                service.instances.push_back(std::move(inst));
            }
            const PrimaryLabel& label = coordinator.set_primary(spec.service,
                                                                spec.primary_region, 0);
            service.primary_history.push_back(
                json{{"at", 0}, {"region", label.primary_region}, {"epoch", label.epoch}});
            pipelines.push_back(std::move(service));
        }

        compute_max_event_tick();
    }

    void wire_replicator() {
        replicator->drop_filter = [this](const std::string& route, const Message& message,
                                         Tick when) {
            auto it = drop_rules.find(route);
            if (it == drop_rules.end()) {
                return false;
            }
            for (const DropRule& rule : it->second) {
                if (when >= rule.from && when < rule.until &&
                    rule.ids.contains(message.audit.message_id.lo)) {
                    return true;
                }
            }
            return false;
        };
        replicator->on_copied = [this](const ReplicationRoute& route,
                                       const TopicPartition& tp, const Message& message,
                                       Offset dst_offset, Tick when) {
            (void)tp;
            (void)dst_offset;
            ++route_stats[route.id].copied;
            auto stage = route_stage.find(route.id);
            if (stage != route_stage.end()) {
                audit.record(route.topic, stage->second, message.audit.message_id,
                             message.audit.app_timestamp, when);
            }
            ++activity;
        };
        replicator->on_dropped = [this](const ReplicationRoute& route, const Message& message,
                                        Tick when) {
            RouteStats& stats = route_stats[route.id];
            ++stats.dropped;
            stats.dropped_ids.push_back(message.audit.message_id.lo);
            drop_events.push_back(DropEvent{route.id, message.audit.message_id,
                                            message.audit.app_timestamp, when});
            ++activity;
        };
        replicator->on_data_loss = [this](const ReplicationRoute& route,
                                          std::uint32_t partition, std::uint64_t lost,
                                          Tick when) {
            (void)when;
            route_stats[route.id].data_loss += lost;
            emit("route_data_loss",
                 json{{"route", route.id}, {"partition", partition}, {"lost", lost}});
            ++activity;
        };
        replicator->on_checkpoint = [this](const OffsetCheckpoint& checkpoint) {
            ++route_stats[checkpoint.route].checkpoints;
            ++activity;
        };
        replicator->on_rebalance = [this](std::uint64_t moves, const std::string& reason,
                                          Tick when) {
            (void)when;
            if (moves == 0 && reason != "worker_crash") {
                return;
            }
            json record{{"tick", now}, {"reason", reason}, {"moves", moves}};
            rebalances.push_back(record);
            emit("rebalance", json{{"reason", reason}, {"moves", moves}});
            ++activity;
        };
    }

    ConsumerProxy& proxy_for(const std::string& region) {
        auto it = proxies.find(region);
        if (it != proxies.end()) {
            return *it->second;
        }
        auto proxy = std::make_unique<ConsumerProxy>(*federations.at(region));
        proxy->on_ack = [this](const std::string& group, const std::string& topic,
                               const ClusterId& cluster, const TopicPartition& tp,
                               Offset offset, const Message& message, std::uint32_t attempt,
                               Tick when) {
            (void)tp;
            (void)offset;
            (void)attempt;
            (void)when;
            ProxyTrack& track = proxy_tracks.at(group);
            ++track.delivered;
            track.unique.insert(message.audit.message_id);
            consumed_ids[topic].insert(message.audit.message_id);
            if (track.cluster_sequence.empty() ||
                track.cluster_sequence.back() != cluster.name) {
                track.cluster_sequence.push_back(cluster.name);
            }
            ++activity;
        };
        proxy->on_dead_letter = [this](const std::string& group, const std::string& topic,
                                       const Message& message, std::uint32_t attempts,
                                       Tick when) {
            (void)when;
            dlq_remaining[topic].insert(message.audit.message_id);
            emit("dead_letter", json{{"group", group},
                                     {"topic", topic},
                                     {"id", message.audit.message_id.lo},
                                     {"attempts", attempts}});
            ++activity;
        };
        proxy->on_merged_message = [this](const std::string& topic, const Message& message,
                                          Tick when) {
            (void)when;
            dlq_remaining[topic].erase(message.audit.message_id);
            ++dlq_merged[topic];
            ++activity;
        };
        proxy->on_data_loss = [this](const std::string& group, const std::string& topic,
                                     const TopicPartition& tp, std::uint64_t lost, Tick when) {
            (void)when;
            emit("proxy_data_loss", json{{"group", group},
                                         {"topic", topic},
                                         {"partition", tp.partition},
                                         {"lost", lost}});
            ++activity;
        };
        proxy->on_new_peak = [this](const std::string& group, const std::string& topic,
                                    std::uint64_t peak, Tick when) {
            (void)when;
            emit("proxy_peak",
                 json{{"group", group}, {"topic", topic}, {"in_flight", peak}});
            ++activity;
        };
        auto [ins, _] = proxies.emplace(region, std::move(proxy));
        return *ins->second;
    }

    void setup_proxy_consumer(const ProxyConsumerSpec& spec) {
        ConsumerProxy& proxy = proxy_for(spec.region);
        EndpointSpec endpoint;
        endpoint.name = spec.endpoint;
        endpoint.processing_delay = spec.processing_delay;
        endpoint.behavior = std::make_shared<EndpointBehavior>(to_behavior(spec.behavior));
        proxy.register_consumer(spec.group, spec.topic, std::move(endpoint), spec.window,
                                RetryPolicy{spec.max_retries, spec.backoff_ticks}, 0);
        proxy_tracks.emplace(spec.group, ProxyTrack{&spec, 0, {}, {}});
        endpoint_region.emplace(spec.endpoint, spec.region);
    }

    void setup_ap_consumer(const ApConsumerSpec& spec) {
        Sink sink;
        sink.ap = &spec;
        sink.group = spec.name;
        sink.topic = spec.topic;
        sink.current_region = spec.primary_region;
        sink.current_cluster = spec.cluster_by_region.at(spec.primary_region);
        sink.rate = spec.rate;
        Cluster& primary = cluster_by_name(sink.current_cluster);
        std::uint32_t parts = primary.partition_count(spec.topic);
        sink.delivered.assign(parts, 0);
        sink.unique.assign(parts, {});
        sink.bound.assign(parts, 0);
        for (const auto& [region, cluster] : spec.cluster_by_region) {
            sink.high_at_sync[region].assign(parts, 0);
        }
        for (std::uint32_t p = 0; p < parts; ++p) {
            primary.commit(spec.name, TopicPartition{spec.topic, p}, 0);
        }
        OffsetSyncService::ConsumerInfo info;
        info.name = spec.name;
        info.topic = spec.topic;
        for (const auto& [region, cluster] : spec.cluster_by_region) {
            info.cluster_by_region.emplace(region, cluster_ids.at(cluster));
        }
        info.current_region = spec.primary_region;
        syncsvc->register_consumer(std::move(info));
        sinks.push_back(std::move(sink));
    }

    void setup_poll_consumer(const PollConsumerSpec& spec) {
        Sink sink;
        sink.poll = &spec;
        sink.group = spec.group;
        sink.topic = spec.topic;
        sink.current_cluster = spec.cluster;
        sink.current_region = cluster_ids.at(spec.cluster).region;
        sink.rate = spec.rate;
        Cluster& cluster = cluster_by_name(spec.cluster);
        std::uint32_t parts = cluster.partition_count(spec.topic);
        sink.delivered.assign(parts, 0);
        sink.unique.assign(parts, {});
        for (std::uint32_t p = 0; p < parts; ++p) {
            cluster.commit(spec.group, TopicPartition{spec.topic, p}, 0);
        }
        sinks.push_back(std::move(sink));
    }

    void on_group_switched(const std::string& topic, const std::string& group, Tick when) {
        auto it = migrations.find(topic);
        if (it == migrations.end()) {
            return;
        }
        it->second.groups.push_back(json{{"group", group}, {"switched_at", when}});
        emit("group_switched", json{{"topic", topic}, {"group", group}});
        bool still_running = false;
        for (const auto& [region, federation] : federations) {
            if (federation->has_topic(topic) && federation->migration_in_progress(topic)) {
                still_running = true;
            }
        }
        if (!still_running && !it->second.completed) {
            it->second.completed = true;
            it->second.completed_at = when;
            emit("migration_completed", json{{"topic", topic}});
        }
        ++activity;
    }

    void compute_max_event_tick() {
        Tick max_tick = 0;
        auto bump = [&max_tick](Tick t) { max_tick = std::max(max_tick, t); };
        for (const TopicSpec& topic : cfg.topics) {
            if (topic.migrate) {
                bump(topic.migrate->at);
            }
        }
        for (const ConsumerSpec& consumer : cfg.consumers) {
            if (consumer.proxy) {
                for (const DlqActionSpec& action : consumer.proxy->dlq_actions) {
                    bump(action.at);
                }
            }
            if (consumer.active_passive && consumer.active_passive->failover) {
                bump(consumer.active_passive->failover->at);
            }
        }
        for (const PipelineSpec& pipeline : cfg.pipelines) {
            for (const SetPrimarySpec& action : pipeline.set_primary) {
                bump(action.at);
            }
        }
        for (const FaultSpec& fault : cfg.faults) {
            bump(fault.from);
            // Availability must come back before the drain can finish; drop
            // windows never block progress, so their end is irrelevant.
            if (fault.kind == "cluster_down" || fault.kind == "region_down") {
                bump(fault.until);
            }
        }
        max_event_tick = max_tick;
    }

    // ---- per-tick phases ----

    void fault_edges() {
        for (const FaultSpec& fault : cfg.faults) {
            if (fault.kind == "cluster_down") {
                if (now == fault.from) {
                    cluster_by_name(fault.target).set_available(false);
                } else if (now == fault.until) {
                    cluster_by_name(fault.target).set_available(true);
                }
            } else if (fault.kind == "region_down") {
                if (now == fault.from || now == fault.until) {
                    bool up = now == fault.until;
                    region_up[fault.target] = up;
                    for (const RegionSpec& region : cfg.regions) {
                        if (region.name != fault.target) {
                            continue;
                        }
                        for (const ClusterSpec& cluster : region.clusters) {
                            cluster_by_name(cluster.name).set_available(up);
                        }
                    }
                }
            } else if (fault.kind == "worker_crash") {
                if (now == fault.from) {
                    replicator->crash_worker(fault.target, now);
                }
            } else if (fault.kind == "endpoint_behavior_change") {
                if (now == fault.from) {
                    proxies.at(endpoint_region.at(fault.target))
                        ->set_endpoint_behavior(fault.target, to_behavior(*fault.behavior));
                }
            }
        }
    }

    void scheduled_actions() {
        for (const TopicSpec& topic : cfg.topics) {
            if (!topic.migrate || topic.migrate->at != now) {
                continue;
            }
            Federation& federation = *federations.at(topic.migrate->region);
            std::string from = federation.resolve_for_produce(topic.name).name;
            std::set<std::string> groups;
            for (const ConsumerSpec& consumer : cfg.consumers) {
                if (consumer.proxy && consumer.proxy->topic == topic.name &&
                    consumer.proxy->region == topic.migrate->region) {
                    groups.insert(consumer.proxy->group);
                }
            }
            federation.migrate_topic(topic.name, topic.migrate->to_cluster, groups, now);
            MigRecord record;
            record.topic = topic.name;
            record.region = topic.migrate->region;
            record.from = from;
            record.to = topic.migrate->to_cluster;
            record.started_at = now;
            if (groups.empty()) {
                record.completed = true;
                record.completed_at = now;
            }
            migrations.emplace(topic.name, std::move(record));
            emit("migration_started", json{{"topic", topic.name},
                                           {"region", topic.migrate->region},
                                           {"from", from},
                                           {"to", topic.migrate->to_cluster}});
            ++activity;
        }

        for (const ConsumerSpec& consumer : cfg.consumers) {
            if (!consumer.proxy) {
                continue;
            }
            const ProxyConsumerSpec& spec = *consumer.proxy;
            for (const DlqActionSpec& action : spec.dlq_actions) {
                if (action.at != now) {
                    continue;
                }
                ConsumerProxy& proxy = *proxies.at(spec.region);
                bool exists = federations.at(spec.region)->has_topic(spec.topic + ".dlq");
                std::uint64_t count = 0;
                if (action.action == "merge") {
                    count = exists ? proxy.dlq_merge(spec.topic, now) : 0;
                    emit("dlq_merge", json{{"topic", spec.topic}, {"count", count}});
                } else {
                    count = exists ? proxy.dlq_purge(spec.topic, now) : 0;
                    auto purged = proxy.purged_ids().find(spec.topic);
                    if (purged != proxy.purged_ids().end()) {
                        for (const MessageId& id : purged->second) {
                            dlq_remaining[spec.topic].erase(id);
                        }
                    }
                    emit("dlq_purge", json{{"topic", spec.topic}, {"count", count}});
                }
                activity += count + 1;
            }
        }

        for (Sink& sink : sinks) {
            if (!sink.ap || !sink.ap->failover || sink.ap->failover->at != now) {
                continue;
            }
            const std::string to = sink.ap->failover->to;
            const std::string from = sink.current_region;
            auto resume = syncsvc->failover_consumer(sink.group, to, now);
            const std::string target_cluster = sink.ap->cluster_by_region.at(to);
            Cluster& target = cluster_by_name(target_cluster);
            std::uint64_t max_interval = 0;
            for (const ReplicationRoute& route : translator->routes()) {
                if (route.topic == sink.topic &&
                    route.dst_cluster == cluster_ids.at(target_cluster)) {
                    max_interval = std::max(max_interval, route.checkpoint_interval);
                }
            }
            json resume_json = json::array();
            for (auto& [partition, offset] : resume) {
                Offset high = target.watermarks(TopicPartition{sink.topic, partition}).second;
                std::uint64_t arrived = high - sink.high_at_sync.at(to)[partition];
                sink.bound[partition] = max_interval + arrived;
                resume_json.push_back(offset);
            }
            sink.current_region = to;
            sink.current_cluster = target_cluster;
            sink.failed_over = true;
            sink.failovers.push_back(json{{"at", now},
                                          {"from", from},
                                          {"to", to},
                                          {"resume_offsets", resume_json}});
            emit("failover", json{{"consumer", sink.group}, {"from", from}, {"to", to}});
            ++activity;
        }

        for (PipeService& service : pipelines) {
            for (const SetPrimarySpec& action : service.spec->set_primary) {
                if (action.at != now) {
                    continue;
                }
                const PrimaryLabel& label =
                    coordinator.set_primary(service.spec->service, action.region, now);
                service.primary_history.push_back(json{
                    {"at", now}, {"region", label.primary_region}, {"epoch", label.epoch}});
                emit("primary_changed", json{{"service", service.spec->service},
                                             {"region", label.primary_region},
                                             {"epoch", label.epoch}});
                ++activity;
            }
        }
    }

    void audit_seal() {
        std::size_t before = audit.alerts().size();
        audit.seal_and_compare(now);
        emit_new_alerts(before);
    }

    void emit_new_alerts(std::size_t before) {
        for (std::size_t i = before; i < audit.alerts().size(); ++i) {
            const AlertRecord& alert = audit.alerts()[i];
            emit("audit_alert", json{{"topic", alert.topic},
                                     {"window_start", alert.window_start},
                                     {"stage_a", alert.stage_a},
                                     {"stage_b", alert.stage_b},
                                     {"missing", alert.missing_ids.size()}});
            ++activity;
        }
    }

    void publish_aggregates(PipeService& service, const PipeInstance& instance,
                            const std::vector<WindowAggregate>& aggregates) {
        for (const WindowAggregate& agg : aggregates) {
            const PrimaryLabel& label = coordinator.current(service.spec->service);
            results->write(service.spec->service, instance.region, label.epoch,
                           agg.geofence + "|" + std::to_string(agg.window_start),
                           to_string(agg.multiplier), now);
            ++activity;
        }
    }

    void pipeline_seal() {
        for (PipeService& service : pipelines) {
            for (PipeInstance& instance : service.instances) {
                publish_aggregates(service, instance, instance.pipe->seal_due(now));
            }
        }
    }

    void producers_phase() {
        if (now >= cfg.run_until) {
            return; // drain runs with producers stopped
        }
        for (const Producer& producer : producers) {
            const ProducerSpec& spec = *producer.spec;
            if (now < spec.from || now >= spec.until) {
                continue;
            }
            Cluster* cluster = nullptr;
            if (spec.region) {
                ClusterId id =
                    federations.at(*spec.region)->resolve_for_produce(producer.topic->name);
                cluster = &cluster_of(id);
            } else {
                cluster = &cluster_by_name(*spec.cluster);
            }
            if (!cluster->available()) {
                continue;
            }
            for (std::uint64_t i = 0; i < spec.rate; ++i) {
                MessageId id{0, next_id++};
                std::optional<std::string> key;
                if (!spec.keys.empty()) {
                    key = spec.keys[rng() % spec.keys.size()];
                }
                Tick app_ts = now;
                std::string payload;
                if (spec.trips) {
                    const TripSpec& trips = *spec.trips;
                    app_ts = now >= trips.late_by ? now - trips.late_by : 0;
                    TripEvent event{trips.geofences[rng() % trips.geofences.size()],
                                    rng() % 100 < trips.demand_pct, app_ts};
                    payload = encode_trip(event);
                } else {
                    payload = "m-" + std::to_string(id.lo);
                }
                AuditMeta meta{id, app_ts, spec.service, spec.tier};
                cluster->produce(producer.topic->name, key, std::move(payload), meta, now);
                produced_ids[producer.topic->name].insert(id);
                if (produced_stage_topics.contains(producer.topic->name)) {
                    audit.record(producer.topic->name, "produced", id, app_ts, now);
                }
                ++activity;
            }
        }
    }

    void replication_phase() {
        if (!replicator) {
            return;
        }
        for (const std::string& worker : replicator->active_workers()) {
            activity += replicator->replicate_step(worker, now);
        }
        if (cfg.workers.lag_threshold) {
            activity += replicator->redistribute_on_burst(*cfg.workers.lag_threshold, now);
        }
    }

    void proxy_phase() {
        for (auto& [region, proxy] : proxies) {
            activity += proxy->process_completions(now);
            activity += proxy->dispatch_step(now);
        }
    }

    void sink_phase() {
        for (Sink& sink : sinks) {
            Cluster& cluster = cluster_by_name(sink.current_cluster);
            if (!cluster.available()) {
                continue;
            }
            const auto parts = static_cast<std::uint32_t>(sink.delivered.size());
            for (std::uint32_t i = 0; i < parts; ++i) {
                auto p = static_cast<std::uint32_t>((now + i) % parts);
                std::uint64_t quota = sink.rate / parts + (i < sink.rate % parts ? 1 : 0);
                if (quota == 0) {
                    continue;
                }
                TopicPartition tp{sink.topic, p};
                Offset from = cluster.committed(sink.group, tp);
                auto batch = cluster.fetch(tp, from, quota);
                if (batch.empty()) {
                    continue;
                }
                for (auto& [offset, message] : batch) {
                    ++sink.delivered[p];
                    sink.unique[p].insert(message.audit.message_id);
                    consumed_ids[sink.topic].insert(message.audit.message_id);
                }
                cluster.commit(sink.group, tp, batch.back().first + 1);
                activity += batch.size();
            }
        }
    }

    void pipeline_ingest() {
        for (PipeService& service : pipelines) {
            for (PipeInstance& instance : service.instances) {
                Cluster& cluster = cluster_by_name(instance.cluster);
                const auto parts = static_cast<std::uint32_t>(instance.cursors.size());
                std::vector<std::uint32_t> order(parts);
                for (std::uint32_t p = 0; p < parts; ++p) {
                    order[p] = p;
                }
                for (std::uint32_t p = 0; p + 1 < parts; ++p) {
                    auto j = p + static_cast<std::uint32_t>(rng() % (parts - p));
                    std::swap(order[p], order[j]);
                }
                if (!cluster.available()) {
                    continue;
                }
                for (std::uint32_t p : order) {
                    TopicPartition tp{service.spec->topic, p};
                    auto [low, high] = cluster.watermarks(tp);
                    (void)low;
                    if (instance.cursors[p] >= high) {
                        continue;
                    }
                    auto batch = cluster.fetch(tp, instance.cursors[p],
                                               high - instance.cursors[p]);
                    for (auto& [offset, message] : batch) {
                        TripEvent event = decode_trip(message.payload);
                        instance.pipe->ingest(message.audit.message_id, event, now);
                        consumed_ids[service.spec->topic].insert(message.audit.message_id);
                        ++instance.delivered;
                    }
                    instance.cursors[p] = high;
                    activity += batch.size();
                }
            }
        }
    }

    void sync_phase() {
        for (Sink& sink : sinks) {
            if (!sink.ap || now == 0 || now % sink.ap->sync_interval != 0) {
                continue;
            }
            std::uint64_t written = syncsvc->sync_consumer(sink.group, now);
            sink.last_sync_tick = now;
            for (const auto& [region, cluster_name] : sink.ap->cluster_by_region) {
                if (region == sink.current_region) {
                    continue;
                }
                Cluster& cluster = cluster_by_name(cluster_name);
                auto& highs = sink.high_at_sync.at(region);
                for (std::uint32_t p = 0; p < highs.size(); ++p) {
                    highs[p] = cluster.watermarks(TopicPartition{sink.topic, p}).second;
                }
            }
            emit("offsets_synced", json{{"consumer", sink.group}, {"commits", written}});
            activity += written;
        }
    }

    void retention_phase() {
        for (auto& [name_, cluster] : clusters) {
            activity += cluster->enforce_retention(now);
        }
    }

    void tick() {
        fault_edges();
        scheduled_actions();
        audit_seal();
        pipeline_seal();
        producers_phase();
        replication_phase();
        proxy_phase();
        sink_phase();
        pipeline_ingest();
        sync_phase();
        retention_phase();
    }

    bool quiescent() {
        if (replicator && !replicator->all_caught_up()) {
            return false;
        }
        for (const auto& [region, proxy] : proxies) {
            if (!proxy->quiescent()) {
                return false;
            }
        }
        for (const Sink& sink : sinks) {
            Cluster& cluster = cluster_by_name(sink.current_cluster);
            for (std::uint32_t p = 0; p < sink.delivered.size(); ++p) {
                TopicPartition tp{sink.topic, p};
                if (cluster.committed(sink.group, tp) < cluster.watermarks(tp).second) {
                    return false;
                }
            }
        }
        for (const PipeService& service : pipelines) {
            for (const PipeInstance& instance : service.instances) {
                Cluster& cluster = cluster_by_name(instance.cluster);
                for (std::uint32_t p = 0; p < instance.cursors.size(); ++p) {
                    TopicPartition tp{service.spec->topic, p};
                    if (instance.cursors[p] < cluster.watermarks(tp).second) {
                        return false;
                    }
                }
            }
        }
        return true;
    }

    // ---- finalization ----

    RunResult finalize(bool stalled, Tick drained_at) {
        if (replicator) {
            replicator->flush_checkpoints(now);
        }
        std::size_t alerts_before = audit.alerts().size();
        audit.seal_all(now);
        emit_new_alerts(alerts_before);
        for (PipeService& service : pipelines) {
            for (PipeInstance& instance : service.instances) {
                publish_aggregates(service, instance, instance.pipe->seal_all());
            }
        }
        if (stalled) {
            violation("drain stalled: no progress after tick " +
                      std::to_string(drained_at));
        }

        json report;
        report["scenario"] = name;
        report["seed"] = cfg.seed;
        report["run_until"] = cfg.run_until;
        report["drained_at"] = drained_at;
        report["stalled"] = stalled;

        report["topics"] = topics_section();
        report["audit"] = audit_section();
        report["dlq"] = dlq_section();
        report["replication"] = replication_section();
        report["proxy"] = proxy_section();
        report["poll"] = poll_section();
        report["failover"] = failover_section();
        report["pipelines"] = pipelines_section();
        report["migrations"] = migrations_section();
        report["timeline"] = timeline;

        json violations_json = json::array();
        for (const std::string& entry : violations) {
            violations_json.push_back(entry);
        }
        report["violations"] = violations_json;

        RunResult result;
        result.report = std::move(report);
        result.has_violations = !violations.empty();
        result.stalled = stalled;
        result.drop_events = drop_events;
        return result;
    }

    json topics_section() {
        // Purged ids across all proxies, per topic.
        std::map<std::string, std::set<MessageId>> purged;
        for (const auto& [region, proxy] : proxies) {
            for (const auto& [topic, ids] : proxy->purged_ids()) {
                purged[topic].insert(ids.begin(), ids.end());
            }
        }

        json out = json::object();
        for (const TopicSpec& topic : cfg.topics) {
            const std::set<MessageId>& produced = produced_ids[topic.name];
            const std::set<MessageId>& consumed = consumed_ids[topic.name];
            const std::set<MessageId>& in_dlq = dlq_remaining[topic.name];
            const std::set<MessageId>& purged_here = purged[topic.name];

            std::set<MessageId> missing = produced;
            for (const MessageId& id : consumed) {
                missing.erase(id);
            }
            for (const MessageId& id : in_dlq) {
                missing.erase(id);
            }
            for (const MessageId& id : purged_here) {
                missing.erase(id);
            }

            bool phantom = false;
            for (const MessageId& id : consumed) {
                phantom = phantom || !produced.contains(id);
            }
            for (const MessageId& id : in_dlq) {
                phantom = phantom || !produced.contains(id) || consumed.contains(id);
            }
            for (const MessageId& id : purged_here) {
                phantom = phantom || !produced.contains(id) || consumed.contains(id) ||
                          in_dlq.contains(id);
            }
            bool reconciled = !phantom &&
                              produced.size() == consumed.size() + in_dlq.size() +
                                                     purged_here.size() + missing.size();
            if (!reconciled) {
                violation("reconciliation failed for topic " + topic.name);
            }

            std::uint64_t duplicates = 0;
            for (const auto& [group, track] : proxy_tracks) {
                if (track.spec->topic == topic.name) {
                    duplicates += track.delivered - track.unique.size();
                }
            }
            for (const Sink& sink : sinks) {
                if (sink.topic != topic.name) {
                    continue;
                }
                for (std::uint32_t p = 0; p < sink.delivered.size(); ++p) {
                    duplicates += sink.delivered[p] - sink.unique[p].size();
                }
            }
            for (const PipeService& service : pipelines) {
                if (service.spec->topic != topic.name) {
                    continue;
                }
                for (const PipeInstance& instance : service.instances) {
                    duplicates += instance.pipe->duplicate_count();
                }
            }

            out[topic.name] = json{{"produced", produced.size()},
                                   {"consumed_unique", consumed.size()},
                                   {"duplicates", duplicates},
                                   {"dlq_remaining", in_dlq.size()},
                                   {"purged", purged_here.size()},
                                   {"missing", missing.size()},
                                   {"reconciled", reconciled}};
        }
        return out;
    }

    json audit_section() {
        json alerts = json::array();
        for (const AlertRecord& alert : audit.alerts()) {
            json missing = json::array();
            for (const MessageId& id : alert.missing_ids) {
                missing.push_back(id.lo);
            }
            alerts.push_back(json{{"topic", alert.topic},
                                  {"window_start", alert.window_start},
                                  {"stage_a", alert.stage_a},
                                  {"stage_b", alert.stage_b},
                                  {"count_a", alert.count_a},
                                  {"count_b", alert.count_b},
                                  {"missing_ids", missing},
                                  {"emitted_at", alert.emitted_at}});
        }
        json late = json::object();
        for (const TopicSpec& topic : cfg.topics) {
            if (topic.audit) {
                late[topic.name] = audit.late_count(topic.name);
            }
        }
        return json{{"alerts", alerts}, {"late_records", late}};
    }

    json dlq_section() {
        std::map<std::string, std::set<MessageId>> purged;
        for (const auto& [region, proxy] : proxies) {
            for (const auto& [topic, ids] : proxy->purged_ids()) {
                purged[topic].insert(ids.begin(), ids.end());
            }
        }
        std::set<std::string> topics_with_dlq;
        for (const auto& [topic, ids] : dlq_remaining) {
            if (!ids.empty()) {
                topics_with_dlq.insert(topic);
            }
        }
        for (const auto& [topic, count] : dlq_merged) {
            topics_with_dlq.insert(topic);
        }
        for (const auto& [topic, ids] : purged) {
            topics_with_dlq.insert(topic);
        }
        json out = json::object();
        for (const std::string& topic : topics_with_dlq) {
            out[topic + ".dlq"] = json{
                {"remaining_ids", sorted_id_array(dlq_remaining[topic])},
                {"merged", dlq_merged.contains(topic) ? dlq_merged.at(topic) : 0},
                {"purged_ids", sorted_id_array(purged[topic])}};
        }
        return out;
    }

    json replication_section() {
        json routes = json::object();
        for (const RouteSpec& spec : cfg.routes) {
            const RouteStats& stats = route_stats[spec.id];
            json dropped = json::array();
            std::vector<std::uint64_t> ids = stats.dropped_ids;
            std::sort(ids.begin(), ids.end());
            for (std::uint64_t id : ids) {
                dropped.push_back(id);
            }
            routes[spec.id] = json{{"copied", stats.copied},
                                   {"dropped", stats.dropped},
                                   {"dropped_ids", dropped},
                                   {"data_loss", stats.data_loss},
                                   {"checkpoints", stats.checkpoints}};
        }
        return json{{"routes", routes}, {"rebalances", rebalances}};
    }

    json proxy_section() {
        json groups = json::object();
        for (const auto& [group, track] : proxy_tracks) {
            const ProxyConsumerSpec& spec = *track.spec;
            ConsumerProxy& proxy = *proxies.at(spec.region);
            const auto& stats = proxy.stats(group, spec.topic);
            ClusterId cluster =
                federations.at(spec.region)->resolve_for_group(spec.topic, group, now);
            Cluster& host = cluster_of(cluster);
            json committed = json::array();
            json highs = json::array();
            for (std::uint32_t p = 0; p < host.partition_count(spec.topic); ++p) {
                TopicPartition tp{spec.topic, p};
                committed.push_back(host.committed(group, tp));
                highs.push_back(host.watermarks(tp).second);
            }
            groups[group] = json{{"topic", spec.topic},
                                 {"cluster", cluster.name},
                                 {"dispatched", stats.dispatched},
                                 {"acked", stats.acked},
                                 {"failed", stats.failed},
                                 {"dead_lettered", stats.dead_lettered},
                                 {"data_loss", stats.data_loss},
                                 {"peak_in_flight", stats.peak_in_flight},
                                 {"delivered_unique", track.unique.size()},
                                 {"committed", committed},
                                 {"high_watermarks", highs}};
        }
        return json{{"groups", groups}};
    }

    json poll_section() {
        json out = json::object();
        for (Sink& sink : sinks) {
            if (!sink.poll) {
                continue;
            }
            json per_partition = json::array();
            for (std::uint32_t p = 0; p < sink.delivered.size(); ++p) {
                per_partition.push_back(
                    json{{"delivered", sink.delivered[p]},
                         {"unique", sink.unique[p].size()},
                         {"duplicates", sink.delivered[p] - sink.unique[p].size()}});
            }
            out[sink.group] = json{{"topic", sink.topic},
                                   {"cluster", sink.current_cluster},
                                   {"per_partition", per_partition}};
        }
        return out;
    }

    json failover_section() {
        json consumers = json::object();
        for (Sink& sink : sinks) {
            if (!sink.ap) {
                continue;
            }
            json per_partition = json::array();
            for (std::uint32_t p = 0; p < sink.delivered.size(); ++p) {
                std::uint64_t duplicates = sink.delivered[p] - sink.unique[p].size();
                json entry{{"delivered", sink.delivered[p]},
                           {"unique", sink.unique[p].size()},
                           {"duplicates", duplicates}};
                if (sink.failed_over) {
                    bool within = duplicates <= sink.bound[p];
                    entry["bound"] = sink.bound[p];
                    entry["within_bound"] = within;
                    if (!within) {
                        violation("failover duplicates exceed bound for " + sink.group +
                                  " partition " + std::to_string(p));
                    }
                }
                per_partition.push_back(std::move(entry));
            }
            consumers[sink.group] = json{{"topic", sink.topic},
                                         {"region", sink.current_region},
                                         {"last_sync_tick", sink.last_sync_tick},
                                         {"failovers", sink.failovers},
                                         {"per_partition", per_partition}};
        }
        return json{{"consumers", consumers},
                    {"results_store", json{{"accepted", results->accepted_count()},
                                           {"discarded", results->discarded_count()}}}};
    }

    json pipelines_section() {
        json out = json::object();
        for (PipeService& service : pipelines) {
            json instances = json::object();
            std::vector<std::string> digests;
            for (PipeInstance& instance : service.instances) {
                std::string digest = instance.pipe->state_digest();
                digests.push_back(digest);
                instances[instance.region] =
                    json{{"digest", digest},
                         {"applied", instance.pipe->applied_count()},
                         {"duplicates", instance.pipe->duplicate_count()},
                         {"late", instance.pipe->late_count()},
                         {"windows_sealed", instance.pipe->sealed().size()}};
            }
            bool match = std::all_of(digests.begin(), digests.end(),
                                     [&](const std::string& d) { return d == digests[0]; });
            if (!match && !content_faults_present()) {
                violation("pipeline digests diverge for service " + service.spec->service);
            }
            const PrimaryLabel& label = coordinator.current(service.spec->service);
            out[service.spec->service] =
                json{{"topic", service.spec->topic},
                     {"instances", instances},
                     {"digests_match", match},
                     {"primary", json{{"region", label.primary_region},
                                      {"epoch", label.epoch}}},
                     {"primary_history", service.primary_history}};
        }
        return out;
    }

    /// Faults that can legitimately desynchronize regional topic copies.
    bool content_faults_present() const {
        for (const FaultSpec& fault : cfg.faults) {
            if (fault.kind == "drop_message_ids" || fault.kind == "cluster_down" ||
                fault.kind == "region_down") {
                return true;
            }
        }
        return false;
    }

    json migrations_section() {
        json out = json::array();
        for (auto& [topic, record] : migrations) {
            bool old_before_new = true;
            for (const auto& [group, track] : proxy_tracks) {
                if (track.spec->topic != topic) {
                    continue;
                }
                bool seen_new = false;
                for (const std::string& cluster : track.cluster_sequence) {
                    if (cluster == record.to) {
                        seen_new = true;
                    } else if (cluster == record.from && seen_new) {
                        old_before_new = false;
                    }
                }
            }
            if (!old_before_new) {
                violation("migration delivered old-placement data after new for topic " +
                          topic);
            }
            out.push_back(json{{"topic", record.topic},
                               {"region", record.region},
                               {"from", record.from},
                               {"to", record.to},
                               {"started_at", record.started_at},
                               {"completed", record.completed},
                               {"completed_at", record.completed_at},
                               {"groups_switched", record.groups},
                               {"restart_events", 0},
                               {"old_before_new", old_before_new}});
        }
        return out;
    }
};

Simulation::Simulation(ScenarioConfig config, std::string scenario_name)
    : state_(std::make_unique<State>()) {
    state_->cfg = std::move(config);
    state_->name = std::move(scenario_name);
    state_->setup();
}

Simulation::~Simulation() = default;

RunResult Simulation::run() {
    State& s = *state_;
    for (s.now = 0; s.now < s.cfg.run_until; ++s.now) {
        s.tick();
    }
    // Drain: keep ticking with producers stopped until the system is
    // quiescent and every scheduled event has fired; declare a stall after a
    // long stretch without observable progress.
    bool stalled = false;
    std::uint64_t last_activity = s.activity;
    Tick last_change = s.now;
    const Tick stall_window = 600;
    while (s.now <= s.max_event_tick || !s.quiescent()) {
        s.tick();
        ++s.now;
        if (s.activity != last_activity) {
            last_activity = s.activity;
            last_change = s.now;
        }
        if (s.now > s.max_event_tick && s.now - last_change > stall_window) {
            stalled = true;
            break;
        }
    }
    return s.finalize(stalled, s.now);
}

RunResult run_scenario(ScenarioConfig config, const std::string& scenario_name) {
    Simulation simulation(std::move(config), scenario_name);
    return simulation.run();
}

} // namespace fedstream
