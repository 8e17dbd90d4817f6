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

#include "fedstream/federation.hpp"

#include "fedstream/error.hpp"

namespace fedstream {

void Federation::add_cluster(const std::string& name, int node_count, int max_nodes,
                             Cluster* handle) {
    if (clusters_.contains(name)) {
        throw SimError(Errc::DuplicateRegistration, "cluster " + name);
    }
    ClusterMeta meta;
    meta.id = ClusterId{region_, name};
    meta.node_count = node_count;
    meta.max_nodes = max_nodes;
    meta.handle = handle;
    clusters_.emplace(name, std::move(meta));
}

bool Federation::has_cluster(const std::string& name) const {
    return clusters_.contains(name);
}

Cluster& Federation::cluster(const std::string& name) const {
    auto it = clusters_.find(name);
    if (it == clusters_.end()) {
        throw SimError(Errc::UnknownCluster, name + " in region " + region_);
    }
    return *it->second.handle;
}

Cluster& Federation::cluster(const ClusterId& id) const {
    return cluster(id.name);
}

Federation::Record& Federation::record_ref(const std::string& topic) {
    auto it = topics_.find(topic);
    if (it == topics_.end()) {
        throw SimError(Errc::UnknownTopic, topic + " in region " + region_);
    }
    return it->second;
}

const Federation::Record& Federation::record_ref(const std::string& topic) const {
    auto it = topics_.find(topic);
    if (it == topics_.end()) {
        throw SimError(Errc::UnknownTopic, topic + " in region " + region_);
    }
    return it->second;
}

ClusterId Federation::create_logical_topic(const std::string& name, const TopicConfig& config) {
    if (topics_.contains(name)) {
        throw SimError(Errc::TopicExists, name + " in region " + region_);
    }
    const ClusterMeta* best = nullptr;
    for (const auto& [cluster_name, meta] : clusters_) {
        if (meta.node_count >= meta.max_nodes) {
            continue; // full clusters serve existing topics only
        }
        if (best == nullptr || meta.topics.size() < best->topics.size()) {
            best = &meta;
        }
        // std::map order makes the first minimum the lexicographic tie-break.
    }
    if (best == nullptr) {
        throw SimError(Errc::FederationFull, "no placeable cluster in region " + region_);
    }
    return create_logical_topic_on(name, config, best->id.name);
}

ClusterId Federation::create_logical_topic_on(const std::string& name, const TopicConfig& config,
                                              const std::string& cluster_name) {
    if (topics_.contains(name)) {
        throw SimError(Errc::TopicExists, name + " in region " + region_);
    }
    auto it = clusters_.find(cluster_name);
    if (it == clusters_.end()) {
        throw SimError(Errc::UnknownCluster, cluster_name + " in region " + region_);
    }
    ClusterMeta& meta = it->second;
    meta.handle->create_topic(name, config);
    meta.topics.insert(name);
    Record record;
    record.current = meta.id;
    record.config = config;
    topics_.emplace(name, std::move(record));
    return it->second.id;
}

bool Federation::has_topic(const std::string& name) const {
    return topics_.contains(name);
}

const TopicConfig& Federation::topic_config(const std::string& name) const {
    return record_ref(name).config;
}

ClusterId Federation::resolve_for_produce(const std::string& topic) const {
    return record_ref(topic).current;
}

ClusterId Federation::resolve_for_group(const std::string& topic, const std::string& group,
                                        Tick now) {
    Record& record = record_ref(topic);
    if (!record.migration.has_value()) {
        return record.current;
    }
    Migration& migration = *record.migration;
    auto it = migration.groups.find(group);
    if (it == migration.groups.end()) {
        // Groups outside the coordinated set follow the new placement.
        return record.current;
    }
    if (it->second == SwitchState::Switched) {
        return record.current;
    }
    // Drained when the group's commits reach every frozen high watermark.
    const Cluster& old_cluster = cluster(migration.old_cluster);
    for (const auto& [partition, frozen_high] : migration.frozen_high) {
        if (old_cluster.committed(group, TopicPartition{topic, partition}) < frozen_high) {
            return migration.old_cluster;
        }
    }
    it->second = SwitchState::Switched;
    // Once every coordinated group has switched, the migration is complete;
    // clear the record before notifying so observers see the final state.
    bool all_switched = true;
    for (const auto& [name, state] : migration.groups) {
        if (state != SwitchState::Switched) {
            all_switched = false;
            break;
        }
    }
    if (all_switched) {
        record.migration.reset();
    }
    if (on_group_switched) {
        on_group_switched(topic, group, now);
    }
    return record.current;
}

void Federation::migrate_topic(const std::string& topic, const std::string& to_cluster,
                               const std::set<std::string>& groups, Tick now) {
    Record& record = record_ref(topic);
    if (record.migration.has_value()) {
        throw SimError(Errc::MigrationInProgress, topic);
    }
    auto it = clusters_.find(to_cluster);
    if (it == clusters_.end()) {
        throw SimError(Errc::UnknownCluster, to_cluster + " in region " + region_);
    }
    ClusterMeta& target = it->second;
    if (target.id == record.current) {
        throw SimError(Errc::InvalidMigration, topic + " already on " + to_cluster);
    }

    Migration migration;
    migration.old_cluster = record.current;
    const Cluster& old_cluster = cluster(record.current);
    for (std::uint32_t p = 0; p < record.config.partitions; ++p) {
        auto [low, high] = old_cluster.watermarks(TopicPartition{topic, p});
        migration.frozen_high[p] = high;
    }
    for (const std::string& group : groups) {
        migration.groups.emplace(group, SwitchState::Draining);
    }

    // Fresh placement: consumption on the new cluster starts at offset 0.
    target.handle->create_topic(topic, record.config);
    target.topics.insert(topic);
    auto old_meta = clusters_.find(record.current.name);
    if (old_meta != clusters_.end()) {
        old_meta->second.topics.erase(topic);
    }

    record.current = target.id;
    if (!migration.groups.empty()) {
        record.migration = std::move(migration);
    }
    (void)now;
}

bool Federation::migration_in_progress(const std::string& topic) const {
    return record_ref(topic).migration.has_value();
}

} // namespace fedstream
