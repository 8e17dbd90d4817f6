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

#include "fedstream/failover.hpp"

#include "fedstream/error.hpp"

#include <algorithm>

namespace fedstream {

void OffsetTranslator::add_route(const ReplicationRoute& route) {
    if (!routes_.emplace(route.id, route).second) {
        throw SimError(Errc::DuplicateRegistration, "route already known: " + route.id);
    }
}

const ReplicationRoute& OffsetTranslator::route(const std::string& id) const {
    auto it = routes_.find(id);
    if (it == routes_.end()) {
        throw SimError(Errc::UnknownRoute, "unknown route: " + id);
    }
    return it->second;
}

std::vector<ReplicationRoute> OffsetTranslator::routes() const {
    std::vector<ReplicationRoute> out;
    out.reserve(routes_.size());
    for (const auto& [id, r] : routes_) {
        out.push_back(r);
    }
    return out;
}

Offset OffsetTranslator::translate_offset(const std::string& route_id,
                                          const TopicPartition& tp,
                                          Offset src_offset) const {
    const ReplicationRoute& r = route(route_id);
    if (auto cp = store_.floor_dst(route_id, tp, src_offset)) {
        return *cp;
    }
    // No mapping yet: start from the oldest retained destination message.
    return cluster_of_(r.dst_cluster).watermarks(tp).first;
}

void OffsetSyncService::register_consumer(ConsumerInfo info) {
    if (consumers_.contains(info.name)) {
        throw SimError(Errc::DuplicateRegistration, "consumer already known: " + info.name);
    }
    if (!info.cluster_by_region.contains(info.current_region)) {
        throw SimError(Errc::UnknownCluster,
                       "consumer " + info.name + " has no cluster in region " +
                           info.current_region);
    }
    consumers_.emplace(info.name, std::move(info));
}

const OffsetSyncService::ConsumerInfo&
OffsetSyncService::info(const std::string& name) const {
    auto it = consumers_.find(name);
    if (it == consumers_.end()) {
        throw SimError(Errc::UnknownConsumer, "unknown consumer: " + name);
    }
    return it->second;
}

std::vector<std::string> OffsetSyncService::consumer_names() const {
    std::vector<std::string> out;
    out.reserve(consumers_.size());
    for (const auto& [name, c] : consumers_) {
        out.push_back(name);
    }
    return out;
}

Offset OffsetSyncService::translate_to_region(const std::string& name,
                                              std::uint32_t partition, Offset committed,
                                              const std::string& to_region) const {
    const ConsumerInfo& c = info(name);
    auto from_it = c.cluster_by_region.find(c.current_region);
    auto to_it = c.cluster_by_region.find(to_region);
    if (from_it == c.cluster_by_region.end() || to_it == c.cluster_by_region.end()) {
        throw SimError(Errc::UnknownCluster,
                       "consumer " + name + " has no cluster in region " + to_region);
    }
    const ClusterId& from_cluster = from_it->second;
    const ClusterId& to_cluster = to_it->second;
    const TopicPartition tp{c.topic, partition};

    // The consumed copy and the target copy are both fed by replication
    // routes. For each route into the consumed copy, walk the committed
    // offset back to that route's source, then forward along the sibling
    // route into the target copy. The minimum across feeding routes is safe:
    // no source stream is skipped past its translated position.
    std::optional<Offset> best;
    for (const ReplicationRoute& in : translator_.routes()) {
        if (in.topic != c.topic || in.dst_cluster != from_cluster) {
            continue;
        }
        // Committed offsets are "next to consume"; floor_src_for_dst wants
        // the same convention on the destination axis, which add() enforces.
        Offset src_pos = 0;
        if (auto src = translator_.store().floor_src_for_dst(in.id, tp, committed)) {
            src_pos = *src;
        }
        // Find the sibling route carrying the same source into the target.
        for (const ReplicationRoute& out : translator_.routes()) {
            if (out.topic != c.topic || out.src_cluster != in.src_cluster ||
                out.dst_cluster != to_cluster) {
                continue;
            }
            Offset mapped = translator_.translate_offset(out.id, tp, src_pos);
            best = best ? std::min(*best, mapped) : mapped;
        }
    }
    if (best) {
        return *best;
    }
    // No route pair links the copies: fall back to the oldest retained
    // message so nothing is skipped.
    return cluster_of_(to_cluster).watermarks(tp).first;
}

std::uint64_t OffsetSyncService::sync_consumer(const std::string& name, Tick now) {
    (void)now;
    const ConsumerInfo& c = info(name);
    Cluster& from = cluster_of_(c.cluster_by_region.at(c.current_region));
    std::uint32_t parts = from.partition_count(c.topic);
    std::uint64_t written = 0;
    for (const auto& [region, cluster_id] : c.cluster_by_region) {
        if (region == c.current_region) {
            continue;
        }
        Cluster& target = cluster_of_(cluster_id);
        if (!target.available()) {
            continue;
        }
        for (std::uint32_t p = 0; p < parts; ++p) {
            const TopicPartition tp{c.topic, p};
            Offset committed = from.committed(name, tp);
            Offset mapped = translate_to_region(name, p, committed, region);
            // Synced positions only move forward; a translation that lands
            // behind an earlier sync would re-deliver more than necessary.
            if (mapped > target.committed(name, tp)) {
                target.commit(name, tp, mapped);
                ++written;
            } else if (target.committed(name, tp) == 0 && mapped == 0) {
                // Register the group even when the mapped position is 0 so
                // lossless retention holds messages for the standby.
                target.commit(name, tp, 0);
            }
        }
    }
    return written;
}

std::map<std::uint32_t, Offset>
OffsetSyncService::failover_consumer(const std::string& name, const std::string& to,
                                     Tick now) {
    auto it = consumers_.find(name);
    if (it == consumers_.end()) {
        throw SimError(Errc::UnknownConsumer, "unknown consumer: " + name);
    }
    ConsumerInfo& c = it->second;
    if (c.current_region == to) {
        throw SimError(Errc::AlreadyInRegion,
                       "consumer " + name + " already in region " + to);
    }
    auto target_it = c.cluster_by_region.find(to);
    if (target_it == c.cluster_by_region.end()) {
        throw SimError(Errc::UnknownCluster,
                       "consumer " + name + " has no cluster in region " + to);
    }
    Cluster& target = cluster_of_(target_it->second);
    std::uint32_t parts = target.partition_count(c.topic);
    std::map<std::uint32_t, Offset> resume;
    for (std::uint32_t p = 0; p < parts; ++p) {
        const TopicPartition tp{c.topic, p};
        // Never synced means committed 0, which resumes from the oldest
        // retained message in the new region.
        resume[p] = target.committed(name, tp);
    }
    c.current_region = to;
    (void)now;
    return resume;
}

const PrimaryLabel& AllActiveCoordinator::set_primary(const std::string& service,
                                                      const std::string& region,
                                                      Tick now) {
    (void)now;
    auto it = labels_.find(service);
    if (it != labels_.end() && it->second.primary_region == region) {
        return it->second; // relabelling the current primary changes nothing
    }
    if (region_live && !region_live(region)) {
        throw SimError(Errc::RegionUnavailable,
                       "cannot promote dead region " + region + " for " + service);
    }
    if (it == labels_.end()) {
        auto [ins, _] = labels_.emplace(service, PrimaryLabel{service, region, 1});
        return ins->second;
    }
    it->second.primary_region = region;
    it->second.epoch += 1;
    return it->second;
}

const PrimaryLabel& AllActiveCoordinator::current(const std::string& service) const {
    auto it = labels_.find(service);
    if (it == labels_.end()) {
        throw SimError(Errc::UnknownConsumer, "no primary label for service: " + service);
    }
    return it->second;
}

bool ResultsStore::write(const std::string& service, const std::string& region,
                         std::uint64_t epoch, const std::string& key,
                         const std::string& value, Tick now) {
    bool accepted = false;
    if (coordinator_.has_service(service)) {
        const PrimaryLabel& label = coordinator_.current(service);
        accepted = label.primary_region == region && label.epoch == epoch;
    }
    log_.push_back(WriteRecord{now, service, region, epoch, key, value, accepted});
    if (accepted) {
        entries_[service][key] = value;
        ++accepted_;
    } else {
        ++discarded_;
    }
    return accepted;
}

} // namespace fedstream
