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
#include "fedstream/replicator.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace fedstream {

/// Maps a source partition offset to a destination offset using the
/// checkpointed floor: the dst_offset of the largest checkpointed
/// src_offset at or below the query. With no qualifying checkpoint the
/// destination's low watermark is returned, which reprocesses rather than
/// skips. Monotone in the query offset.
class OffsetTranslator {
public:
    OffsetTranslator(const OffsetMappingStore& store,
                     std::function<Cluster&(const ClusterId&)> cluster_of)
        : store_(store), cluster_of_(std::move(cluster_of)) {}

    void add_route(const ReplicationRoute& route);

    Offset translate_offset(const std::string& route, const TopicPartition& tp,
                            Offset src_offset) const;

    const ReplicationRoute& route(const std::string& id) const;
    std::vector<ReplicationRoute> routes() const;
    const OffsetMappingStore& store() const { return store_; }

private:
    const OffsetMappingStore& store_;
    std::function<Cluster&(const ClusterId&)> cluster_of_;
    std::map<std::string, ReplicationRoute> routes_;
};

/// Offset synchronization for active-passive consumers. Each consumer is a
/// uniquely named group pinned to one region at a time; a periodic job
/// translates its committed offsets into every other region's copy of the
/// topic. After a failover the consumer resumes from those synced offsets:
/// not the high watermark (which loses data) and not the low watermark
/// (which reprocesses everything).
class OffsetSyncService {
public:
    struct ConsumerInfo {
        std::string name; // doubles as the consumer group name
        std::string topic;
        std::map<std::string, ClusterId> cluster_by_region;
        std::string current_region;
    };

    OffsetSyncService(const OffsetTranslator& translator,
                      std::function<Cluster&(const ClusterId&)> cluster_of)
        : translator_(translator), cluster_of_(std::move(cluster_of)) {}

    void register_consumer(ConsumerInfo info);
    const ConsumerInfo& info(const std::string& name) const;
    std::vector<std::string> consumer_names() const;

    /// Translated position on `to_region` for one partition, given the
    /// committed offset in the current region. Takes the minimum across the
    /// routes feeding the current region's partition so no source stream
    /// can be skipped past.
    Offset translate_to_region(const std::string& name, std::uint32_t partition,
                               Offset committed, const std::string& to_region) const;

    /// Writes translated commits for one consumer into every other region.
    /// Skips regions whose cluster is unreachable. Returns commits written.
    std::uint64_t sync_consumer(const std::string& name, Tick now);

    /// Moves the consumer to `to`; consumption resumes at the last synced
    /// offsets there. Returns the resume offset per partition.
    std::map<std::uint32_t, Offset> failover_consumer(const std::string& name,
                                                      const std::string& to, Tick now);

private:
    const OffsetTranslator& translator_;
    std::function<Cluster&(const ClusterId&)> cluster_of_;
    std::map<std::string, ConsumerInfo> consumers_;
};

struct PrimaryLabel {
    std::string service;
    std::string primary_region;
    std::uint64_t epoch = 0;
};

/// All-active coordination: every region computes, exactly one region's
/// writes win. Each primary change bumps the epoch; re-labelling the
/// current primary is a no-op.
class AllActiveCoordinator {
public:
    std::function<bool(const std::string& region)> region_live; // default: always live

    const PrimaryLabel& set_primary(const std::string& service, const std::string& region,
                                    Tick now);
    const PrimaryLabel& current(const std::string& service) const;
    bool has_service(const std::string& service) const { return labels_.contains(service); }

private:
    std::map<std::string, PrimaryLabel> labels_;
};

/// Epoch-fenced key-value sink for pipeline results. A write is accepted
/// only when it carries the current epoch and comes from the labelled
/// primary region, so writes from a demoted region are discarded.
class ResultsStore {
public:
    explicit ResultsStore(const AllActiveCoordinator& coordinator)
        : coordinator_(coordinator) {}

    struct WriteRecord {
        Tick tick = 0;
        std::string service;
        std::string region;
        std::uint64_t epoch = 0;
        std::string key;
        std::string value;
        bool accepted = false;
    };

    bool write(const std::string& service, const std::string& region, std::uint64_t epoch,
               const std::string& key, const std::string& value, Tick now);

    const std::vector<WriteRecord>& log() const { return log_; }
    const std::map<std::string, std::map<std::string, std::string>>& entries() const {
        return entries_;
    }
    std::uint64_t accepted_count() const { return accepted_; }
    std::uint64_t discarded_count() const { return discarded_; }

private:
    const AllActiveCoordinator& coordinator_;
    std::map<std::string, std::map<std::string, std::string>> entries_;
    std::vector<WriteRecord> log_;
    std::uint64_t accepted_ = 0;
    std::uint64_t discarded_ = 0;
};

} // namespace fedstream
