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
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace fedstream {

struct TopicConfig {
    std::uint32_t partitions = 1;
    std::optional<std::uint64_t> retention_ticks; // absent means infinite
    bool lossless = false;
};

/// One physical cluster: a set of partitioned, offset-indexed append logs
/// plus per-group committed offsets. A commit of N means offsets below N are
/// done and consumption resumes at N. Lossy topics may expire uncommitted
/// entries; lossless topics never expire past the minimum committed offset
/// of the groups registered on the partition.
class Cluster {
public:
    explicit Cluster(ClusterId id) : id_(std::move(id)) {}

    const ClusterId& id() const { return id_; }

    /// Availability gate used by the fault harness. When down, data-path
    /// operations throw ClusterUnavailable; metadata reads stay usable.
    bool available() const { return available_; }
    void set_available(bool up) { available_ = up; }

    void create_topic(const std::string& name, const TopicConfig& config);
    bool has_topic(const std::string& name) const;
    const TopicConfig& topic_config(const std::string& name) const;
    std::uint32_t partition_count(const std::string& name) const;
    std::vector<std::string> topic_names() const;

    /// Keyed produce hashes the key; keyless produce round-robins across
    /// partitions with a per-topic counter.
    std::pair<TopicPartition, Offset> produce(const std::string& topic,
                                              const std::optional<std::string>& key,
                                              std::string payload, AuditMeta audit, Tick now);

    /// Appends to an explicit partition, preserving the message as-is.
    /// Replication and dead-lettering use this to keep partition indexes.
    Offset append(const TopicPartition& tp, Message message, Tick now);

    /// Messages with offsets in [from, min(from+max_messages, high)).
    /// from below the low watermark means the data expired.
    std::vector<std::pair<Offset, Message>> fetch(const TopicPartition& tp, Offset from,
                                                  std::uint64_t max_messages) const;

    /// next_offset is the next offset the group will consume; it may not
    /// exceed the high watermark and may never regress.
    void commit(const std::string& group, const TopicPartition& tp, Offset next_offset);
    Offset committed(const std::string& group, const TopicPartition& tp) const;

    /// (low, high): readable range is [low, high), high is the next offset
    /// to be assigned.
    std::pair<Offset, Offset> watermarks(const TopicPartition& tp) const;

    /// Drops expired entries; returns how many were dropped. Lossless
    /// topics keep everything at or above the minimum committed offset.
    std::uint64_t enforce_retention(Tick now);

    /// Advances low to high, discarding the readable range. Used when a
    /// dead-letter queue is merged or purged. Returns dropped count.
    std::uint64_t truncate_readable(const TopicPartition& tp);

private:
    struct Entry {
        Message message;
        Tick append_tick = 0;
    };

    struct Partition {
        Offset low = 0;
        std::deque<Entry> entries;

        Offset high() const { return low + entries.size(); }
    };

    struct Topic {
        TopicConfig config;
        std::vector<Partition> partitions;
        std::uint64_t round_robin = 0;
    };

    Topic& topic_ref(const std::string& name);
    const Topic& topic_ref(const std::string& name) const;
    const Partition& partition_ref(const TopicPartition& tp) const;
    void require_available() const;

    ClusterId id_;
    bool available_ = true;
    std::map<std::string, Topic> topics_;
    // group -> partition -> next offset to consume
    std::map<std::string, std::map<TopicPartition, Offset>> commits_;
};

} // namespace fedstream
