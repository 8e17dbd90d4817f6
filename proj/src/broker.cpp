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

#include "fedstream/broker.hpp"

#include "fedstream/error.hpp"

#include <algorithm>
#include <limits>

namespace fedstream {

void Cluster::require_available() const {
    if (!available_) {
        throw SimError(Errc::ClusterUnavailable, "cluster " + to_string(id_) + " is down");
    }
}

Cluster::Topic& Cluster::topic_ref(const std::string& name) {
    auto it = topics_.find(name);
    if (it == topics_.end()) {
        throw SimError(Errc::UnknownTopic, name + " on " + to_string(id_));
    }
    return it->second;
}

const Cluster::Topic& Cluster::topic_ref(const std::string& name) const {
    auto it = topics_.find(name);
    if (it == topics_.end()) {
        throw SimError(Errc::UnknownTopic, name + " on " + to_string(id_));
    }
    return it->second;
}

const Cluster::Partition& Cluster::partition_ref(const TopicPartition& tp) const {
    const Topic& topic = topic_ref(tp.topic);
    if (tp.partition >= topic.partitions.size()) {
        throw SimError(Errc::UnknownTopic, "partition " + to_string(tp) + " out of range");
    }
    return topic.partitions[tp.partition];
}

void Cluster::create_topic(const std::string& name, const TopicConfig& config) {
    if (config.partitions == 0) {
        throw SimError(Errc::InvalidPartitionCount, "topic " + name);
    }
    if (topics_.contains(name)) {
        throw SimError(Errc::TopicExists, name + " on " + to_string(id_));
    }
    Topic topic;
    topic.config = config;
    topic.partitions.resize(config.partitions);
    topics_.emplace(name, std::move(topic));
}

bool Cluster::has_topic(const std::string& name) const {
    return topics_.contains(name);
}

const TopicConfig& Cluster::topic_config(const std::string& name) const {
    return topic_ref(name).config;
}

std::uint32_t Cluster::partition_count(const std::string& name) const {
    return static_cast<std::uint32_t>(topic_ref(name).partitions.size());
}

std::vector<std::string> Cluster::topic_names() const {
    std::vector<std::string> names;
    names.reserve(topics_.size());
    for (const auto& [name, topic] : topics_) {
        names.push_back(name);
    }
    return names;
}

std::pair<TopicPartition, Offset> Cluster::produce(const std::string& topic,
                                                   const std::optional<std::string>& key,
                                                   std::string payload, AuditMeta audit,
                                                   Tick now) {
    require_available();
    Topic& t = topic_ref(topic);
    const auto count = static_cast<std::uint32_t>(t.partitions.size());
    std::uint32_t index = 0;
    if (key.has_value()) {
        index = partition_for_key(*key, count);
    } else {
        index = static_cast<std::uint32_t>(t.round_robin % count);
        ++t.round_robin;
    }
    TopicPartition tp{topic, index};
    Message message{std::move(audit), key, std::move(payload)};
    Offset offset = append(tp, std::move(message), now);
    return {std::move(tp), offset};
}

Offset Cluster::append(const TopicPartition& tp, Message message, Tick now) {
    require_available();
    Topic& topic = topic_ref(tp.topic);
    if (tp.partition >= topic.partitions.size()) {
        throw SimError(Errc::UnknownTopic, "partition " + to_string(tp) + " out of range");
    }
    Partition& part = topic.partitions[tp.partition];
    Offset offset = part.high();
    part.entries.push_back(Entry{std::move(message), now});
    return offset;
}

std::vector<std::pair<Offset, Message>> Cluster::fetch(const TopicPartition& tp, Offset from,
                                                       std::uint64_t max_messages) const {
    require_available();
    const Partition& part = partition_ref(tp);
    if (from < part.low) {
        throw SimError(Errc::OffsetExpired,
                       to_string(tp) + " offset " + std::to_string(from) + " below low watermark " +
                           std::to_string(part.low));
    }
    std::vector<std::pair<Offset, Message>> out;
    if (from >= part.high()) {
        return out;
    }
    Offset end = std::min<Offset>(part.high(), from + max_messages);
    out.reserve(end - from);
    for (Offset o = from; o < end; ++o) {
        out.emplace_back(o, part.entries[o - part.low].message);
    }
    return out;
}

void Cluster::commit(const std::string& group, const TopicPartition& tp, Offset next_offset) {
    require_available();
    const Partition& part = partition_ref(tp);
    if (next_offset > part.high()) {
        throw SimError(Errc::InvalidCommit, to_string(tp) + " next " + std::to_string(next_offset) +
                                                " beyond high watermark " +
                                                std::to_string(part.high()));
    }
    auto& by_tp = commits_[group];
    auto it = by_tp.find(tp);
    if (it != by_tp.end() && next_offset < it->second) {
        throw SimError(Errc::CommitRegression,
                       group + " on " + to_string(tp) + ": " + std::to_string(next_offset) +
                           " < " + std::to_string(it->second));
    }
    by_tp[tp] = next_offset;
}

Offset Cluster::committed(const std::string& group, const TopicPartition& tp) const {
    auto git = commits_.find(group);
    if (git == commits_.end()) {
        return 0;
    }
    auto it = git->second.find(tp);
    return it == git->second.end() ? 0 : it->second;
}

std::pair<Offset, Offset> Cluster::watermarks(const TopicPartition& tp) const {
    const Partition& part = partition_ref(tp);
    return {part.low, part.high()};
}

std::uint64_t Cluster::enforce_retention(Tick now) {
    std::uint64_t dropped = 0;
    for (auto& [name, topic] : topics_) {
        if (!topic.config.retention_ticks.has_value()) {
            continue;
        }
        const std::uint64_t retention = *topic.config.retention_ticks;
        for (std::uint32_t p = 0; p < topic.partitions.size(); ++p) {
            Partition& part = topic.partitions[p];
            // Lossy topics expire freely; lossless topics stop at the minimum
            // committed offset across registered groups (nothing drops when no
            // group has registered a position yet).
            Offset floor = std::numeric_limits<Offset>::max();
            if (topic.config.lossless) {
                floor = 0;
                bool any_group = false;
                for (const auto& [group, by_tp] : commits_) {
                    auto it = by_tp.find(TopicPartition{name, p});
                    if (it != by_tp.end()) {
                        floor = any_group ? std::min(floor, it->second) : it->second;
                        any_group = true;
                    }
                }
            }
            while (!part.entries.empty() && part.entries.front().append_tick + retention <= now &&
                   part.low < floor) {
                part.entries.pop_front();
                ++part.low;
                ++dropped;
            }
        }
    }
    return dropped;
}

std::uint64_t Cluster::truncate_readable(const TopicPartition& tp) {
    Topic& topic = topic_ref(tp.topic);
    if (tp.partition >= topic.partitions.size()) {
        throw SimError(Errc::UnknownTopic, "partition " + to_string(tp) + " out of range");
    }
    Partition& part = topic.partitions[tp.partition];
    std::uint64_t dropped = part.entries.size();
    part.low = part.high();
    part.entries.clear();
    return dropped;
}

} // namespace fedstream
