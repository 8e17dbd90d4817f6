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

#include "fedstream/proxy.hpp"

#include "fedstream/error.hpp"

#include <algorithm>

namespace fedstream {

ConsumerProxy::Registration& ConsumerProxy::reg_ref(const std::string& group,
                                                    const std::string& topic) {
    auto it = regs_.find(RegKey{group, topic});
    if (it == regs_.end()) {
        throw SimError(Errc::UnknownConsumer, group + " on " + topic);
    }
    return it->second;
}

const ConsumerProxy::Registration& ConsumerProxy::reg_ref(const std::string& group,
                                                          const std::string& topic) const {
    auto it = regs_.find(RegKey{group, topic});
    if (it == regs_.end()) {
        throw SimError(Errc::UnknownConsumer, group + " on " + topic);
    }
    return it->second;
}

void ConsumerProxy::register_consumer(const std::string& group, const std::string& topic,
                                      EndpointSpec endpoint, std::uint32_t window,
                                      RetryPolicy policy, Tick now) {
    if (window == 0) {
        throw SimError(Errc::ProtocolViolation, "window must be positive");
    }
    RegKey key{group, topic};
    if (regs_.contains(key)) {
        throw SimError(Errc::DuplicateRegistration, group + " on " + topic);
    }
    Registration reg;
    reg.group = group;
    reg.topic = topic;
    reg.endpoint = std::move(endpoint);
    reg.window = window;
    reg.policy = policy;
    reg.cluster = federation_.resolve_for_group(topic, group, now);
    Cluster& cluster = federation_.cluster(reg.cluster);
    reg.partitions.resize(cluster.partition_count(topic));
    // Committing position 0 registers the group for lossless retention floors.
    for (std::uint32_t p = 0; p < reg.partitions.size(); ++p) {
        cluster.commit(group, TopicPartition{topic, p}, 0);
    }
    regs_.emplace(std::move(key), std::move(reg));
}

void ConsumerProxy::schedule_completion(const Registration& reg, const TopicPartition& tp,
                                        Offset offset, std::uint32_t attempt, Tick now) {
    Completion completion{reg.group, reg.topic, tp.partition, offset, attempt};
    completions_.emplace(std::make_pair(now + reg.endpoint.processing_delay, completion_seq_++),
                         std::move(completion));
}

void ConsumerProxy::track_in_flight(Registration& reg, Tick now) {
    std::uint64_t total = 0;
    for (const PartitionState& ps : reg.partitions) {
        total += ps.in_flight.size();
    }
    reg.stats.current_in_flight = total;
    if (total > reg.stats.peak_in_flight) {
        reg.stats.peak_in_flight = total;
        if (on_new_peak) {
            on_new_peak(reg.group, reg.topic, total, now);
        }
    }
}

void ConsumerProxy::switch_cluster(Registration& reg, const ClusterId& target, Tick now) {
    for (const PartitionState& ps : reg.partitions) {
        if (!ps.in_flight.empty()) {
            throw SimError(Errc::ProtocolViolation,
                           "placement switch with unresolved deliveries for " + reg.group +
                               " on " + reg.topic);
        }
    }
    reg.cluster = target;
    Cluster& cluster = federation_.cluster(target);
    reg.partitions.assign(cluster.partition_count(reg.topic), PartitionState{});
    for (std::uint32_t p = 0; p < reg.partitions.size(); ++p) {
        cluster.commit(reg.group, TopicPartition{reg.topic, p}, 0);
    }
    (void)now;
}

std::uint64_t ConsumerProxy::dispatch_step(Tick now) {
    std::uint64_t pushed = 0;
    for (auto& [key, reg] : regs_) {
        ClusterId resolved = federation_.resolve_for_group(reg.topic, reg.group, now);
        if (resolved != reg.cluster) {
            switch_cluster(reg, resolved, now);
        }
        Cluster& cluster = federation_.cluster(reg.cluster);
        for (std::uint32_t p = 0; p < reg.partitions.size(); ++p) {
            PartitionState& ps = reg.partitions[p];
            TopicPartition tp{reg.topic, p};
            try_commit(reg, tp);

            // Due retries first: they already hold window slots.
            for (auto& [offset, entry] : ps.in_flight) {
                if (entry.phase == Phase::AwaitingRetry && entry.retry_ready_at <= now) {
                    entry.phase = Phase::Dispatched;
                    ++entry.attempts;
                    ++reg.stats.dispatched;
                    ++pushed;
                    schedule_completion(reg, tp, offset, entry.attempts, now);
                }
            }

            if (ps.in_flight.size() >= reg.window) {
                continue;
            }
            std::uint64_t capacity = reg.window - ps.in_flight.size();
            std::vector<std::pair<Offset, Message>> batch;
            try {
                batch = cluster.fetch(tp, ps.next_fetch, capacity);
            } catch (const SimError& err) {
                if (err.code() == Errc::ClusterUnavailable) {
                    continue;
                }
                if (err.code() == Errc::OffsetExpired) {
                    // Data expired under the cursor: jump to the low watermark
                    // and resolve the lost range so the floor can advance.
                    auto [low, high] = cluster.watermarks(tp);
                    std::uint64_t lost = low - ps.next_fetch;
                    reg.stats.data_loss += lost;
                    if (on_data_loss) {
                        on_data_loss(reg.group, reg.topic, tp, lost, now);
                    }
                    for (Offset o = ps.next_fetch; o < low; ++o) {
                        resolve_offset(reg, tp, o, now);
                    }
                    ps.next_fetch = low;
                    continue;
                }
                throw;
            }
            for (auto& [offset, message] : batch) {
                InFlight entry;
                entry.message = std::move(message);
                entry.attempts = 1;
                entry.phase = Phase::Dispatched;
                ps.in_flight.emplace(offset, std::move(entry));
                ps.next_fetch = offset + 1;
                ++reg.stats.dispatched;
                ++pushed;
                schedule_completion(reg, tp, offset, 1, now);
            }
        }
        track_in_flight(reg, now);
    }
    return pushed;
}

std::uint64_t ConsumerProxy::process_completions(Tick now) {
    std::uint64_t applied = 0;
    while (!completions_.empty()) {
        auto it = completions_.begin();
        if (it->first.first > now) {
            break;
        }
        Completion completion = it->second;
        completions_.erase(it);
        Registration& reg = reg_ref(completion.group, completion.topic);
        TopicPartition tp{completion.topic, completion.partition};
        PartitionState& ps = reg.partitions[completion.partition];
        auto entry = ps.in_flight.find(completion.offset);
        if (entry == ps.in_flight.end() || entry->second.phase != Phase::Dispatched ||
            entry->second.attempts != completion.attempt) {
            throw SimError(Errc::ProtocolViolation,
                           "orphaned completion for " + to_string(tp) + " offset " +
                               std::to_string(completion.offset));
        }
        // The outcome rule is evaluated at completion time, so behavior
        // swaps take effect for deliveries already in flight.
        bool acked = reg.endpoint.behavior->acks(entry->second.message.audit.message_id,
                                                 completion.attempt);
        handle_result(completion.group, tp, completion.offset, acked, now);
        ++applied;
    }
    return applied;
}

void ConsumerProxy::try_commit(Registration& reg, const TopicPartition& tp) {
    Cluster& cluster = federation_.cluster(reg.cluster);
    PartitionState& ps = reg.partitions[tp.partition];
    if (ps.floor > cluster.committed(reg.group, tp)) {
        try {
            cluster.commit(reg.group, tp, ps.floor);
        } catch (const SimError& err) {
            if (err.code() != Errc::ClusterUnavailable) {
                throw;
            }
        }
    }
}

void ConsumerProxy::resolve_offset(Registration& reg, const TopicPartition& tp, Offset offset,
                                   Tick now) {
    PartitionState& ps = reg.partitions[tp.partition];
    ps.in_flight.erase(offset);
    if (offset == ps.floor) {
        ++ps.floor;
        auto it = ps.resolved_ahead.begin();
        while (it != ps.resolved_ahead.end() && *it == ps.floor) {
            ++ps.floor;
            it = ps.resolved_ahead.erase(it);
        }
    } else if (offset > ps.floor) {
        ps.resolved_ahead.insert(offset);
    }
    try_commit(reg, tp);
    (void)now;
}

void ConsumerProxy::dead_letter(Registration& reg, const TopicPartition& tp, Offset offset,
                                Tick now) {
    auto it = reg.partitions[tp.partition].in_flight.find(offset);
    Message message = it->second.message;
    std::uint32_t attempts = it->second.attempts;
    std::string dlq = ensure_dlq(reg.topic);
    ClusterId target = federation_.resolve_for_produce(dlq);
    federation_.cluster(target).produce(dlq, message.key, message.payload, message.audit, now);
    ++reg.stats.dead_lettered;
    if (on_dead_letter) {
        on_dead_letter(reg.group, reg.topic, message, attempts, now);
    }
    resolve_offset(reg, tp, offset, now);
}

void ConsumerProxy::handle_result(const std::string& group, const TopicPartition& tp,
                                  Offset offset, bool acked, Tick now) {
    Registration& reg = reg_ref(group, tp.topic);
    if (tp.partition >= reg.partitions.size()) {
        throw SimError(Errc::ProtocolViolation, "partition out of range for " + to_string(tp));
    }
    PartitionState& ps = reg.partitions[tp.partition];
    auto it = ps.in_flight.find(offset);
    if (it == ps.in_flight.end() || it->second.phase != Phase::Dispatched) {
        throw SimError(Errc::ProtocolViolation,
                       "result for offset " + std::to_string(offset) + " on " + to_string(tp) +
                           " that is not awaiting one");
    }
    if (acked) {
        ++reg.stats.acked;
        if (on_ack) {
            on_ack(reg.group, reg.topic, reg.cluster, tp, offset, it->second.message,
                   it->second.attempts, now);
        }
        resolve_offset(reg, tp, offset, now);
        track_in_flight(reg, now);
        return;
    }
    ++reg.stats.failed;
    if (it->second.attempts <= reg.policy.max_retries) {
        it->second.phase = Phase::AwaitingRetry;
        it->second.retry_ready_at = now + reg.policy.backoff_ticks;
    } else {
        dead_letter(reg, tp, offset, now);
    }
    track_in_flight(reg, now);
}

std::string ConsumerProxy::ensure_dlq(const std::string& topic) {
    std::string dlq = topic + ".dlq";
    if (!federation_.has_topic(dlq)) {
        TopicConfig config = federation_.topic_config(topic);
        TopicConfig dlq_config;
        dlq_config.partitions = config.partitions;
        dlq_config.lossless = true; // dead letters are kept until acted on
        federation_.create_logical_topic_on(dlq, dlq_config,
                                            federation_.resolve_for_produce(topic).name);
    }
    return dlq;
}

std::uint64_t ConsumerProxy::dlq_merge(const std::string& topic, Tick now) {
    std::string dlq = topic + ".dlq";
    if (!federation_.has_topic(dlq)) {
        throw SimError(Errc::UnknownTopic, dlq);
    }
    Cluster& dlq_cluster = federation_.cluster(federation_.resolve_for_produce(dlq));
    Cluster& main_cluster = federation_.cluster(federation_.resolve_for_produce(topic));
    if (!dlq_cluster.available() || !main_cluster.available()) {
        throw SimError(Errc::ClusterUnavailable, "dlq merge for " + topic);
    }
    std::uint64_t merged = 0;
    for (std::uint32_t p = 0; p < dlq_cluster.partition_count(dlq); ++p) {
        TopicPartition tp{dlq, p};
        auto [low, high] = dlq_cluster.watermarks(tp);
        if (low == high) {
            continue;
        }
        auto batch = dlq_cluster.fetch(tp, low, high - low);
        dlq_cluster.truncate_readable(tp);
        for (auto& [offset, message] : batch) {
            main_cluster.produce(topic, message.key, message.payload, message.audit, now);
            if (on_merged_message) {
                on_merged_message(topic, message, now);
            }
            ++merged;
        }
    }
    return merged;
}

std::uint64_t ConsumerProxy::dlq_purge(const std::string& topic, Tick now) {
    std::string dlq = topic + ".dlq";
    if (!federation_.has_topic(dlq)) {
        throw SimError(Errc::UnknownTopic, dlq);
    }
    Cluster& dlq_cluster = federation_.cluster(federation_.resolve_for_produce(dlq));
    if (!dlq_cluster.available()) {
        throw SimError(Errc::ClusterUnavailable, "dlq purge for " + topic);
    }
    std::uint64_t purged = 0;
    for (std::uint32_t p = 0; p < dlq_cluster.partition_count(dlq); ++p) {
        TopicPartition tp{dlq, p};
        auto [low, high] = dlq_cluster.watermarks(tp);
        if (low == high) {
            continue;
        }
        auto batch = dlq_cluster.fetch(tp, low, high - low);
        dlq_cluster.truncate_readable(tp);
        for (auto& [offset, message] : batch) {
            purged_[topic].push_back(message.audit.message_id);
            ++purged;
        }
    }
    (void)now;
    return purged;
}

const ConsumerProxy::RegistrationStats& ConsumerProxy::stats(const std::string& group,
                                                             const std::string& topic) const {
    return reg_ref(group, topic).stats;
}

Offset ConsumerProxy::commit_floor(const std::string& group, const TopicPartition& tp) const {
    const Registration& reg = reg_ref(group, tp.topic);
    if (tp.partition >= reg.partitions.size()) {
        throw SimError(Errc::ProtocolViolation, "partition out of range for " + to_string(tp));
    }
    return reg.partitions[tp.partition].floor;
}

bool ConsumerProxy::quiescent() const {
    if (!completions_.empty()) {
        return false;
    }
    for (const auto& [key, reg] : regs_) {
        if (federation_.migration_in_progress(reg.topic)) {
            return false;
        }
        const Cluster& cluster = federation_.cluster(reg.cluster);
        for (std::uint32_t p = 0; p < reg.partitions.size(); ++p) {
            const PartitionState& ps = reg.partitions[p];
            if (!ps.in_flight.empty()) {
                return false;
            }
            auto [low, high] = cluster.watermarks(TopicPartition{reg.topic, p});
            if (ps.next_fetch < high) {
                return false;
            }
        }
    }
    return true;
}

void ConsumerProxy::set_endpoint_behavior(const std::string& endpoint_name,
                                          EndpointBehavior behavior) {
    bool found = false;
    for (auto& [key, reg] : regs_) {
        if (reg.endpoint.name == endpoint_name) {
            *reg.endpoint.behavior = behavior;
            found = true;
        }
    }
    if (!found) {
        throw SimError(Errc::UnknownConsumer, "endpoint " + endpoint_name);
    }
}

} // namespace fedstream
