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
#include <set>
#include <string>
#include <vector>

namespace fedstream {

struct AlertRecord {
    std::string topic;
    Tick window_start = 0;
    std::string stage_a;
    std::string stage_b;
    std::uint64_t count_a = 0;
    std::uint64_t count_b = 0;
    std::vector<MessageId> missing_ids; // seen at stage_a, absent at stage_b
    Tick emitted_at = 0;
};

/// Loss and duplication auditing across pipeline stages. Records are bucketed
/// into tumbling windows by application timestamp; unique message-id counts
/// per (topic, stage, window) are compared between adjacent stages once the
/// window seals. Counting unique ids makes the comparison robust to
/// duplicates from at-least-once replication.
class AuditService {
public:
    struct TopicAuditConfig {
        Tick window_ticks = 0;
        Tick grace_ticks = 0;
        std::vector<std::string> stages; // compared pairwise in this order
    };

    void register_topic(const std::string& topic, TopicAuditConfig config);
    bool audits(const std::string& topic) const { return topics_.contains(topic); }
    const TopicAuditConfig& config(const std::string& topic) const;

    /// Counts `id` in the window containing `app_timestamp` at `stage`.
    /// Returns false (and counts the record late) when that window has
    /// already sealed. Duplicate ids leave the unique count unchanged.
    bool record(const std::string& topic, const std::string& stage, MessageId id,
                Tick app_timestamp, Tick now);

    /// Seals every window whose close-plus-grace deadline has passed and
    /// compares adjacent stages, emitting alerts for count mismatches or
    /// missing ids. Returns alerts emitted this call.
    std::uint64_t seal_and_compare(Tick now);

    /// Seals all remaining windows regardless of deadline (end of run).
    std::uint64_t seal_all(Tick now);

    std::uint64_t unique_count(const std::string& topic, const std::string& stage,
                               Tick window_start) const;
    std::uint64_t late_count(const std::string& topic) const;
    const std::vector<AlertRecord>& alerts() const { return alerts_; }

    Tick window_start_for(const std::string& topic, Tick app_timestamp) const;

private:
    struct WindowData {
        std::map<std::string, std::set<MessageId>> ids_by_stage;
        bool sealed = false;
    };
    struct TopicState {
        TopicAuditConfig config;
        std::map<Tick, WindowData> windows; // keyed by window start
        std::uint64_t late = 0;
    };

    std::uint64_t compare_window(const std::string& topic, TopicState& state,
                                 Tick window_start, WindowData& window, Tick now);

    std::map<std::string, TopicState> topics_;
    std::vector<AlertRecord> alerts_;
};

} // namespace fedstream
