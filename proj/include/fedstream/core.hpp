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

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace fedstream {

/// Discrete simulation time. One tick is the smallest schedulable step.
using Tick = std::uint64_t;

/// Position of a record within one partition log. Dense, starts at 0.
using Offset = std::uint64_t;

/// 128-bit message identity, unique within a run. Survives replication,
/// dead-lettering and merges unchanged; all audit accounting keys on it.
struct MessageId {
    std::uint64_t hi = 0;
    std::uint64_t lo = 0;

    auto operator<=>(const MessageId&) const = default;
};

std::string to_string(const MessageId& id);

/// Provenance attached to every message at produce time.
struct AuditMeta {
    MessageId message_id;
    Tick app_timestamp = 0;
    std::string service_name;
    std::string tier;
};

struct Message {
    AuditMeta audit;
    std::optional<std::string> key; // absent selects round-robin placement
    std::string payload;
};

struct TopicPartition {
    std::string topic;
    std::uint32_t partition = 0;

    auto operator<=>(const TopicPartition&) const = default;
};

std::string to_string(const TopicPartition& tp);

/// A physical cluster is addressed by (region, name); names are unique
/// within their region and, by scenario validation, across the whole run.
struct ClusterId {
    std::string region;
    std::string name;

    auto operator<=>(const ClusterId&) const = default;
};

std::string to_string(const ClusterId& id);

inline constexpr std::uint64_t kFnvOffsetBasis = 14695981039346656037ULL;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

/// FNV-1a 64-bit over raw bytes, optionally continuing from a prior state.
constexpr std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t state = kFnvOffsetBasis) {
    for (unsigned char c : bytes) {
        state ^= static_cast<std::uint64_t>(c);
        state *= kFnvPrime;
    }
    return state;
}

/// Keyed partition selection: fnv1a64(key) mod partition_count.
/// Throws InvalidPartitionCount when partition_count is zero.
std::uint32_t partition_for_key(std::string_view key, std::uint32_t partition_count);

} // namespace fedstream
