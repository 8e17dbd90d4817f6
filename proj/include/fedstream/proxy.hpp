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
#include "fedstream/core.hpp"
#include "fedstream/federation.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace fedstream {

struct RetryPolicy {
    std::uint32_t max_retries = 0; // retries after the first attempt
    Tick backoff_ticks = 0;
};

/// Deterministic endpoint outcome rule, keyed by message id and attempt
/// number (1-based). Swappable at runtime by the fault harness.
struct EndpointBehavior {
    enum class Type { AlwaysAck, AlwaysFail, FailFirstK, FailIdsList };

    Type type = Type::AlwaysAck;
    std::uint32_t k = 0;            // FailFirstK: attempts <= k fail
    std::set<MessageId> ids;        // FailIdsList: these ids always fail

    bool acks(const MessageId& id, std::uint32_t attempt) const {
        switch (type) {
        case Type::AlwaysAck: return true;
        case Type::AlwaysFail: return false;
        case Type::FailFirstK: return attempt > k;
        case Type::FailIdsList: return !ids.contains(id);
        }
        return true;
    }
};

struct EndpointSpec {
    std::string name;
    Tick processing_delay = 1;
    std::shared_ptr<EndpointBehavior> behavior = std::make_shared<EndpointBehavior>();
};

/// Push dispatcher between partition logs and consumer endpoints.
///
/// Each (group, topic) registration keeps at most `window` unresolved
/// deliveries in flight per partition, so consumer parallelism is not capped
/// by the partition count. A delivery stays unresolved across retries; after
/// max_retries + 1 failed attempts it is dead-lettered to "<topic>.dlq" and
/// counts as resolved. The committed offset per partition is the largest
/// contiguous resolved prefix, so one poisoned message never blocks the
/// partition behind the retry window.
class ConsumerProxy {
public:
    explicit ConsumerProxy(Federation& federation) : federation_(federation) {}

    struct RegistrationStats {
        std::uint64_t dispatched = 0;    // pushes, including retries
        std::uint64_t acked = 0;
        std::uint64_t failed = 0;        // failed attempts
        std::uint64_t dead_lettered = 0;
        std::uint64_t data_loss = 0;     // offsets expired before dispatch
        std::uint64_t current_in_flight = 0;
        std::uint64_t peak_in_flight = 0;
    };

    void register_consumer(const std::string& group, const std::string& topic,
                           EndpointSpec endpoint, std::uint32_t window, RetryPolicy policy,
                           Tick now);

    /// Re-pushes due retries, then fills each partition's window in offset
    /// order. Returns the number of dispatches performed.
    std::uint64_t dispatch_step(Tick now);

    /// Applies endpoint outcomes for deliveries whose processing delay has
    /// elapsed. Returns the number of completions applied.
    std::uint64_t process_completions(Tick now);

    /// Resolution of a single delivery. Exposed for direct-drive tests; the
    /// scheduled completions funnel through here as well.
    void handle_result(const std::string& group, const TopicPartition& tp, Offset offset,
                       bool acked, Tick now);

    /// Re-produces every dead-lettered message of the topic back onto the
    /// main topic with fresh attempt counters, then empties the DLQ.
    std::uint64_t dlq_merge(const std::string& topic, Tick now);

    /// Discards the DLQ contents, recording the purged ids.
    std::uint64_t dlq_purge(const std::string& topic, Tick now);

    const RegistrationStats& stats(const std::string& group, const std::string& topic) const;
    Offset commit_floor(const std::string& group, const TopicPartition& tp) const;
    const std::map<std::string, std::vector<MessageId>>& purged_ids() const { return purged_; }

    /// True when every registration has no unresolved deliveries, no pending
    /// completions, and has fetched up to its cluster's high watermark.
    bool quiescent() const;

    /// Swaps the outcome rule of a named endpoint (fault injection).
    void set_endpoint_behavior(const std::string& endpoint_name, EndpointBehavior behavior);

    // Observers wired by the harness; all optional.
    std::function<void(const std::string& group, const std::string& topic, const ClusterId&,
                       const TopicPartition&, Offset, const Message&, std::uint32_t attempt,
                       Tick now)>
        on_ack;
    std::function<void(const std::string& group, const std::string& topic, const Message&,
                       std::uint32_t attempts, Tick now)>
        on_dead_letter;
    std::function<void(const std::string& topic, const Message&, Tick now)> on_merged_message;
    std::function<void(const std::string& group, const std::string& topic,
                       const TopicPartition&, std::uint64_t lost, Tick now)>
        on_data_loss;
    std::function<void(const std::string& group, const std::string& topic, std::uint64_t peak,
                       Tick now)>
        on_new_peak;

private:
    enum class Phase { Dispatched, AwaitingRetry };

    struct InFlight {
        Message message;
        std::uint32_t attempts = 0; // dispatches performed so far
        Phase phase = Phase::Dispatched;
        Tick retry_ready_at = 0;
    };

    struct PartitionState {
        Offset next_fetch = 0;
        Offset floor = 0;                 // largest contiguous resolved prefix
        std::map<Offset, InFlight> in_flight;
        std::set<Offset> resolved_ahead;  // resolved offsets beyond the floor
    };

    struct Registration {
        std::string group;
        std::string topic;
        EndpointSpec endpoint;
        std::uint32_t window = 1;
        RetryPolicy policy;
        ClusterId cluster;
        std::vector<PartitionState> partitions;
        RegistrationStats stats;
    };

    struct Completion {
        std::string group;
        std::string topic;
        std::uint32_t partition = 0;
        Offset offset = 0;
        std::uint32_t attempt = 0;
    };

    using RegKey = std::pair<std::string, std::string>; // (group, topic)

    Registration& reg_ref(const std::string& group, const std::string& topic);
    const Registration& reg_ref(const std::string& group, const std::string& topic) const;
    void schedule_completion(const Registration& reg, const TopicPartition& tp, Offset offset,
                             std::uint32_t attempt, Tick now);
    void resolve_offset(Registration& reg, const TopicPartition& tp, Offset offset, Tick now);
    void try_commit(Registration& reg, const TopicPartition& tp);
    void switch_cluster(Registration& reg, const ClusterId& target, Tick now);
    void dead_letter(Registration& reg, const TopicPartition& tp, Offset offset, Tick now);
    std::string ensure_dlq(const std::string& topic);
    void track_in_flight(Registration& reg, Tick now);

    Federation& federation_;
    std::map<RegKey, Registration> regs_;
    std::map<std::pair<Tick, std::uint64_t>, Completion> completions_;
    std::uint64_t completion_seq_ = 0;
    std::map<std::string, std::vector<MessageId>> purged_; // topic -> purged ids
};

} // namespace fedstream
