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

struct TripEvent {
    std::string geofence;
    bool is_demand = false; // demand (rider request) vs supply (open driver)
    Tick app_timestamp = 0;
};

std::string encode_trip(const TripEvent& event);
TripEvent decode_trip(const std::string& payload);

/// Exact surge ratio: demand over supply, floored at 1, kept as a reduced
/// fraction so state digests never depend on float rounding.
struct Ratio {
    std::uint64_t num = 1;
    std::uint64_t den = 1;
    bool operator==(const Ratio&) const = default;
};

Ratio surge_ratio(std::uint64_t demand, std::uint64_t supply);
std::string to_string(const Ratio& r);

struct WindowAggregate {
    std::string geofence;
    Tick window_start = 0;
    std::uint64_t demand = 0;
    std::uint64_t supply = 0;
    Ratio multiplier;
};

enum class IngestResult { Applied, Duplicate, Late };

/// Windowed demand/supply aggregation for one region's copy of the trip
/// stream. Idempotent per message id so at-least-once replication cannot
/// inflate counts; late events (window already sealed) are counted and
/// dropped rather than mutating published results.
class SurgePipeline {
public:
    SurgePipeline(std::string service, std::string region, Tick window_ticks,
                  Tick grace_ticks);

    const std::string& service() const { return service_; }
    const std::string& region() const { return region_; }
    Tick window_ticks() const { return window_ticks_; }

    IngestResult ingest(MessageId id, const TripEvent& event, Tick now);

    /// Seals windows whose close-plus-grace deadline has passed, computing
    /// final multipliers. Returns the newly sealed aggregates ordered by
    /// (window_start, geofence).
    std::vector<WindowAggregate> seal_due(Tick now);

    /// Seals everything still open (end of run).
    std::vector<WindowAggregate> seal_all();

    /// Seals one window explicitly. Throws AlreadySealed on a second seal.
    std::vector<WindowAggregate> seal_window(Tick window_start);

    bool has_open_windows() const { return !open_.empty(); }

    /// Order-insensitive digest over all sealed aggregates, as a fixed-width
    /// hex string. Two pipelines that applied the same unique events agree
    /// on it regardless of delivery order. Unavailable while windows remain
    /// open.
    std::string state_digest() const;

    const std::map<std::pair<Tick, std::string>, WindowAggregate>& sealed() const {
        return sealed_;
    }
    std::uint64_t applied_count() const { return applied_; }
    std::uint64_t duplicate_count() const { return duplicates_; }
    std::uint64_t late_count() const { return late_; }

private:
    struct OpenWindow {
        std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> counts;
    };

    std::vector<WindowAggregate> seal_one(Tick window_start, OpenWindow& window);

    std::string service_;
    std::string region_;
    Tick window_ticks_;
    Tick grace_ticks_;
    std::set<MessageId> seen_;
    std::map<Tick, OpenWindow> open_;
    std::set<Tick> sealed_starts_;
    std::map<std::pair<Tick, std::string>, WindowAggregate> sealed_;
    std::uint64_t applied_ = 0;
    std::uint64_t duplicates_ = 0;
    std::uint64_t late_ = 0;
};

} // namespace fedstream
