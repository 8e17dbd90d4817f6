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

#include "fedstream/pipeline.hpp"

#include "fedstream/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <tuple>

namespace fedstream {

std::string encode_trip(const TripEvent& event) {
    nlohmann::json j;
    j["geofence"] = event.geofence;
    j["kind"] = event.is_demand ? "demand" : "supply";
    j["ts"] = event.app_timestamp;
    return j.dump();
}

TripEvent decode_trip(const std::string& payload) {
    nlohmann::json j = nlohmann::json::parse(payload, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("geofence") ||
        !j.contains("kind") || !j.contains("ts") || !j["geofence"].is_string() ||
        !j["kind"].is_string() || !j["ts"].is_number_unsigned()) {
        throw SimError(Errc::ProtocolViolation, "malformed trip payload: " + payload);
    }
    const std::string kind = j["kind"].get<std::string>();
    if (kind != "demand" && kind != "supply") {
        throw SimError(Errc::ProtocolViolation, "unknown trip kind: " + kind);
    }
    return TripEvent{j["geofence"].get<std::string>(), kind == "demand",
                     j["ts"].get<Tick>()};
}

Ratio surge_ratio(std::uint64_t demand, std::uint64_t supply) {
    // Zero supply behaves as one driver; ratios below parity clamp to 1.
    std::uint64_t den = supply == 0 ? 1 : supply;
    if (demand <= den) {
        return Ratio{1, 1};
    }
    std::uint64_t g = std::gcd(demand, den);
    return Ratio{demand / g, den / g};
}

std::string to_string(const Ratio& r) {
    return std::to_string(r.num) + "/" + std::to_string(r.den);
}

SurgePipeline::SurgePipeline(std::string service, std::string region, Tick window_ticks,
                             Tick grace_ticks)
    : service_(std::move(service)),
      region_(std::move(region)),
      window_ticks_(window_ticks),
      grace_ticks_(grace_ticks) {
    if (window_ticks_ == 0) {
        throw SimError(Errc::ProtocolViolation,
                       "pipeline window must be positive: " + service_);
    }
}

IngestResult SurgePipeline::ingest(MessageId id, const TripEvent& event, Tick now) {
    (void)now;
    if (!seen_.insert(id).second) {
        ++duplicates_;
        return IngestResult::Duplicate;
    }
    Tick start = (event.app_timestamp / window_ticks_) * window_ticks_;
    if (sealed_starts_.contains(start)) {
        ++late_;
        return IngestResult::Late;
    }
    auto& [demand, supply] = open_[start].counts[event.geofence];
    if (event.is_demand) {
        ++demand;
    } else {
        ++supply;
    }
    ++applied_;
    return IngestResult::Applied;
}

std::vector<WindowAggregate> SurgePipeline::seal_one(Tick window_start,
                                                     OpenWindow& window) {
    std::vector<WindowAggregate> out;
    for (const auto& [geofence, counts] : window.counts) {
        WindowAggregate agg{geofence, window_start, counts.first, counts.second,
                            surge_ratio(counts.first, counts.second)};
        sealed_.emplace(std::make_pair(window_start, geofence), agg);
        out.push_back(std::move(agg));
    }
    sealed_starts_.insert(window_start);
    return out;
}

std::vector<WindowAggregate> SurgePipeline::seal_due(Tick now) {
    std::vector<WindowAggregate> out;
    for (auto it = open_.begin(); it != open_.end();) {
        if (it->first + window_ticks_ + grace_ticks_ <= now) {
            auto sealed = seal_one(it->first, it->second);
            out.insert(out.end(), sealed.begin(), sealed.end());
            it = open_.erase(it);
        } else {
            ++it;
        }
    }
    return out;
}

std::vector<WindowAggregate> SurgePipeline::seal_all() {
    std::vector<WindowAggregate> out;
    for (auto& [start, window] : open_) {
        auto sealed = seal_one(start, window);
        out.insert(out.end(), sealed.begin(), sealed.end());
    }
    open_.clear();
    return out;
}

std::vector<WindowAggregate> SurgePipeline::seal_window(Tick window_start) {
    if (sealed_starts_.contains(window_start)) {
        throw SimError(Errc::AlreadySealed,
                       "window already sealed: " + std::to_string(window_start));
    }
    auto it = open_.find(window_start);
    if (it == open_.end()) {
        // Sealing an empty window publishes nothing but blocks late events.
        sealed_starts_.insert(window_start);
        return {};
    }
    auto out = seal_one(it->first, it->second);
    open_.erase(it);
    return out;
}

std::string SurgePipeline::state_digest() const {
    if (!open_.empty()) {
        throw SimError(Errc::DigestUnavailable,
                       "open windows remain in pipeline " + service_ + "/" + region_);
    }
    // Canonical row order is (geofence, window_start); hashing rows in that
    // order makes the digest independent of event arrival order.
    std::vector<const WindowAggregate*> rows;
    rows.reserve(sealed_.size());
    for (const auto& [key, agg] : sealed_) {
        rows.push_back(&agg);
    }
    std::sort(rows.begin(), rows.end(), [](const WindowAggregate* a,
                                           const WindowAggregate* b) {
        return std::tie(a->geofence, a->window_start) <
               std::tie(b->geofence, b->window_start);
    });
    std::uint64_t digest = kFnvOffsetBasis;
    for (const WindowAggregate* agg : rows) {
        std::string row = agg->geofence + "|" + std::to_string(agg->window_start) + "|" +
                          std::to_string(agg->demand) + "|" +
                          std::to_string(agg->supply) + "|" +
                          to_string(agg->multiplier) + "\n";
        digest = fnv1a64(row, digest);
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(digest));
    return std::string(buf);
}

} // namespace fedstream
