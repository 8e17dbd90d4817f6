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

#include "fedstream/replicator.hpp"

#include "fedstream/error.hpp"

#include <algorithm>

namespace fedstream {

Assignment rebalance_assignments(const std::vector<RoutePartition>& partitions,
                                 const Assignment& current,
                                 const std::set<std::string>& active) {
    if (active.empty()) {
        throw SimError(Errc::NoWorkers, "rebalance with no active workers");
    }
    std::vector<RoutePartition> sorted = partitions;
    std::sort(sorted.begin(), sorted.end());

    const std::uint64_t p_count = sorted.size();
    const std::uint64_t w_count = active.size();
    const std::uint64_t base = p_count / w_count;
    const std::uint64_t quota = p_count % w_count; // workers allowed base + 1

    std::map<std::string, std::vector<RoutePartition>> held;
    for (const std::string& worker : active) {
        held[worker];
    }
    std::vector<RoutePartition> movers;
    for (const RoutePartition& rp : sorted) {
        auto it = current.find(rp);
        if (it != current.end() && active.contains(it->second)) {
            held[it->second].push_back(rp);
        } else {
            movers.push_back(rp);
        }
    }

    // Give the larger share to the workers holding the most partitions, so
    // the retained set is as large as any balanced assignment permits.
    std::vector<std::string> order(active.begin(), active.end());
    std::stable_sort(order.begin(), order.end(), [&](const std::string& a, const std::string& b) {
        return held[a].size() > held[b].size();
    });
    std::map<std::string, std::uint64_t> target;
    std::uint64_t remaining = quota;
    for (const std::string& worker : order) {
        target[worker] = base + (remaining > 0 ? 1 : 0);
        if (remaining > 0) {
            --remaining;
        }
    }

    Assignment result;
    std::map<std::string, std::uint64_t> kept;
    for (const std::string& worker : active) {
        const auto& rps = held[worker];
        std::uint64_t keep = std::min<std::uint64_t>(target[worker], rps.size());
        for (std::uint64_t i = 0; i < keep; ++i) {
            result[rps[i]] = worker;
        }
        for (std::uint64_t i = keep; i < rps.size(); ++i) {
            movers.push_back(rps[i]);
        }
        kept[worker] = keep;
    }
    std::sort(movers.begin(), movers.end());
    auto mover = movers.begin();
    for (const std::string& worker : active) {
        while (kept[worker] < target[worker] && mover != movers.end()) {
            result[*mover] = worker;
            ++mover;
            ++kept[worker];
        }
    }
    return result;
}

const ReplicationRoute& Replicator::route_ref(const std::string& id) const {
    auto it = routes_.find(id);
    if (it == routes_.end()) {
        throw SimError(Errc::UnknownRoute, id);
    }
    return it->second;
}

void Replicator::add_route(const ReplicationRoute& route) {
    if (routes_.contains(route.id)) {
        throw SimError(Errc::DuplicateRegistration, "route " + route.id);
    }
    if (route.checkpoint_interval == 0) {
        throw SimError(Errc::InvalidCheckpoint, "route " + route.id + ": interval must be >= 1");
    }
    Cluster& src = cluster_of_(route.src_cluster);
    Cluster& dst = cluster_of_(route.dst_cluster);
    if (src.partition_count(route.topic) != dst.partition_count(route.topic)) {
        throw SimError(Errc::InvalidPartitionCount,
                       "route " + route.id + ": src and dst partition counts differ");
    }
    routes_.emplace(route.id, route);
    for (std::uint32_t p = 0; p < src.partition_count(route.topic); ++p) {
        cursors_[RoutePartition{route.id, p}] = 0;
    }
    if (!active_.empty()) {
        assignment_ = rebalance_assignments(all_partitions(), assignment_, active_);
    }
}

std::vector<RoutePartition> Replicator::all_partitions() const {
    std::vector<RoutePartition> rps;
    rps.reserve(cursors_.size());
    for (const auto& [rp, cursor] : cursors_) {
        rps.push_back(rp);
    }
    return rps;
}

void Replicator::set_workers(const std::vector<std::string>& active,
                             const std::vector<std::string>& standby,
                             std::uint64_t budget_per_tick) {
    active_ = std::set<std::string>(active.begin(), active.end());
    standby_ = std::set<std::string>(standby.begin(), standby.end());
    budget_ = budget_per_tick;
    if (!cursors_.empty() && !active_.empty()) {
        assignment_ = rebalance_assignments(all_partitions(), assignment_, active_);
    }
}

Offset Replicator::cursor(const std::string& route, std::uint32_t partition) const {
    auto it = cursors_.find(RoutePartition{route, partition});
    if (it == cursors_.end()) {
        throw SimError(Errc::UnknownRoute, route + "/" + std::to_string(partition));
    }
    return it->second;
}

void Replicator::maybe_checkpoint(const RoutePartition& rp, Tick now) {
    const ReplicationRoute& route = route_ref(rp.first);
    Offset cursor = cursors_.at(rp);
    if (cursor % route.checkpoint_interval != 0) {
        return;
    }
    TopicPartition tp{route.topic, rp.second};
    Offset dst_high = cluster_of_(route.dst_cluster).watermarks(tp).second;
    LastCheckpoint& last = last_checkpoint_[rp];
    // Both coordinates must advance; a fully dropped interval is skipped.
    if (last.any && (cursor <= last.src || dst_high <= last.dst)) {
        return;
    }
    OffsetCheckpoint cp{rp.first, tp, cursor, dst_high, now};
    store_.add(cp);
    last = LastCheckpoint{cursor, dst_high, true};
    if (on_checkpoint) {
        on_checkpoint(cp);
    }
}

std::uint64_t Replicator::replicate_step(const std::string& worker, Tick now) {
    if (!active_.contains(worker)) {
        if (standby_.contains(worker)) {
            return 0;
        }
        throw SimError(Errc::UnknownWorker, worker);
    }
    std::vector<RoutePartition> mine;
    for (const auto& [rp, owner] : assignment_) {
        if (owner == worker) {
            mine.push_back(rp);
        }
    }
    std::uint64_t budget = budget_;
    std::uint64_t copied = 0;
    std::set<RoutePartition> blocked;
    bool progress = true;
    while (budget > 0 && progress) {
        progress = false;
        for (const RoutePartition& rp : mine) {
            if (budget == 0) {
                break;
            }
            if (blocked.contains(rp)) {
                continue;
            }
            const ReplicationRoute& route = routes_.at(rp.first);
            TopicPartition tp{route.topic, rp.second};
            Offset cursor = cursors_.at(rp);
            std::vector<std::pair<Offset, Message>> batch;
            try {
                batch = cluster_of_(route.src_cluster).fetch(tp, cursor, 1);
            } catch (const SimError& err) {
                if (err.code() == Errc::ClusterUnavailable) {
                    blocked.insert(rp);
                    continue;
                }
                if (err.code() == Errc::OffsetExpired) {
                    // Retention overtook the cursor; resume at the low
                    // watermark and surface the gap.
                    Offset low = cluster_of_(route.src_cluster).watermarks(tp).first;
                    if (on_data_loss) {
                        on_data_loss(route, rp.second, low - cursor, now);
                    }
                    cursors_[rp] = low;
                    progress = true;
                    continue;
                }
                throw;
            }
            if (batch.empty()) {
                continue; // caught up
            }
            Message& message = batch.front().second;
            if (drop_filter && drop_filter(route.id, message, now)) {
                cursors_[rp] = cursor + 1;
                if (on_dropped) {
                    on_dropped(route, message, now);
                }
                --budget;
                progress = true;
                maybe_checkpoint(rp, now);
                continue;
            }
            Offset dst_offset = 0;
            try {
                dst_offset = cluster_of_(route.dst_cluster).append(tp, message, now);
            } catch (const SimError& err) {
                if (err.code() == Errc::ClusterUnavailable) {
                    blocked.insert(rp);
                    continue;
                }
                throw;
            }
            cursors_[rp] = cursor + 1;
            ++copied;
            --budget;
            progress = true;
            if (on_copied) {
                on_copied(route, tp, message, dst_offset, now);
            }
            maybe_checkpoint(rp, now);
        }
    }
    return copied;
}

void Replicator::crash_worker(const std::string& worker, Tick now) {
    if (!active_.contains(worker)) {
        throw SimError(Errc::UnknownWorker, worker);
    }
    active_.erase(worker);
    if (active_.empty()) {
        assignment_.clear();
        if (on_rebalance) {
            on_rebalance(0, "worker_crash", now);
        }
        return;
    }
    Assignment before = assignment_;
    assignment_ = rebalance_assignments(all_partitions(), assignment_, active_);
    std::uint64_t moves = 0;
    for (const auto& [rp, owner] : assignment_) {
        auto it = before.find(rp);
        if (it == before.end() || it->second != owner) {
            ++moves;
        }
        // A partition owned by the crashed worker resumes from its last
        // checkpoint; the in-memory cursor died with the worker.
        if (it != before.end() && it->second == worker) {
            const LastCheckpoint& last = last_checkpoint_[rp];
            cursors_[rp] = last.any ? last.src : 0;
        }
    }
    if (on_rebalance) {
        on_rebalance(moves, "worker_crash", now);
    }
}

std::uint64_t Replicator::partition_lag(const RoutePartition& rp) const {
    const ReplicationRoute& route = route_ref(rp.first);
    TopicPartition tp{route.topic, rp.second};
    Offset high = cluster_of_(route.src_cluster).watermarks(tp).second;
    Offset cursor = cursors_.at(rp);
    return high > cursor ? high - cursor : 0;
}

std::uint64_t Replicator::worker_lag(const std::string& worker) const {
    std::uint64_t total = 0;
    for (const auto& [rp, owner] : assignment_) {
        if (owner == worker) {
            total += partition_lag(rp);
        }
    }
    return total;
}

std::uint64_t Replicator::redistribute_on_burst(std::uint64_t lag_threshold, Tick now) {
    std::vector<std::pair<std::uint64_t, std::string>> overloaded;
    for (const std::string& worker : active_) {
        std::uint64_t lag = worker_lag(worker);
        if (lag > lag_threshold) {
            overloaded.emplace_back(lag, worker);
        }
    }
    std::sort(overloaded.begin(), overloaded.end(),
              [](const auto& a, const auto& b) {
                  return a.first != b.first ? a.first > b.first : a.second < b.second;
              });
    std::vector<std::string> pool(standby_.begin(), standby_.end());
    std::size_t next_standby = 0;
    std::set<std::string> promoted;
    std::uint64_t moves = 0;

    for (const auto& [initial_lag, worker] : overloaded) {
        while (worker_lag(worker) > lag_threshold) {
            // Hottest partition of the overloaded worker.
            RoutePartition hottest;
            std::uint64_t hottest_lag = 0;
            bool found = false;
            for (const auto& [rp, owner] : assignment_) {
                if (owner != worker) {
                    continue;
                }
                std::uint64_t lag = partition_lag(rp);
                if (!found || lag > hottest_lag) {
                    hottest = rp;
                    hottest_lag = lag;
                    found = true;
                }
            }
            if (!found || hottest_lag == 0) {
                break;
            }
            // Prefer a promoted worker that stays under the threshold after
            // taking the partition; otherwise promote another standby.
            std::string target;
            std::uint64_t target_lag = 0;
            for (const std::string& candidate : promoted) {
                std::uint64_t lag = worker_lag(candidate);
                if (target.empty() || lag < target_lag) {
                    target = candidate;
                    target_lag = lag;
                }
            }
            bool fits = !target.empty() && target_lag + hottest_lag <= lag_threshold;
            if (!fits && next_standby < pool.size()) {
                target = pool[next_standby++];
                promoted.insert(target);
                active_.insert(target);
                standby_.erase(target);
            } else if (target.empty()) {
                break; // standby exhausted and nothing promoted
            }
            assignment_[hottest] = target; // planned handoff keeps the cursor
            ++moves;
        }
    }
    if (moves > 0 && on_rebalance) {
        on_rebalance(moves, "burst", now);
    }
    return moves;
}

std::uint64_t Replicator::flush_checkpoints(Tick now) {
    std::uint64_t written = 0;
    for (const auto& [rp, cursor] : cursors_) {
        const ReplicationRoute& route = routes_.at(rp.first);
        TopicPartition tp{route.topic, rp.second};
        LastCheckpoint& last = last_checkpoint_[rp];
        Offset dst_high = cluster_of_(route.dst_cluster).watermarks(tp).second;
        if (cursor == 0 || (last.any && (cursor <= last.src || dst_high <= last.dst))) {
            continue;
        }
        OffsetCheckpoint cp{rp.first, tp, cursor, dst_high, now};
        store_.add(cp);
        last = LastCheckpoint{cursor, dst_high, true};
        ++written;
        if (on_checkpoint) {
            on_checkpoint(cp);
        }
    }
    return written;
}

bool Replicator::all_caught_up() const {
    for (const auto& [rp, cursor] : cursors_) {
        if (partition_lag(rp) > 0) {
            return false;
        }
    }
    return true;
}

} // namespace fedstream
