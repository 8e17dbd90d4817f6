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

#include "fedstream/checkpoint.hpp"

#include "fedstream/error.hpp"

#include <algorithm>

namespace fedstream {

void OffsetMappingStore::add(const OffsetCheckpoint& checkpoint) {
    auto& list = data_[Key{checkpoint.route, checkpoint.tp}];
    if (!list.empty() && (checkpoint.src_offset <= list.back().src_offset ||
                          checkpoint.dst_offset <= list.back().dst_offset)) {
        throw SimError(Errc::InvalidCheckpoint,
                       checkpoint.route + " " + to_string(checkpoint.tp) +
                           ": checkpoints must advance in both coordinates");
    }
    list.push_back(checkpoint);
    ++total_;
}

const std::vector<OffsetCheckpoint>* OffsetMappingStore::find(const std::string& route,
                                                              const TopicPartition& tp) const {
    auto it = data_.find(Key{route, tp});
    return it == data_.end() ? nullptr : &it->second;
}

std::optional<Offset> OffsetMappingStore::floor_dst(const std::string& route,
                                                    const TopicPartition& tp, Offset src) const {
    const auto* list = find(route, tp);
    if (list == nullptr) {
        return std::nullopt;
    }
    // First checkpoint with src_offset > src; the one before it is the floor.
    auto it = std::upper_bound(list->begin(), list->end(), src,
                               [](Offset value, const OffsetCheckpoint& cp) {
                                   return value < cp.src_offset;
                               });
    if (it == list->begin()) {
        return std::nullopt;
    }
    return std::prev(it)->dst_offset;
}

std::optional<Offset> OffsetMappingStore::floor_src_for_dst(const std::string& route,
                                                            const TopicPartition& tp,
                                                            Offset dst) const {
    const auto* list = find(route, tp);
    if (list == nullptr) {
        return std::nullopt;
    }
    auto it = std::upper_bound(list->begin(), list->end(), dst,
                               [](Offset value, const OffsetCheckpoint& cp) {
                                   return value < cp.dst_offset;
                               });
    if (it == list->begin()) {
        return std::nullopt;
    }
    return std::prev(it)->src_offset;
}

std::optional<OffsetCheckpoint> OffsetMappingStore::last(const std::string& route,
                                                         const TopicPartition& tp) const {
    const auto* list = find(route, tp);
    if (list == nullptr || list->empty()) {
        return std::nullopt;
    }
    return list->back();
}

} // namespace fedstream
