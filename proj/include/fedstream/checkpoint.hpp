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
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace fedstream {

/// Source-to-destination offset correspondence recorded by a replication
/// route: the first src_offset messages of the source partition had been
/// copied when the destination partition's high watermark was dst_offset.
struct OffsetCheckpoint {
    std::string route;
    TopicPartition tp;
    Offset src_offset = 0;
    Offset dst_offset = 0;
    Tick tick = 0;
};

/// In-memory mapping database shared by all regions. Checkpoints per
/// (route, partition) are strictly increasing in both coordinates.
class OffsetMappingStore {
public:
    void add(const OffsetCheckpoint& checkpoint);

    const std::vector<OffsetCheckpoint>* find(const std::string& route,
                                              const TopicPartition& tp) const;

    /// Largest checkpointed dst_offset whose src_offset <= src.
    std::optional<Offset> floor_dst(const std::string& route, const TopicPartition& tp,
                                    Offset src) const;

    /// Largest checkpointed src_offset whose dst_offset <= dst. Used to map
    /// a consumed destination position back to a safe source position.
    std::optional<Offset> floor_src_for_dst(const std::string& route, const TopicPartition& tp,
                                            Offset dst) const;

    std::optional<OffsetCheckpoint> last(const std::string& route, const TopicPartition& tp) const;

    std::uint64_t size() const { return total_; }

private:
    using Key = std::pair<std::string, TopicPartition>;
    std::map<Key, std::vector<OffsetCheckpoint>> data_;
    std::uint64_t total_ = 0;
};

} // namespace fedstream
