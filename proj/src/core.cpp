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

#include "fedstream/core.hpp"

#include "fedstream/error.hpp"

#include <algorithm>

namespace fedstream {

std::string_view errc_name(Errc code) {
    switch (code) {
    case Errc::InvalidPartitionCount: return "InvalidPartitionCount";
    case Errc::TopicExists: return "TopicExists";
    case Errc::UnknownTopic: return "UnknownTopic";
    case Errc::OffsetExpired: return "OffsetExpired";
    case Errc::InvalidCommit: return "InvalidCommit";
    case Errc::CommitRegression: return "CommitRegression";
    case Errc::ClusterUnavailable: return "ClusterUnavailable";
    case Errc::FederationFull: return "FederationFull";
    case Errc::MigrationInProgress: return "MigrationInProgress";
    case Errc::InvalidMigration: return "InvalidMigration";
    case Errc::UnknownCluster: return "UnknownCluster";
    case Errc::DuplicateRegistration: return "DuplicateRegistration";
    case Errc::ProtocolViolation: return "ProtocolViolation";
    case Errc::NoWorkers: return "NoWorkers";
    case Errc::UnknownRoute: return "UnknownRoute";
    case Errc::UnknownWorker: return "UnknownWorker";
    case Errc::InvalidCheckpoint: return "InvalidCheckpoint";
    case Errc::UnknownStage: return "UnknownStage";
    case Errc::UnknownConsumer: return "UnknownConsumer";
    case Errc::AlreadyInRegion: return "AlreadyInRegion";
    case Errc::RegionUnavailable: return "RegionUnavailable";
    case Errc::AlreadySealed: return "AlreadySealed";
    case Errc::DigestUnavailable: return "DigestUnavailable";
    case Errc::ConfigError: return "ConfigError";
    }
    return "UnknownError";
}

std::string to_string(const MessageId& id) {
    if (id.hi == 0) {
        return std::to_string(id.lo);
    }
    // Manual base-10 conversion of the 128-bit value via long division.
    std::uint64_t hi = id.hi;
    std::uint64_t lo = id.lo;
    std::string digits;
    while (hi != 0 || lo != 0) {
        std::uint64_t rem = 0;
        std::uint64_t new_hi = 0;
        std::uint64_t new_lo = 0;
        for (int bit = 127; bit >= 0; --bit) {
            rem = (rem << 1) | ((bit >= 64 ? (hi >> (bit - 64)) : (lo >> bit)) & 1ULL);
            if (rem >= 10) {
                rem -= 10;
                if (bit >= 64) {
                    new_hi |= 1ULL << (bit - 64);
                } else {
                    new_lo |= 1ULL << bit;
                }
            }
        }
        digits.push_back(static_cast<char>('0' + rem));
        hi = new_hi;
        lo = new_lo;
    }
    std::reverse(digits.begin(), digits.end());
    return digits;
}

std::string to_string(const TopicPartition& tp) {
    return tp.topic + "/" + std::to_string(tp.partition);
}

std::string to_string(const ClusterId& id) {
    return id.region + "/" + id.name;
}

std::uint32_t partition_for_key(std::string_view key, std::uint32_t partition_count) {
    if (partition_count == 0) {
        throw SimError(Errc::InvalidPartitionCount, "partition count must be positive");
    }
    return static_cast<std::uint32_t>(fnv1a64(key) % partition_count);
}

} // namespace fedstream
