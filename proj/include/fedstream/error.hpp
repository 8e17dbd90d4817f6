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

#include <stdexcept>
#include <string>
#include <string_view>

namespace fedstream {

enum class Errc {
    InvalidPartitionCount,
    TopicExists,
    UnknownTopic,
    OffsetExpired,
    InvalidCommit,
    CommitRegression,
    ClusterUnavailable,
    FederationFull,
    MigrationInProgress,
    InvalidMigration,
    UnknownCluster,
    DuplicateRegistration,
    ProtocolViolation,
    NoWorkers,
    UnknownRoute,
    UnknownWorker,
    InvalidCheckpoint,
    UnknownStage,
    UnknownConsumer,
    AlreadyInRegion,
    RegionUnavailable,
    AlreadySealed,
    DigestUnavailable,
    ConfigError,
};

std::string_view errc_name(Errc code);

/// Single exception type for all domain errors; tests and the CLI branch on code().
class SimError : public std::runtime_error {
public:
    SimError(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

} // namespace fedstream
