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

#include "fedstream/audit.hpp"
#include "fedstream/broker.hpp"
#include "fedstream/checkpoint.hpp"
#include "fedstream/failover.hpp"
#include "fedstream/federation.hpp"
#include "fedstream/pipeline.hpp"
#include "fedstream/proxy.hpp"
#include "fedstream/replicator.hpp"
#include "fedstream/scenario.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace fedstream {

/// One message dropped by fault injection on a replication route. Kept
/// outside the JSON report so tests can rebuild the expected audit alerts.
struct DropEvent {
    std::string route;
    MessageId id;
    Tick app_timestamp = 0;
    Tick tick = 0;
};

struct RunResult {
    nlohmann::json report;
    bool has_violations = false;
    bool stalled = false;
    std::vector<DropEvent> drop_events;
};

/// Deterministic single-threaded simulation of one scenario. Every tick runs
/// a fixed phase order (fault edges, scheduled actions, window sealing,
/// producers, replication, proxy dispatch, consumers, pipelines, offset
/// sync, retention); all randomness comes from one seeded generator, so the
/// report is a pure function of the scenario.
class Simulation {
public:
    Simulation(ScenarioConfig config, std::string scenario_name);
    ~Simulation();

    Simulation(const Simulation&) = delete;
    Simulation& operator=(const Simulation&) = delete;

    RunResult run();

private:
    struct State;
    std::unique_ptr<State> state_;
};

/// Convenience wrapper: construct, run, return the result.
RunResult run_scenario(ScenarioConfig config, const std::string& scenario_name);

} // namespace fedstream
