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

#include "fedstream/audit.hpp"

#include "fedstream/error.hpp"

#include <algorithm>

namespace fedstream {

void AuditService::register_topic(const std::string& topic, TopicAuditConfig config) {
    if (topics_.contains(topic)) {
        throw SimError(Errc::DuplicateRegistration, "topic already audited: " + topic);
    }
    if (config.window_ticks == 0) {
        throw SimError(Errc::ProtocolViolation, "audit window must be positive: " + topic);
    }
    if (config.stages.size() < 2) {
        throw SimError(Errc::ProtocolViolation,
                       "audit needs at least two stages: " + topic);
    }
    for (std::size_t i = 0; i < config.stages.size(); ++i) {
        for (std::size_t j = i + 1; j < config.stages.size(); ++j) {
            if (config.stages[i] == config.stages[j]) {
                throw SimError(Errc::DuplicateRegistration,
                               "duplicate audit stage: " + config.stages[i]);
            }
        }
    }
    topics_.emplace(topic, TopicState{std::move(config), {}, 0});
}

const AuditService::TopicAuditConfig&
AuditService::config(const std::string& topic) const {
    auto it = topics_.find(topic);
    if (it == topics_.end()) {
        throw SimError(Errc::UnknownTopic, "topic not audited: " + topic);
    }
    return it->second.config;
}

Tick AuditService::window_start_for(const std::string& topic, Tick app_timestamp) const {
    const TopicAuditConfig& cfg = config(topic);
    return (app_timestamp / cfg.window_ticks) * cfg.window_ticks;
}

bool AuditService::record(const std::string& topic, const std::string& stage,
                          MessageId id, Tick app_timestamp, Tick now) {
    (void)now;
    auto it = topics_.find(topic);
    if (it == topics_.end()) {
        throw SimError(Errc::UnknownTopic, "topic not audited: " + topic);
    }
    TopicState& state = it->second;
    const auto& stages = state.config.stages;
    if (std::find(stages.begin(), stages.end(), stage) == stages.end()) {
        throw SimError(Errc::UnknownStage, "unknown audit stage: " + stage);
    }
    Tick start = (app_timestamp / state.config.window_ticks) * state.config.window_ticks;
    WindowData& window = state.windows[start];
    if (window.sealed) {
        ++state.late;
        return false;
    }
    window.ids_by_stage[stage].insert(id);
    return true;
}

std::uint64_t AuditService::compare_window(const std::string& topic, TopicState& state,
                                           Tick window_start, WindowData& window,
                                           Tick now) {
    window.sealed = true;
    std::uint64_t emitted = 0;
    const auto& stages = state.config.stages;
    for (std::size_t i = 0; i + 1 < stages.size(); ++i) {
        const std::set<MessageId>& a = window.ids_by_stage[stages[i]];
        const std::set<MessageId>& b = window.ids_by_stage[stages[i + 1]];
        std::vector<MessageId> missing;
        std::set_difference(a.begin(), a.end(), b.begin(), b.end(),
                            std::back_inserter(missing));
        if (a.size() != b.size() || !missing.empty()) {
            alerts_.push_back(AlertRecord{topic, window_start, stages[i], stages[i + 1],
                                          a.size(), b.size(), std::move(missing), now});
            ++emitted;
        }
    }
    return emitted;
}

std::uint64_t AuditService::seal_and_compare(Tick now) {
    std::uint64_t emitted = 0;
    for (auto& [topic, state] : topics_) {
        for (auto& [start, window] : state.windows) {
            if (window.sealed) {
                continue;
            }
            if (start + state.config.window_ticks + state.config.grace_ticks <= now) {
                emitted += compare_window(topic, state, start, window, now);
            }
        }
    }
    return emitted;
}

std::uint64_t AuditService::seal_all(Tick now) {
    std::uint64_t emitted = 0;
    for (auto& [topic, state] : topics_) {
        for (auto& [start, window] : state.windows) {
            if (!window.sealed) {
                emitted += compare_window(topic, state, start, window, now);
            }
        }
    }
    return emitted;
}

std::uint64_t AuditService::unique_count(const std::string& topic,
                                         const std::string& stage,
                                         Tick window_start) const {
    auto it = topics_.find(topic);
    if (it == topics_.end()) {
        throw SimError(Errc::UnknownTopic, "topic not audited: " + topic);
    }
    auto wit = it->second.windows.find(window_start);
    if (wit == it->second.windows.end()) {
        return 0;
    }
    auto sit = wit->second.ids_by_stage.find(stage);
    return sit == wit->second.ids_by_stage.end() ? 0 : sit->second.size();
}

std::uint64_t AuditService::late_count(const std::string& topic) const {
    auto it = topics_.find(topic);
    if (it == topics_.end()) {
        throw SimError(Errc::UnknownTopic, "topic not audited: " + topic);
    }
    return it->second.late;
}

} // namespace fedstream
