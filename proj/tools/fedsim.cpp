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

#include "fedstream/builtins.hpp"
#include "fedstream/error.hpp"
#include "fedstream/scenario.hpp"
#include "fedstream/simulation.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

namespace {

struct RunOptions {
    std::string scenario_path;
    std::string builtin_name;
    std::string report_path = "-";
    std::uint64_t seed = 0;
    bool seed_set = false;
};

// Resolves --scenario/--builtin into a parsed config plus a report name.
std::pair<fedstream::ScenarioConfig, std::string> load(const RunOptions& options) {
    if (options.scenario_path.empty() == options.builtin_name.empty()) {
        throw fedstream::SimError(fedstream::Errc::ConfigError,
                                  "exactly one of --scenario and --builtin is required");
    }
    if (!options.builtin_name.empty()) {
        const auto& builtins = fedstream::builtin_scenarios();
        auto it = builtins.find(options.builtin_name);
        if (it == builtins.end()) {
            throw fedstream::SimError(fedstream::Errc::ConfigError,
                                      "unknown builtin scenario '" + options.builtin_name +
                                          "'");
        }
        return {fedstream::parse_scenario_text(it->second), options.builtin_name};
    }
    return {fedstream::load_scenario_file(options.scenario_path),
            std::filesystem::path(options.scenario_path).stem().string()};
}

int run_command(const RunOptions& options) {
    auto [config, name] = load(options);
    if (options.seed_set) {
        config.seed = options.seed;
    }
    fedstream::RunResult result = fedstream::run_scenario(std::move(config), name);
    std::string text = result.report.dump(2) + "\n";
    if (options.report_path == "-") {
        std::cout << text;
    } else {
        std::ofstream out(options.report_path, std::ios::binary);
        if (!out) {
            std::cerr << "cannot write report to " << options.report_path << "\n";
            return 1;
        }
        out << text;
    }
    if (result.has_violations) {
        std::cerr << "run finished with invariant violations; see the report\n";
        return 3;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic multi-region streaming platform simulator"};
    app.require_subcommand(1);

    RunOptions options;
    CLI::App* run = app.add_subcommand("run", "run a scenario and emit a JSON report");
    run->add_option("--scenario", options.scenario_path, "path to a scenario JSON file");
    run->add_option("--builtin", options.builtin_name, "name of a built-in scenario");
    run->add_option("--report", options.report_path, "report output path, '-' for stdout");
    run->add_option("--seed", options.seed, "override the scenario seed")
        ->each([&options](const std::string&) { options.seed_set = true; });

    CLI::App* list = app.add_subcommand("list-builtins", "list built-in scenario names");

    std::string validate_path;
    CLI::App* validate = app.add_subcommand("validate", "parse and validate a scenario file");
    validate->add_option("--scenario", validate_path, "path to a scenario JSON file")
        ->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            return run_command(options);
        }
        if (list->parsed()) {
            for (const auto& [name, text] : fedstream::builtin_scenarios()) {
                std::cout << name << "\n";
            }
            return 0;
        }
        if (validate->parsed()) {
            fedstream::load_scenario_file(validate_path);
            std::cout << "ok: " << validate_path << "\n";
            return 0;
        }
    } catch (const fedstream::SimError& error) {
        std::cerr << "error: " << error.what() << "\n";
        return error.code() == fedstream::Errc::ConfigError ? 2 : 1;
    } catch (const std::exception& error) {
        std::cerr << "error: " << error.what() << "\n";
        return 1;
    }
    return 0;
}
