#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hcil/cil_memory.hpp"
#include "hcil/eval.hpp"
#include "hcil/feature_store.hpp"
#include "hcil/hierarchy.hpp"

namespace hcil {

struct TrainConfig {
    std::size_t hard_budget = 200;
    std::size_t exemplar_budget = 1800;
    SvmParams svm;
    std::uint64_t seed = 0;
    std::size_t num_tasks = 3;
    std::filesystem::path stream;   // stream manifest
    std::filesystem::path test;     // optional held-out feature file
    std::filesystem::path out_dir = ".";

    void validate() const;

    // Applies one key=value setting. Keys use the CLI flag spelling without
    // dashes (hard-budget, svm-c, ...). Throws ParseError on an unknown key or
    // a malformed value.
    void set(const std::string& key, const std::string& value);

    static TrainConfig from_file(const std::filesystem::path& path);
};

// Plain-text key=value file; '#' starts a comment. Keys must be unique.
std::map<std::string, std::string> read_key_values(const std::filesystem::path& path);

struct TaskEntry {
    std::size_t task = 0;  // 1-based
    std::size_t records = 0;
    std::vector<SpeciesId> new_species;
    std::size_t seen_species = 0;
    std::size_t active_svms = 0;
    std::size_t view_records = 0;
    std::size_t hard_cases = 0;
    std::size_t exemplars = 0;
    double seconds = 0.0;
    std::optional<EvalReport> eval;
};

struct TrainReport {
    std::vector<TaskEntry> tasks;
    std::optional<ForgettingTable> forgetting;

    // Wall-clock timings are left out unless asked for, so reports of
    // identical runs are byte-identical.
    nlohmann::json to_json(bool include_timing = false) const;
};

struct TrainResult {
    HierarchicalModel model;
    MemoryStore memory;
    TrainReport report;
};

struct RunHooks {
    const Dataset* test = nullptr;  // evaluated after every task when set
    std::function<void(std::size_t task, const HierarchicalModel&, const MemoryStore&)> after_task;
};

// Incremental protocol. Per task: train coarse SVMs on task data plus the
// memory view, expand the fine banks of groups with new species, select hard
// cases on the task data, herd exemplars for the new species, rebalance.
TrainResult run_stream(const TaskStream& stream, const TrainConfig& config, const RunHooks& hooks = {});

// All tasks concatenated and trained as one; the joint-training comparator.
HierarchicalModel run_joint_oracle(const TaskStream& stream, const TrainConfig& config);

}  // namespace hcil
