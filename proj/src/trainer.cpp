#include "hcil/trainer.hpp"

#include <charconv>
#include <chrono>
#include <fstream>
#include <set>

#include "hcil/error.hpp"
#include "hcil/log.hpp"

namespace hcil {

namespace {

std::string strip(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_value(const std::string& key, const std::string& value) {
    T out{};
    const auto* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || ptr != end || value.empty()) {
        throw ParseError("config key '" + key + "': malformed value '" + value + "'");
    }
    return out;
}

// Keys understood by some subcommand but irrelevant to training.
const std::set<std::string> kNonTrainingKeys = {"preset", "model", "input", "config", "single"};

}  // namespace

void TrainConfig::validate() const {
    if (!(svm.c > 0.0) || !(svm.tol > 0.0) || svm.max_iter <= 0) {
        throw ValidationError("SVM hyperparameters must be positive");
    }
    if (num_tasks == 0) {
        throw ValidationError("num-tasks must be at least 1");
    }
}

void TrainConfig::set(const std::string& key, const std::string& value) {
    if (key == "hard-budget") {
        hard_budget = parse_value<std::size_t>(key, value);
    } else if (key == "exemplar-budget") {
        exemplar_budget = parse_value<std::size_t>(key, value);
    } else if (key == "svm-c") {
        svm.c = parse_value<double>(key, value);
    } else if (key == "svm-tol") {
        svm.tol = parse_value<double>(key, value);
    } else if (key == "svm-max-iter") {
        svm.max_iter = parse_value<int>(key, value);
    } else if (key == "seed") {
        seed = parse_value<std::uint64_t>(key, value);
        svm.seed = seed;
    } else if (key == "num-tasks") {
        num_tasks = parse_value<std::size_t>(key, value);
    } else if (key == "stream") {
        stream = value;
    } else if (key == "test") {
        test = value;
    } else if (key == "out") {
        out_dir = value;
    } else if (!kNonTrainingKeys.contains(key)) {
        throw ParseError("unknown config key '" + key + "'");
    }
}

std::map<std::string, std::string> read_key_values(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config file " + path.string());
    }
    std::map<std::string, std::string> values;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = strip(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError(path.string() + " line " + std::to_string(line_no) + ": expected key=value");
        }
        const auto key = strip(line.substr(0, eq));
        if (key.empty() || !values.emplace(key, strip(line.substr(eq + 1))).second) {
            throw ParseError(path.string() + " line " + std::to_string(line_no) + ": empty or repeated key");
        }
    }
    return values;
}

TrainConfig TrainConfig::from_file(const std::filesystem::path& path) {
    TrainConfig config;
    for (const auto& [k, v] : read_key_values(path)) config.set(k, v);
    config.validate();
    return config;
}

nlohmann::json TrainReport::to_json(bool include_timing) const {
    nlohmann::json j;
    j["format"] = "hcil-report";
    j["version"] = 1;
    j["tasks"] = nlohmann::json::array();
    for (const auto& t : tasks) {
        nlohmann::json e = {{"task", t.task},
                            {"records", t.records},
                            {"new_species", t.new_species},
                            {"seen_species", t.seen_species},
                            {"active_svms", t.active_svms},
                            {"view_records", t.view_records},
                            {"hard_cases", t.hard_cases},
                            {"exemplars", t.exemplars}};
        if (include_timing) e["seconds"] = t.seconds;
        if (t.eval) e["eval"] = t.eval->to_json();
        j["tasks"].push_back(e);
    }
    if (forgetting) {
        nlohmann::json f = nlohmann::json::array();
        for (const auto& c : forgetting->cohorts) {
            f.push_back({{"cohort", c.cohort}, {"trajectory", c.trajectory}, {"forgetting", c.forgetting}});
        }
        j["forgetting"] = {{"cohorts", f}, {"mean", forgetting->mean_forgetting}};
    }
    return j;
}

namespace {

void run_task(const Dataset& task, const TrainConfig& config, HierarchicalModel& model, MemoryStore& memory,
              TaskEntry& entry) {
    std::set<RecordKey> task_keys;
    for (const auto& r : task.records()) task_keys.insert(r.key());
    std::vector<FeatureRecord> view = task.records();
    for (auto& r : memory.training_view()) {
        if (!task_keys.contains(r.key())) view.push_back(std::move(r));
    }
    entry.view_records = view.size();

    std::set<GroupId> view_groups;
    for (const auto& r : view) view_groups.insert(r.group_id);
    if (view_groups.size() >= 2 || model.coarse_bank().empty()) {
        model.train_coarse(view, config.svm);
    } else {
        logger().warn("training view holds a single group; coarse SVMs are left unchanged");
    }

    for (GroupId g : task.groups()) {
        std::vector<FeatureRecord> fresh;
        std::vector<FeatureRecord> context;
        for (const auto& r : view) {
            const bool is_new = r.group_id == g && task_keys.contains(r.key());
            (is_new ? fresh : context).push_back(r);
        }
        model.expand_fine(g, fresh, context, config.svm);
    }

    // Quotas are set for the enlarged class and SVM sets first, so the pool
    // is cut before anything new is added. The end state matches selecting,
    // herding and only then truncating.
    memory.rebalance(model.seen_species(), model.active_svms());
    memory.add_hard_cases(select_hard_cases(model, task.records(), memory.hard_quotas()));

    for (SpeciesId s : task.species()) {
        std::vector<FeatureRecord> members;
        for (const auto& r : task.records()) {
            if (r.species_id == s) members.push_back(r);
        }
        const auto q = memory.exemplar_quotas().find(s);
        const std::size_t target = q == memory.exemplar_quotas().end() ? 0 : std::min(q->second, members.size());
        if (target > 0) memory.add_exemplars(herd_select(members, s, target));
    }
}

}  // namespace

TrainResult run_stream(const TaskStream& stream, const TrainConfig& config, const RunHooks& hooks) {
    stream.validate();
    config.validate();
    TrainResult result{HierarchicalModel(stream.taxonomy, stream.tasks.front().dimension()),
                       MemoryStore(config.hard_budget, config.exemplar_budget),
                       {}};
    const auto cohorts = stream.cohort_of_species();
    std::vector<EvalReport> evals;

    for (std::size_t t = 0; t < stream.tasks.size(); ++t) {
        const Dataset& task = stream.tasks[t];
        TaskEntry entry;
        entry.task = t + 1;
        entry.records = task.size();
        for (SpeciesId s : task.species()) entry.new_species.push_back(s);

        const auto start = std::chrono::steady_clock::now();
        if (task.empty()) {
            logger().info("task {} is empty; nothing to learn", t + 1);
        } else {
            try {
                run_task(task, config, result.model, result.memory, entry);
            } catch (const Error& e) {
                rethrow_with_context(e, "task " + std::to_string(t + 1) + ": ");
            }
        }
        entry.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        entry.seen_species = result.model.seen_species().size();
        entry.active_svms = result.model.active_svms().size();
        entry.hard_cases = result.memory.hard_case_count();
        entry.exemplars = result.memory.exemplar_count();
        if (hooks.test && !result.model.coarse_bank().empty()) {
            entry.eval = evaluate(result.model, *hooks.test, cohorts);
            evals.push_back(*entry.eval);
        }
        logger().info("task {}: {} records, {} species seen, {} SVMs, memory {} hard + {} exemplars", t + 1,
                      entry.records, entry.seen_species, entry.active_svms, entry.hard_cases, entry.exemplars);
        result.report.tasks.push_back(std::move(entry));
        if (hooks.after_task) hooks.after_task(t, result.model, result.memory);
    }

    if (evals.size() == stream.tasks.size() && evals.size() >= 2) {
        result.report.forgetting = forgetting_breakdown(evals, stream);
    }
    return result;
}

HierarchicalModel run_joint_oracle(const TaskStream& stream, const TrainConfig& config) {
    stream.validate();
    TaskStream joint;
    joint.taxonomy = stream.taxonomy;
    joint.tasks.push_back(stream.concatenated());
    return run_stream(joint, config).model;
}

}  // namespace hcil
