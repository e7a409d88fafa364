#pragma once

// Paired-seed comparison of the incremental learner with and without memory
// against joint training, all on the same synthetic stream.

#include <cstdint>
#include <vector>

#include "hcil/eval.hpp"
#include "hcil/synth.hpp"
#include "hcil/trainer.hpp"

namespace harness {

struct RunOutcome {
    double img_c = 0.0;
    double img_f = 0.0;
    double old_img_f = 0.0;        // classes of every task but the last
    double mean_forgetting = 0.0;
    bool routing_consistent = true;  // in every per-task report
    bool fine_below_coarse = true;   // img_F <= img_C in every per-task report
    bool within_budget = true;       // after every task
};

struct SeedOutcome {
    std::uint64_t seed = 0;
    RunOutcome memory;
    RunOutcome no_memory;
    double joint_img_f = 0.0;
    double joint_img_c = 0.0;
    bool joint_routing_consistent = true;
};

inline RunOutcome summarize(const hcil::TrainResult& result, std::size_t num_tasks, bool within_budget) {
    RunOutcome out;
    out.within_budget = within_budget;
    for (const auto& t : result.report.tasks) {
        if (!t.eval) continue;
        out.routing_consistent = out.routing_consistent && t.eval->routing_consistent;
        out.fine_below_coarse = out.fine_below_coarse && t.eval->img_f <= t.eval->img_c;
    }
    const auto& final_eval = *result.report.tasks.back().eval;
    out.img_c = final_eval.img_c;
    out.img_f = final_eval.img_f;
    out.old_img_f = hcil::old_cohort_img_f(final_eval, static_cast<int>(num_tasks) - 1);
    if (result.report.forgetting) out.mean_forgetting = result.report.forgetting->mean_forgetting;
    return out;
}

inline RunOutcome run_incremental(const hcil::TaskStream& stream, const hcil::Dataset& test,
                                  hcil::TrainConfig config) {
    bool ok = true;
    hcil::RunHooks hooks;
    hooks.test = &test;
    hooks.after_task = [&](std::size_t, const hcil::HierarchicalModel&, const hcil::MemoryStore& mem) {
        ok = ok && mem.hard_case_count() <= config.hard_budget && mem.exemplar_count() <= config.exemplar_budget;
    };
    const auto result = hcil::run_stream(stream, config, hooks);
    return summarize(result, stream.tasks.size(), ok);
}

inline SeedOutcome run_seed(const hcil::SynthSpec& base_spec, std::uint64_t seed, std::size_t num_tasks = 3,
                            std::size_t n = 200, std::size_t m = 1800) {
    auto spec = base_spec;
    spec.seed = seed;
    const auto data = hcil::generate(spec);
    const auto stream = hcil::partition_tasks(data.train, num_tasks, seed);

    hcil::TrainConfig config;
    config.seed = seed;
    config.svm.seed = seed;
    config.num_tasks = num_tasks;
    config.hard_budget = n;
    config.exemplar_budget = m;

    SeedOutcome out;
    out.seed = seed;
    out.memory = run_incremental(stream, data.test, config);
    auto bare = config;
    bare.hard_budget = 0;
    bare.exemplar_budget = 0;
    out.no_memory = run_incremental(stream, data.test, bare);
    const auto joint = hcil::evaluate(hcil::run_joint_oracle(stream, config), data.test);
    out.joint_img_f = joint.img_f;
    out.joint_img_c = joint.img_c;
    out.joint_routing_consistent = joint.routing_consistent;
    return out;
}

}  // namespace harness
