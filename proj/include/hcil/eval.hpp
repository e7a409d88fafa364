#pragma once

#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hcil/feature_store.hpp"
#include "hcil/hierarchy.hpp"

namespace hcil {

struct CohortCounts {
    std::size_t frames = 0;
    std::size_t frames_correct_group = 0;
    std::size_t frames_correct_species = 0;
    std::size_t tracks = 0;
    std::size_t tracks_correct_species = 0;

    double img_f() const;
    double video_f() const;
};

// Accuracies are percentages in [0, 100]. Image metrics count frames, video
// metrics count fish tracks (majority vote over the track's frames).
struct EvalReport {
    double img_c = 0.0;
    double img_f = 0.0;
    double video_c = 0.0;
    double video_f = 0.0;
    std::size_t frames = 0;
    std::size_t tracks = 0;
    // group_confusion[true][predicted], frame counts.
    std::vector<std::vector<std::size_t>> group_confusion;
    // Keyed by the index of the task that introduced the species; only filled
    // when a cohort map is supplied.
    std::map<int, CohortCounts> cohorts;
    // Every predicted species was a child of its predicted group.
    bool routing_consistent = true;

    nlohmann::json to_json() const;
};

// `cohort_of_species[s]` is the task index that introduced species s (or -1).
// Test species unseen by the model count as errors.
EvalReport evaluate(const HierarchicalModel& model, const Dataset& test,
                    std::span<const int> cohort_of_species = {});

// Frame-level fine accuracy (percent) over the cohorts strictly before
// `cohort`; the "old classes" at the time `cohort` arrives.
double old_cohort_img_f(const EvalReport& report, int cohort);

struct CohortForgetting {
    int cohort = 0;
    std::vector<double> trajectory;  // img_F from the task it arrived onwards
    double forgetting = 0.0;         // max(trajectory) - final
};

struct ForgettingTable {
    std::vector<CohortForgetting> cohorts;
    double mean_forgetting = 0.0;
};

// `reports[t]` is the evaluation after task t of `stream`.
ForgettingTable forgetting_breakdown(std::span<const EvalReport> reports, const TaskStream& stream);

// Aligned table in the column order img_C img_F video_C video_F, one decimal.
std::string format_table(const std::vector<std::pair<std::string, EvalReport>>& rows);

}  // namespace hcil
