#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <variant>
#include <vector>

#include <json.hpp>

#include "hcil/feature_store.hpp"
#include "hcil/hierarchy.hpp"
#include "hcil/linear_svm.hpp"

namespace hcil {

class HierarchicalModel;

struct HardCase {
    FeatureRecord record;
    SvmIdentity svm;          // the SVM that found it hard
    double confidence = 0.0;  // true-side confidence at selection time
};

// Herding output for one class, most important first. Rank k is index + 1.
struct ExemplarList {
    SpeciesId species = 0;
    std::vector<FeatureRecord> exemplars;
};

struct HardCaseOrigin {
    SvmIdentity svm;
    double confidence = 0.0;
};

struct ExemplarOrigin {
    SpeciesId species = 0;
    std::size_t rank = 1;
};

struct MemoryRecord {
    FeatureRecord record;
    std::variant<HardCaseOrigin, ExemplarOrigin> provenance;
};

// Greedy herding: repeatedly picks the unselected vector that brings the
// running exemplar mean closest to the class mean. Ties go to the lowest
// index. Returns indices into `features` in selection order; `count` is
// clamped to the number of vectors.
std::vector<std::size_t> herd_indices(std::span<const std::vector<float>> features, std::size_t count);

// Herding over the records of one class (all must carry that species).
ExemplarList herd_select(std::span<const FeatureRecord> records, SpeciesId species, std::size_t count);

// For each SVM with a non-zero quota, scores the relevant records of `data`
// (coarse: all; fine: records of the SVM's group) by the confidence of their
// true side and keeps the `quota` lowest. The result is deduplicated on
// (fish_id, frame_id), earlier SVM identities winning.
std::vector<HardCase> select_hard_cases(const HierarchicalModel& model, std::span<const FeatureRecord> data,
                                        const std::map<SvmIdentity, std::size_t>& quotas);

// floor(total / keys) each, with the remainder going one apiece to the lowest
// keys.
template <typename Key>
std::map<Key, std::size_t> equal_split(std::size_t total, const std::vector<Key>& keys) {
    std::map<Key, std::size_t> out;
    if (keys.empty()) return out;
    const std::size_t base = total / keys.size();
    std::size_t extra = total % keys.size();
    for (const auto& k : keys) out[k] = base;
    for (auto& [k, q] : out) {
        if (extra == 0) break;
        ++q;
        --extra;
    }
    return out;
}

// Fixed-budget rehearsal memory: at most `hard_budget` hard cases and at most
// `exemplar_budget` exemplars in total, whatever the number of classes.
class MemoryStore {
public:
    MemoryStore(std::size_t hard_budget = 0, std::size_t exemplar_budget = 0);

    std::size_t hard_budget() const { return hard_budget_; }
    std::size_t exemplar_budget() const { return exemplar_budget_; }

    const std::vector<HardCase>& hard_cases() const { return hard_cases_; }
    const std::map<SpeciesId, ExemplarList>& exemplars() const { return exemplars_; }
    const std::map<SvmIdentity, std::size_t>& hard_quotas() const { return hard_quotas_; }
    const std::map<SpeciesId, std::size_t>& exemplar_quotas() const { return exemplar_quotas_; }

    std::size_t hard_case_count() const { return hard_cases_.size(); }
    std::size_t exemplar_count() const;

    // Quotas the store would assign for these classes / SVMs.
    std::map<SpeciesId, std::size_t> exemplar_quotas_for(const std::set<SpeciesId>& classes) const;
    std::map<SvmIdentity, std::size_t> hard_quotas_for(const std::vector<SvmIdentity>& svms) const;

    // Every mutator leaves the store within its current quotas, so both
    // budgets hold between any two operations. Quotas come from rebalance().

    // New hard cases join the pool (frames already pooled are skipped), then
    // each SVM keeps its lowest-confidence entries up to its quota.
    void add_hard_cases(std::vector<HardCase> cases);
    // Stores the list cut to the class quota. Throws DuplicateClassError if the
    // class already has a list.
    void add_exemplars(ExemplarList list);

    // Recomputes quotas for the given classes and SVMs, then truncates every
    // exemplar list to a prefix of its quota and every SVM's hard cases to its
    // lowest-confidence entries.
    void rebalance(const std::set<SpeciesId>& classes, const std::vector<SvmIdentity>& svms);

    // Deduplicated union of exemplars and hard cases as plain records.
    std::vector<FeatureRecord> training_view() const;
    std::vector<MemoryRecord> records() const;

    nlohmann::json to_json() const;
    static MemoryStore from_json(const nlohmann::json& j);
    void save(const std::filesystem::path& path) const;
    static MemoryStore load(const std::filesystem::path& path);

private:
    void trim_hard_cases();

    std::size_t hard_budget_;
    std::size_t exemplar_budget_;
    std::vector<HardCase> hard_cases_;
    std::map<SpeciesId, ExemplarList> exemplars_;
    std::map<SvmIdentity, std::size_t> hard_quotas_;
    std::map<SpeciesId, std::size_t> exemplar_quotas_;
};

}  // namespace hcil
