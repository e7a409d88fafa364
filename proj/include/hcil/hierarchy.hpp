#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <vector>

#include <json.hpp>

#include "hcil/feature_store.hpp"
#include "hcil/linear_svm.hpp"
#include "hcil/taxonomy.hpp"

namespace hcil {

struct SvmParams {
    double c = 1.0;
    double tol = 1e-6;
    int max_iter = 10000;
    std::uint64_t seed = 0;
    bool balance_classes = true;
    bool shrinking = true;
};

struct HierPrediction {
    GroupId group_id = 0;
    double group_confidence = 0.0;
    SpeciesId species_id = 0;
    double species_confidence = 0.0;

    bool operator==(const HierPrediction&) const = default;
};

// Fine-level classifiers of one group. A group with a single seen species
// routes to it directly and holds no SVM.
struct FineBank {
    std::vector<SpeciesId> seen;                // ascending
    std::map<SpeciesId, CalibratedSvm> svms;    // subset of seen
};

// Coarse group SVMs plus per-group fine SVM banks that grow as new species
// arrive. Inference is hard-routed: coarse argmax, then fine argmax inside
// the chosen group. No task identifier is involved.
class HierarchicalModel {
public:
    HierarchicalModel(std::shared_ptr<const Taxonomy> taxonomy, std::size_t dimension);

    const Taxonomy& taxonomy() const { return *taxonomy_; }
    const std::shared_ptr<const Taxonomy>& taxonomy_ptr() const { return taxonomy_; }
    std::size_t dimension() const { return dimension_; }

    const std::map<GroupId, CalibratedSvm>& coarse_bank() const { return coarse_; }
    const std::map<GroupId, FineBank>& fine_banks() const { return fine_; }
    const std::set<SpeciesId>& seen_species() const { return seen_; }

    // Identities of every trained SVM, coarse first, ascending.
    std::vector<SvmIdentity> active_svms() const;
    const CalibratedSvm& svm(SvmIdentity id) const;

    // One-vs-all group SVMs for every group present in `data`; groups absent
    // from `data` keep their previous SVM. Needs at least two groups.
    void train_coarse(std::span<const FeatureRecord> data, const SvmParams& params);

    // Adds the species of `new_species_data` (all of `group`, all unseen) and
    // retrains the group's fine SVMs one-vs-all among sibling species, using
    // the new data plus same-group records of `context`. Records of other
    // groups in `context` serve only as fallback negatives for a species with
    // no sibling data available. A seen species with no positives keeps its
    // previous SVM.
    void expand_fine(GroupId group, std::span<const FeatureRecord> new_species_data,
                     std::span<const FeatureRecord> context, const SvmParams& params);

    // Direct assembly, used by deserialization and tests.
    void set_coarse(CalibratedSvm svm);
    void mark_seen(SpeciesId species);
    void set_fine(CalibratedSvm svm);

    HierPrediction predict_image(std::span<const float> x) const;
    HierPrediction predict_video(std::span<const std::vector<float>> frames) const;

    nlohmann::json to_json() const;
    nlohmann::json fine_bank_json(GroupId group) const;
    static HierarchicalModel from_json(const nlohmann::json& j);
    void save(const std::filesystem::path& path) const;
    static HierarchicalModel load(const std::filesystem::path& path);

private:
    std::shared_ptr<const Taxonomy> taxonomy_;
    std::size_t dimension_;
    std::map<GroupId, CalibratedSvm> coarse_;
    std::map<GroupId, FineBank> fine_;
    std::set<SpeciesId> seen_;
};

}  // namespace hcil
