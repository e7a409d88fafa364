#include "hcil/hierarchy.hpp"

#include <algorithm>
#include <fstream>

#include "hcil/error.hpp"
#include "hcil/log.hpp"
#include "hcil/rng.hpp"

namespace hcil {

namespace {

constexpr const char* kModelFormat = "hcil-model";
constexpr int kModelVersion = 1;

using RecordRefs = std::vector<const FeatureRecord*>;

std::uint64_t svm_seed(const SvmParams& params, SvmIdentity id) {
    return mix_seed(params.seed, (static_cast<std::uint64_t>(id.level) << 16) | id.label);
}

CalibratedSvm fit_one(SvmIdentity id, const RecordRefs& positives, const RecordRefs& negatives,
                      std::size_t dimension, const SvmParams& params) {
    SvmProblem problem(dimension, params.c);
    for (const auto* r : positives) problem.add(std::span<const float>(r->feature), 1);
    for (const auto* r : negatives) problem.add(std::span<const float>(r->feature), -1);
    SvmOptions options;
    options.tol = params.tol;
    options.max_iter = params.max_iter;
    options.seed = svm_seed(params, id);
    options.balance_classes = params.balance_classes;
    options.shrinking = params.shrinking;
    auto fit = train(problem, options);
    logger().debug("SVM {}: {} rows, {} epochs, gap {:.3e}", id.to_string(), problem.size(), fit.epochs,
                   fit.duality_gap);
    if (!fit.converged) {
        logger().debug("SVM {} reached the epoch limit (gap {:.3e})", id.to_string(), fit.duality_gap);
    }
    fit.svm.identity = id;
    return calibrate(std::move(fit.svm), problem);
}

// Mean of values summed in sorted order, so the result does not depend on the
// order frames were presented in.
double order_free_mean(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
}

template <typename Key>
struct Vote {
    Key key;
    std::size_t count = 0;
    double mean = 0.0;
};

// Most votes, then higher mean confidence, then lowest key.
template <typename Key>
Vote<Key> modal(const std::map<Key, std::vector<double>>& tallies) {
    Vote<Key> best{};
    bool first = true;
    for (const auto& [key, confs] : tallies) {
        Vote<Key> v{key, confs.size(), order_free_mean(confs)};
        if (first || v.count > best.count || (v.count == best.count && v.mean > best.mean)) {
            best = v;
            first = false;
        }
    }
    return best;
}

}  // namespace

HierarchicalModel::HierarchicalModel(std::shared_ptr<const Taxonomy> taxonomy, std::size_t dimension)
    : taxonomy_(std::move(taxonomy)), dimension_(dimension) {
    if (!taxonomy_) {
        throw TaxonomyError("model requires a taxonomy");
    }
    if (dimension_ == 0) {
        throw ValidationError("model dimension must be positive");
    }
}

std::vector<SvmIdentity> HierarchicalModel::active_svms() const {
    std::vector<SvmIdentity> ids;
    for (const auto& [g, svm] : coarse_) ids.push_back(svm.identity);
    for (const auto& [g, bank] : fine_) {
        for (const auto& [s, svm] : bank.svms) ids.push_back(svm.identity);
    }
    std::sort(ids.begin(), ids.end());
    return ids;
}

const CalibratedSvm& HierarchicalModel::svm(SvmIdentity id) const {
    if (id.level == SvmLevel::coarse) {
        const auto it = coarse_.find(id.label);
        if (it != coarse_.end()) return it->second;
    } else if (taxonomy_->has_species(id.label)) {
        const auto bank = fine_.find(taxonomy_->parent(id.label));
        if (bank != fine_.end()) {
            const auto it = bank->second.svms.find(id.label);
            if (it != bank->second.svms.end()) return it->second;
        }
    }
    throw ValidationError("model has no SVM " + id.to_string());
}

void HierarchicalModel::train_coarse(std::span<const FeatureRecord> data, const SvmParams& params) {
    std::map<GroupId, RecordRefs> by_group;
    for (const auto& r : data) {
        if (r.feature.size() != dimension_) {
            throw ValidationError("training record has dimension " + std::to_string(r.feature.size()) +
                                  ", model expects " + std::to_string(dimension_));
        }
        by_group[r.group_id].push_back(&r);
    }
    if (by_group.size() < 2) {
        const std::string which = by_group.empty() ? std::string("none")
                                                   : taxonomy_->groups().at(by_group.begin()->first).name;
        throw DegenerateError("coarse training needs at least two groups; data holds only group '" +
                              which + "'");
    }
    for (const auto& [group, positives] : by_group) {
        RecordRefs negatives;
        for (const auto& [other, refs] : by_group) {
            if (other != group) negatives.insert(negatives.end(), refs.begin(), refs.end());
        }
        set_coarse(fit_one({SvmLevel::coarse, group}, positives, negatives, dimension_, params));
    }
}

void HierarchicalModel::expand_fine(GroupId group, std::span<const FeatureRecord> new_species_data,
                                    std::span<const FeatureRecord> context, const SvmParams& params) {
    if (!taxonomy_->has_group(group)) {
        throw TaxonomyError("unknown group " + std::to_string(group));
    }
    std::set<SpeciesId> fresh;
    for (const auto& r : new_species_data) {
        if (!taxonomy_->has_species(r.species_id) || taxonomy_->parent(r.species_id) != group ||
            r.group_id != group) {
            throw TaxonomyError("species " + std::to_string(r.species_id) + " is not a member of group '" +
                                taxonomy_->groups()[group].name + "'");
        }
        if (r.feature.size() != dimension_) {
            throw ValidationError("training record has dimension " + std::to_string(r.feature.size()) +
                                  ", model expects " + std::to_string(dimension_));
        }
        if (seen_.contains(r.species_id)) {
            throw DuplicateClassError("species " + std::to_string(r.species_id) + " ('" +
                                      taxonomy_->species()[r.species_id].name + "') was already learned");
        }
        fresh.insert(r.species_id);
    }
    for (SpeciesId s : fresh) mark_seen(s);

    FineBank& bank = fine_[group];
    if (bank.seen.size() < 2) {
        return;  // pass-through routing
    }

    std::map<SpeciesId, RecordRefs> pool;
    std::set<RecordKey> keys;
    RecordRefs outside;
    for (const auto& r : new_species_data) {
        if (keys.insert(r.key()).second) pool[r.species_id].push_back(&r);
    }
    for (const auto& r : context) {
        if (!keys.insert(r.key()).second) continue;
        if (r.group_id == group) {
            if (seen_.contains(r.species_id)) pool[r.species_id].push_back(&r);
        } else {
            outside.push_back(&r);
        }
    }

    for (SpeciesId s : bank.seen) {
        const SvmIdentity id{SvmLevel::fine, s};
        const auto positives = pool.find(s);
        if (positives == pool.end()) {
            logger().debug("no data for species {}; keeping its previous fine SVM", s);
            continue;
        }
        RecordRefs negatives;
        for (const auto& [other, refs] : pool) {
            if (other != s) negatives.insert(negatives.end(), refs.begin(), refs.end());
        }
        if (negatives.empty()) {
            if (outside.empty()) {
                logger().warn("species {} has no negatives available; its fine SVM is not trained", s);
                continue;
            }
            logger().debug("species {} has no sibling data; training against other groups", s);
            negatives = outside;
        }
        bank.svms[s] = fit_one(id, positives->second, negatives, dimension_, params);
    }
}

void HierarchicalModel::set_coarse(CalibratedSvm svm) {
    if (svm.identity.level != SvmLevel::coarse || !taxonomy_->has_group(svm.identity.label)) {
        throw ValidationError("not a coarse SVM of this taxonomy: " + svm.identity.to_string());
    }
    if (svm.dimension() != dimension_) {
        throw ValidationError("SVM dimension does not match the model");
    }
    const GroupId g = svm.identity.label;
    coarse_[g] = std::move(svm);
}

void HierarchicalModel::mark_seen(SpeciesId species) {
    const GroupId g = taxonomy_->parent(species);
    if (seen_.insert(species).second) {
        auto& seen = fine_[g].seen;
        seen.insert(std::upper_bound(seen.begin(), seen.end(), species), species);
    }
}

void HierarchicalModel::set_fine(CalibratedSvm svm) {
    if (svm.identity.level != SvmLevel::fine || !taxonomy_->has_species(svm.identity.label)) {
        throw ValidationError("not a fine SVM of this taxonomy: " + svm.identity.to_string());
    }
    if (svm.dimension() != dimension_) {
        throw ValidationError("SVM dimension does not match the model");
    }
    const SpeciesId s = svm.identity.label;
    if (!seen_.contains(s)) {
        throw ValidationError("fine SVM for unseen species " + std::to_string(s));
    }
    fine_[taxonomy_->parent(s)].svms[s] = std::move(svm);
}

HierPrediction HierarchicalModel::predict_image(std::span<const float> x) const {
    if (coarse_.empty()) {
        throw ValidationError("model has no trained coarse SVMs");
    }
    if (x.size() != dimension_) {
        throw ValidationError("input has dimension " + std::to_string(x.size()) + ", model expects " +
                              std::to_string(dimension_));
    }
    HierPrediction out;
    bool first = true;
    double best = 0.0;
    for (const auto& [g, svm] : coarse_) {
        const double z = calibrated_logit(svm, margin(svm, x));
        if (first || z > best) {
            out.group_id = g;
            best = z;
            first = false;
        }
    }
    out.group_confidence = logistic(best);

    const auto bank = fine_.find(out.group_id);
    if (bank == fine_.end() || bank->second.seen.empty()) {
        // Only reachable for hand-assembled models: no species of this group seen.
        out.species_id = taxonomy_->species_of(out.group_id).at(0);
        out.species_confidence = out.group_confidence;
        return out;
    }
    const FineBank& fb = bank->second;
    if (fb.seen.size() == 1 || fb.svms.empty()) {
        out.species_id = fb.seen.front();
        out.species_confidence = out.group_confidence;
        return out;
    }
    first = true;
    for (const auto& [s, svm] : fb.svms) {
        const double z = calibrated_logit(svm, margin(svm, x));
        if (first || z > best) {
            out.species_id = s;
            best = z;
            first = false;
        }
    }
    out.species_confidence = logistic(best);
    return out;
}

HierPrediction HierarchicalModel::predict_video(std::span<const std::vector<float>> frames) const {
    if (frames.empty()) {
        throw ValidationError("video prediction needs at least one frame");
    }
    std::vector<HierPrediction> per_frame;
    per_frame.reserve(frames.size());
    for (const auto& f : frames) per_frame.push_back(predict_image(f));

    std::map<GroupId, std::vector<double>> group_votes;
    for (const auto& p : per_frame) group_votes[p.group_id].push_back(p.group_confidence);
    const auto group = modal(group_votes);

    std::map<SpeciesId, std::vector<double>> species_votes;
    for (const auto& p : per_frame) {
        if (p.group_id == group.key) species_votes[p.species_id].push_back(p.species_confidence);
    }
    const auto species = modal(species_votes);
    return {group.key, group.mean, species.key, species.mean};
}

nlohmann::json HierarchicalModel::fine_bank_json(GroupId group) const {
    nlohmann::json j = {{"group", group}, {"seen", nlohmann::json::array()}, {"svms", nlohmann::json::array()}};
    const auto it = fine_.find(group);
    if (it != fine_.end()) {
        j["seen"] = it->second.seen;
        for (const auto& [s, svm] : it->second.svms) j["svms"].push_back(svm.to_json());
    }
    return j;
}

nlohmann::json HierarchicalModel::to_json() const {
    nlohmann::json j;
    j["format"] = kModelFormat;
    j["version"] = kModelVersion;
    j["dimension"] = dimension_;
    j["taxonomy"] = taxonomy_->to_json();
    j["seen_species"] = std::vector<SpeciesId>(seen_.begin(), seen_.end());
    j["coarse"] = nlohmann::json::array();
    for (const auto& [g, svm] : coarse_) j["coarse"].push_back(svm.to_json());
    j["fine"] = nlohmann::json::array();
    for (const auto& [g, bank] : fine_) j["fine"].push_back(fine_bank_json(g));
    return j;
}

HierarchicalModel HierarchicalModel::from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != kModelFormat) {
            throw FormatError("not a model document");
        }
        if (j.at("version").get<int>() != kModelVersion) {
            throw FormatError("unsupported model version " + j.at("version").dump());
        }
        HierarchicalModel model(std::make_shared<const Taxonomy>(Taxonomy::from_json(j.at("taxonomy"))),
                                j.at("dimension").get<std::size_t>());
        for (SpeciesId s : j.at("seen_species").get<std::vector<SpeciesId>>()) model.mark_seen(s);
        for (const auto& svm : j.at("coarse")) model.set_coarse(CalibratedSvm::from_json(svm));
        for (const auto& bank : j.at("fine")) {
            for (const auto& svm : bank.at("svms")) model.set_fine(CalibratedSvm::from_json(svm));
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed model: ") + e.what());
    }
}

void HierarchicalModel::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out << to_json().dump(1) << '\n';
}

HierarchicalModel HierarchicalModel::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open model file " + path.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return from_json(j);
}

}  // namespace hcil
