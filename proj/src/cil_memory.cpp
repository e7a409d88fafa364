#include "hcil/cil_memory.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>

#include "hcil/error.hpp"
#include "hcil/hierarchy.hpp"
#include "hcil/log.hpp"

namespace hcil {

namespace {

constexpr const char* kMemoryFormat = "hcil-memory";
constexpr int kMemoryVersion = 1;

nlohmann::json record_json(const FeatureRecord& r) {
    return {{"fish_id", r.fish_id},
            {"frame_id", r.frame_id},
            {"group_id", r.group_id},
            {"species_id", r.species_id},
            {"feature", r.feature}};
}

FeatureRecord record_from_json(const nlohmann::json& j) {
    FeatureRecord r;
    r.fish_id = j.at("fish_id").get<std::uint64_t>();
    r.frame_id = j.at("frame_id").get<std::uint64_t>();
    r.group_id = j.at("group_id").get<GroupId>();
    r.species_id = j.at("species_id").get<SpeciesId>();
    r.feature = j.at("feature").get<std::vector<float>>();
    return r;
}

nlohmann::json identity_json(SvmIdentity id) {
    return {{"level", id.level == SvmLevel::coarse ? "coarse" : "fine"}, {"label", id.label}};
}

SvmIdentity identity_from_json(const nlohmann::json& j) {
    const auto level = j.at("level").get<std::string>();
    if (level != "coarse" && level != "fine") {
        throw FormatError("unknown SVM level '" + level + "'");
    }
    return {level == "coarse" ? SvmLevel::coarse : SvmLevel::fine, j.at("label").get<std::uint16_t>()};
}

}  // namespace

std::vector<std::size_t> herd_indices(std::span<const std::vector<float>> features, std::size_t count) {
    const std::size_t n = features.size();
    if (count > n) {
        logger().warn("herding target {} exceeds the {} available vectors; clamping", count, n);
        count = n;
    }
    if (count == 0) return {};
    const std::size_t d = features.front().size();

    // Distances are compared scaled by (k * n)^2: |k * total - n * (running + f)|^2.
    // No division, so integer-valued inputs give exact ties.
    std::vector<double> total(d, 0.0);
    for (const auto& f : features) {
        for (std::size_t j = 0; j < d; ++j) total[j] += f[j];
    }
    const double nd = static_cast<double>(n);

    std::vector<double> running(d, 0.0);
    std::vector<bool> taken(n, false);
    std::vector<std::size_t> order;
    order.reserve(count);
    for (std::size_t k = 1; k <= count; ++k) {
        const double kd = static_cast<double>(k);
        std::size_t best = n;
        double best_dist = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            if (taken[i]) continue;
            double dist = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double diff = kd * total[j] - nd * (running[j] + features[i][j]);
                dist += diff * diff;
            }
            if (dist < best_dist) {
                best_dist = dist;
                best = i;
            }
        }
        taken[best] = true;
        order.push_back(best);
        for (std::size_t j = 0; j < d; ++j) running[j] += features[best][j];
    }
    return order;
}

ExemplarList herd_select(std::span<const FeatureRecord> records, SpeciesId species, std::size_t count) {
    ExemplarList list{species, {}};
    if (count == 0) return list;
    if (records.empty()) {
        throw ValidationError("herding needs at least one record of species " + std::to_string(species));
    }
    std::vector<std::vector<float>> features;
    features.reserve(records.size());
    for (const auto& r : records) {
        if (r.species_id != species) {
            throw ValidationError("herding input mixes species " + std::to_string(r.species_id) + " into class " +
                                  std::to_string(species));
        }
        features.push_back(r.feature);
    }
    for (std::size_t i : herd_indices(features, count)) list.exemplars.push_back(records[i]);
    return list;
}

std::vector<HardCase> select_hard_cases(const HierarchicalModel& model, std::span<const FeatureRecord> data,
                                        const std::map<SvmIdentity, std::size_t>& quotas) {
    std::vector<HardCase> pool;
    std::set<RecordKey> taken;
    for (const auto& [id, quota] : quotas) {
        const CalibratedSvm& svm = model.svm(id);
        if (quota == 0) continue;
        const GroupId fine_group = id.level == SvmLevel::fine ? model.taxonomy().parent(id.label) : 0;

        struct Scored {
            std::size_t index;
            double logit;
        };
        std::vector<Scored> scored;
        for (std::size_t i = 0; i < data.size(); ++i) {
            const auto& r = data[i];
            bool positive = false;
            if (id.level == SvmLevel::coarse) {
                positive = r.group_id == id.label;
            } else {
                if (r.group_id != fine_group) continue;
                positive = r.species_id == id.label;
            }
            // True-side log-odds; ranking on it avoids ties among saturated confidences.
            const double z = calibrated_logit(svm, margin(svm, std::span<const float>(r.feature)));
            scored.push_back({i, positive ? z : -z});
        }
        std::stable_sort(scored.begin(), scored.end(),
                         [](const Scored& a, const Scored& b) { return a.logit < b.logit; });
        const std::size_t keep = std::min(quota, scored.size());
        for (std::size_t k = 0; k < keep; ++k) {
            const auto& r = data[scored[k].index];
            if (taken.insert(r.key()).second) {
                pool.push_back({r, id, logistic(scored[k].logit)});
            }
        }
    }
    return pool;
}

MemoryStore::MemoryStore(std::size_t hard_budget, std::size_t exemplar_budget)
    : hard_budget_(hard_budget), exemplar_budget_(exemplar_budget) {}

std::size_t MemoryStore::exemplar_count() const {
    std::size_t total = 0;
    for (const auto& [s, list] : exemplars_) total += list.exemplars.size();
    return total;
}

std::map<SpeciesId, std::size_t> MemoryStore::exemplar_quotas_for(const std::set<SpeciesId>& classes) const {
    return equal_split(exemplar_budget_, std::vector<SpeciesId>(classes.begin(), classes.end()));
}

std::map<SvmIdentity, std::size_t> MemoryStore::hard_quotas_for(const std::vector<SvmIdentity>& svms) const {
    return equal_split(hard_budget_, svms);
}

void MemoryStore::add_hard_cases(std::vector<HardCase> cases) {
    std::set<RecordKey> keys;
    for (const auto& h : hard_cases_) keys.insert(h.record.key());
    for (auto& h : cases) {
        if (keys.insert(h.record.key()).second) hard_cases_.push_back(std::move(h));
    }
    trim_hard_cases();
}

void MemoryStore::add_exemplars(ExemplarList list) {
    const SpeciesId s = list.species;
    if (exemplars_.contains(s)) {
        throw DuplicateClassError("memory already holds exemplars for species " + std::to_string(s));
    }
    const auto q = exemplar_quotas_.find(s);
    const std::size_t keep = q == exemplar_quotas_.end() ? 0 : q->second;
    if (list.exemplars.size() > keep) {
        logger().warn("exemplar list for species {} cut from {} to its quota of {}", s, list.exemplars.size(),
                      keep);
        list.exemplars.resize(keep);
    }
    if (!list.exemplars.empty()) exemplars_.emplace(s, std::move(list));
}

void MemoryStore::rebalance(const std::set<SpeciesId>& classes, const std::vector<SvmIdentity>& svms) {
    exemplar_quotas_ = exemplar_quotas_for(classes);
    hard_quotas_ = hard_quotas_for(svms);

    for (auto& [s, list] : exemplars_) {
        const auto q = exemplar_quotas_.find(s);
        const std::size_t keep = q == exemplar_quotas_.end() ? 0 : q->second;
        if (list.exemplars.size() > keep) list.exemplars.resize(keep);
    }
    std::erase_if(exemplars_, [](const auto& entry) { return entry.second.exemplars.empty(); });
    trim_hard_cases();
}

void MemoryStore::trim_hard_cases() {
    // Per SVM, lowest confidence first; insertion order breaks ties.
    std::stable_sort(hard_cases_.begin(), hard_cases_.end(), [](const HardCase& a, const HardCase& b) {
        if (a.svm != b.svm) return a.svm < b.svm;
        return a.confidence < b.confidence;
    });
    std::map<SvmIdentity, std::size_t> kept;
    std::vector<HardCase> survivors;
    for (auto& h : hard_cases_) {
        const auto q = hard_quotas_.find(h.svm);
        const std::size_t limit = q == hard_quotas_.end() ? 0 : q->second;
        if (kept[h.svm]++ < limit) survivors.push_back(std::move(h));
    }
    hard_cases_ = std::move(survivors);
}

std::vector<FeatureRecord> MemoryStore::training_view() const {
    std::vector<FeatureRecord> view;
    std::set<RecordKey> keys;
    for (const auto& [s, list] : exemplars_) {
        for (const auto& r : list.exemplars) {
            if (keys.insert(r.key()).second) view.push_back(r);
        }
    }
    for (const auto& h : hard_cases_) {
        if (keys.insert(h.record.key()).second) view.push_back(h.record);
    }
    return view;
}

std::vector<MemoryRecord> MemoryStore::records() const {
    std::vector<MemoryRecord> out;
    for (const auto& [s, list] : exemplars_) {
        for (std::size_t k = 0; k < list.exemplars.size(); ++k) {
            out.push_back({list.exemplars[k], ExemplarOrigin{s, k + 1}});
        }
    }
    for (const auto& h : hard_cases_) out.push_back({h.record, HardCaseOrigin{h.svm, h.confidence}});
    return out;
}

nlohmann::json MemoryStore::to_json() const {
    nlohmann::json j;
    j["format"] = kMemoryFormat;
    j["version"] = kMemoryVersion;
    j["hard_budget"] = hard_budget_;
    j["exemplar_budget"] = exemplar_budget_;
    j["hard_quotas"] = nlohmann::json::array();
    for (const auto& [id, q] : hard_quotas_) {
        auto entry = identity_json(id);
        entry["quota"] = q;
        j["hard_quotas"].push_back(entry);
    }
    j["exemplar_quotas"] = nlohmann::json::array();
    for (const auto& [s, q] : exemplar_quotas_) j["exemplar_quotas"].push_back({{"species", s}, {"quota", q}});
    j["hard_cases"] = nlohmann::json::array();
    for (const auto& h : hard_cases_) {
        auto entry = record_json(h.record);
        entry["svm"] = identity_json(h.svm);
        entry["confidence"] = h.confidence;
        j["hard_cases"].push_back(entry);
    }
    j["exemplars"] = nlohmann::json::array();
    for (const auto& [s, list] : exemplars_) {
        nlohmann::json records = nlohmann::json::array();
        for (std::size_t k = 0; k < list.exemplars.size(); ++k) {
            auto entry = record_json(list.exemplars[k]);
            entry["rank"] = k + 1;
            records.push_back(entry);
        }
        j["exemplars"].push_back({{"species", s}, {"records", records}});
    }
    return j;
}

MemoryStore MemoryStore::from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != kMemoryFormat) {
            throw FormatError("not a memory snapshot");
        }
        if (j.at("version").get<int>() != kMemoryVersion) {
            throw FormatError("unsupported memory snapshot version " + j.at("version").dump());
        }
        MemoryStore store(j.at("hard_budget").get<std::size_t>(), j.at("exemplar_budget").get<std::size_t>());
        for (const auto& q : j.at("hard_quotas")) {
            store.hard_quotas_[identity_from_json(q)] = q.at("quota").get<std::size_t>();
        }
        for (const auto& q : j.at("exemplar_quotas")) {
            store.exemplar_quotas_[q.at("species").get<SpeciesId>()] = q.at("quota").get<std::size_t>();
        }
        for (const auto& h : j.at("hard_cases")) {
            store.hard_cases_.push_back(
                {record_from_json(h), identity_from_json(h.at("svm")), h.at("confidence").get<double>()});
        }
        for (const auto& e : j.at("exemplars")) {
            ExemplarList list{e.at("species").get<SpeciesId>(), {}};
            for (const auto& r : e.at("records")) {
                if (r.at("rank").get<std::size_t>() != list.exemplars.size() + 1) {
                    throw CorruptionError("exemplar ranks of species " + std::to_string(list.species) +
                                          " are not consecutive");
                }
                list.exemplars.push_back(record_from_json(r));
            }
            store.add_exemplars(std::move(list));
        }
        if (store.hard_case_count() > store.hard_budget_ || store.exemplar_count() > store.exemplar_budget_) {
            throw CorruptionError("memory snapshot exceeds its budgets");
        }
        return store;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed memory snapshot: ") + e.what());
    }
}

void MemoryStore::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out << to_json().dump(1) << '\n';
}

MemoryStore MemoryStore::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open memory snapshot " + path.string());
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
