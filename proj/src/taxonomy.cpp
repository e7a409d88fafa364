#include "hcil/taxonomy.hpp"

#include <algorithm>
#include <fstream>

#include "hcil/error.hpp"

namespace hcil {

namespace {

constexpr const char* kTaxonomyFormat = "hcil-taxonomy";
constexpr int kTaxonomyVersion = 1;

}  // namespace

Taxonomy::Taxonomy(std::vector<GroupInfo> groups, std::vector<SpeciesInfo> species)
    : groups_(std::move(groups)), species_(std::move(species)) {
    std::sort(groups_.begin(), groups_.end(),
              [](const GroupInfo& a, const GroupInfo& b) { return a.id < b.id; });
    std::sort(species_.begin(), species_.end(),
              [](const SpeciesInfo& a, const SpeciesInfo& b) { return a.id < b.id; });

    for (std::size_t i = 0; i < groups_.size(); ++i) {
        if (groups_[i].id != i) {
            throw TaxonomyError("group ids must be dense and unique; missing or repeated id " +
                                std::to_string(i));
        }
    }
    for (std::size_t i = 0; i < species_.size(); ++i) {
        if (species_[i].id != i) {
            throw TaxonomyError("species ids must be dense and unique; missing or repeated id " +
                                std::to_string(i));
        }
        if (!has_group(species_[i].group)) {
            throw TaxonomyError("species " + std::to_string(i) + " names unknown parent group " +
                                std::to_string(species_[i].group));
        }
    }
}

GroupId Taxonomy::parent(SpeciesId species) const {
    if (!has_species(species)) {
        throw TaxonomyError("unknown species id " + std::to_string(species));
    }
    return species_[species].group;
}

std::vector<SpeciesId> Taxonomy::species_of(GroupId group) const {
    std::vector<SpeciesId> out;
    for (const auto& s : species_) {
        if (s.group == group) {
            out.push_back(s.id);
        }
    }
    return out;
}

nlohmann::json Taxonomy::to_json() const {
    nlohmann::json j;
    j["format"] = kTaxonomyFormat;
    j["version"] = kTaxonomyVersion;
    j["groups"] = nlohmann::json::array();
    for (const auto& g : groups_) {
        j["groups"].push_back({{"id", g.id}, {"name", g.name}});
    }
    j["species"] = nlohmann::json::array();
    for (const auto& s : species_) {
        j["species"].push_back({{"id", s.id}, {"name", s.name}, {"group", s.group}});
    }
    return j;
}

Taxonomy Taxonomy::from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != kTaxonomyFormat) {
            throw FormatError("not a taxonomy document");
        }
        if (j.at("version").get<int>() != kTaxonomyVersion) {
            throw FormatError("unsupported taxonomy version " + j.at("version").dump());
        }
        std::vector<GroupInfo> groups;
        for (const auto& g : j.at("groups")) {
            groups.push_back({g.at("id").get<GroupId>(), g.at("name").get<std::string>()});
        }
        std::vector<SpeciesInfo> species;
        for (const auto& s : j.at("species")) {
            species.push_back({s.at("id").get<SpeciesId>(), s.at("name").get<std::string>(),
                               s.at("group").get<GroupId>()});
        }
        return Taxonomy(std::move(groups), std::move(species));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed taxonomy: ") + e.what());
    }
}

void Taxonomy::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out << to_json().dump(2) << '\n';
}

Taxonomy Taxonomy::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open taxonomy file " + path.string());
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError("taxonomy file " + path.string() + ": " + e.what());
    }
    return from_json(j);
}

}  // namespace hcil
