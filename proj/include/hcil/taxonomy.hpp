#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace hcil {

using GroupId = std::uint16_t;
using SpeciesId = std::uint16_t;

struct GroupInfo {
    GroupId id = 0;
    std::string name;

    bool operator==(const GroupInfo&) const = default;
};

struct SpeciesInfo {
    SpeciesId id = 0;
    std::string name;
    GroupId group = 0;

    bool operator==(const SpeciesInfo&) const = default;
};

// Two-level label tree: coarse groups and the fine species under them.
// Group and species ids are dense (0..count-1) and every species has exactly
// one parent group.
class Taxonomy {
public:
    Taxonomy() = default;
    Taxonomy(std::vector<GroupInfo> groups, std::vector<SpeciesInfo> species);

    std::size_t group_count() const { return groups_.size(); }
    std::size_t species_count() const { return species_.size(); }

    const std::vector<GroupInfo>& groups() const { return groups_; }
    const std::vector<SpeciesInfo>& species() const { return species_; }

    bool has_group(std::uint64_t id) const { return id < groups_.size(); }
    bool has_species(std::uint64_t id) const { return id < species_.size(); }

    // Throws TaxonomyError for an unknown species.
    GroupId parent(SpeciesId species) const;

    // Species of a group in ascending id order.
    std::vector<SpeciesId> species_of(GroupId group) const;

    nlohmann::json to_json() const;
    static Taxonomy from_json(const nlohmann::json& j);

    void save(const std::filesystem::path& path) const;
    static Taxonomy load(const std::filesystem::path& path);

    bool operator==(const Taxonomy&) const = default;

private:
    std::vector<GroupInfo> groups_;
    std::vector<SpeciesInfo> species_;
};

}  // namespace hcil
