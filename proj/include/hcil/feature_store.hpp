#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <set>
#include <vector>

#include "hcil/taxonomy.hpp"

namespace hcil {

// Identity of one physical frame. Memory deduplication is keyed on it.
struct RecordKey {
    std::uint64_t fish_id = 0;
    std::uint64_t frame_id = 0;

    auto operator<=>(const RecordKey&) const = default;
};

struct FeatureRecord {
    std::uint64_t fish_id = 0;
    std::uint64_t frame_id = 0;
    GroupId group_id = 0;
    SpeciesId species_id = 0;
    std::vector<float> feature;

    RecordKey key() const { return {fish_id, frame_id}; }

    bool operator==(const FeatureRecord&) const = default;
};

// Immutable set of labeled feature vectors of one dimension, bound to a
// taxonomy. The constructor validates every record.
class Dataset {
public:
    Dataset(std::shared_ptr<const Taxonomy> taxonomy, std::size_t dimension,
            std::vector<FeatureRecord> records);

    std::size_t dimension() const { return dimension_; }
    const std::vector<FeatureRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }

    const Taxonomy& taxonomy() const { return *taxonomy_; }
    const std::shared_ptr<const Taxonomy>& taxonomy_ptr() const { return taxonomy_; }

    std::set<SpeciesId> species() const;
    std::set<GroupId> groups() const;

private:
    std::shared_ptr<const Taxonomy> taxonomy_;
    std::size_t dimension_;
    std::vector<FeatureRecord> records_;
};

// Ordered, class-disjoint sequence of training tasks. Individual tasks may be
// empty (a vacuous task only produces a report entry).
struct TaskStream {
    std::shared_ptr<const Taxonomy> taxonomy;
    std::vector<Dataset> tasks;

    // Throws ValidationError when two tasks share a species or dimensions
    // disagree.
    void validate() const;

    // Index of the task that introduces each species; -1 if never seen.
    std::vector<int> cohort_of_species() const;

    Dataset concatenated() const;
};

// Binary feature file ("HCF1"), little-endian, no padding.
void save_binary(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_binary(const std::filesystem::path& path, std::shared_ptr<const Taxonomy> taxonomy);
// Resolves the taxonomy sidecar next to the file (see taxonomy_sidecar_for).
Dataset load_binary(const std::filesystem::path& path);

// "<file>.taxonomy.json" if present, else "taxonomy.json" in the same directory.
std::filesystem::path taxonomy_sidecar_for(const std::filesystem::path& feature_file);

// CSV with header fish_id,frame_id,group_id,species_id,f0..f{d-1}. Features
// are written in shortest round-trip form, so CSV and binary twins hold
// identical values.
void save_csv(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_csv(const std::filesystem::path& path, std::shared_ptr<const Taxonomy> taxonomy);

// Splits species across tasks group by group: a seeded shuffle within each
// group, then round-robin. Groups with fewer species than tasks go wholly to
// the first task.
TaskStream partition_tasks(const Dataset& dataset, std::size_t num_tasks, std::uint64_t seed);

// Stream manifest ("stream.json") plus one binary file per task.
void save_stream(const TaskStream& stream, const std::filesystem::path& directory);
TaskStream load_stream(const std::filesystem::path& manifest);

}  // namespace hcil
