#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "hcil/feature_store.hpp"

namespace hcil {

// Shape of a synthetic hierarchical dataset: groups are super-clusters whose
// centers lie at least group_separation apart; species are sub-clusters at
// least species_separation apart inside their group; every frame is its
// species center plus isotropic Gaussian noise.
struct SynthSpec {
    std::size_t dimension = 32;
    std::vector<std::string> group_names;
    std::vector<std::size_t> species_per_group;
    std::size_t tracks_per_species = 6;
    std::size_t test_tracks_per_species = 0;
    std::size_t frames_per_track = 8;
    double group_separation = 10.0;
    double species_separation = 3.0;
    double noise = 1.0;
    std::uint64_t seed = 0;

    void validate() const;

    // Six groups, 31 species: Sharks 4, Skates 2, Flatfish 2, the rest split
    // 9 / 7 / 7.
    static SynthSpec paper_shape(std::uint64_t seed);
    // Named preset lookup ("paper-shape", "small"); throws UsageError.
    static SynthSpec preset(const std::string& name, std::uint64_t seed);
};

struct SynthResult {
    std::shared_ptr<const Taxonomy> taxonomy;
    Dataset train;
    Dataset test;  // empty unless test_tracks_per_species > 0
    std::vector<std::vector<double>> group_centers;
    std::vector<std::vector<double>> species_centers;
};

// Deterministic in spec.seed. Throws GenerationError when the requested
// separations cannot be packed in the requested dimension.
SynthResult generate(const SynthSpec& spec);

}  // namespace hcil
