#include "hcil/synth.hpp"

#include <cmath>

#include "hcil/error.hpp"
#include "hcil/rng.hpp"

namespace hcil {

namespace {

constexpr int kPlacementAttempts = 2000;

double distance(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

std::vector<double> random_direction(Rng& rng, std::size_t d) {
    std::vector<double> v(d);
    double norm = 0.0;
    do {
        norm = 0.0;
        for (auto& x : v) {
            x = rng.normal();
            norm += x * x;
        }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    return v;
}

// Points at distance `radius` from `origin`, pairwise at least `separation`
// apart, by rejection sampling.
std::vector<std::vector<double>> place(Rng& rng, const std::vector<double>& origin, std::size_t count,
                                       double radius, double separation, const std::string& what) {
    std::vector<std::vector<double>> centers;
    const std::size_t d = origin.size();
    while (centers.size() < count) {
        bool placed = false;
        for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
            auto c = random_direction(rng, d);
            for (std::size_t i = 0; i < d; ++i) c[i] = origin[i] + radius * c[i];
            bool ok = true;
            for (const auto& other : centers) {
                if (distance(c, other) < separation) {
                    ok = false;
                    break;
                }
            }
            if (ok) {
                centers.push_back(std::move(c));
                placed = true;
            }
        }
        if (!placed) {
            throw GenerationError("cannot place " + std::to_string(count) + " " + what + " centers " +
                                  std::to_string(separation) + " apart in dimension " + std::to_string(d) +
                                  "; use a larger dimension");
        }
    }
    return centers;
}

}  // namespace

void SynthSpec::validate() const {
    if (dimension == 0) throw ValidationError("synthetic dimension must be positive");
    if (species_per_group.empty()) throw ValidationError("synthetic spec needs at least one group");
    if (!group_names.empty() && group_names.size() != species_per_group.size()) {
        throw ValidationError("group names and species counts differ in length");
    }
    for (auto n : species_per_group) {
        if (n == 0) throw ValidationError("every group needs at least one species");
    }
    if (tracks_per_species == 0 || frames_per_track == 0) {
        throw ValidationError("track and frame counts must be at least 1");
    }
    if (!(species_separation > 0.0) || !(group_separation > species_separation)) {
        throw ValidationError("separations must satisfy group > species > 0");
    }
    if (!(noise > 0.0)) throw ValidationError("noise must be positive");
}

SynthSpec SynthSpec::paper_shape(std::uint64_t seed) {
    SynthSpec spec;
    spec.group_names = {"Sharks", "Skates", "Flatfish", "Rockfish", "Roundfish", "Other"};
    spec.species_per_group = {4, 2, 2, 9, 7, 7};
    spec.dimension = 32;
    spec.tracks_per_species = 20;
    spec.test_tracks_per_species = 6;
    spec.frames_per_track = 10;
    // Groups overlap a little and sibling species noticeably.
    spec.group_separation = 4.0;
    spec.species_separation = 3.0;
    spec.noise = 1.2;
    spec.seed = seed;
    return spec;
}

SynthSpec SynthSpec::preset(const std::string& name, std::uint64_t seed) {
    if (name == "paper-shape") return paper_shape(seed);
    if (name == "small") {
        SynthSpec spec;
        spec.dimension = 8;
        spec.group_names = {"A", "B", "C"};
        spec.species_per_group = {3, 3, 2};
        spec.tracks_per_species = 3;
        spec.test_tracks_per_species = 2;
        spec.frames_per_track = 5;
        spec.seed = seed;
        return spec;
    }
    throw UsageError("unknown preset '" + name + "' (expected paper-shape or small)");
}

SynthResult generate(const SynthSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    const std::size_t d = spec.dimension;

    std::vector<GroupInfo> groups;
    std::vector<SpeciesInfo> species;
    for (std::size_t g = 0; g < spec.species_per_group.size(); ++g) {
        const std::string name = spec.group_names.empty() ? "group" + std::to_string(g) : spec.group_names[g];
        groups.push_back({static_cast<GroupId>(g), name});
        for (std::size_t k = 0; k < spec.species_per_group[g]; ++k) {
            species.push_back({static_cast<SpeciesId>(species.size()), name + "_" + std::to_string(k + 1),
                               static_cast<GroupId>(g)});
        }
    }
    auto taxonomy = std::make_shared<const Taxonomy>(std::move(groups), std::move(species));

    SynthResult result{taxonomy, Dataset(taxonomy, d, {}), Dataset(taxonomy, d, {}), {}, {}};
    result.group_centers = place(rng, std::vector<double>(d, 0.0), spec.species_per_group.size(),
                                 spec.group_separation, spec.group_separation, "group");
    for (std::size_t g = 0; g < spec.species_per_group.size(); ++g) {
        auto centers = place(rng, result.group_centers[g], spec.species_per_group[g], spec.species_separation,
                             spec.species_separation, "species");
        for (auto& c : centers) result.species_centers.push_back(std::move(c));
    }

    std::uint64_t next_fish = 1;
    auto draw = [&](std::size_t tracks_per_species) {
        std::vector<FeatureRecord> records;
        for (const auto& s : taxonomy->species()) {
            const auto& center = result.species_centers[s.id];
            for (std::size_t t = 0; t < tracks_per_species; ++t) {
                const std::uint64_t fish = next_fish++;
                for (std::size_t f = 0; f < spec.frames_per_track; ++f) {
                    FeatureRecord r{fish, f, s.group, s.id, std::vector<float>(d)};
                    for (std::size_t i = 0; i < d; ++i) {
                        r.feature[i] = static_cast<float>(center[i] + spec.noise * rng.normal());
                    }
                    records.push_back(std::move(r));
                }
            }
        }
        return Dataset(taxonomy, d, std::move(records));
    };
    result.train = draw(spec.tracks_per_species);
    if (spec.test_tracks_per_species > 0) result.test = draw(spec.test_tracks_per_species);
    return result;
}

}  // namespace hcil
