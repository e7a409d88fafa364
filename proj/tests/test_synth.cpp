#include <gtest/gtest.h>

#include <cmath>

#include "hcil/error.hpp"
#include "hcil/eval.hpp"
#include "hcil/synth.hpp"
#include "hcil/trainer.hpp"
#include "test_util.hpp"

using namespace hcil;

namespace {

double dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

}  // namespace

TEST(Synth, SingleFrameSitsOnItsCenter) {
    SynthSpec spec;
    spec.dimension = 3;
    spec.group_names = {"Only"};
    spec.species_per_group = {1};
    spec.tracks_per_species = 1;
    spec.frames_per_track = 1;
    spec.noise = 1e-12;
    const auto out = generate(spec);
    ASSERT_EQ(out.train.size(), 1u);
    const auto& f = out.train.records()[0].feature;
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(f[j], out.species_centers[0][j], 1e-6);
}

TEST(Synth, PaperShapeTaxonomy) {
    auto spec = SynthSpec::paper_shape(0);
    spec.tracks_per_species = 1;
    spec.frames_per_track = 1;
    spec.test_tracks_per_species = 0;
    const auto tax = generate(spec).taxonomy;
    ASSERT_EQ(tax->group_count(), 6u);
    EXPECT_EQ(tax->species_count(), 31u);
    std::map<std::string, std::size_t> size_of;
    for (const auto& g : tax->groups()) size_of[g.name] = tax->species_of(g.id).size();
    EXPECT_EQ(size_of.at("Sharks"), 4u);
    EXPECT_EQ(size_of.at("Skates"), 2u);
    EXPECT_EQ(size_of.at("Flatfish"), 2u);
}

TEST(Synth, SameSeedSameBytes) {
    testutil::TempDir dir;
    const auto a = generate(SynthSpec::preset("small", 42));
    const auto b = generate(SynthSpec::preset("small", 42));
    save_binary(a.train, dir / "a.feat");
    save_binary(b.train, dir / "b.feat");
    EXPECT_EQ(testutil::read_file(dir / "a.feat"), testutil::read_file(dir / "b.feat"));
    const auto c = generate(SynthSpec::preset("small", 43));
    save_binary(c.train, dir / "c.feat");
    EXPECT_NE(testutil::read_file(dir / "a.feat"), testutil::read_file(dir / "c.feat"));
}

TEST(Synth, SeparationsAreHonored) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto spec = SynthSpec::paper_shape(seed);
        auto small = spec;
        small.tracks_per_species = 1;
        small.frames_per_track = 1;
        small.test_tracks_per_species = 0;
        const auto out = generate(small);
        for (std::size_t i = 0; i < out.group_centers.size(); ++i)
            for (std::size_t j = i + 1; j < out.group_centers.size(); ++j)
                EXPECT_GE(dist(out.group_centers[i], out.group_centers[j]), spec.group_separation - 1e-9);
        for (const auto& a : out.taxonomy->species())
            for (const auto& b : out.taxonomy->species())
                if (a.id < b.id && a.group == b.group)
                    EXPECT_GE(dist(out.species_centers[a.id], out.species_centers[b.id]),
                              spec.species_separation - 1e-9);
    }
}

// Empirical species means approach the configured centers: every coordinate
// within 3 sigma / sqrt(N).
TEST(SynthProperty, MeansConvergeToCenters) {
    SynthSpec spec;
    spec.dimension = 4;
    spec.group_names = {"A", "B"};
    spec.species_per_group = {2, 1};
    spec.tracks_per_species = 50;
    spec.frames_per_track = 40;
    spec.noise = 1.5;
    spec.seed = 5;
    const auto out = generate(spec);
    const double n = static_cast<double>(spec.tracks_per_species * spec.frames_per_track);
    std::vector<std::vector<double>> sums(3, std::vector<double>(4, 0.0));
    for (const auto& r : out.train.records())
        for (std::size_t j = 0; j < 4; ++j) sums[r.species_id][j] += r.feature[j];
    for (std::size_t s = 0; s < 3; ++s)
        for (std::size_t j = 0; j < 4; ++j)
            EXPECT_LE(std::abs(sums[s][j] / n - out.species_centers[s][j]), 3 * spec.noise / std::sqrt(n))
                << "species " << s << " coordinate " << j;
}

TEST(Synth, InfeasiblePackingIsAGenerationError) {
    SynthSpec spec;
    spec.dimension = 1;
    spec.group_names = {"A", "B", "C"};
    spec.species_per_group = {1, 1, 1};
    try {
        generate(spec);
        FAIL() << "expected a generation error";
    } catch (const GenerationError& e) {
        EXPECT_NE(std::string(e.what()).find("dimension"), std::string::npos) << e.what();
    }
}

TEST(Synth, SpecValidation) {
    SynthSpec spec = SynthSpec::preset("small", 0);
    spec.species_separation = spec.group_separation;
    EXPECT_THROW(spec.validate(), ValidationError);
    spec = SynthSpec::preset("small", 0);
    spec.noise = 0;
    EXPECT_THROW(spec.validate(), ValidationError);
    spec = SynthSpec::preset("small", 0);
    spec.frames_per_track = 0;
    EXPECT_THROW(spec.validate(), ValidationError);
    EXPECT_THROW(SynthSpec::preset("nope", 0), UsageError);
}

TEST(Synth, WellSeparatedDataIsLearnedAlmostPerfectly) {
    SynthSpec spec = SynthSpec::preset("small", 9);
    spec.group_separation = 40;
    spec.species_separation = 15;
    spec.noise = 0.5;
    const auto out = generate(spec);
    TaskStream stream{out.taxonomy, {out.train}};
    const auto model = run_joint_oracle(stream, TrainConfig{});
    EXPECT_GE(evaluate(model, out.test).img_f, 99.0);
}
