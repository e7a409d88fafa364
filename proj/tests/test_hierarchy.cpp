#include <gtest/gtest.h>

#include <cmath>

#include "hcil/error.hpp"
#include "hcil/hierarchy.hpp"
#include "hcil/rng.hpp"
#include "hcil/synth.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace hcil;
using testutil::make_taxonomy;

namespace {

SynthResult small_paper_shape(std::uint64_t seed) {
    auto spec = SynthSpec::paper_shape(seed);
    spec.tracks_per_species = 3;
    spec.frames_per_track = 5;
    spec.test_tracks_per_species = 0;
    return generate(spec);
}

std::vector<FeatureRecord> of_species(const Dataset& ds, const std::set<SpeciesId>& species) {
    std::vector<FeatureRecord> out;
    for (const auto& r : ds.records()) {
        if (species.contains(r.species_id)) out.push_back(r);
    }
    return out;
}

std::vector<FeatureRecord> of_group(const Dataset& ds, GroupId g) {
    std::vector<FeatureRecord> out;
    for (const auto& r : ds.records()) {
        if (r.group_id == g) out.push_back(r);
    }
    return out;
}

// Coarse bank plus every species of every group.
HierarchicalModel full_model(const SynthResult& data, const SvmParams& params = {}) {
    HierarchicalModel model(data.taxonomy, data.train.dimension());
    model.train_coarse(data.train.records(), params);
    for (const auto& g : data.taxonomy->groups()) {
        const auto recs = of_group(data.train, g.id);
        model.expand_fine(g.id, recs, {}, params);
    }
    return model;
}

CalibratedSvm line_svm(SvmLevel level, std::uint16_t label, std::vector<double> w, double b = 0.0) {
    CalibratedSvm svm;
    svm.identity = {level, label};
    svm.weights = std::move(w);
    svm.bias = b;
    return svm;
}

double logit(double p) { return std::log(p / (1 - p)); }

double norm_diff(const CalibratedSvm& a, const CalibratedSvm& b) {
    double s = (a.bias - b.bias) * (a.bias - b.bias);
    for (std::size_t j = 0; j < a.weights.size(); ++j) s += std::pow(a.weights[j] - b.weights[j], 2);
    return std::sqrt(s);
}

}  // namespace

TEST(Hierarchy, SeparatedGroupsAreLearnedExactly) {
    SynthSpec spec;
    spec.dimension = 4;
    spec.group_names = {"A", "B"};
    spec.species_per_group = {1, 1};
    spec.tracks_per_species = 5;
    spec.frames_per_track = 4;
    spec.group_separation = 10;
    spec.species_separation = 1;
    spec.noise = 0.5;
    const auto data = generate(spec);
    HierarchicalModel model(data.taxonomy, 4);
    model.train_coarse(data.train.records(), {});
    for (const auto& r : data.train.records()) {
        EXPECT_EQ(model.predict_image(r.feature).group_id, r.group_id);
    }
}

TEST(Hierarchy, PaperShapeHasSixCoarseSvms) {
    const auto data = small_paper_shape(1);
    HierarchicalModel model(data.taxonomy, data.train.dimension());
    model.train_coarse(data.train.records(), {});
    EXPECT_EQ(model.coarse_bank().size(), 6u);
}

TEST(Hierarchy, SingleGroupCoarseIsDegenerate) {
    const auto data = small_paper_shape(1);
    HierarchicalModel model(data.taxonomy, data.train.dimension());
    const auto sharks = of_group(data.train, 0);
    try {
        model.train_coarse(sharks, {});
        FAIL() << "expected a degenerate error";
    } catch (const DegenerateError& e) {
        EXPECT_NE(std::string(e.what()).find("Sharks"), std::string::npos) << e.what();
    }
}

// Adding memory records to the coarse pool moves every group SVM to the
// boundary obtained by training on the union from scratch.
TEST(Hierarchy, MemoryMovesCoarseBoundariesToUnionRetrain) {
    const auto data = small_paper_shape(2);
    std::set<SpeciesId> task_species, memory_species;
    for (const auto& g : data.taxonomy->groups()) {
        const auto members = data.taxonomy->species_of(g.id);
        task_species.insert(members.front());
        memory_species.insert(members.back());
    }
    const auto task = of_species(data.train, task_species);
    auto memory = of_species(data.train, memory_species);
    memory.resize(memory.size() / 2);

    std::vector<FeatureRecord> with_memory = task;
    with_memory.insert(with_memory.end(), memory.begin(), memory.end());
    std::vector<FeatureRecord> union_reordered = memory;
    union_reordered.insert(union_reordered.end(), task.begin(), task.end());

    HierarchicalModel task_only(data.taxonomy, data.train.dimension());
    HierarchicalModel replayed(data.taxonomy, data.train.dimension());
    HierarchicalModel oracle_model(data.taxonomy, data.train.dimension());
    task_only.train_coarse(task, {});
    replayed.train_coarse(with_memory, {});
    oracle_model.train_coarse(union_reordered, {});

    for (const auto& [g, svm] : oracle_model.coarse_bank()) {
        const double before = norm_diff(task_only.coarse_bank().at(g), svm);
        const double after = norm_diff(replayed.coarse_bank().at(g), svm);
        EXPECT_LT(after, before) << "group " << g;
        EXPECT_LT(after, 1e-2) << "group " << g;
    }
}

TEST(Hierarchy, SharksFourthSpeciesGivesFourFineSvms) {
    const auto data = small_paper_shape(3);
    const auto sharks = data.taxonomy->species_of(0);
    ASSERT_EQ(sharks.size(), 4u);
    HierarchicalModel model(data.taxonomy, data.train.dimension());
    model.train_coarse(data.train.records(), {});

    const auto first_three = of_species(data.train, {sharks[0], sharks[1], sharks[2]});
    model.expand_fine(0, first_three, {}, {});
    EXPECT_EQ(model.fine_banks().at(0).svms.size(), 3u);

    const auto fourth = of_species(data.train, {sharks[3]});
    model.expand_fine(0, fourth, first_three, {});
    EXPECT_EQ(model.fine_banks().at(0).svms.size(), 4u);
    EXPECT_EQ(model.fine_banks().at(0).seen, sharks);
}

TEST(Hierarchy, TwoSpeciesGroupPassesThroughUntilBothSeen) {
    const auto data = small_paper_shape(4);
    const GroupId skates = 1;
    const auto members = data.taxonomy->species_of(skates);
    ASSERT_EQ(members.size(), 2u);
    HierarchicalModel model(data.taxonomy, data.train.dimension());
    model.train_coarse(data.train.records(), {});

    const auto first = of_species(data.train, {members[0]});
    model.expand_fine(skates, first, {}, {});
    EXPECT_TRUE(model.fine_banks().at(skates).svms.empty());
    for (const auto& r : first) {
        const auto p = model.predict_image(r.feature);
        if (p.group_id == skates) {
            EXPECT_EQ(p.species_id, members[0]);
            EXPECT_EQ(p.species_confidence, p.group_confidence);
        }
    }

    model.expand_fine(skates, of_species(data.train, {members[1]}), first, {});
    EXPECT_EQ(model.fine_banks().at(skates).svms.size(), 2u);
}

TEST(Hierarchy, ExpansionLeavesOtherGroupsUntouched) {
    const auto data = small_paper_shape(5);
    HierarchicalModel model(data.taxonomy, data.train.dimension());
    model.train_coarse(data.train.records(), {});
    for (GroupId g = 0; g < 6; ++g) {
        const auto members = data.taxonomy->species_of(g);
        model.expand_fine(g, of_species(data.train, {members[0], members[1]}), {}, {});
    }
    std::vector<std::string> before;
    for (GroupId g = 0; g < 6; ++g) before.push_back(model.fine_bank_json(g).dump());
    const auto coarse_before = nlohmann::json(model.to_json()["coarse"]).dump();
    const auto ids_before = model.active_svms();

    const auto rock = data.taxonomy->species_of(3);
    model.expand_fine(3, of_species(data.train, {rock[2], rock[3]}), of_group(data.train, 3), {});

    for (GroupId g = 0; g < 6; ++g) {
        if (g != 3) EXPECT_EQ(model.fine_bank_json(g).dump(), before[g]) << "group " << g;
    }
    EXPECT_EQ(nlohmann::json(model.to_json()["coarse"]).dump(), coarse_before);
    const auto ids_after = model.active_svms();
    for (const auto& id : ids_before) {
        EXPECT_TRUE(std::find(ids_after.begin(), ids_after.end(), id) != ids_after.end()) << id.to_string();
    }
}

TEST(Hierarchy, ExpansionErrors) {
    const auto data = small_paper_shape(6);
    HierarchicalModel model(data.taxonomy, data.train.dimension());
    model.train_coarse(data.train.records(), {});
    const auto sharks = of_group(data.train, 0);
    model.expand_fine(0, sharks, {}, {});
    EXPECT_THROW(model.expand_fine(0, sharks, {}, {}), DuplicateClassError);
    EXPECT_THROW(model.expand_fine(1, of_group(data.train, 2), {}, {}), TaxonomyError);
}

TEST(Hierarchy, SingleSpeciesPassThrough) {
    auto tax = make_taxonomy({1});
    HierarchicalModel model(tax, 2);
    model.set_coarse(line_svm(SvmLevel::coarse, 0, {0.5, -1.0}, 0.25));
    model.mark_seen(0);
    const std::vector<float> x{1.0f, 2.0f};
    const auto p = model.predict_image(x);
    const double expected = oracle::logistic(-1.0, 0.0, 0.25 + 0.5 - 2.0);
    EXPECT_EQ(p.group_id, 0);
    EXPECT_EQ(p.species_id, 0);
    EXPECT_NEAR(p.group_confidence, expected, 1e-15);
    EXPECT_EQ(p.species_confidence, p.group_confidence);
}

TEST(Hierarchy, BoundaryTieGoesToLowestGroup) {
    auto tax = make_taxonomy({1, 1});
    HierarchicalModel model(tax, 1);
    model.set_coarse(line_svm(SvmLevel::coarse, 0, {1.0}));
    model.set_coarse(line_svm(SvmLevel::coarse, 1, {-1.0}));
    model.mark_seen(0);
    model.mark_seen(1);
    EXPECT_EQ(model.predict_image(std::vector<float>{0.0f}).group_id, 0);
    EXPECT_EQ(model.predict_image(std::vector<float>{-0.1f}).group_id, 1);
}

TEST(Hierarchy, PredictionMatchesSvmBySvmRouting) {
    const auto data = small_paper_shape(7);
    const auto model = full_model(data);
    Rng rng(7);
    for (int i = 0; i < 500; ++i) {
        const auto& base = data.train.records()[rng.uniform_index(data.train.size())].feature;
        std::vector<float> x(base.size());
        for (std::size_t j = 0; j < x.size(); ++j) x[j] = base[j] + static_cast<float>(rng.normal() * 2);
        const auto got = model.predict_image(x);
        const auto want = oracle::route(model, x);
        EXPECT_EQ(got.group_id, want.group_id);
        EXPECT_EQ(got.species_id, want.species_id);
        EXPECT_NEAR(got.group_confidence, want.group_confidence, 1e-12);
        EXPECT_NEAR(got.species_confidence, want.species_confidence, 1e-12);
    }
}

TEST(Hierarchy, PredictionErrors) {
    auto tax = make_taxonomy({1, 1});
    HierarchicalModel model(tax, 2);
    EXPECT_THROW(model.predict_image(std::vector<float>{0.0f, 0.0f}), ValidationError);
    model.set_coarse(line_svm(SvmLevel::coarse, 0, {1.0, 0.0}));
    model.mark_seen(0);
    EXPECT_THROW(model.predict_image(std::vector<float>{0.0f}), ValidationError);
    EXPECT_THROW(model.predict_video(std::span<const std::vector<float>>{}), ValidationError);
    EXPECT_THROW(model.svm({SvmLevel::fine, 1}), ValidationError);
}

namespace {

// One group, two species; species 0 scores sigmoid(x), species 1 sigmoid(-x).
HierarchicalModel two_species_line() {
    auto tax = make_taxonomy({2, 1});
    HierarchicalModel model(tax, 1);
    model.set_coarse(line_svm(SvmLevel::coarse, 0, {0.0}, 1.0));
    model.set_coarse(line_svm(SvmLevel::coarse, 1, {0.0}, -1.0));
    model.mark_seen(0);
    model.mark_seen(1);
    model.set_fine(line_svm(SvmLevel::fine, 0, {1.0}));
    model.set_fine(line_svm(SvmLevel::fine, 1, {-1.0}));
    return model;
}

}  // namespace

TEST(Video, StrictMajority) {
    const auto model = two_species_line();
    const std::vector<std::vector<float>> frames{{2.0f}, {1.0f}, {-3.0f}};
    EXPECT_EQ(model.predict_video(frames).species_id, 0);
}

TEST(Video, SingleFrameEqualsImage) {
    const auto model = two_species_line();
    for (float v : {-2.0f, 0.3f, 5.0f}) {
        const std::vector<std::vector<float>> frames{{v}};
        EXPECT_EQ(model.predict_video(frames), model.predict_image(frames[0]));
    }
}

TEST(Video, TieGoesToHigherMeanConfidence) {
    const auto model = two_species_line();
    const auto hi = static_cast<float>(logit(0.9));
    const auto lo = static_cast<float>(logit(0.6));
    const std::vector<std::vector<float>> first_strong{{hi}, {-lo}, {hi}, {-lo}};
    const auto a = model.predict_video(first_strong);
    EXPECT_EQ(a.species_id, 0);
    EXPECT_NEAR(a.species_confidence, 0.9, 1e-6);
    const std::vector<std::vector<float>> second_strong{{lo}, {-hi}, {lo}, {-hi}};
    EXPECT_EQ(model.predict_video(second_strong).species_id, 1);
}

TEST(HierarchyProperty, VideoIgnoresFrameOrder) {
    const auto data = small_paper_shape(8);
    const auto model = full_model(data);
    Rng rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<std::vector<float>> frames;
        const std::size_t n = 1 + rng.uniform_index(9);
        for (std::size_t k = 0; k < n; ++k) {
            auto f = data.train.records()[rng.uniform_index(data.train.size())].feature;
            for (auto& v : f) v += static_cast<float>(rng.normal());
            frames.push_back(std::move(f));
        }
        const auto before = model.predict_video(frames);
        rng.shuffle(std::span<std::vector<float>>(frames));
        EXPECT_EQ(model.predict_video(frames), before);
    }
}

TEST(HierarchyProperty, PredictedSpeciesIsChildOfPredictedGroup) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto data = small_paper_shape(10 + seed);
        // Half the species seen, so some groups pass through.
        HierarchicalModel model(data.taxonomy, data.train.dimension());
        model.train_coarse(data.train.records(), {});
        for (const auto& g : data.taxonomy->groups()) {
            const auto members = data.taxonomy->species_of(g.id);
            std::set<SpeciesId> half(members.begin(), members.begin() + (members.size() + 1) / 2);
            model.expand_fine(g.id, of_species(data.train, half), {}, {});
        }
        Rng rng(seed);
        for (int i = 0; i < 300; ++i) {
            std::vector<float> x(data.train.dimension());
            for (auto& v : x) v = static_cast<float>(rng.normal() * 6);
            const auto p = model.predict_image(x);
            EXPECT_EQ(data.taxonomy->parent(p.species_id), p.group_id);
            EXPECT_TRUE(model.seen_species().contains(p.species_id));
        }
    }
}

// With bias-free coarse SVMs sharing one calibration, confidences are a
// single increasing function of the margin, so x -> a*x keeps the argmax.
TEST(HierarchyProperty, CoarseArgmaxSurvivesPositiveRescaling) {
    auto tax = make_taxonomy({1, 1, 1, 1, 1});
    Rng rng(3);
    for (int m = 0; m < 10; ++m) {
        HierarchicalModel model(tax, 6);
        for (GroupId g = 0; g < 5; ++g) {
            std::vector<double> w(6);
            for (auto& v : w) v = rng.normal();
            auto svm = line_svm(SvmLevel::coarse, g, w, 0.0);
            svm.calib_a = -1.7;
            svm.calib_b = 0.3;
            model.set_coarse(svm);
            model.mark_seen(g);
        }
        for (int i = 0; i < 100; ++i) {
            std::vector<float> x(6);
            for (auto& v : x) v = static_cast<float>(rng.normal());
            const GroupId g = model.predict_image(x).group_id;
            for (float alpha : {0.05f, 0.5f, 2.0f, 7.0f}) {
                std::vector<float> y(x);
                for (auto& v : y) v *= alpha;
                EXPECT_EQ(model.predict_image(y).group_id, g);
            }
        }
    }
}

TEST(Hierarchy, SerializationRoundTrip) {
    testutil::TempDir dir;
    const auto data = small_paper_shape(9);
    const auto model = full_model(data);
    model.save(dir / "m.json");
    const auto back = HierarchicalModel::load(dir / "m.json");
    EXPECT_EQ(back.to_json().dump(), model.to_json().dump());
    for (std::size_t i = 0; i < data.train.size(); i += 7) {
        const auto& x = data.train.records()[i].feature;
        EXPECT_EQ(back.predict_image(x), model.predict_image(x));
    }
}
