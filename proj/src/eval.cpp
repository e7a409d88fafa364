#include "hcil/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "hcil/error.hpp"

namespace hcil {

namespace {

double percent(std::size_t hits, std::size_t total) {
    return total == 0 ? 0.0 : 100.0 * static_cast<double>(hits) / static_cast<double>(total);
}

double one_decimal(double v) { return std::round(v * 10.0) / 10.0; }

}  // namespace

double CohortCounts::img_f() const { return percent(frames_correct_species, frames); }
double CohortCounts::video_f() const { return percent(tracks_correct_species, tracks); }

EvalReport evaluate(const HierarchicalModel& model, const Dataset& test, std::span<const int> cohort_of_species) {
    const Taxonomy& taxonomy = model.taxonomy();
    EvalReport report;
    report.group_confusion.assign(taxonomy.group_count(), std::vector<std::size_t>(taxonomy.group_count(), 0));
    auto cohort_of = [&](SpeciesId s) {
        return s < cohort_of_species.size() ? cohort_of_species[s] : -1;
    };

    std::map<std::uint64_t, std::vector<const FeatureRecord*>> tracks;
    std::size_t group_hits = 0;
    std::size_t species_hits = 0;
    for (const auto& r : test.records()) {
        if (!taxonomy.has_species(r.species_id) || taxonomy.parent(r.species_id) != r.group_id) {
            throw TaxonomyError("test species " + std::to_string(r.species_id) + " of fish " +
                                std::to_string(r.fish_id) + " is not in the model's taxonomy");
        }
        const auto p = model.predict_image(r.feature);
        if (taxonomy.parent(p.species_id) != p.group_id) report.routing_consistent = false;
        ++report.group_confusion[r.group_id][p.group_id];
        const bool group_ok = p.group_id == r.group_id;
        const bool species_ok = p.species_id == r.species_id;
        group_hits += group_ok;
        species_hits += species_ok;
        if (!cohort_of_species.empty()) {
            auto& c = report.cohorts[cohort_of(r.species_id)];
            ++c.frames;
            c.frames_correct_group += group_ok;
            c.frames_correct_species += species_ok;
        }
        tracks[r.fish_id].push_back(&r);
    }
    report.frames = test.size();
    report.img_c = percent(group_hits, report.frames);
    report.img_f = percent(species_hits, report.frames);

    std::size_t video_group_hits = 0;
    std::size_t video_species_hits = 0;
    std::vector<std::vector<float>> frames;
    for (const auto& [fish, records] : tracks) {
        frames.clear();
        for (const auto* r : records) frames.push_back(r->feature);
        const auto p = model.predict_video(frames);
        if (taxonomy.parent(p.species_id) != p.group_id) report.routing_consistent = false;
        const auto& truth = *records.front();
        const bool group_ok = p.group_id == truth.group_id;
        const bool species_ok = p.species_id == truth.species_id;
        video_group_hits += group_ok;
        video_species_hits += species_ok;
        if (!cohort_of_species.empty()) {
            auto& c = report.cohorts[cohort_of(truth.species_id)];
            ++c.tracks;
            c.tracks_correct_species += species_ok;
        }
    }
    report.tracks = tracks.size();
    report.video_c = percent(video_group_hits, report.tracks);
    report.video_f = percent(video_species_hits, report.tracks);
    return report;
}

double old_cohort_img_f(const EvalReport& report, int cohort) {
    std::size_t frames = 0;
    std::size_t hits = 0;
    for (const auto& [c, counts] : report.cohorts) {
        if (c >= 0 && c < cohort) {
            frames += counts.frames;
            hits += counts.frames_correct_species;
        }
    }
    return percent(hits, frames);
}

ForgettingTable forgetting_breakdown(std::span<const EvalReport> reports, const TaskStream& stream) {
    if (reports.size() != stream.tasks.size()) {
        throw ValidationError("forgetting analysis got " + std::to_string(reports.size()) + " reports for " +
                              std::to_string(stream.tasks.size()) + " tasks");
    }
    if (reports.size() < 2) {
        throw ValidationError("forgetting analysis needs at least two evaluated tasks");
    }
    ForgettingTable table;
    for (std::size_t t = 0; t < stream.tasks.size(); ++t) {
        if (stream.tasks[t].empty()) continue;
        CohortForgetting cf;
        cf.cohort = static_cast<int>(t);
        for (std::size_t e = t; e < reports.size(); ++e) {
            const auto it = reports[e].cohorts.find(cf.cohort);
            if (it == reports[e].cohorts.end()) {
                if (reports[e].cohorts.empty()) {
                    throw ValidationError("report " + std::to_string(e + 1) + " carries no cohort breakdown");
                }
                break;  // no test frames for this cohort
            }
            cf.trajectory.push_back(it->second.img_f());
        }
        if (cf.trajectory.empty()) continue;
        cf.forgetting = *std::max_element(cf.trajectory.begin(), cf.trajectory.end()) - cf.trajectory.back();
        table.cohorts.push_back(std::move(cf));
    }
    if (!table.cohorts.empty()) {
        double sum = 0.0;
        for (const auto& c : table.cohorts) sum += c.forgetting;
        table.mean_forgetting = sum / static_cast<double>(table.cohorts.size());
    }
    return table;
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json j;
    j["img_C"] = one_decimal(img_c);
    j["img_F"] = one_decimal(img_f);
    j["video_C"] = one_decimal(video_c);
    j["video_F"] = one_decimal(video_f);
    j["frames"] = frames;
    j["tracks"] = tracks;
    j["group_confusion"] = group_confusion;
    j["routing_consistent"] = routing_consistent;
    j["cohorts"] = nlohmann::json::array();
    for (const auto& [c, counts] : cohorts) {
        j["cohorts"].push_back({{"cohort", c},
                                {"frames", counts.frames},
                                {"frames_correct_group", counts.frames_correct_group},
                                {"frames_correct_species", counts.frames_correct_species},
                                {"tracks", counts.tracks},
                                {"tracks_correct_species", counts.tracks_correct_species},
                                {"img_F", one_decimal(counts.img_f())},
                                {"video_F", one_decimal(counts.video_f())}});
    }
    return j;
}

std::string format_table(const std::vector<std::pair<std::string, EvalReport>>& rows) {
    std::size_t width = std::string("Method").size();
    for (const auto& [name, r] : rows) width = std::max(width, name.size());
    std::ostringstream out;
    out << std::left << std::setw(static_cast<int>(width)) << "Method" << std::right;
    for (const char* h : {"img_C", "img_F", "video_C", "video_F"}) out << std::setw(9) << h;
    out << '\n';
    out << std::fixed << std::setprecision(1);
    for (const auto& [name, r] : rows) {
        out << std::left << std::setw(static_cast<int>(width)) << name << std::right;
        for (double v : {r.img_c, r.img_f, r.video_c, r.video_f}) out << std::setw(9) << one_decimal(v);
        out << '\n';
    }
    return out.str();
}

}  // namespace hcil
