#include "hcil/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "hcil/cil_memory.hpp"
#include "hcil/error.hpp"
#include "hcil/eval.hpp"
#include "hcil/feature_store.hpp"
#include "hcil/hierarchy.hpp"
#include "hcil/log.hpp"
#include "hcil/synth.hpp"
#include "hcil/trainer.hpp"

namespace fs = std::filesystem;

namespace hcil {

namespace {

// Every key a config file may carry; the union of all subcommand flags.
const std::set<std::string> kConfigKeys = {
    "seed",      "out",         "preset",       "csv",          "input",         "num-tasks",
    "single",    "test",        "hard-budget",  "exemplar-budget", "svm-c",      "svm-tol",
    "svm-max-iter", "model",    "report-timing", "full",        "verbose"};

struct CommonArgs {
    std::uint64_t seed = 0;
    std::string config;
    std::string out = ".";
    bool verbose = false;
};

void add_common(CLI::App& cmd, CommonArgs& common) {
    cmd.add_option("--seed", common.seed, "Random seed");
    cmd.add_option("--config", common.config, "Plain-text key=value file; flags override it");
    cmd.add_option("--out", common.out, "Output directory");
    cmd.add_flag("--verbose", common.verbose, "Log progress to stderr");
}

// Fills options the user did not pass on the command line from the config
// file named by --config.
void apply_config(CLI::App& cmd, const CommonArgs& common) {
    if (common.config.empty()) return;
    for (const auto& [key, value] : read_key_values(common.config)) {
        if (!kConfigKeys.contains(key)) {
            throw ParseError("unknown config key '" + key + "' in " + common.config);
        }
        CLI::Option* opt = cmd.get_option_no_throw("--" + key);
        if (opt == nullptr || opt->count() > 0) continue;
        opt->add_result(value);
        opt->run_callback();
    }
}

std::string path_or(const std::string& given, const fs::path& fallback) {
    return given.empty() ? fallback.string() : given;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
}

std::string one_line(std::string s) {
    for (auto& ch : s) {
        if (ch == '\n' || ch == '\r') ch = ' ';
    }
    return s;
}

struct TrainArgs {
    std::string input;
    std::size_t num_tasks = 3;
    bool single = false;
    std::string test;
    std::string model;
    std::size_t hard_budget = 200;
    std::size_t exemplar_budget = 1800;
    double svm_c = 1.0;
    double svm_tol = 1e-6;
    int svm_max_iter = 10000;
    bool report_timing = false;
};

void add_train_options(CLI::App& cmd, TrainArgs& a, bool incremental) {
    cmd.add_option("--input", a.input, "Stream manifest (.json) or feature file (.feat)")
        ->default_str("<out>/stream.json");
    auto* tasks = cmd.add_option("--num-tasks", a.num_tasks, "Split a feature-file input into this many tasks");
    auto* single = cmd.add_flag("--single", a.single, "Train the whole input as one task");
    tasks->excludes(single);
    cmd.add_option("--test", a.test, "Held-out feature file evaluated after every task")
        ->default_str("<out>/test.feat if present");
    cmd.add_option("--model", a.model, "Model output path")
        ->default_str(incremental ? "<out>/model.json" : "<out>/joint_model.json");
    if (incremental) {
        cmd.add_option("--hard-budget", a.hard_budget, "Total hard-case budget n");
        cmd.add_option("--exemplar-budget", a.exemplar_budget, "Total exemplar budget m");
    }
    cmd.add_option("--svm-c", a.svm_c, "SVM regularization C")->check(CLI::PositiveNumber);
    cmd.add_option("--svm-tol", a.svm_tol, "SVM duality-gap tolerance")->check(CLI::PositiveNumber);
    cmd.add_option("--svm-max-iter", a.svm_max_iter, "SVM epoch limit")->check(CLI::PositiveNumber);
    if (incremental) {
        cmd.add_flag("--report-timing", a.report_timing, "Include wall-clock timings in the report file");
    }
}

TaskStream load_training_stream(const TrainArgs& a, const CommonArgs& common, bool num_tasks_given) {
    if (a.single && num_tasks_given) {
        throw UsageError("--num-tasks and --single are mutually exclusive");
    }
    const fs::path input = path_or(a.input, fs::path(common.out) / "stream.json");
    TaskStream stream;
    if (input.extension() == ".json") {
        if (num_tasks_given) {
            throw UsageError("--num-tasks applies to a feature-file input; the stream manifest is already split");
        }
        stream = load_stream(input);
    } else {
        const auto dataset = load_binary(input);
        if (a.single) {
            stream.taxonomy = dataset.taxonomy_ptr();
            stream.tasks.push_back(dataset);
        } else {
            stream = partition_tasks(dataset, a.num_tasks, common.seed);
        }
    }
    if (a.single && stream.tasks.size() > 1) {
        TaskStream joint;
        joint.taxonomy = stream.taxonomy;
        joint.tasks.push_back(stream.concatenated());
        stream = std::move(joint);
    }
    return stream;
}

std::optional<Dataset> load_test(const std::string& given, const CommonArgs& common,
                                 const std::shared_ptr<const Taxonomy>& taxonomy) {
    if (!given.empty()) return load_binary(given, taxonomy);
    const fs::path fallback = fs::path(common.out) / "test.feat";
    if (fs::exists(fallback)) return load_binary(fallback, taxonomy);
    return std::nullopt;
}

TrainConfig make_config(const TrainArgs& a, const CommonArgs& common) {
    TrainConfig cfg;
    cfg.hard_budget = a.hard_budget;
    cfg.exemplar_budget = a.exemplar_budget;
    cfg.svm.c = a.svm_c;
    cfg.svm.tol = a.svm_tol;
    cfg.svm.max_iter = a.svm_max_iter;
    cfg.svm.seed = common.seed;
    cfg.seed = common.seed;
    cfg.num_tasks = a.num_tasks;
    cfg.out_dir = common.out;
    cfg.validate();
    return cfg;
}

std::string task_table(const TrainReport& report) {
    std::vector<std::pair<std::string, EvalReport>> rows;
    for (const auto& t : report.tasks) {
        if (t.eval) rows.emplace_back("after task " + std::to_string(t.task), *t.eval);
    }
    std::ostringstream out;
    if (!rows.empty()) out << format_table(rows);
    if (report.forgetting) {
        out << std::fixed << std::setprecision(1);
        for (const auto& c : report.forgetting->cohorts) {
            out << "cohort " << c.cohort + 1 << " forgetting " << c.forgetting << '\n';
        }
        out << "mean forgetting " << report.forgetting->mean_forgetting << '\n';
    }
    return out.str();
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Hierarchical class-incremental SVM engine over precomputed feature vectors", "hcil"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);

    // gen
    CommonArgs gen_common;
    std::string preset = "paper-shape";
    bool gen_csv = false;
    auto* gen = app.add_subcommand("gen", "Generate a synthetic hierarchical dataset");
    gen->add_option("--preset", preset, "Dataset shape: paper-shape or small");
    gen->add_flag("--csv", gen_csv, "Also write CSV twins of the feature files");
    add_common(*gen, gen_common);

    // split
    CommonArgs split_common;
    std::string split_input;
    std::size_t split_tasks = 3;
    auto* split = app.add_subcommand("split", "Partition a feature file into class-disjoint tasks");
    split->add_option("--input", split_input, "Feature file to split")->default_str("<out>/train.feat");
    split->add_option("--num-tasks", split_tasks, "Number of tasks")->check(CLI::PositiveNumber);
    add_common(*split, split_common);

    // train
    CommonArgs train_common;
    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "Run the incremental protocol over a task stream");
    add_train_options(*train, train_args, true);
    add_common(*train, train_common);

    // joint-train
    CommonArgs joint_common;
    TrainArgs joint_args;
    auto* joint = app.add_subcommand("joint-train", "Train once on all tasks together (upper-bound comparator)");
    add_train_options(*joint, joint_args, false);
    add_common(*joint, joint_common);

    // eval
    CommonArgs eval_common;
    std::string eval_model;
    std::string eval_test;
    auto* eval = app.add_subcommand("eval", "Evaluate a model on a labeled feature file");
    eval->add_option("--model", eval_model, "Model file")->default_str("<out>/model.json");
    eval->add_option("--test", eval_test, "Labeled feature file")->default_str("<out>/test.feat");
    add_common(*eval, eval_common);

    // predict
    CommonArgs predict_common;
    std::string predict_model;
    std::string predict_input;
    auto* predict = app.add_subcommand("predict", "Predict group and species per fish track");
    predict->add_option("--model", predict_model, "Model file")->default_str("<out>/model.json");
    predict->add_option("--input", predict_input, "Feature file; tracks are grouped by fish_id")->required();
    add_common(*predict, predict_common);

    // inspect-memory
    CommonArgs inspect_common;
    std::string inspect_input;
    bool inspect_full = false;
    auto* inspect = app.add_subcommand("inspect-memory", "Summarize a memory snapshot");
    inspect->add_option("--input", inspect_input, "Memory snapshot")->default_str("<out>/memory.json");
    inspect->add_flag("--full", inspect_full, "Dump the whole snapshot as JSON");
    add_common(*inspect, inspect_common);

    try {
        try {
            app.parse(argc, argv);
        } catch (const CLI::CallForHelp&) {
            out << app.help();
            return 0;
        } catch (const CLI::CallForAllHelp&) {
            out << app.help("", CLI::AppFormatMode::All);
            return 0;
        } catch (const CLI::ParseError& e) {
            if (e.get_exit_code() == 0) {
                out << app.help();
                return 0;
            }
            throw UsageError(e.what());
        }

        CLI::App* active = app.get_subcommands().front();
        for (auto* common : {&gen_common, &split_common, &train_common, &joint_common, &eval_common,
                             &predict_common, &inspect_common}) {
            if (common->verbose) logger().set_level(spdlog::level::info);
        }

        if (active == gen) {
            apply_config(*gen, gen_common);
            const auto result = generate(SynthSpec::preset(preset, gen_common.seed));
            const fs::path dir = gen_common.out;
            fs::create_directories(dir);
            result.taxonomy->save(dir / "taxonomy.json");
            save_binary(result.train, dir / "train.feat");
            if (!result.test.empty()) save_binary(result.test, dir / "test.feat");
            if (gen_csv) {
                save_csv(result.train, dir / "train.csv");
                if (!result.test.empty()) save_csv(result.test, dir / "test.csv");
            }
            out << "wrote " << result.train.size() << " training and " << result.test.size()
                << " test records (" << result.taxonomy->group_count() << " groups, "
                << result.taxonomy->species_count() << " species, d=" << result.train.dimension() << ") to "
                << dir.string() << '\n';
        } else if (active == split) {
            apply_config(*split, split_common);
            const fs::path input = path_or(split_input, fs::path(split_common.out) / "train.feat");
            const auto stream = partition_tasks(load_binary(input), split_tasks, split_common.seed);
            save_stream(stream, split_common.out);
            for (std::size_t t = 0; t < stream.tasks.size(); ++t) {
                out << "task " << t + 1 << ": " << stream.tasks[t].size() << " records, "
                    << stream.tasks[t].species().size() << " species\n";
            }
        } else if (active == train || active == joint) {
            const bool is_joint = active == joint;
            CommonArgs& common = is_joint ? joint_common : train_common;
            TrainArgs& args = is_joint ? joint_args : train_args;
            apply_config(*active, common);
            const bool num_tasks_given = active->get_option("--num-tasks")->count() > 0;
            auto stream = load_training_stream(args, common, num_tasks_given);
            const auto cfg = make_config(args, common);
            const auto test = load_test(args.test, common, stream.taxonomy);
            const fs::path dir = common.out;
            fs::create_directories(dir);

            if (is_joint) {
                const auto model = run_joint_oracle(stream, cfg);
                model.save(path_or(args.model, dir / "joint_model.json"));
                if (test) {
                    const auto report = evaluate(model, *test);
                    write_text(dir / "joint_report.json", report.to_json().dump(1) + "\n");
                    out << format_table({{"joint", report}});
                }
            } else {
                RunHooks hooks;
                hooks.test = test ? &*test : nullptr;
                const auto result = run_stream(stream, cfg, hooks);
                result.model.save(path_or(args.model, dir / "model.json"));
                result.memory.save(dir / "memory.json");
                write_text(dir / "report.json", result.report.to_json(args.report_timing).dump(1) + "\n");
                const auto table = task_table(result.report);
                write_text(dir / "report.txt", table);
                out << table;
                out << "model covers " << result.model.seen_species().size() << " species with "
                    << result.model.active_svms().size() << " SVMs; memory holds "
                    << result.memory.hard_case_count() << " hard cases and " << result.memory.exemplar_count()
                    << " exemplars\n";
            }
        } else if (active == eval) {
            apply_config(*eval, eval_common);
            const auto model = HierarchicalModel::load(path_or(eval_model, fs::path(eval_common.out) / "model.json"));
            const auto test = load_binary(path_or(eval_test, fs::path(eval_common.out) / "test.feat"),
                                          model.taxonomy_ptr());
            const auto report = evaluate(model, test);
            const auto table = format_table({{"HCIL", report}});
            out << table;
            if (eval->get_option("--out")->count() > 0) {
                write_text(fs::path(eval_common.out) / "eval.json", report.to_json().dump(1) + "\n");
            }
        } else if (active == predict) {
            apply_config(*predict, predict_common);
            const auto model =
                HierarchicalModel::load(path_or(predict_model, fs::path(predict_common.out) / "model.json"));
            const auto data = load_binary(predict_input, model.taxonomy_ptr());
            std::map<std::uint64_t, std::vector<std::vector<float>>> tracks;
            for (const auto& r : data.records()) tracks[r.fish_id].push_back(r.feature);
            std::ostringstream lines;
            lines << std::setprecision(6) << std::fixed;
            for (const auto& [fish, frames] : tracks) {
                const auto p = model.predict_video(frames);
                lines << "fish_id=" << fish << " frames=" << frames.size() << " group=" << p.group_id
                      << " group_name=" << model.taxonomy().groups()[p.group_id].name
                      << " group_confidence=" << p.group_confidence << " species=" << p.species_id
                      << " species_name=" << model.taxonomy().species()[p.species_id].name
                      << " species_confidence=" << p.species_confidence << '\n';
            }
            out << lines.str();
            if (predict->get_option("--out")->count() > 0) {
                fs::create_directories(predict_common.out);
                write_text(fs::path(predict_common.out) / "predictions.txt", lines.str());
            }
        } else if (active == inspect) {
            apply_config(*inspect, inspect_common);
            const auto store = MemoryStore::load(path_or(inspect_input, fs::path(inspect_common.out) / "memory.json"));
            if (inspect_full) {
                out << store.to_json().dump(1) << '\n';
            } else {
                out << "hard cases " << store.hard_case_count() << " / " << store.hard_budget() << '\n';
                out << "exemplars " << store.exemplar_count() << " / " << store.exemplar_budget() << '\n';
                std::map<SvmIdentity, std::size_t> per_svm;
                for (const auto& h : store.hard_cases()) ++per_svm[h.svm];
                for (const auto& [id, quota] : store.hard_quotas()) {
                    out << "svm " << id.to_string() << " quota " << quota << " held " << per_svm[id] << '\n';
                }
                for (const auto& [s, quota] : store.exemplar_quotas()) {
                    const auto it = store.exemplars().find(s);
                    const std::size_t held = it == store.exemplars().end() ? 0 : it->second.exemplars.size();
                    out << "species " << s << " quota " << quota << " held " << held << '\n';
                }
            }
        }
        return 0;
    } catch (const Error& e) {
        err << "error: " << error_code_name(e.code()) << ": " << one_line(e.what()) << '\n';
        return e.code() == ErrorCode::usage ? 2 : 1;
    } catch (const CLI::Error& e) {
        err << "error: E_USAGE: " << one_line(e.what()) << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: E_INTERNAL: " << one_line(e.what()) << '\n';
        return 1;
    }
}

}  // namespace hcil
