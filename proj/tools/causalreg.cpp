#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "causalreg/config.hpp"
#include "causalreg/dataset_io.hpp"
#include "causalreg/errors.hpp"
#include "causalreg/experiments.hpp"
#include "causalreg/graph_io.hpp"
#include "causalreg/report.hpp"

namespace fs = std::filesystem;
using namespace causalreg;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

/// Raised for failures that happen after a valid configuration started
/// running (exit 3).
class RuntimeFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PipelineOptions {
    std::string config;
    std::vector<std::string> sets;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string seeds;
    std::optional<std::size_t> trials;
    std::string budget;
    std::string shift;
    std::optional<std::size_t> workers;
    std::string lambdas;
    bool json = false;
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw RuntimeFailure("cannot write " + path.string());
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

/// Config file (sectioned text) or a manifest written by an earlier run.
ConfigValues load_config_or_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(0, "cannot open config file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '{') {
        nlohmann::json manifest;
        try {
            manifest = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(0, path + ": " + e.what());
        }
        if (!manifest.contains("config") || !manifest["config"].is_string()) {
            throw ValidationError(path + ": manifest has no config text");
        }
        std::istringstream cfg(manifest["config"].get<std::string>());
        return parse_config(cfg);
    }
    std::istringstream cfg(text);
    return parse_config(cfg);
}

/// File, then environment, then --set, then dedicated flags.
ConfigValues resolve_config(const PipelineOptions& o, std::string_view shift_key) {
    ConfigValues values = o.config.empty() ? ConfigValues{} : load_config_or_manifest(o.config);
    apply_env_overrides(values, process_env());
    for (const auto& s : o.sets) apply_override(values, s);
    if (o.seed) {
        set_config_value(values, "dataset.seed", std::to_string(*o.seed));
        set_config_value(values, "model.seed", std::to_string(*o.seed));
    }
    if (!o.budget.empty()) {
        set_config_value(values, "sweep.trials", std::to_string(sweep_for_budget(parse_budget(o.budget)).n_trials));
    }
    if (o.trials) set_config_value(values, "sweep.trials", std::to_string(*o.trials));
    if (!o.seeds.empty()) set_config_value(values, "sweep.seeds", o.seeds);
    if (o.workers) set_config_value(values, "sweep.workers", std::to_string(*o.workers));
    if (!o.shift.empty()) set_config_value(values, shift_key, o.shift);
    if (!o.lambdas.empty()) set_config_value(values, "experiment.lambdas", o.lambdas);
    return values;
}

nlohmann::json versions() {
    return {{"causalreg", CAUSALREG_VERSION},
            {"compiler", __VERSION__},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
            {"cli11", CLI11_VERSION}};
}

void write_manifest(const fs::path& dir, std::string_view command, const ConfigValues& values, const RunConfig& run,
                    const std::vector<std::string>& outputs) {
    nlohmann::json seeds = run.sweep.seeds;
    write_json(dir / "manifest.json", {{"command", command},
                                       {"config_hash", config_hash(values)},
                                       {"config", canonical_text(values)},
                                       {"seeds", seeds},
                                       {"dataset_seed", run.train.dataset.seed},
                                       {"train_seed", run.train.seed},
                                       {"replay", "causalreg " + std::string(command) + " --config " +
                                                      (dir / "manifest.json").string() + " --out <dir>"},
                                       {"outputs", outputs},
                                       {"versions", versions()}});
}

fs::path prepare_out(const std::string& out) {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw RuntimeFailure("cannot create output directory " + out + ": " + ec.message());
    return fs::path(out);
}

std::string sweep_summary_csv(const TrainConfig& base, const SweepReport& report) {
    std::ostringstream out;
    out << "shift,method,train_mean,train_se,test_mean,test_se,n_seeds,failed_trials,excluded_seeds\n";
    std::string method;
    for (const auto& ap : base.penalty.cacm) {
        if (!method.empty()) method += ';';
        method += ap.constraint.spec_string();
    }
    if (method.empty()) {
        method = base.penalty.baseline == BaselineKind::None ? "erm" : std::string(to_string(base.penalty.baseline));
    }
    out << to_string(base.dataset.shift) << ",\"" << method << "\"," << fixed(report.train.mean, 6) << ','
        << fixed(report.train.se, 6) << ',' << fixed(report.test.mean, 6) << ',' << fixed(report.test.se, 6) << ','
        << report.test.n << ',' << report.failed_trials << ',' << report.excluded_seeds << '\n';
    return out.str();
}

void append_results(std::ostream& out, const std::vector<TrialResult>& trials) {
    for (const auto& t : trials) out << to_json(t).dump() << '\n';
}

// ---------------------------------------------------------------------------

int cmd_derive(const std::string& file, std::size_t max_cond, bool json) {
    const CausalDag g = load_graph_or_spec(file);
    const ConstraintSet set = derive_constraints(g, max_cond);
    if (json) {
        std::cout << constraint_set_to_json(set).dump(2) << '\n';
        return kExitOk;
    }
    for (const auto& c : set.constraints) {
        bool selected = false;
        for (const auto& [attr, s] : set.selected) selected = selected || s == c;
        std::cout << set.describe(c) << (selected ? " [selected]" : "") << '\n';
    }
    if (set.constraints.empty()) std::cout << "(no constraints)\n";
    return kExitOk;
}

int cmd_dsep(const std::string& file, const std::string& a, const std::string& b, const std::string& given) {
    const CausalDag g = load_graph_or_spec(file);
    std::vector<NodeId> z;
    std::istringstream in(given);
    for (std::string name; std::getline(in, name, ',');) {
        if (!name.empty()) z.push_back(g.id_of(name));
    }
    std::cout << (d_separated(g, g.id_of(a), g.id_of(b), z) ? "d-separated" : "connected") << '\n';
    return kExitOk;
}

int cmd_gen(const PipelineOptions& o) {
    const ConfigValues values = resolve_config(o, "dataset.shift");
    const RunConfig run = build_run_config(values);
    const fs::path dir = prepare_out(o.out);
    export_csv(generate_slab(run.train.dataset), dir / "dataset.csv");
    write_manifest(dir, "gen", values, run, {"dataset.csv"});
    std::cout << "wrote " << (dir / "dataset.csv").string() << '\n';
    return kExitOk;
}

int cmd_train(const PipelineOptions& o) {
    const ConfigValues values = resolve_config(o, "dataset.shift");
    const RunConfig run = build_run_config(values);
    const fs::path dir = prepare_out(o.out);
    MlpParams params;
    const TrialResult r = train(run.train, prepare_data(run.train), &params);

    write_text(dir / "results.jsonl", to_json(r).dump() + "\n");
    write_json(dir / "summary.json", to_json(r, false));
    std::ostringstream csv;
    csv << "split,accuracy,worst_group,count\n";
    for (const auto& [name, m] : {std::pair{"train", &r.train}, std::pair{"val", &r.val}, std::pair{"test", &r.test}}) {
        csv << name << ',' << fixed(m->accuracy, 6) << ',' << fixed(m->worst_group, 6) << ',' << m->count << '\n';
    }
    write_text(dir / "summary.csv", csv.str());
    std::vector<std::string> outputs{"results.jsonl", "summary.json", "summary.csv"};
    if (!r.failed) {
        save_params(params, dir / "model.json");
        outputs.emplace_back("model.json");
    }
    write_manifest(dir, "train", values, run, outputs);

    if (o.json) {
        std::cout << to_json(r, false).dump(2) << '\n';
    } else {
        std::cout << csv.str();
    }
    if (r.failed) {
        std::cerr << "error: training diverged at step " << r.failed_step.value_or(0) << ": " << r.failure << '\n';
        return kExitRuntime;
    }
    return kExitOk;
}

int cmd_sweep(const PipelineOptions& o) {
    const ConfigValues values = resolve_config(o, "dataset.shift");
    const RunConfig run = build_run_config(values);
    const fs::path dir = prepare_out(o.out);
    const SweepReport report = sweep(run.sweep, run.train);

    std::ofstream results(dir / "results.jsonl", std::ios::binary);
    append_results(results, report.trials);
    write_json(dir / "summary.json", summary_json(report));
    write_text(dir / "summary.csv", sweep_summary_csv(run.train, report));
    write_manifest(dir, "sweep", values, run, {"results.jsonl", "summary.json", "summary.csv"});

    std::cout << (o.json ? summary_json(report).dump(2) + "\n" : sweep_summary_csv(run.train, report));
    if (report.excluded_seeds == report.seeds.size()) {
        std::cerr << "error: every trial failed\n";
        return kExitRuntime;
    }
    return kExitOk;
}

int cmd_compare(const PipelineOptions& o) {
    const ConfigValues values = resolve_config(o, "experiment.shifts");
    const RunConfig run = build_run_config(values);
    const fs::path dir = prepare_out(o.out);
    std::vector<ComparisonTable> tables;
    std::ofstream results(dir / "results.jsonl", std::ios::binary);
    for (ShiftType shift : run.experiment.shifts) {
        const RunConfig per_shift = build_run_config(values, shift);
        tables.push_back(compare_constraints(per_shift.train, comparison_constraints(shift), per_shift.experiment.kernel,
                                             per_shift.sweep));
        for (const auto& row : tables.back().rows) append_results(results, row.report.trials);
    }
    write_text(dir / "comparison.md", comparison_markdown(tables));
    write_text(dir / "comparison.csv", comparison_csv(tables));
    write_json(dir / "summary.json", comparison_json(tables));
    write_manifest(dir, "compare", values, run, {"results.jsonl", "comparison.md", "comparison.csv", "summary.json"});
    std::cout << (o.json ? comparison_json(tables).dump(2) + "\n" : comparison_markdown(tables));
    return kExitOk;
}

int cmd_lambda_curve(const PipelineOptions& o) {
    const ConfigValues values = resolve_config(o, "experiment.lambda_shift");
    const RunConfig run = build_run_config(values);
    const RunConfig shifted = build_run_config(values, run.experiment.lambda_shift);
    const fs::path dir = prepare_out(o.out);
    const auto [correct, incorrect] = correct_and_incorrect(run.experiment.lambda_shift);
    const auto points = lambda_sensitivity(shifted.train, correct, incorrect, run.experiment.kernel, run.experiment.lambdas,
                                           shifted.sweep.seeds, shifted.sweep.space.lr, shifted.sweep.workers);
    nlohmann::json j = nlohmann::json::array();
    for (const auto& p : points) {
        j.push_back({{"constraint", p.constraint},
                     {"lambda", p.lambda},
                     {"train", {{"mean", p.train.mean}, {"se", p.train.se}, {"n", p.train.n}}},
                     {"test", {{"mean", p.test.mean}, {"se", p.test.se}, {"n", p.test.n}}},
                     {"failed", p.failed}});
    }
    write_text(dir / "lambda_curve.csv", lambda_csv(points));
    write_json(dir / "summary.json", j);
    write_manifest(dir, "lambda-curve", values, run, {"lambda_curve.csv", "summary.json"});
    std::cout << (o.json ? j.dump(2) + "\n" : lambda_csv(points));
    return kExitOk;
}

int cmd_report(const std::string& file, const std::string& out, bool json) {
    std::ifstream in(file);
    if (!in) throw ParseError(0, "cannot open results file " + file);
    const auto groups = summarize_results(in);
    if (!out.empty()) {
        const fs::path dir = prepare_out(out);
        write_text(dir / "report.md", report_markdown(groups));
        write_text(dir / "report.csv", report_csv(groups));
    }
    if (json) {
        nlohmann::json j = nlohmann::json::array();
        for (const auto& g : groups) {
            j.push_back({{"shift", g.shift},
                         {"method", g.method},
                         {"trials", g.trials},
                         {"failed_trials", g.failed_trials},
                         {"excluded_seeds", g.excluded_seeds},
                         {"train", {{"mean", g.train.mean}, {"se", g.train.se}, {"n", g.train.n}}},
                         {"test", {{"mean", g.test.mean}, {"se", g.test.se}, {"n", g.test.n}}}});
        }
        std::cout << j.dump(2) << '\n';
    } else {
        std::cout << report_markdown(groups);
    }
    return kExitOk;
}

void add_config_flags(CLI::App* cmd, PipelineOptions& o) {
    cmd->add_option("--config", o.config, "Config file, or a manifest.json from an earlier run (replay)");
    cmd->add_option("--set", o.sets, "Override a config key: section.key=value (repeatable)");
    cmd->add_option("--out", o.out, "Output directory")->required();
    cmd->add_option("--workers", o.workers, "Parallel trial workers (0 = all cores)");
    cmd->add_flag("--json", o.json, "Print JSON instead of a table");
}

void add_sweep_flags(CLI::App* cmd, PipelineOptions& o) {
    cmd->add_option("--seeds", o.seeds, "Comma-separated seed list (sweep.seeds)");
    cmd->add_option("--trials", o.trials, "Random-search trials per seed (sweep.trials)");
    cmd->add_option("--budget", o.budget, "full = 20 trials, reduced = 10 trials")
        ->check(CLI::IsMember({"full", "reduced"}));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Graph-derived invariance constraints for domain generalization on synthetic slab data.\n"
                 "Exit codes: 0 ok, 2 configuration or input error, 3 runtime or numeric failure.\n"
                 "Every config key can be set through CAUSALREG_<SECTION>_<KEY>, e.g. CAUSALREG_MODEL_LR=0.01."};
    app.set_version_flag("--version", CAUSALREG_VERSION);
    app.require_subcommand(1);

    std::string file, a, b, given;
    std::size_t max_cond = kDefaultMaxCondSize;
    bool json = false;
    auto* derive = app.add_subcommand("derive", "Derive independence constraints from a graph or shift spec");
    derive->add_option("file", file, "Graph file or shift spec")->required();
    derive->add_option("--max-cond-size", max_cond, "Largest conditioning set to test");
    derive->add_flag("--json", json, "Print JSON");

    auto* dsep = app.add_subcommand("dsep", "Test d-separation in a graph");
    dsep->add_option("file", file, "Graph file or shift spec")->required();
    dsep->add_option("--a", a, "First node")->required();
    dsep->add_option("--b", b, "Second node")->required();
    dsep->add_option("--given", given, "Comma-separated conditioning nodes");

    PipelineOptions o;
    auto* gen = app.add_subcommand("gen", "Generate a slab dataset as CSV");
    add_config_flags(gen, o);
    gen->add_option("--seed", o.seed, "Dataset and training seed");
    gen->add_option("--shift", o.shift, "causal | confounded | selected");

    auto* trn = app.add_subcommand("train", "Train one model");
    add_config_flags(trn, o);
    trn->add_option("--seed", o.seed, "Dataset and training seed");
    trn->add_option("--shift", o.shift, "causal | confounded | selected");

    auto* swp = app.add_subcommand("sweep", "Random hyperparameter search with model selection");
    add_config_flags(swp, o);
    add_sweep_flags(swp, o);
    swp->add_option("--shift", o.shift, "causal | confounded | selected");

    auto* cmp = app.add_subcommand("compare", "Compare the (Y,E)- and E-conditioned constraints per shift");
    add_config_flags(cmp, o);
    add_sweep_flags(cmp, o);
    cmp->add_option("--shift", o.shift, "Comma-separated shifts (experiment.shifts)");

    auto* lam = app.add_subcommand("lambda-curve", "Test accuracy against a fixed penalty weight");
    add_config_flags(lam, o);
    lam->add_option("--seeds", o.seeds, "Comma-separated seed list (sweep.seeds)");
    lam->add_option("--shift", o.shift, "causal | confounded | selected (experiment.lambda_shift)");
    lam->add_option("--lambdas", o.lambdas, "Comma-separated penalty weights (experiment.lambdas)");

    std::string report_out;
    auto* rep = app.add_subcommand("report", "Aggregate a results.jsonl file");
    rep->add_option("file", file, "results.jsonl")->required();
    rep->add_option("--out", report_out, "Also write report.md and report.csv here");
    rep->add_flag("--json", json, "Print JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (derive->parsed()) return cmd_derive(file, max_cond, json);
        if (dsep->parsed()) return cmd_dsep(file, a, b, given);
        if (gen->parsed()) return cmd_gen(o);
        if (trn->parsed()) return cmd_train(o);
        if (swp->parsed()) return cmd_sweep(o);
        if (cmp->parsed()) return cmd_compare(o);
        if (lam->parsed()) return cmd_lambda_curve(o);
        if (rep->parsed()) return cmd_report(file, report_out, json);
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const LookupError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitConfig;
}
