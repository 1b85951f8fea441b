// rulehte command-line tool: simulate, fit, predict, inspect, tune, evaluate, benchmark.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rulehte/rulehte.hpp"

namespace {

using namespace rulehte;

struct DataFlags {
    std::string data;
    std::string outcome = "y";
    std::string treatment = "t";
    std::optional<double> pscore;
    std::optional<std::string> pscore_col;
    std::optional<std::string> truth_col;
};

struct FitFlags {
    std::size_t trees = 333;
    double mean_depth = 2.0;
    double shrinkage = 0.01;
    std::optional<double> subsample;
    std::size_t min_leaf = 10;
    double winsor_q = 0.025;
    std::size_t folds = 10;
    std::size_t repeats = 1;
    std::size_t lambda_path = 100;
    double lambda_min_ratio = 1e-3;
    std::uint64_t seed = 0;
    std::size_t threads = 1;

    FitConfig config() const {
        FitConfig c;
        c.gbt.trees = trees;
        c.gbt.mean_terminal = mean_depth;
        c.gbt.shrinkage = shrinkage;
        c.gbt.subsample = subsample;
        c.gbt.min_leaf = min_leaf;
        c.winsor_q = winsor_q;
        c.solver.cv_folds = folds;
        c.solver.cv_repeats = repeats;
        c.solver.path_length = lambda_path;
        c.solver.path_min_ratio = lambda_min_ratio;
        c.solver.threads = threads;
        c.seed = seed;
        return c;
    }
};

void add_data_flags(CLI::App* cmd, DataFlags& d, bool need_pscore) {
    cmd->add_option("--data", d.data, "input CSV")->required()->check(CLI::ExistingFile);
    cmd->add_option("--outcome", d.outcome, "outcome column")->capture_default_str();
    cmd->add_option("--treatment", d.treatment, "treatment column (0/1)")->capture_default_str();
    const CLI::Validator open_unit(
        [](std::string& s) -> std::string {
            double v = 0.0;
            if (!CLI::detail::lexical_cast(s, v) || !(v > 0.0 && v < 1.0)) return "must lie strictly inside (0,1)";
            return {};
        },
        "in (0,1)");
    auto* ps = cmd->add_option("--pscore", d.pscore, "constant propensity score")->check(open_unit);
    auto* col = cmd->add_option("--pscore-col", d.pscore_col, "column holding propensity scores");
    ps->excludes(col);
    if (need_pscore) cmd->callback([ps, col] {
            if (ps->count() == 0 && col->count() == 0)
                throw CLI::RequiredError("one of --pscore or --pscore-col");
        });
    cmd->add_option("--truth-col", d.truth_col,
                    "column holding the true effect; excluded from covariates (default: true_tau when present)");
}

void add_fit_flags(CLI::App* cmd, FitFlags& f) {
    cmd->add_option("--trees", f.trees, "number of boosted trees")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--mean-depth", f.mean_depth, "mean number of terminal nodes per tree (>= 2)")
        ->check(CLI::Range(2.0, 1e6))
        ->capture_default_str();
    cmd->add_option("--shrinkage", f.shrinkage, "learning rate in (0,1]")
        ->check(CLI::Range(1e-12, 1.0))
        ->capture_default_str();
    cmd->add_option("--subsample", f.subsample, "rows per tree: fraction when <= 1, count otherwise")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--min-leaf", f.min_leaf, "minimum rows per leaf")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--winsor-q", f.winsor_q, "winsorizing quantile for linear terms")
        ->check(CLI::Range(0.0, 0.499999))
        ->capture_default_str();
    cmd->add_option("--folds", f.folds, "cross-validation folds")->check(CLI::Range(2, 1000000))->capture_default_str();
    cmd->add_option("--repeats", f.repeats, "cross-validation repeats")->check(CLI::PositiveNumber)->capture_default_str();
    cmd->add_option("--lambda-path", f.lambda_path, "number of lambda values")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    cmd->add_option("--lambda-min-ratio", f.lambda_min_ratio, "smallest lambda as a fraction of lambda_max")
        ->check(CLI::Range(1e-12, 0.999999))
        ->capture_default_str();
    cmd->add_option("--seed", f.seed, "random seed")->capture_default_str();
    cmd->add_option("--threads", f.threads, "worker threads")->check(CLI::PositiveNumber)->capture_default_str();
}

// The simulate output carries pscore and true_tau columns; neither should turn into a covariate.
Dataset load_data(const DataFlags& d) {
    const auto header = read_csv_header(d.data);
    auto has = [&](const std::string& name) { return std::find(header.begin(), header.end(), name) != header.end(); };
    ColumnSpec spec;
    spec.outcome_column = d.outcome;
    spec.treatment_column = d.treatment;
    if (d.pscore_col) spec.pscore_column = *d.pscore_col;
    else if (has("pscore") && d.outcome != "pscore" && d.treatment != "pscore") spec.ignored.push_back("pscore");
    if (d.truth_col) spec.truth_column = *d.truth_col;
    else if (has("true_tau")) spec.truth_column = "true_tau";
    return load_csv(d.data, spec);
}

PropensitySource propensity(const DataFlags& d) {
    return d.pscore ? PropensitySource::constant(*d.pscore) : PropensitySource::column();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw IoError("write to '" + path + "' failed");
}

std::string csv_text(const NamedColumns& cols) {
    std::ostringstream out;
    for (std::size_t j = 0; j < cols.size(); ++j) out << (j ? "," : "") << cols[j].first;
    out << '\n';
    const std::size_t n = cols.empty() ? 0 : cols.front().second.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < cols.size(); ++j) out << (j ? "," : "") << format_real(cols[j].second[i]);
        out << '\n';
    }
    return out.str();
}

std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

// CLI11 only honours config files on the top-level app, so --config is expanded
// here: each key becomes a flag appended to the command line unless given there.
std::vector<std::string> expand_config(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::string path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            path = args[i + 1];
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
            break;
        }
    }
    if (path.empty()) return args;
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    const auto items = CLI::ConfigTOML().from_config(in);
    auto given = [&](const std::string& flag) {
        return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
            return a == flag || a.rfind(flag + "=", 0) == 0;
        });
    };
    auto in_args = [&](const std::string& word) { return std::find(args.begin(), args.end(), word) != args.end(); };
    std::vector<std::string> extra;
    for (const auto& item : items) {
        if (item.name == "++" || item.name == "--") continue;
        if (item.parents.size() > 1 || (item.parents.size() == 1 && !in_args(item.parents.front()))) continue;
        const std::string flag = "--" + item.name;
        if (given(flag)) continue;
        if (item.inputs.size() == 1 && item.inputs.front() == "false") continue;
        extra.push_back(flag);
        if (item.inputs.size() == 1 && item.inputs.front() == "true") continue;
        extra.insert(extra.end(), item.inputs.begin(), item.inputs.end());
    }
    args.insert(args.end(), extra.begin(), extra.end());
    return args;
}

int run(int argc, char** argv) {
    CLI::App app{"Heterogeneous treatment effects with causal rule ensembles"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "expand help for every subcommand");
    std::string config_path;  // consumed by expand_config

    // simulate
    auto* sim_cmd = app.add_subcommand("simulate", "draw a simulated dataset");
    int scenario = 1;
    std::size_t sim_n = 600, sim_p = 50;
    std::string design = "rct", out;
    std::uint64_t sim_seed = 0;
    sim_cmd->add_option("--scenario", scenario, "scenario 1..12")->check(CLI::Range(1, 12))->capture_default_str();
    sim_cmd->add_option("--n", sim_n, "rows")->check(CLI::PositiveNumber)->capture_default_str();
    sim_cmd->add_option("--p", sim_p, "covariates (>= 5)")->check(CLI::Range(5, 1000000))->capture_default_str();
    sim_cmd->add_option("--design", design, "rct or obs")
        ->check(CLI::IsMember({"rct", "obs", "observational"}))
        ->capture_default_str();
    sim_cmd->add_option("--seed", sim_seed, "random seed")->capture_default_str();
    sim_cmd->add_option("--out", out, "output CSV")->required();
    sim_cmd->add_option("--config", config_path, "TOML file of flag values; explicit flags win");

    // fit
    auto* fit_cmd = app.add_subcommand("fit", "fit a model and write it as JSON");
    DataFlags fit_data;
    FitFlags fit_flags;
    std::string model_path;
    add_data_flags(fit_cmd, fit_data, true);
    add_fit_flags(fit_cmd, fit_flags);
    fit_cmd->add_option("--model", model_path, "output model JSON")->required();
    fit_cmd->add_option("--config", config_path, "TOML file of flag values; explicit flags win");

    // predict
    auto* pred_cmd = app.add_subcommand("predict", "predict treatment effects");
    std::string pred_model, pred_data, pred_out;
    bool both_arms = false;
    pred_cmd->add_option("--model", pred_model, "model JSON")->required()->check(CLI::ExistingFile);
    pred_cmd->add_option("--data", pred_data, "CSV with the model's feature columns")
        ->required()
        ->check(CLI::ExistingFile);
    pred_cmd->add_option("--out", pred_out, "output CSV (default: standard output)");
    pred_cmd->add_flag("--both-arms", both_arms, "also write F(x,0) and F(x,1)");
    pred_cmd->add_option("--config", config_path, "TOML file of flag values; explicit flags win");

    // inspect
    auto* insp_cmd = app.add_subcommand("inspect", "rank model terms by importance");
    std::string insp_model, insp_out;
    std::optional<std::size_t> top;
    double min_support = 0.1;
    bool all = false;
    insp_cmd->add_option("--model", insp_model, "model JSON")->required()->check(CLI::ExistingFile);
    insp_cmd->add_option("--top", top, "keep the k most important rows");
    insp_cmd->add_option("--min-support", min_support, "keep rows with support above this")
        ->check(CLI::Range(-1.0, 1.0))
        ->capture_default_str();
    insp_cmd->add_flag("--all", all, "every nonzero term, no filters");
    insp_cmd->add_option("--out", insp_out, "also write the table as CSV");
    insp_cmd->add_option("--config", config_path, "TOML file of flag values; explicit flags win");

    // tune
    auto* tune_cmd = app.add_subcommand("tune", "cross-validate the boosting grid");
    DataFlags tune_data;
    TuneGrid grid;
    std::size_t tune_folds = 10, tune_repeats = 30, tune_threads = 1;
    std::uint64_t tune_seed = 0;
    std::size_t tune_min_leaf = 10, tune_path = 100;
    double tune_winsor = 0.025, tune_ratio = 1e-3;
    std::string tune_out;
    add_data_flags(tune_cmd, tune_data, true);
    tune_cmd->add_option("--trees", grid.trees, "grid of tree counts")->delimiter(',')->check(CLI::PositiveNumber);
    tune_cmd->add_option("--mean-depth", grid.mean_terminal, "grid of mean terminal counts")
        ->delimiter(',')
        ->check(CLI::Range(2.0, 1e6));
    tune_cmd->add_option("--subsample", grid.subsample, "grid of subsample fractions or counts")
        ->delimiter(',')
        ->check(CLI::PositiveNumber);
    tune_cmd->add_option("--shrinkage", grid.shrinkage, "grid of learning rates")
        ->delimiter(',')
        ->check(CLI::Range(1e-12, 1.0));
    tune_cmd->add_option("--min-leaf", tune_min_leaf, "minimum rows per leaf")->check(CLI::PositiveNumber);
    tune_cmd->add_option("--winsor-q", tune_winsor, "winsorizing quantile")->check(CLI::Range(0.0, 0.499999));
    tune_cmd->add_option("--lambda-path", tune_path, "number of lambda values")->check(CLI::PositiveNumber);
    tune_cmd->add_option("--lambda-min-ratio", tune_ratio, "smallest lambda ratio")->check(CLI::Range(1e-12, 0.999999));
    tune_cmd->add_option("--folds", tune_folds, "folds")->check(CLI::Range(2, 1000000))->capture_default_str();
    tune_cmd->add_option("--repeats", tune_repeats, "repeats")->check(CLI::PositiveNumber)->capture_default_str();
    tune_cmd->add_option("--seed", tune_seed, "random seed")->capture_default_str();
    tune_cmd->add_option("--threads", tune_threads, "worker threads")->check(CLI::PositiveNumber);
    tune_cmd->add_option("--out", tune_out, "CSV of the full grid");
    tune_cmd->add_option("--config", config_path, "TOML file of flag values; explicit flags win");

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "mean squared error between two columns");
    std::vector<std::string> eval_files;
    std::string truth_col = "true_tau", pred_col = "tau_hat";
    eval_cmd->add_option("--data", eval_files, "CSV holding both columns, or truth file then prediction file")
        ->required()
        ->expected(1, 2)
        ->check(CLI::ExistingFile);
    eval_cmd->add_option("--truth-col", truth_col, "true effect column")->capture_default_str();
    eval_cmd->add_option("--pred-col", pred_col, "estimated effect column")->capture_default_str();
    eval_cmd->add_option("--config", config_path, "TOML file of flag values; explicit flags win");

    // benchmark
    auto* bench_cmd = app.add_subcommand("benchmark", "repeated train/test simulation of one scenario");
    int b_scenario = 1;
    std::size_t b_n = 600, b_p = 50, replications = 10;
    std::string b_design = "rct", b_out;
    FitFlags b_fit;
    bench_cmd->add_option("--scenario", b_scenario, "scenario 1..12")->check(CLI::Range(1, 12));
    bench_cmd->add_option("--n", b_n, "rows per draw")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--p", b_p, "covariates")->check(CLI::Range(5, 1000000));
    bench_cmd->add_option("--design", b_design, "rct or obs")->check(CLI::IsMember({"rct", "obs", "observational"}));
    bench_cmd->add_option("--replications", replications, "replications")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--out", b_out, "per-replication CSV");
    add_fit_flags(bench_cmd, b_fit);
    bench_cmd->add_option("--config", config_path, "TOML file of flag values; explicit flags win");

    auto args = expand_config(argc, argv);
    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    if (sim_cmd->parsed()) {
        sim::ScenarioSpec spec;
        spec.scenario = scenario;
        spec.design = sim::parse_design(design);
        spec.n = sim_n;
        spec.p = sim_p;
        spec.seed = sim_seed;
        write_csv(out, sim::to_columns(sim::gen_scenario(spec)));
        return 0;
    }

    if (fit_cmd->parsed()) {
        const auto ds = load_data(fit_data);
        const auto report = fit_detailed(ds, propensity(fit_data), fit_flags.config());
        save_model(report.model, model_path);
        std::cout << "n " << ds.size() << "\n"
                  << "p " << ds.features() << "\n"
                  << "rules_generated " << report.rules_generated << "\n"
                  << "rules_screened " << report.rules_screened << "\n"
                  << "rules_selected " << report.model.rules.size() << "\n"
                  << "linear_selected " << report.model.linear.size() << "\n"
                  << "lambda " << format_real(report.model.meta.lambda) << "\n"
                  << "cv_error " << format_real(report.cv_error_selected()) << "\n";
        return 0;
    }

    if (pred_cmd->parsed()) {
        const auto model = load_model(pred_model);
        const auto table = read_csv_table(pred_data);
        std::vector<std::size_t> cols;
        for (const auto& name : model.feature_names) cols.push_back(table.require(name));
        const std::size_t n = table.rows();
        std::vector<double> tau(n), f0(n), f1(n), row(cols.size());
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < cols.size(); ++k) row[k] = table.columns[cols[k]][i];
            tau[i] = model.predict_hte(row);
            if (both_arms) {
                f0[i] = model.predict_outcome(row, 0);
                f1[i] = model.predict_outcome(row, 1);
            }
        }
        NamedColumns result{{"tau_hat", tau}};
        if (both_arms) {
            result.emplace_back("f0", f0);
            result.emplace_back("f1", f1);
        }
        if (pred_out.empty()) std::cout << csv_text(result);
        else write_csv(pred_out, result);
        return 0;
    }

    if (insp_cmd->parsed()) {
        const auto model = load_model(insp_model);
        const auto full = importance(model);
        auto filter = all ? ReportFilter::everything() : ReportFilter{true, min_support, std::nullopt};
        if (top) filter.top = top;
        const auto rep = filter_report(full, filter);
        std::cout << "intercept " << fixed(model.intercept, 6) << "\n";
        std::cout << "importance\tcoefficient\tsupport\tterm\n";
        for (const auto& r : rep.rows)
            std::cout << fixed(r.importance, 6) << "\t" << fixed(r.coefficient, 6) << "\t" << fixed(r.support, 4)
                      << "\t" << r.description << "\n";
        if (!insp_out.empty()) {
            std::string csv = "kind,term,coefficient,importance,support\n";
            for (const auto& r : rep.rows)
                csv += std::string(r.kind == TermKind::rule ? "rule" : "linear") + "," + quote(r.description) + "," +
                       format_real(r.coefficient) + "," + format_real(r.importance) + "," + format_real(r.support) +
                       "\n";
            write_text(insp_out, csv);
        }
        return 0;
    }

    if (tune_cmd->parsed()) {
        if (grid.size() == 0) throw ConfigError("tuning grid is empty");
        const auto ds = load_data(tune_data);
        FitConfig base;
        base.gbt.min_leaf = tune_min_leaf;
        base.winsor_q = tune_winsor;
        base.solver.path_length = tune_path;
        base.solver.path_min_ratio = tune_ratio;
        base.seed = tune_seed;
        const auto res = tune(ds, propensity(tune_data), base, grid, {tune_folds, tune_repeats, tune_seed, tune_threads});
        std::string csv = "trees,mean_depth,subsample,shrinkage,cv_error\n";
        for (const auto& r : res.rows)
            csv += std::to_string(r.trees) + "," + format_real(r.mean_terminal) + "," + format_real(r.subsample) +
                   "," + format_real(r.shrinkage) + "," + format_real(r.cv_mse) + "\n";
        if (!tune_out.empty()) write_text(tune_out, csv);
        const auto& b = res.best_row();
        std::cout << "best trees " << b.trees << " mean_depth " << format_real(b.mean_terminal) << " subsample "
                  << format_real(b.subsample) << " shrinkage " << format_real(b.shrinkage) << " cv_error "
                  << format_real(b.cv_mse) << "\n";
        return 0;
    }

    if (eval_cmd->parsed()) {
        const auto truth_table = read_csv_table(eval_files.front());
        const auto pred_table = read_csv_table(eval_files.back());
        const auto& truth = truth_table.columns[truth_table.require(truth_col)];
        const auto& pred = pred_table.columns[pred_table.require(pred_col)];
        std::cout << fixed(sim::mse(truth, pred), 10) << "\n";
        return 0;
    }

    if (bench_cmd->parsed()) {
        sim::ScenarioSpec spec;
        spec.scenario = b_scenario;
        spec.design = sim::parse_design(b_design);
        spec.n = b_n;
        spec.p = b_p;
        spec.seed = b_fit.seed;
        const auto res = sim::run_benchmark(spec, rule_ensemble_estimator(b_fit.config()), replications);
        if (!b_out.empty()) write_text(b_out, sim::benchmark_csv(res));
        std::cout << "median_mse " << format_real(res.median_mse) << " failures " << res.failures << "\n";
        return 0;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const rulehte::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
