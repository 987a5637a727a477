// multiscreen command-line front end.

#include "multiscreen/error.hpp"
#include "multiscreen/group_select.hpp"
#include "multiscreen/io.hpp"
#include "multiscreen/multi_pc.hpp"
#include "multiscreen/parallel.hpp"
#include "multiscreen/screening.hpp"
#include "multiscreen/simulate.hpp"
#include "multiscreen/stats.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace multiscreen;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

struct Envelope {
    std::string command;
    json config = json::object();
    json results = json::object();
    std::vector<std::string> warnings;
    std::optional<std::uint64_t> seed;
};

void emit(const fs::path& out, const Envelope& env) {
    json j;
    j["tool"] = "multiscreen";
    j["version"] = kVersion;
    j["command"] = env.command;
    j["seed"] = env.seed ? json(*env.seed) : json(nullptr);
    j["config"] = env.config;
    j["warnings"] = env.warnings;
    j["results"] = env.results;
    write_file_atomic(out / "result.json", j.dump(2) + "\n");
}

json names_of(const IndexList& idx, const std::vector<std::string>& names) {
    json a = json::array();
    for (Index j : idx) a.push_back(names.at(static_cast<std::size_t>(j)));
    return a;
}

std::vector<double> parse_list(const std::string& text, const char* what) {
    std::vector<double> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto end = text.find(',', start);
        const auto tok = text.substr(start, end == std::string::npos ? std::string::npos : end - start);
        try {
            std::size_t used = 0;
            out.push_back(std::stod(tok, &used));
            if (used != tok.size()) throw std::invalid_argument(tok);
        } catch (const std::exception&) {
            throw InputError(std::string(what) + ": cannot parse '" + tok + "' as a number");
        }
        if (end == std::string::npos) break;
        start = end + 1;
    }
    return out;
}

ScreeningConfig make_config(double a1, double a2, const std::optional<double>& z) {
    ScreeningConfig c{a1, a2, z};
    c.validate();
    return c;
}

// ---- shared options -------------------------------------------------------

struct ScreenOpts {
    double alpha1 = 1e-4;
    double alpha2 = 0.05;
    std::optional<double> threshold;
};

void add_screen_opts(CLI::App* sub, ScreenOpts& o) {
    sub->add_option("--alpha1", o.alpha1, "per-study level of step 1")->capture_default_str();
    sub->add_option("--alpha2", o.alpha2, "level of the aggregated chi-square test")->capture_default_str();
    sub->add_option("--threshold", o.threshold, "explicit step-1 cutoff on |T|, overrides --alpha1");
}

struct SimOpts {
    int setting = 1;
    std::optional<Index> n, p, k, s0, b;
    std::uint64_t seed = 42;
    bool fix_r = false;
};

void add_sim_opts(CLI::App* sub, SimOpts& o, bool full) {
    sub->add_option("--setting", o.setting, "simulation setting 1-4")->check(CLI::Range(1, 4))->capture_default_str();
    if (full) {
        sub->add_option("--n", o.n, "observations per study");
        sub->add_option("--p", o.p, "features");
        sub->add_option("--k", o.k, "studies");
        sub->add_option("--s0", o.s0, "true active features");
    }
    sub->add_option("--b", o.b, "replications");
    sub->add_option("--seed", o.seed, "64-bit seed")->capture_default_str();
    sub->add_flag("--fix-r", o.fix_r, "draw per-study r once instead of per replication");
}

SimSetting build_setting(const SimOpts& o) {
    auto s = SimSetting::preset(o.setting);
    if (o.n) s.n = *o.n;
    if (o.p) s.p = *o.p;
    if (o.k) s.K = *o.k;
    if (o.s0) s.s0 = *o.s0;
    if (o.b) s.B = *o.b;
    s.seed = o.seed;
    s.fix_r = o.fix_r;
    s.validate();
    return s;
}

MultiStudy load(const std::string& manifest, Envelope& env) {
    auto loaded = load_multistudy(manifest);
    for (auto& w : loaded.warnings) {
        std::cerr << "warning: " << w << "\n";
        env.warnings.push_back(w);
    }
    env.config["manifest"] = manifest;
    return std::move(loaded.data);
}

json data_summary(const MultiStudy& d) {
    json studies = json::array();
    for (const auto& s : d.studies) studies.push_back({{"study_id", s.id}, {"n", s.n()}});
    return {{"K", d.K()}, {"p", d.p()}, {"studies", studies}};
}

std::string records_table(const ScreeningResult& r, const std::vector<std::string>& names) {
    return records_csv(r, names);
}

// ---- commands -------------------------------------------------------------

struct ScreenCmd {
    std::string manifest, stats, method = "tsa";
    ScreenOpts so;
    std::optional<Index> d;
    std::string out;

    void run() {
        Envelope env;
        env.command = "screen";
        if (d && method != "minsis") throw InputError("--d applies to --method minsis only");
        const auto cfg = make_config(so.alpha1, so.alpha2, so.threshold);
        env.config["method"] = method;
        env.config["screening"] = to_json(cfg);

        std::vector<std::string> names;
        ScreeningResult res;
        if (!stats.empty()) {
            if (method == "minsis") throw InputError("--method minsis needs raw data (--manifest)");
            const auto table = read_stats_csv(stats);
            env.config["stats"] = stats;
            names = table.features;
            res = method == "tsa" ? tsa_sis_from_stats(table.t, cfg) : one_step_sis_from_stats(table.t, cfg);
            env.results["data"] = {{"K", table.t.cols()}, {"p", table.t.rows()}, {"studies", table.studies}};
        } else {
            const auto data = load(manifest, env);
            names = data.feature_names;
            env.results["data"] = data_summary(data);
            if (method == "minsis") {
                const Index dd = d ? *d : default_min_sis_d(data.max_n());
                if (dd < 0 || dd > data.p()) throw InputError("--d must lie in [0, p]");
                env.config["d"] = dd;
                const auto ranking = min_sis_rank(data);
                res = min_sis_select(ranking, dd);
                CsvWriter w({"rank", "feature", "name", "min_abs_correlation", "kept"});
                for (std::size_t r = 0; r < ranking.size(); ++r)
                    w.row({std::to_string(r + 1), std::to_string(ranking[r].feature),
                           names[static_cast<std::size_t>(ranking[r].feature)], format_double(ranking[r].score),
                           static_cast<Index>(r) < dd ? "1" : "0"});
                write_file_atomic(fs::path(out) / "ranking.csv", w.str());
                json top = json::array();
                for (Index r = 0; r < dd; ++r) {
                    const auto& f = ranking[static_cast<std::size_t>(r)];
                    top.push_back({{"feature", f.feature}, {"score", f.score}});
                }
                env.results["ranking_top"] = top;
            } else {
                res = method == "tsa" ? tsa_sis(data, cfg) : one_step_sis(data, cfg);
            }
        }
        env.results["screening"] = to_json(res, names);
        if (method != "minsis") write_file_atomic(fs::path(out) / "records.csv", records_table(res, names));
        CsvWriter kept({"feature", "name"});
        for (Index j : res.kept) kept.row({std::to_string(j), names[static_cast<std::size_t>(j)]});
        write_file_atomic(fs::path(out) / "kept.csv", kept.str());
        emit(out, env);
        std::cout << method << ": kept " << res.kept.size() << " of " << names.size() << " features\n";
    }
};

struct MultiPcCmd {
    std::string manifest;
    ScreenOpts so;
    int max_order = 2;
    std::int64_t budget = 1'000'000;
    bool reduced_n = false;
    std::string out;

    void run() {
        Envelope env;
        env.command = "multipc";
        MultiPcConfig cfg;
        cfg.screening = make_config(so.alpha1, so.alpha2, so.threshold);
        if (max_order < 1) throw InputError("--max-order must be >= 1");
        if (budget < 1) throw InputError("--budget must be >= 1");
        cfg.max_order = max_order;
        cfg.budget = budget;
        cfg.partial.reduced_sample_size = reduced_n;
        env.config["screening"] = to_json(cfg.screening);
        env.config["max_order"] = max_order;
        env.config["budget"] = budget;
        env.config["reduced_sample_size"] = reduced_n;
        const auto data = load(manifest, env);
        env.results["data"] = data_summary(data);
        const auto st = multi_pc_run(data, cfg);
        env.results["multipc"] = to_json(st, data.feature_names);
        CsvWriter w({"stage", "feature", "name"});
        for (std::size_t m = 0; m < st.active_sets.size(); ++m)
            for (Index j : st.active_sets[m])
                w.row({std::to_string(m + 1), std::to_string(j), data.feature_names[static_cast<std::size_t>(j)]});
        write_file_atomic(fs::path(out) / "active_sets.csv", w.str());
        emit(out, env);
        std::cout << "multipc: stage " << st.stage << " (" << to_string(st.stopped_reason) << "), "
                  << st.active_sets.back().size() << " features active\n";
    }
};

struct SelectCmd {
    std::string manifest, tune = "bic";
    ScreenOpts so;
    int grid = 50;
    std::string out;

    void run() {
        Envelope env;
        env.command = "select";
        const auto cfg = make_config(so.alpha1, so.alpha2, so.threshold);
        if (grid < 2) throw InputError("--grid must be >= 2");
        env.config["screening"] = to_json(cfg);
        env.config["tune"] = tune;
        env.config["grid"] = grid;
        const auto data = load(manifest, env);
        env.results["data"] = data_summary(data);
        const auto model =
            tsa_sis_group_lasso(data, cfg, tune == "cv" ? TuneMethod::cv : TuneMethod::bic, grid);
        const auto& names = data.feature_names;
        env.results["screened"] = model.screening.kept;
        env.results["screened_names"] = names_of(model.screening.kept, names);
        env.results["empty_screen"] = model.empty_screen;
        env.results["selected"] = model.selected;
        env.results["selected_names"] = names_of(model.selected, names);
        if (model.tuning) {
            env.results["tuning"] = to_json(*model.tuning);
            CsvWriter w({"lambda", "score", "rss", "nonzero_groups", "iterations", "converged"});
            for (const auto& dg : model.tuning->path)
                w.row({format_double(dg.lambda), format_double(dg.score), format_double(dg.rss),
                       std::to_string(dg.nonzero_groups), std::to_string(dg.iterations), dg.converged ? "1" : "0"});
            write_file_atomic(fs::path(out) / "lambda_path.csv", w.str());
        } else {
            env.results["tuning"] = nullptr;
        }
        if (model.fit) {
            env.results["fit"] = {{"lambda", model.fit->lambda},
                                  {"converged", model.fit->converged},
                                  {"iterations", model.fit->iterations},
                                  {"kkt_residual", model.fit->kkt_residual}};
            if (!model.fit->converged) env.warnings.push_back("group lasso did not converge");
        } else {
            env.results["fit"] = nullptr;
        }
        const auto ols = ols_refit(data, model.selected);
        env.results["ols"] = to_json(ols, model.selected, names);
        CsvWriter coef({"study_id", "term", "estimate", "std_error"});
        CsvWriter fitcsv({"study_id", "n", "r2", "adj_r2", "sigma2"});
        for (const auto& f : ols) {
            for (Index c = 0; c < f.coef.size(); ++c)
                coef.row({f.study_id, c == 0 ? "(intercept)" : names[static_cast<std::size_t>(model.selected[static_cast<std::size_t>(c - 1)])],
                          format_double(f.coef(c)), format_double(f.se(c))});
            fitcsv.row({f.study_id, std::to_string(f.n), format_double(f.r2), format_double(f.adj_r2),
                        format_double(f.sigma2)});
        }
        write_file_atomic(fs::path(out) / "coefficients.csv", coef.str());
        write_file_atomic(fs::path(out) / "fit_summary.csv", fitcsv.str());
        emit(out, env);
        std::cout << "select: " << model.screening.kept.size() << " screened, " << model.selected.size()
                  << " selected\n";
    }
};

struct SimulateCmd {
    SimOpts sim;
    ScreenOpts so;
    std::string method = "tsa";
    std::optional<Index> d;
    int max_order = 2;
    std::string out;

    void run() {
        Envelope env;
        env.command = "simulate";
        if (d && method != "minsis") throw InputError("--d applies to --method minsis only");
        const auto setting = build_setting(sim);
        MethodSpec spec;
        spec.kind = method == "tsa"       ? MethodKind::tsa
                    : method == "onestep" ? MethodKind::onestep
                    : method == "minsis"  ? MethodKind::minsis
                                          : MethodKind::multipc;
        spec.screening = make_config(so.alpha1, so.alpha2, so.threshold);
        if (d) {
            if (*d < 1 || *d > setting.p) throw InputError("--d must lie in [1, p]");
            spec.d = *d;
        }
        if (max_order < 1) throw InputError("--max-order must be >= 1");
        spec.multipc.max_order = max_order;
        env.seed = setting.seed;
        env.config["setting"] = to_json(setting);
        env.config["method"] = method;
        env.config["screening"] = to_json(spec.screening);
        if (spec.kind == MethodKind::minsis) env.config["d"] = d ? json(*d) : json(default_min_sis_d(setting.n));
        if (spec.kind == MethodKind::multipc) env.config["max_order"] = max_order;
        const auto summary = run_replications(setting, spec);
        if (summary.succeeded == 0)
            throw NumericalError("every replication failed; " + summary.first_failure);
        if (summary.failed > 0) env.warnings.push_back(std::to_string(summary.failed) + " replications failed; " +
                                                       summary.first_failure);
        env.results["summary"] = to_json(summary);
        CsvWriter w({"method", "replications", "succeeded", "mean_sensitivity", "se_sensitivity",
                     "mean_specificity", "se_specificity", "mean_fp", "mean_fn", "coverage"});
        w.row({method, std::to_string(summary.replications), std::to_string(summary.succeeded),
               format_double(summary.mean_sensitivity), format_double(summary.se_sensitivity),
               format_double(summary.mean_specificity), format_double(summary.se_specificity),
               format_double(summary.mean_fp), format_double(summary.mean_fn), format_double(summary.coverage)});
        write_file_atomic(fs::path(out) / "summary.csv", w.str());
        emit(out, env);
        std::cout << method << " on setting " << setting.id << ": sensitivity " << summary.mean_sensitivity
                  << ", specificity " << summary.mean_specificity << " over " << summary.succeeded
                  << " replications\n";
    }
};

struct RocCmd {
    SimOpts sim;
    ScreenOpts so;
    std::size_t max_points = 200;
    std::string out;

    void run() {
        Envelope env;
        env.command = "roc";
        const auto setting = build_setting(sim);
        const auto cfg = make_config(so.alpha1, so.alpha2, so.threshold);
        if (max_points < 2) throw InputError("--max-points must be >= 2");
        env.seed = setting.seed;
        env.config["setting"] = to_json(setting);
        env.config["screening"] = to_json(cfg);
        env.config["max_points"] = max_points;
        const auto roc = roc_min_sis(setting, cfg);
        const auto pts = subsample_roc(roc.min_sis, max_points);
        const double x = 1.0 - roc.tsa.mean_specificity;
        const double minsis_at = interpolate_sensitivity(roc.min_sis, x);
        json curve = json::array();
        CsvWriter w({"method", "d", "sensitivity", "one_minus_specificity"});
        for (const auto& p : pts) {
            curve.push_back({{"d", p.d}, {"sensitivity", p.sensitivity}, {"one_minus_specificity", p.one_minus_specificity}});
            w.row({"minsis", std::to_string(p.d), format_double(p.sensitivity), format_double(p.one_minus_specificity)});
        }
        w.row({"tsa", "", format_double(roc.tsa.mean_sensitivity), format_double(x)});
        write_file_atomic(fs::path(out) / "roc.csv", w.str());
        env.results["min_sis_curve"] = curve;
        env.results["tsa_point"] = {{"sensitivity", roc.tsa.mean_sensitivity},
                                    {"one_minus_specificity", x},
                                    {"summary", to_json(roc.tsa)}};
        env.results["min_sis_sensitivity_at_tsa"] = minsis_at;
        env.results["tsa_advantage"] = roc.tsa.mean_sensitivity - minsis_at;
        emit(out, env);
        std::cout << "roc: TSA-SIS (" << x << ", " << roc.tsa.mean_sensitivity << "), Min-SIS at same FPR "
                  << minsis_at << "\n";
    }
};

struct SensitivityCmd {
    SimOpts sim;
    std::string alpha1_list = "0.01,0.001,0.0001";
    std::string alpha2_list = "0.15,0.05,0.01,0.001";
    std::string out;

    void run() {
        Envelope env;
        env.command = "sensitivity";
        const auto setting = build_setting(sim);
        const auto a1 = parse_list(alpha1_list, "--alpha1-list");
        const auto a2 = parse_list(alpha2_list, "--alpha2-list");
        env.seed = setting.seed;
        env.config["setting"] = to_json(setting);
        env.config["alpha1"] = a1;
        env.config["alpha2"] = a2;
        const auto table = sensitivity_grid(setting, a1, a2);
        json cells = json::array();
        CsvWriter w({"alpha1", "alpha2", "mean_sensitivity", "se_sensitivity", "mean_specificity", "se_specificity"});
        for (std::size_t i = 0; i < a1.size(); ++i)
            for (std::size_t j = 0; j < a2.size(); ++j) {
                const auto& c = table.cells[i][j];
                json cell = to_json(c);
                cell["alpha1"] = a1[i];
                cell["alpha2"] = a2[j];
                cells.push_back(cell);
                w.row({format_double(a1[i]), format_double(a2[j]), format_double(c.mean_sensitivity),
                       format_double(c.se_sensitivity), format_double(c.mean_specificity),
                       format_double(c.se_specificity)});
            }
        write_file_atomic(fs::path(out) / "table.csv", w.str());
        env.results["cells"] = cells;
        emit(out, env);
        for (std::size_t i = 0; i < a1.size(); ++i) {
            std::cout << "alpha1=" << a1[i] << ":";
            for (std::size_t j = 0; j < a2.size(); ++j)
                std::cout << "  " << table.cells[i][j].mean_sensitivity << "/" << table.cells[i][j].mean_specificity;
            std::cout << "\n";
        }
    }
};

struct ExportCmd {
    SimOpts sim;
    Index rep = 0;
    std::string out;

    void run() {
        Envelope env;
        env.command = "export";
        const auto setting = build_setting(sim);
        if (rep < 0) throw InputError("--rep must be >= 0");
        env.seed = setting.seed;
        env.config["setting"] = to_json(setting);
        env.config["rep"] = rep;
        const auto inst = gen_instance(setting, rep);
        write_multistudy(inst.data, out);
        env.results["manifest"] = "manifest.json";
        env.results["true_active"] = inst.true_active;
        env.results["true_active_names"] = names_of(inst.true_active, inst.data.feature_names);
        env.results["r"] = inst.r;
        json beta = json::array();
        for (Index j : inst.true_active) {
            std::vector<double> row(inst.true_beta.cols());
            for (Index k = 0; k < inst.true_beta.cols(); ++k) row[static_cast<std::size_t>(k)] = inst.true_beta(j, k);
            beta.push_back(row);
        }
        env.results["true_beta"] = beta;
        emit(out, env);
        std::cout << "export: wrote " << inst.data.K() << " studies to " << out << "\n";
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-study variable screening and selection"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);
    std::optional<std::size_t> threads;
    app.add_option("--threads", threads, "worker threads (env MULTISCREEN_THREADS)")->envname("MULTISCREEN_THREADS");
    app.fallthrough();

    const std::vector<std::string> screen_methods{"tsa", "onestep", "minsis"};
    const std::vector<std::string> sim_methods{"tsa", "onestep", "minsis", "multipc"};

    ScreenCmd screen;
    auto* s = app.add_subcommand("screen", "screen features of a multi-study dataset");
    auto* m_opt = s->add_option("--manifest", screen.manifest, "study manifest (JSON)")->check(CLI::ExistingFile);
    auto* st_opt = s->add_option("--stats", screen.stats, "precomputed statistics CSV (feature, one column per study)")
                       ->check(CLI::ExistingFile);
    m_opt->excludes(st_opt);
    add_screen_opts(s, screen.so);
    s->add_option("--method", screen.method)->check(CLI::IsMember(screen_methods))->capture_default_str();
    s->add_option("--d", screen.d, "Min-SIS model size (default round(n/log n))");
    s->add_option("--out", screen.out)->required();

    MultiPcCmd mpc;
    auto* mp = app.add_subcommand("multipc", "Multi-PC selection");
    mp->add_option("--manifest", mpc.manifest)->required()->check(CLI::ExistingFile);
    add_screen_opts(mp, mpc.so);
    mp->add_option("--max-order", mpc.max_order)->capture_default_str();
    mp->add_option("--budget", mpc.budget, "conditioning sets allowed per stage")->capture_default_str();
    mp->add_flag("--reduced-n", mpc.reduced_n, "scale partial statistics by sqrt(n - |S| - 1)");
    mp->add_option("--out", mpc.out)->required();

    SelectCmd sel;
    auto* se = app.add_subcommand("select", "TSA-SIS, group lasso, per-study OLS refit");
    se->add_option("--manifest", sel.manifest)->required()->check(CLI::ExistingFile);
    add_screen_opts(se, sel.so);
    se->add_option("--tune", sel.tune)->check(CLI::IsMember({"bic", "cv"}))->capture_default_str();
    se->add_option("--grid", sel.grid)->capture_default_str();
    se->add_option("--out", sel.out)->required();

    SimulateCmd sim;
    auto* si = app.add_subcommand("simulate", "Monte-Carlo sensitivity/specificity of a screener");
    add_sim_opts(si, sim.sim, true);
    add_screen_opts(si, sim.so);
    si->add_option("--method", sim.method)->check(CLI::IsMember(sim_methods))->capture_default_str();
    si->add_option("--d", sim.d, "Min-SIS model size");
    si->add_option("--max-order", sim.max_order, "Multi-PC order")->capture_default_str();
    si->add_option("--out", sim.out)->required();

    RocCmd roc;
    auto* ro = app.add_subcommand("roc", "Min-SIS ROC curve with the TSA-SIS operating point");
    add_sim_opts(ro, roc.sim, true);
    add_screen_opts(ro, roc.so);
    ro->add_option("--max-points", roc.max_points)->capture_default_str();
    ro->add_option("--out", roc.out)->required();

    SensitivityCmd sens;
    auto* sn = app.add_subcommand("sensitivity", "TSA-SIS over a grid of alpha1 x alpha2");
    add_sim_opts(sn, sens.sim, true);
    sn->add_option("--alpha1-list", sens.alpha1_list)->capture_default_str();
    sn->add_option("--alpha2-list", sens.alpha2_list)->capture_default_str();
    sn->add_option("--out", sens.out)->required();

    ExportCmd exp;
    auto* ex = app.add_subcommand("export", "write one simulated replication as CSV files plus a manifest");
    add_sim_opts(ex, exp.sim, true);
    ex->add_option("--rep", exp.rep)->capture_default_str();
    ex->add_option("--out", exp.out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitInput;
    }

    try {
        if (threads) {
            if (*threads < 1) throw InputError("--threads must be >= 1");
            set_thread_count(*threads);
        }
        if (screen.out.empty() && s->parsed()) throw InputError("--out is required");
        if (s->parsed()) {
            if (screen.manifest.empty() && screen.stats.empty())
                throw InputError("screen needs --manifest or --stats");
            screen.run();
        } else if (mp->parsed()) {
            mpc.run();
        } else if (se->parsed()) {
            sel.run();
        } else if (si->parsed()) {
            sim.run();
        } else if (ro->parsed()) {
            roc.run();
        } else if (sn->parsed()) {
            sens.run();
        } else if (ex->parsed()) {
            exp.run();
        }
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
    return 0;
}
