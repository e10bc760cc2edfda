#include "mixmed/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "mixmed/bkmr.hpp"
#include "mixmed/bkmr_cma.hpp"
#include "mixmed/dataset.hpp"
#include "mixmed/error.hpp"
#include "mixmed/ersma.hpp"
#include "mixmed/mediation.hpp"
#include "mixmed/parallel.hpp"
#include "mixmed/pcma.hpp"
#include "mixmed/serialize.hpp"
#include "mixmed/sim.hpp"

namespace mixmed {

namespace {

namespace fs = std::filesystem;

struct CommonOptions {
    std::string out = ".";
    std::uint64_t seed = 1;
    int workers = default_workers();
    double level = 0.95;
};

struct DataOptions {
    std::string path;
    std::vector<std::string> exposures;
    std::string mediator;
    std::string outcome;
    std::vector<std::string> confounders;
    std::vector<std::string> categorical;
};

struct KernelOptions {
    std::string selection = "componentwise";
    int iterations = 1000;
    int thin = 1;
    std::vector<int> groups;
    int cluster_k = 0;
    double pi = 0.5;
    double slab_upper = 100.0;
    double lambda_step = 0.5;
    double r_step = 0.5;
};

void add_common(CLI::App* sub, CommonOptions& o) {
    sub->add_option("--out,-o", o.out, "Output directory");
    sub->add_option("--seed", o.seed, "Random seed");
    sub->add_option("--workers", o.workers, "Worker threads (results do not depend on it)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--level", o.level, "Confidence/credible level")->check(CLI::Range(0.5, 0.9999));
}

void add_data(CLI::App* sub, DataOptions& d, bool required = true) {
    auto* data = sub->add_option("--data", d.path, "Input CSV with a header row");
    if (required) data->required();
    data->check(CLI::ExistingFile);
    sub->add_option("--exposures", d.exposures, "Exposure columns")->delimiter(',');
    sub->add_option("--mediator", d.mediator, "Mediator column");
    sub->add_option("--outcome", d.outcome, "Outcome column");
    sub->add_option("--confounders", d.confounders, "Confounder columns")->delimiter(',');
    sub->add_option("--categorical", d.categorical, "Confounders holding category labels")->delimiter(',');
}

void add_kernel(CLI::App* sub, KernelOptions& k) {
    sub->add_option("--selection", k.selection, "none | componentwise | hierarchical");
    sub->add_option("--iterations", k.iterations, "MCMC iterations")->check(CLI::Range(100, 100000000));
    sub->add_option("--thin", k.thin, "Keep every thin-th draw")->check(CLI::PositiveNumber);
    sub->add_option("--groups", k.groups, "Group label (1-based) per exposure for hierarchical selection")
        ->delimiter(',');
    sub->add_option("--cluster-k", k.cluster_k,
                    "Form this many exposure groups by complete-linkage clustering of 1 - corr");
    sub->add_option("--pi", k.pi, "Prior inclusion probability")->check(CLI::Range(0.0, 1.0));
    sub->add_option("--slab-upper", k.slab_upper, "Upper bound of the uniform slab on r");
    sub->add_option("--lambda-step", k.lambda_step, "Log-scale random-walk sd for lambda");
    sub->add_option("--r-step", k.r_step, "Log-scale random-walk sd for r");
}

LoadedDataset load(const DataOptions& d) {
    if (d.exposures.empty()) throw ConfigurationError("--exposures is required");
    if (d.mediator.empty()) throw ConfigurationError("--mediator is required");
    if (d.outcome.empty()) throw ConfigurationError("--outcome is required");
    Schema s;
    s.exposures = d.exposures;
    s.mediator = d.mediator;
    s.outcome = d.outcome;
    s.confounders = d.confounders;
    s.categorical = d.categorical;
    return load_dataset(d.path, s);
}

// Resolved option values of a subcommand, excluding ones that cannot change results.
json resolved_options(const CLI::App* sub) {
    json j = json::object();
    for (const CLI::Option* opt : sub->get_options()) {
        const std::string name = opt->get_name(false, true);
        if (name.empty()) continue;
        const std::string key = opt->get_lnames().empty() ? name : opt->get_lnames().front();
        if (key == "help" || key == "out" || key == "workers" || key == "config") continue;
        if (opt->count() > 0) {
            const auto& res = opt->results();
            if (res.size() == 1)
                j[key] = res.front();
            else
                j[key] = res;
        } else {
            j[key] = opt->get_default_str();
        }
    }
    return j;
}

class Artifacts {
public:
    Artifacts(fs::path dir, std::string subcommand, json provenance)
        : dir_(std::move(dir)), sub_(std::move(subcommand)), provenance_(std::move(provenance)) {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec || !fs::is_directory(dir_))
            throw ConfigurationError("cannot create output directory '" + dir_.string() + "'");
    }

    void csv(const std::string& kind, const CsvTable& table) {
        write(kind, "csv", "# provenance: " + provenance_.dump() + "\n" + table.str());
    }

    void json_file(const std::string& kind, json body) {
        body["provenance"] = provenance_;
        write(kind, "json", body.dump(2) + "\n");
    }

    json finish() {
        json manifest = {{"subcommand", sub_}, {"provenance", provenance_}, {"artifacts", list_}};
        const std::string text = manifest.dump(2) + "\n";
        const std::string name = sub_ + "_manifest_" + content_hash12(text) + ".json";
        put(name, text);
        manifest["manifest"] = (dir_ / name).string();
        return manifest;
    }

private:
    void write(const std::string& kind, const std::string& ext, const std::string& text) {
        const std::string name = sub_ + "_" + kind + "_" + content_hash12(text) + "." + ext;
        put(name, text);
        list_.push_back({{"kind", kind}, {"file", name}, {"fnv1a", content_hash12(text)}});
    }

    void put(const std::string& name, const std::string& text) {
        std::ofstream f(dir_ / name, std::ios::binary);
        if (!f) throw ConfigurationError("cannot write '" + (dir_ / name).string() + "'");
        f << text;
    }

    fs::path dir_;
    std::string sub_;
    json provenance_;
    json list_ = json::array();
};

json provenance_for(const CLI::App* sub, const CommonOptions& common) {
    return {{"tool", "mixmed"}, {"subcommand", sub->get_name()}, {"seed", common.seed}, {"options", resolved_options(sub)}};
}

json load_report(const LoadReport& r) {
    return {{"rows_read", r.rows_read}, {"rows_dropped", r.rows_dropped}};
}

std::optional<Contrast> vector_contrast(const std::vector<double>& ref, const std::vector<double>& cmp,
                                        Index dim) {
    if (ref.empty() && cmp.empty()) return std::nullopt;
    if (ref.size() != cmp.size()) throw ConfigurationError("--reference and --comparative lengths differ");
    Contrast c;
    c.reference = Eigen::Map<const VectorXd>(ref.data(), static_cast<Index>(ref.size()));
    c.comparative = Eigen::Map<const VectorXd>(cmp.data(), static_cast<Index>(cmp.size()));
    if (dim >= 0) c.require_dim(dim);
    return c;
}

KernelConfig kernel_config(const KernelOptions& k, const MatrixXd& exposures, Index q) {
    KernelConfig c;
    c.selection = parse_selection_mode(k.selection);
    c.iterations = k.iterations;
    c.thin = k.thin;
    c.pi = k.pi;
    c.slab_upper = k.slab_upper;
    c.lambda_step = k.lambda_step;
    c.r_step = k.r_step;
    if (c.selection == SelectionMode::hierarchical) {
        const Index p = exposures.cols();
        std::vector<int> labels;
        if (!k.groups.empty()) {
            if (static_cast<Index>(k.groups.size()) != p)
                throw ConfigurationError("--groups needs one label per exposure");
            for (int g : k.groups) labels.push_back(g - 1);
        } else if (k.cluster_k > 0) {
            const Standardized st = standardize(exposures);
            MatrixXd corr = st.values.transpose() * st.values / static_cast<double>(exposures.rows() - 1);
            corr = 0.5 * (corr + corr.transpose()).eval();
            corr.diagonal().setOnes();
            labels = cluster_groups(corr, std::min<Index>(k.cluster_k, p));
        } else {
            throw ConfigurationError("hierarchical selection needs --groups or --cluster-k");
        }
        // Extra kernel inputs (the mediator in the outcome model) form their own group.
        int next = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
        for (Index j = p; j < q; ++j) labels.push_back(next++);
        c.groups = labels;
    }
    c.validate(q);
    return c;
}

struct BkmrInputs {
    VectorXd y;
    MatrixXd z;
    std::vector<std::string> z_names;
};

BkmrInputs bkmr_inputs(const Dataset& d, ModelRole role) {
    BkmrInputs in;
    in.z_names = d.exposure_names;
    if (role == ModelRole::outcome) {
        in.z.resize(d.n(), d.p() + 1);
        in.z.leftCols(d.p()) = d.exposures;
        in.z.col(d.p()) = d.mediator;
        in.z_names.push_back(d.mediator_name);
        in.y = d.outcome;
    } else {
        in.z = d.exposures;
        in.y = role == ModelRole::mediator ? d.mediator : d.outcome;
    }
    return in;
}

BkmrFit fit_role(const Dataset& d, ModelRole role, const KernelOptions& k, SeededRng& rng) {
    const BkmrInputs in = bkmr_inputs(d, role);
    const KernelConfig cfg = kernel_config(k, d.exposures, in.z.cols());
    BkmrFit fit = kmbayes(in.y, in.z, d.confounders, cfg, rng, role);
    fit.z_names = in.z_names;
    fit.x_names = d.confounder_names;
    return fit;
}

json effect_summary(const PosteriorSummary& s) { return to_json(s); }

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigurationError("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ParseError("'" + path + "': " + e.what());
    }
}

const char* kind_name(ErrorKind k) {
    switch (k) {
    case ErrorKind::config: return "config";
    case ErrorKind::data: return "data";
    case ErrorKind::numerical: return "numerical";
    }
    return "unknown";
}

void report_error(std::ostream& err, const std::string& name, const std::string& kind, const std::string& message) {
    err << json{{"error", name}, {"kind", kind}, {"message", message}}.dump() << "\n";
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Mediation analysis for exposure mixtures", "mixmed"};
    app.option_defaults()->always_capture_default();
    app.set_config("--config", "", "TOML/INI config file; [subcommand] sections, command-line flags win");
    app.require_subcommand(1);

    CommonOptions common;
    DataOptions data;
    KernelOptions kernel;

    // sema
    auto* sema_cmd = app.add_subcommand("sema", "Per-exposure product-method mediation with BH-adjusted NIE p-values");
    add_common(sema_cmd, common);
    add_data(sema_cmd, data);
    bool unadjusted = false;
    double fdr = 0.05;
    std::vector<double> reference, comparative;
    sema_cmd->add_flag("--unadjusted", unadjusted, "Do not adjust each exposure for the co-exposures");
    sema_cmd->add_option("--fdr", fdr, "FDR level for flagging active exposures")->check(CLI::Range(0.0, 1.0));
    sema_cmd->add_option("--reference", reference, "Per-exposure reference levels (default 0)")->delimiter(',');
    sema_cmd->add_option("--comparative", comparative, "Per-exposure comparative levels (default 1)")->delimiter(',');

    // pcma
    auto* pcma_cmd = app.add_subcommand("pcma", "Mediation on retained principal-component scores");
    add_common(pcma_cmd, common);
    add_data(pcma_cmd, data);
    std::string rule = "cumulative";
    double threshold = 0.8;
    int first_k = 1;
    pcma_cmd->add_option("--rule", rule, "cumulative | first | kaiser")
        ->check(CLI::IsMember({"cumulative", "first", "kaiser"}));
    pcma_cmd->add_option("--threshold", threshold, "Cumulative variance threshold")->check(CLI::Range(0.0, 1.0));
    pcma_cmd->add_option("--k", first_k, "Number of leading PCs for --rule first")->check(CLI::PositiveNumber);

    // ersma
    auto* ers_cmd = app.add_subcommand("ersma", "Elastic-net risk score (split sample) as a single exposure");
    add_common(ers_cmd, common);
    add_data(ers_cmd, data);
    std::string features = "main_only";
    std::string ers_contrast = "iqr";
    double ers_ref = 0.0, ers_cmp = 1.0;
    int lambda2_points = 100;
    ers_cmd->add_option("--features", features, "main_only | higher_order")
        ->check(CLI::IsMember({"main_only", "higher_order"}));
    ers_cmd->add_option("--contrast", ers_contrast,
                        "iqr (25th -> 75th score percentile) | custom (--ers-reference/--ers-comparative) | unit-profile (all exposures 0 -> 1)")
        ->check(CLI::IsMember({"iqr", "custom", "unit-profile"}));
    ers_cmd->add_option("--ers-reference", ers_ref, "Reference score level for --contrast custom");
    ers_cmd->add_option("--ers-comparative", ers_cmp, "Comparative score level for --contrast custom");
    ers_cmd->add_option("--lambda2-points", lambda2_points, "Size of the log-spaced lambda2 grid on [1e-4, 1e2]")
        ->check(CLI::Range(1, 1000));

    // bkmr-fit
    auto* fit_cmd = app.add_subcommand("bkmr-fit", "Fit one BKMR model and write its chain and PIPs");
    add_common(fit_cmd, common);
    add_data(fit_cmd, data);
    add_kernel(fit_cmd, kernel);
    std::string role = "mediator";
    fit_cmd->add_option("--role", role, "mediator | outcome | total_effect")
        ->check(CLI::IsMember({"mediator", "outcome", "total_effect"}));

    // bkmr-cma
    auto* cma_cmd = app.add_subcommand("bkmr-cma", "BKMR causal mediation effects (fits the three models unless chains are given)");
    add_common(cma_cmd, common);
    add_data(cma_cmd, data, false);
    add_kernel(cma_cmd, kernel);
    std::string chain_m, chain_y, chain_te;
    std::vector<double> a, astar, m_quantiles{0.1, 0.25, 0.5, 0.75};
    double q_ref = 0.25, q_cmp = 0.75;
    int draws = 50;
    cma_cmd->add_option("--mediator-chain", chain_m, "Chain artifact of the mediator model")->check(CLI::ExistingFile);
    cma_cmd->add_option("--outcome-chain", chain_y, "Chain artifact of the outcome model")->check(CLI::ExistingFile);
    cma_cmd->add_option("--te-chain", chain_te, "Chain artifact of the total-effect model")->check(CLI::ExistingFile);
    cma_cmd->add_option("--a", a, "Comparative exposure levels")->delimiter(',');
    cma_cmd->add_option("--astar", astar, "Reference exposure levels")->delimiter(',');
    cma_cmd->add_option("--quantile-reference", q_ref, "Exposure quantile for astar when --astar is absent")
        ->check(CLI::Range(0.0, 1.0));
    cma_cmd->add_option("--quantile-comparative", q_cmp, "Exposure quantile for a when --a is absent")
        ->check(CLI::Range(0.0, 1.0));
    cma_cmd->add_option("--m-quantiles", m_quantiles, "Mediator quantiles for CDEs")->delimiter(',');
    cma_cmd->add_option("--draws", draws, "Mediator draws K per iteration")->check(CLI::PositiveNumber);

    // simulate
    auto* sim_cmd = app.add_subcommand("simulate", "Simulation study over the scenario grid");
    add_common(sim_cmd, common);
    std::vector<std::string> methods;
    for (SimMethod m : linear_methods()) methods.push_back(to_string(m));
    std::vector<long> ns{1000, 2500};
    std::vector<double> r2ms{0.1, 0.4};
    long replicates = 20, bkmr_replicates = 2, truth_rows = 100000;
    int bkmr_iterations = 1000;
    std::uint64_t truth_seed = TruthOptions{}.seed;
    std::string truth_cache;
    sim_cmd->add_option("--methods", methods, "Methods to run")->delimiter(',');
    sim_cmd->add_option("--n", ns, "Sample sizes")->delimiter(',');
    sim_cmd->add_option("--r2m", r2ms, "Target mediator R^2 values")->delimiter(',');
    sim_cmd->add_option("--replicates", replicates, "Replicates per scenario")->check(CLI::PositiveNumber);
    sim_cmd->add_option("--bkmr-replicates", bkmr_replicates, "Replicates for BKMR methods")
        ->check(CLI::NonNegativeNumber);
    sim_cmd->add_option("--bkmr-iterations", bkmr_iterations, "MCMC iterations for BKMR methods")
        ->check(CLI::Range(100, 100000000));
    sim_cmd->add_option("--truth-rows", truth_rows, "Rows of the reference dataset for PC/ERS truths")
        ->check(CLI::Range(100L, 100000000L));
    sim_cmd->add_option("--truth-seed", truth_seed, "Seed of the reference datasets");
    sim_cmd->add_option("--truth-cache", truth_cache, "JSON file caching reference truths");

    // report
    auto* report_cmd = app.add_subcommand("report", "Summaries and plot-ready tables from a metrics artifact");
    add_common(report_cmd, common);
    std::string input;
    report_cmd->add_option("--input", input, "metrics JSON written by simulate")->required()->check(CLI::ExistingFile);

    std::vector<const char*> argv{"mixmed"};
    for (const auto& s : args) argv.push_back(s.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        report_error(err, "usage_error", "config", e.what());
        return 2;
    }

    try {
        CLI::App* sub = app.get_subcommands().front();
        const std::string name = sub->get_name();
        Artifacts artifacts(common.out, name, provenance_for(sub, common));
        SeededRng rng(common.seed);

        if (name == "sema") {
            const LoadedDataset ld = load(data);
            SemaOptions o;
            o.adjust_coexposures = !unadjusted;
            o.fdr_level = fdr;
            o.level = common.level;
            o.contrast = vector_contrast(reference, comparative, ld.data.p());
            const SemaResult r = sema(ld.data, o);
            CsvTable t = effects_table(r.per_exposure);
            t.header.push_back("nie_q");
            t.header.push_back("active");
            for (std::size_t i = 0; i < t.rows.size(); ++i) {
                const std::size_t e = i / 3;
                t.rows[i].push_back(format_double(r.nie_q[e]));
                t.rows[i].push_back(r.active[e] ? "1" : "0");
            }
            artifacts.csv("effects", t);
            json effects = json::array();
            for (std::size_t e = 0; e < r.per_exposure.size(); ++e) {
                json j = to_json(r.per_exposure[e]);
                j["nie_q"] = r.nie_q[e];
                j["active"] = static_cast<bool>(r.active[e]);
                effects.push_back(j);
            }
            json summary = {{"adjusted", r.adjusted}, {"fdr_level", fdr}, {"effects", effects},
                            {"global_nie", to_json(r.global_nie)},
                            {"global_nie_note", "sum of per-exposure NIEs, variances added as if independent; heuristic"},
                            {"load", load_report(ld.report)}};
            if (!r.adjusted) summary["note"] = "unadjusted estimates are not causally interpretable";
            artifacts.json_file("summary", summary);
        } else if (name == "pcma") {
            const LoadedDataset ld = load(data);
            PcmaOptions o;
            o.level = common.level;
            o.rule = rule == "first" ? RetentionRule::first(first_k)
                     : rule == "kaiser" ? RetentionRule::kaiser()
                                        : RetentionRule::cumulative(threshold);
            const PcmaResult r = pcma(ld.data, o);
            artifacts.csv("effects", effects_table(r.per_pc));
            artifacts.csv("scree", scree_table(r.model));
            artifacts.csv("loadings", loadings_table(r.model, ld.data.exposure_names));
            json effects = json::array();
            for (const auto& e : r.per_pc) effects.push_back(to_json(e));
            artifacts.json_file("summary", {{"retained", r.retained}, {"effects", effects},
                                            {"global_nie", to_json(r.global_nie)}, {"load", load_report(ld.report)}});
        } else if (name == "ersma") {
            const LoadedDataset ld = load(data);
            ErsmaOptions o;
            o.level = common.level;
            o.fit.spec = parse_feature_spec(features);
            o.fit.cv.workers = common.workers;
            if (lambda2_points != 100) {
                o.fit.cv.lambda2_grid.clear();
                for (int i = 0; i < lambda2_points; ++i) {
                    const double t = lambda2_points == 1 ? 0.0 : static_cast<double>(i) / (lambda2_points - 1);
                    o.fit.cv.lambda2_grid.push_back(std::exp(std::log(1e-4) + t * (std::log(1e2) - std::log(1e-4))));
                }
            }
            if (ers_contrast == "custom") o.contrast = Contrast::scalar(ers_ref, ers_cmp);
            if (ers_contrast == "unit-profile") o.exposure_profiles = Contrast::unit(ld.data.p());
            const ErsmaResult r = ersma(ld.data, rng, o);
            artifacts.csv("effects", effects_table({r.effects}));
            CsvTable scores;
            scores.header = {"row", "ers"};
            for (Index i = 0; i < r.scores.size(); ++i)
                scores.rows.push_back({std::to_string(ld.data.row_ids[r.analysis_rows[static_cast<std::size_t>(i)]]),
                                       format_double(r.scores(i))});
            artifacts.csv("scores", scores);
            artifacts.json_file("model", ers_model_to_json(r.model));
            artifacts.json_file("summary", {{"effects", to_json(r.effects)}, {"load", load_report(ld.report)}});
        } else if (name == "bkmr-fit") {
            const LoadedDataset ld = load(data);
            const BkmrFit fit = fit_role(ld.data, parse_model_role(role), kernel, rng);
            const Pips pips = extract_pips(fit);
            artifacts.json_file("chain", bkmr_fit_to_json(fit));
            artifacts.csv("pips", pip_table(fit, pips));
            artifacts.json_file("summary", {{"role", role},
                                            {"lambda_acceptance", fit.chain.lambda_moves.rate()},
                                            {"select_acceptance", fit.chain.select_moves.rate()},
                                            {"r_acceptance", fit.chain.r_moves.rate()},
                                            {"warnings", fit.warnings},
                                            {"load", load_report(ld.report)}});
            for (const auto& w : fit.warnings) report_error(err, "warning", "diagnostic", w);
        } else if (name == "bkmr-cma") {
            std::vector<BkmrFit> fits;
            const bool have_chains = !chain_m.empty() || !chain_y.empty() || !chain_te.empty();
            if (have_chains) {
                if (chain_m.empty() || chain_y.empty() || chain_te.empty())
                    throw ConfigurationError("give all three of --mediator-chain, --outcome-chain, --te-chain");
                for (const auto& path : {chain_m, chain_y, chain_te}) fits.push_back(bkmr_fit_from_json(read_json_file(path)));
            } else {
                if (data.path.empty()) throw ConfigurationError("bkmr-cma needs --data or three chain artifacts");
                const LoadedDataset ld = load(data);
                const ModelRole roles[] = {ModelRole::mediator, ModelRole::outcome, ModelRole::total_effect};
                fits.resize(3);
                parallel_for(3, common.workers, [&](std::size_t i) {
                    SeededRng model_rng = rng.substream(1 + i);
                    fits[i] = fit_role(ld.data, roles[i], kernel, model_rng);
                });
                for (const auto& f : fits) artifacts.json_file(std::string("chain-") + to_string(f.role), bkmr_fit_to_json(f));
            }
            const MatrixXd& ex = fits[0].z;
            CmaConfig cfg;
            cfg.alpha = 1.0 - common.level;
            cfg.draws = draws;
            cfg.m_quantiles = m_quantiles;
            cfg.workers = common.workers;
            auto level_vector = [&](const std::vector<double>& given, double q) {
                if (!given.empty()) {
                    if (static_cast<Index>(given.size()) != ex.cols())
                        throw ConfigurationError("--a/--astar need one value per exposure");
                    return VectorXd(Eigen::Map<const VectorXd>(given.data(), static_cast<Index>(given.size())));
                }
                VectorXd v(ex.cols());
                for (Index j = 0; j < ex.cols(); ++j) v(j) = quantile(VectorXd(ex.col(j)), q);
                return v;
            };
            cfg.a = level_vector(a, q_cmp);
            cfg.astar = level_vector(astar, q_ref);
            const PosteriorEffects pe = mediation_bkmr(fits[0], fits[1], fits[2], cfg, rng.substream(10));
            artifacts.csv("effects", posterior_table(pe));
            CsvTable samples;
            samples.header = {"iteration", "te", "nde", "nie"};
            for (std::size_t j = 0; j < pe.m_values.size(); ++j)
                samples.header.push_back("cde_" + std::to_string(j + 1));
            for (Index i = 0; i < pe.te.size(); ++i) {
                std::vector<std::string> row{std::to_string(pe.sel[static_cast<std::size_t>(i)]), format_double(pe.te(i)),
                                             format_double(pe.nde(i)), format_double(pe.nie(i))};
                for (Index j = 0; j < pe.cde.cols(); ++j) row.push_back(format_double(pe.cde(i, j)));
                samples.rows.push_back(std::move(row));
            }
            artifacts.csv("samples", samples);
            json cde = json::array();
            for (Index j = 0; j < pe.cde.cols(); ++j)
                cde.push_back({{"m", pe.m_values[static_cast<std::size_t>(j)]}, {"summary", effect_summary(pe.cde_summary(j))}});
            std::vector<double> av(cfg.a.data(), cfg.a.data() + cfg.a.size());
            std::vector<double> asv(cfg.astar.data(), cfg.astar.data() + cfg.astar.size());
            artifacts.json_file("summary", {{"a", av}, {"astar", asv}, {"draws", draws},
                                            {"te", effect_summary(pe.te_summary())},
                                            {"nde", effect_summary(pe.nde_summary())},
                                            {"nie", effect_summary(pe.nie_summary())}, {"cde", cde}});
        } else if (name == "simulate") {
            StudyConfig sc;
            sc.seed = common.seed;
            sc.workers = common.workers;
            sc.replicates = replicates;
            sc.bkmr_replicates = bkmr_replicates;
            sc.settings.bkmr.iterations = bkmr_iterations;
            sc.truth.reference_rows = truth_rows;
            sc.truth.seed = truth_seed;
            if (!truth_cache.empty()) sc.truth.cache_file = truth_cache;
            for (const auto& m : methods) sc.methods.push_back(parse_sim_method(m));
            for (long n : ns)
                for (double r2 : r2ms) sc.scenarios.push_back(Scenario::standard(n, r2));
            const MetricsReport report = run_study(sc);
            artifacts.csv("records", records_table(report.records));
            artifacts.csv("summary", summary_table(report.summaries));
            artifacts.csv("long", long_metrics_table(report.summaries));
            artifacts.json_file("metrics", metrics_to_json(report));
        } else if (name == "report") {
            const MetricsReport report = metrics_from_json(read_json_file(input));
            artifacts.csv("summary", summary_table(report.summaries));
            artifacts.csv("long", long_metrics_table(report.summaries));
        }
        out << artifacts.finish().dump(2) << "\n";
        return 0;
    } catch (const Error& e) {
        report_error(err, e.name(), kind_name(e.kind()), e.what());
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        report_error(err, "internal_error", "internal", e.what());
        return 1;
    }
}

} // namespace mixmed
