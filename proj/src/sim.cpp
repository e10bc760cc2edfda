#include "mixmed/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mixmed/error.hpp"
#include "mixmed/mediation.hpp"
#include "mixmed/parallel.hpp"
#include "mixmed/pcma.hpp"

namespace mixmed {

namespace {

std::string format_number(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

MatrixXd lower_cholesky(const MatrixXd& sigma, const char* what) {
    Eigen::LLT<MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) throw DomainError(std::string(what) + " is not positive definite");
    return llt.matrixL();
}

MatrixXd standard_normal_matrix(Index rows, Index cols, SeededRng& rng) {
    MatrixXd z(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) z(i, j) = rng.normal();
    return z;
}

} // namespace

Scenario Scenario::standard(Index n, double r2_m) {
    Scenario s;
    s.n = n;
    s.r2_m = r2_m;
    const Index p = 30;
    s.alpha_x = VectorXd::Zero(p);
    s.beta_x = VectorXd::Zero(p);
    for (Index j = 0; j < p; j += 3) s.beta_x(j) = 0.3;
    for (Index j = 0; j < p; j += 10) {
        s.alpha_x(j) = 0.3;
        s.alpha_x(j + 1) = 0.6;
        s.alpha_x(j + 2) = 0.9;
    }
    s.alpha_c = VectorXd::Ones(s.s);
    s.beta_c = VectorXd::Ones(s.s);
    return s;
}

Index Scenario::p() const {
    Index p = 0;
    for (Index b : block_sizes) p += b;
    return p;
}

MatrixXd Scenario::exposure_correlation() const {
    const Index dim = p();
    MatrixXd r = MatrixXd::Zero(dim, dim);
    Index start = 0;
    for (std::size_t b = 0; b < block_sizes.size(); ++b) {
        const Index size = block_sizes[b];
        r.block(start, start, size, size).setConstant(block_corr[b]);
        start += size;
    }
    r.diagonal().setOnes();
    return r;
}

MatrixXd Scenario::confounder_correlation() const {
    MatrixXd r = MatrixXd::Constant(s, s, confounder_corr);
    r.diagonal().setOnes();
    return r;
}

std::vector<Index> Scenario::active_exposures() const {
    std::vector<Index> out;
    for (Index j = 0; j < alpha_x.size(); ++j)
        if (alpha_x(j) != 0.0) out.push_back(j);
    return out;
}

std::string Scenario::label() const { return "n" + std::to_string(n) + "_" + population_label(); }

std::string Scenario::population_label() const {
    std::string out = "r2m" + format_number(r2_m);
    if (r2_y != 0.3) out += "_r2y" + format_number(r2_y);
    return out;
}

void Scenario::validate() const {
    if (n < 4) throw DomainError("scenario needs n >= 4");
    if (!(r2_m > 0.0 && r2_m < 1.0) || !(r2_y > 0.0 && r2_y < 1.0))
        throw DomainError("target R^2 values must lie in (0,1)");
    if (block_sizes.size() != block_corr.size() || block_sizes.empty())
        throw DomainError("block sizes and correlations must pair up");
    for (std::size_t b = 0; b < block_sizes.size(); ++b) {
        if (block_sizes[b] < 1) throw DomainError("empty exposure block");
        const double lo = -1.0 / static_cast<double>(std::max<Index>(block_sizes[b] - 1, 1));
        if (!(block_corr[b] > lo && block_corr[b] < 1.0))
            throw DomainError("block correlation makes the block singular");
    }
    const Index dim = p();
    if (alpha_x.size() != dim || beta_x.size() != dim)
        throw DomainError("exposure coefficient vectors must have length p");
    if (s < 0 || alpha_c.size() != s || beta_c.size() != s)
        throw DomainError("confounder coefficient vectors must have length s");
    if (s > 1 && !(confounder_corr > -1.0 / static_cast<double>(s - 1) && confounder_corr < 1.0))
        throw DomainError("confounder correlation makes Sigma_C singular");
}

double solve_sigma_for_r2(double linpred_variance, double target_r2) {
    if (!(linpred_variance > 0.0)) throw DomainError("linear-predictor variance must be positive");
    if (!(target_r2 > 0.0 && target_r2 < 1.0)) throw DomainError("target R^2 must lie in (0,1)");
    return linpred_variance * (1.0 - target_r2) / target_r2;
}

namespace {

// Splits a linear predictor a'X + b'C into its C-loading and E-loading.
double linpred_variance(const Scenario& sc, const VectorXd& on_x, const VectorXd& on_c) {
    const MatrixXd theta = MatrixXd::Constant(sc.s, sc.p(), sc.theta);
    const VectorXd g = theta * on_x + on_c;
    return g.dot(sc.confounder_correlation() * g) + on_x.dot(sc.exposure_correlation() * on_x);
}

} // namespace

double mediator_linpred_variance(const Scenario& sc) {
    return linpred_variance(sc, sc.alpha_x, sc.alpha_c);
}

double outcome_linpred_variance(const Scenario& sc, double mediator_noise) {
    const VectorXd on_x = sc.beta_m * sc.alpha_x + sc.beta_x;
    const VectorXd on_c = sc.beta_m * sc.alpha_c + sc.beta_c;
    return linpred_variance(sc, on_x, on_c) + sc.beta_m * sc.beta_m * mediator_noise;
}

NoiseVariances noise_variances(const Scenario& sc) {
    NoiseVariances v;
    const double vm = mediator_linpred_variance(sc);
    v.mediator = vm > 0.0 ? solve_sigma_for_r2(vm, sc.r2_m) : 1.0;
    const double vy = outcome_linpred_variance(sc, v.mediator);
    v.outcome = vy > 0.0 ? solve_sigma_for_r2(vy, sc.r2_y) : 1.0;
    return v;
}

Dataset generate_dataset(const Scenario& sc, SeededRng& rng) {
    sc.validate();
    const Index n = sc.n, p = sc.p(), s = sc.s;
    const NoiseVariances noise = noise_variances(sc);

    MatrixXd c(n, s);
    if (s > 0) c = standard_normal_matrix(n, s, rng) * lower_cholesky(sc.confounder_correlation(), "Sigma_C").transpose();
    const MatrixXd e = standard_normal_matrix(n, p, rng) *
                       lower_cholesky(sc.exposure_correlation(), "Sigma_X").transpose();
    MatrixXd x = e;
    if (s > 0) x += c * MatrixXd::Constant(s, p, sc.theta);

    VectorXd m = x * sc.alpha_x;
    if (s > 0) m += c * sc.alpha_c;
    const double sd_m = std::sqrt(noise.mediator);
    for (Index i = 0; i < n; ++i) m(i) += sd_m * rng.normal();

    VectorXd y = sc.beta_m * m + x * sc.beta_x;
    if (s > 0) y += c * sc.beta_c;
    const double sd_y = std::sqrt(noise.outcome);
    for (Index i = 0; i < n; ++i) y(i) += sd_y * rng.normal();

    return make_dataset(std::move(x), std::move(m), std::move(y), std::move(c));
}

const char* to_string(SimMethod method) {
    switch (method) {
    case SimMethod::sema_unadjusted: return "sema_unadjusted";
    case SimMethod::sema_adjusted: return "sema_adjusted";
    case SimMethod::pcma_first: return "pcma_first";
    case SimMethod::pcma_top3: return "pcma_top3";
    case SimMethod::pcma_var80: return "pcma_var80";
    case SimMethod::ersma_main: return "ersma_main";
    case SimMethod::bkmr_componentwise: return "bkmr_componentwise";
    case SimMethod::bkmr_hierarchical: return "bkmr_hierarchical";
    }
    return "unknown";
}

SimMethod parse_sim_method(const std::string& text) {
    for (SimMethod m : {SimMethod::sema_unadjusted, SimMethod::sema_adjusted, SimMethod::pcma_first,
                        SimMethod::pcma_top3, SimMethod::pcma_var80, SimMethod::ersma_main,
                        SimMethod::bkmr_componentwise, SimMethod::bkmr_hierarchical})
        if (text == to_string(m)) return m;
    throw ConfigurationError("unknown simulation method '" + text + "'");
}

std::vector<SimMethod> linear_methods() {
    return {SimMethod::sema_unadjusted, SimMethod::sema_adjusted, SimMethod::pcma_first,
            SimMethod::pcma_top3, SimMethod::pcma_var80, SimMethod::ersma_main};
}

namespace {

bool is_sema(SimMethod m) { return m == SimMethod::sema_unadjusted || m == SimMethod::sema_adjusted; }
bool is_bkmr(SimMethod m) {
    return m == SimMethod::bkmr_componentwise || m == SimMethod::bkmr_hierarchical;
}

SemaResult run_sema(const Dataset& data, SimMethod method, const PipelineSettings& settings) {
    SemaOptions o;
    o.adjust_coexposures = method == SimMethod::sema_adjusted;
    o.fdr_level = settings.fdr_level;
    return sema(data, o);
}

} // namespace

double estimate_global_nie(const Dataset& data, SimMethod method, SeededRng& rng,
                           const PipelineSettings& settings) {
    switch (method) {
    case SimMethod::sema_unadjusted:
    case SimMethod::sema_adjusted:
        return run_sema(data, method, settings).global_nie.estimate;
    case SimMethod::pcma_first:
    case SimMethod::pcma_top3:
    case SimMethod::pcma_var80: {
        PcmaOptions o;
        o.rule = method == SimMethod::pcma_first  ? RetentionRule::first(1)
                 : method == SimMethod::pcma_top3 ? RetentionRule::first(std::min<Index>(3, data.p()))
                                                  : RetentionRule::cumulative(0.8);
        return pcma(data, o).global_nie.estimate;
    }
    case SimMethod::ersma_main: {
        ErsmaOptions o;
        o.fit = settings.ers;
        o.fit.spec = FeatureSpec::main_only;
        // Default contrast: 25th -> 75th percentile of the analysis-split scores.
        return ersma(data, rng, o).effects.nie.estimate;
    }
    case SimMethod::bkmr_componentwise:
    case SimMethod::bkmr_hierarchical:
        break;
    }
    throw ConfigurationError(std::string(to_string(method)) + " does not produce a global NIE estimate");
}

double true_global_nie(const Scenario& scenario, SimMethod method, const TruthOptions& options,
                       const PipelineSettings& settings) {
    if (is_sema(method)) return scenario.beta_m * scenario.alpha_x.sum();
    if (is_bkmr(method)) throw ConfigurationError("no global NIE truth for BKMR selection methods");
    if (scenario.alpha_x.isZero(0.0) || scenario.beta_m == 0.0) return 0.0;
    Scenario reference = scenario;
    reference.n = options.reference_rows;
    SeededRng rng(options.seed, 0);
    SeededRng data_rng = rng.substream(1);
    SeededRng method_rng = rng.substream(2);
    const Dataset data = generate_dataset(reference, data_rng);
    return estimate_global_nie(data, method, method_rng, settings);
}

TruthCache::TruthCache(TruthOptions options) : options_(std::move(options)) { load(); }

std::string TruthCache::key(const Scenario& scenario, SimMethod method,
                            const PipelineSettings& settings) const {
    std::string k = scenario.population_label() + "|" + to_string(method) + "|rows" +
                    std::to_string(options_.reference_rows) + "|seed" + std::to_string(options_.seed);
    if (method == SimMethod::ersma_main)
        k += "|iqr|l2grid" + std::to_string(settings.ers.cv.lambda2_grid.size()) + "|path" +
             std::to_string(settings.ers.cv.path_length) + "|folds" + std::to_string(settings.ers.cv.folds);
    return k;
}

double TruthCache::get(const Scenario& scenario, SimMethod method, const PipelineSettings& settings) {
    if (is_sema(method)) return true_global_nie(scenario, method, options_, settings);
    const std::string k = key(scenario, method, settings);
    std::lock_guard<std::mutex> lock(mutex_);
    if (auto it = values_.find(k); it != values_.end()) return it->second;
    const double v = true_global_nie(scenario, method, options_, settings);
    values_[k] = v;
    save();
    return v;
}

void TruthCache::load() {
    if (!options_.cache_file || !std::filesystem::exists(*options_.cache_file)) return;
    std::ifstream in(*options_.cache_file);
    try {
        const auto j = nlohmann::json::parse(in);
        for (auto it = j.begin(); it != j.end(); ++it) values_[it.key()] = it.value().get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("truth cache " + options_.cache_file->string() + ": " + e.what());
    }
}

void TruthCache::save() const {
    if (!options_.cache_file) return;
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : values_) j[k] = v;
    std::ofstream out(*options_.cache_file);
    out << j.dump(2) << "\n";
}

const MethodSummary* MetricsReport::find(const std::string& scenario, const std::string& method) const {
    for (const auto& s : summaries)
        if (s.scenario == scenario && s.method == method) return &s;
    return nullptr;
}

std::vector<Scenario> standard_scenarios() {
    std::vector<Scenario> out;
    for (Index n : {Index{1000}, Index{2500}})
        for (double r2 : {0.1, 0.4}) out.push_back(Scenario::standard(n, r2));
    return out;
}

namespace {

std::uint64_t replicate_stream(Index scenario_index, Index replicate) {
    return static_cast<std::uint64_t>(scenario_index) * 1000003ULL + static_cast<std::uint64_t>(replicate);
}

void flag_rates(const std::vector<bool>& flagged, const Scenario& sc, ReplicateRecord& rec) {
    const auto active = sc.active_exposures();
    std::vector<bool> is_active(static_cast<std::size_t>(sc.p()), false);
    for (Index j : active) is_active[static_cast<std::size_t>(j)] = true;
    double tp = 0.0, fp = 0.0;
    for (std::size_t j = 0; j < flagged.size(); ++j) {
        if (!flagged[j]) continue;
        if (is_active[j]) tp += 1.0; else fp += 1.0;
    }
    const double na = static_cast<double>(active.size());
    const double nn = static_cast<double>(sc.p()) - na;
    rec.tpr = na > 0 ? tp / na : std::numeric_limits<double>::quiet_NaN();
    rec.fpr = nn > 0 ? fp / nn : std::numeric_limits<double>::quiet_NaN();
}

void set_bias(ReplicateRecord& rec) {
    rec.relative_bias = rec.truth != 0.0 ? 100.0 * (rec.estimate - rec.truth) / rec.truth
                                         : std::numeric_limits<double>::quiet_NaN();
}

std::string threshold_label(SimMethod m, double t) {
    std::ostringstream os;
    os << to_string(m) << "@" << t;
    return os.str();
}

} // namespace

std::vector<ReplicateRecord> run_replicate(const StudyConfig& config, Index scenario_index,
                                           Index replicate, TruthCache& truths) {
    const Scenario& sc = config.scenarios.at(static_cast<std::size_t>(scenario_index));
    const std::uint64_t stream = replicate_stream(scenario_index, replicate);
    const SeededRng root(config.seed, stream);
    SeededRng data_rng = root.substream(0);
    const Dataset data = generate_dataset(sc, data_rng);

    std::vector<ReplicateRecord> out;
    for (std::size_t mi = 0; mi < config.methods.size(); ++mi) {
        const SimMethod method = config.methods[mi];
        if (is_bkmr(method) && replicate >= config.bkmr_replicates) continue;
        SeededRng method_rng = root.substream(100 + static_cast<std::uint64_t>(method));
        ReplicateRecord base;
        base.scenario = sc.label();
        base.method = to_string(method);
        base.replicate = replicate;
        base.seed = config.seed;
        base.stream = stream;
        try {
            if (is_sema(method)) {
                const SemaResult r = run_sema(data, method, config.settings);
                base.estimate = r.global_nie.estimate;
                base.truth = truths.get(sc, method, config.settings);
                set_bias(base);
                flag_rates(r.active, sc, base);
                out.push_back(base);
            } else if (is_bkmr(method)) {
                KernelConfig kc = config.settings.bkmr;
                if (method == SimMethod::bkmr_hierarchical) {
                    kc.selection = SelectionMode::hierarchical;
                    const MatrixXd corr = standardize(data.exposures).values.transpose() *
                                          standardize(data.exposures).values /
                                          static_cast<double>(data.n() - 1);
                    MatrixXd cc = corr;
                    cc.diagonal().setOnes();
                    cc = 0.5 * (cc + cc.transpose()).eval();
                    kc.groups = cluster_groups(cc, std::min<Index>(config.settings.bkmr_groups, data.p()));
                } else {
                    kc.selection = SelectionMode::componentwise;
                }
                const BkmrFit fit = kmbayes(data.mediator, data.exposures, data.confounders, kc,
                                            method_rng, ModelRole::mediator);
                const Pips pips = extract_pips(fit);
                for (double t : config.settings.pip_thresholds) {
                    ReplicateRecord rec = base;
                    rec.method = threshold_label(method, t);
                    std::vector<bool> flagged;
                    for (Index j = 0; j < pips.component.size(); ++j) flagged.push_back(pips.component(j) >= t);
                    flag_rates(flagged, sc, rec);
                    out.push_back(rec);
                }
            } else {
                base.estimate = estimate_global_nie(data, method, method_rng, config.settings);
                base.truth = truths.get(sc, method, config.settings);
                set_bias(base);
                out.push_back(base);
            }
        } catch (const Error& e) {
            if (is_bkmr(method)) {
                for (double t : config.settings.pip_thresholds) {
                    ReplicateRecord rec = base;
                    rec.method = threshold_label(method, t);
                    rec.ok = false;
                    rec.error = e.what();
                    out.push_back(rec);
                }
            } else {
                base.ok = false;
                base.error = e.what();
                out.push_back(base);
            }
        }
    }
    return out;
}

std::vector<MethodSummary> summarize(const std::vector<ReplicateRecord>& records) {
    std::vector<MethodSummary> out;
    auto stats = [](const std::vector<double>& v, double& mean, double& sd) {
        if (v.empty()) return;
        mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        if (v.size() < 2) {
            sd = std::numeric_limits<double>::quiet_NaN();
            return;
        }
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    };
    std::vector<std::pair<std::string, std::string>> keys;
    for (const auto& r : records) {
        const auto k = std::make_pair(r.scenario, r.method);
        if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
    }
    for (const auto& [scenario, method] : keys) {
        MethodSummary s;
        s.scenario = scenario;
        s.method = method;
        std::vector<double> bias, abs_bias, tpr, fpr;
        for (const auto& r : records) {
            if (r.scenario != scenario || r.method != method) continue;
            if (!r.ok) {
                ++s.excluded;
                continue;
            }
            ++s.replicates;
            if (std::isfinite(r.relative_bias)) {
                bias.push_back(r.relative_bias);
                abs_bias.push_back(std::abs(r.relative_bias));
            }
            if (std::isfinite(r.tpr)) tpr.push_back(r.tpr);
            if (std::isfinite(r.fpr)) fpr.push_back(r.fpr);
        }
        double unused = 0.0;
        stats(bias, s.relative_bias_mean, s.relative_bias_sd);
        stats(abs_bias, s.mean_absolute_relative_bias, unused);
        stats(tpr, s.tpr_mean, s.tpr_sd);
        stats(fpr, s.fpr_mean, s.fpr_sd);
        out.push_back(s);
    }
    return out;
}

MetricsReport run_study(const StudyConfig& config) {
    if (config.replicates < 1) throw DomainError("at least one replicate is required");
    if (config.scenarios.empty() || config.methods.empty())
        throw ConfigurationError("study needs at least one scenario and one method");
    for (const auto& sc : config.scenarios) sc.validate();

    TruthCache truths(config.truth);
    // Truths first so replicate workers only read the cache.
    for (const auto& sc : config.scenarios)
        for (SimMethod m : config.methods)
            if (!is_bkmr(m)) truths.get(sc, m, config.settings);

    const std::size_t ns = config.scenarios.size();
    const auto nr = static_cast<std::size_t>(config.replicates);
    std::vector<std::vector<ReplicateRecord>> cells(ns * nr);
    parallel_for(cells.size(), config.workers, [&](std::size_t i) {
        cells[i] = run_replicate(config, static_cast<Index>(i / nr), static_cast<Index>(i % nr), truths);
    });

    MetricsReport report;
    report.seed = config.seed;
    for (std::size_t s = 0; s < ns; ++s) {
        std::vector<std::string> methods;
        for (std::size_t r = 0; r < nr; ++r)
            for (const auto& rec : cells[s * nr + r])
                if (std::find(methods.begin(), methods.end(), rec.method) == methods.end())
                    methods.push_back(rec.method);
        for (const auto& m : methods)
            for (std::size_t r = 0; r < nr; ++r)
                for (const auto& rec : cells[s * nr + r])
                    if (rec.method == m) report.records.push_back(rec);
    }
    report.summaries = summarize(report.records);
    return report;
}

} // namespace mixmed
