#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "mixmed/bkmr.hpp"
#include "mixmed/dataset.hpp"
#include "mixmed/ersma.hpp"
#include "mixmed/rng.hpp"

namespace mixmed {

/// Linear data-generating process:
///   C ~ N(0, Sigma_C),  X = C Theta + E with E ~ N(0, Sigma_X),
///   M = X alpha_x + C alpha_c + e_M,  Y = beta_m M + X beta_x + C beta_c + e_Y.
/// Noise variances are set so the mediator and outcome models hit r2_m / r2_y.
struct Scenario {
    Index n = 1000;
    double r2_m = 0.4;
    double r2_y = 0.3;
    std::vector<Index> block_sizes{5, 10, 15};
    std::vector<double> block_corr{0.4, 0.8, 0.1};
    Index s = 5;
    double confounder_corr = 0.2;
    double theta = 0.1;  // every entry of Theta (s x p)
    VectorXd alpha_x;
    VectorXd beta_x;
    double beta_m = 0.4;
    VectorXd alpha_c;
    VectorXd beta_c;

    /// 30 exposures; beta_x = 0.3 on exposures 1, 4, 7, ...; alpha_x = (0.3, 0.6, 0.9)
    /// on the first three of every ten; alpha_c = beta_c = 1.
    static Scenario standard(Index n, double r2_m);

    Index p() const;
    MatrixXd exposure_correlation() const;    // block diagonal, zero between blocks
    MatrixXd confounder_correlation() const;
    /// Indices with alpha_x != 0.
    std::vector<Index> active_exposures() const;
    std::string label() const;  // e.g. "n1000_r2m0.4"
    /// Label without n, for quantities that do not depend on sample size.
    std::string population_label() const;
    void validate() const;
};

/// v (1 - R^2) / R^2
double solve_sigma_for_r2(double linpred_variance, double target_r2);

/// Var(X alpha_x + C alpha_c), from the covariance structure.
double mediator_linpred_variance(const Scenario& scenario);
/// Var(beta_m M + X beta_x + C beta_c) given the mediator noise variance.
double outcome_linpred_variance(const Scenario& scenario, double mediator_noise);

struct NoiseVariances {
    double mediator = 1.0;
    double outcome = 1.0;
};

/// A zero linear predictor yields unit noise (pure-noise response).
NoiseVariances noise_variances(const Scenario& scenario);

Dataset generate_dataset(const Scenario& scenario, SeededRng& rng);

enum class SimMethod {
    sema_unadjusted,
    sema_adjusted,
    pcma_first,
    pcma_top3,
    pcma_var80,
    ersma_main,
    bkmr_componentwise,
    bkmr_hierarchical,
};

const char* to_string(SimMethod method);
SimMethod parse_sim_method(const std::string& text);
std::vector<SimMethod> linear_methods();

struct PipelineSettings {
    ErsFitOptions ers;
    KernelConfig bkmr;
    Index bkmr_groups = 3;
    double fdr_level = 0.05;
    std::vector<double> pip_thresholds{0.1, 0.3, 0.5};
};

/// Global NIE for the joint unit shift (0 -> 1 on every exposure or PC); ERS-MA
/// shifts the score from its 25th to its 75th percentile.
double estimate_global_nie(const Dataset& data, SimMethod method, SeededRng& rng,
                           const PipelineSettings& settings = {});

struct TruthOptions {
    Index reference_rows = 100000;
    std::uint64_t seed = 20240611;
    /// Optional JSON file holding previously computed truths.
    std::optional<std::filesystem::path> cache_file;
};

/// Thread-safe memo of large-sample truths keyed by population, method and settings.
class TruthCache {
public:
    explicit TruthCache(TruthOptions options = {});
    double get(const Scenario& scenario, SimMethod method, const PipelineSettings& settings);
    const TruthOptions& options() const { return options_; }

private:
    std::string key(const Scenario& scenario, SimMethod method, const PipelineSettings& settings) const;
    void load();
    void save() const;

    TruthOptions options_;
    std::map<std::string, double> values_;
    std::mutex mutex_;
};

/// beta_m * sum(alpha_x) for the SE-MA methods; otherwise the pipeline's
/// estimate on one reference dataset of `reference_rows` rows.
double true_global_nie(const Scenario& scenario, SimMethod method, const TruthOptions& options = {},
                       const PipelineSettings& settings = {});

struct ReplicateRecord {
    std::string scenario;
    std::string method;  // BKMR rows carry the PIP threshold, e.g. bkmr_componentwise@0.5
    Index replicate = 0;
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;  // replicate stream under `seed`
    bool ok = true;
    std::string error;
    double estimate = std::numeric_limits<double>::quiet_NaN();
    double truth = std::numeric_limits<double>::quiet_NaN();
    double relative_bias = std::numeric_limits<double>::quiet_NaN();  // percent, signed
    double tpr = std::numeric_limits<double>::quiet_NaN();
    double fpr = std::numeric_limits<double>::quiet_NaN();
};

struct MethodSummary {
    std::string scenario;
    std::string method;
    Index replicates = 0;
    Index excluded = 0;
    double relative_bias_mean = std::numeric_limits<double>::quiet_NaN();  // signed
    double relative_bias_sd = std::numeric_limits<double>::quiet_NaN();
    double mean_absolute_relative_bias = std::numeric_limits<double>::quiet_NaN();
    double tpr_mean = std::numeric_limits<double>::quiet_NaN();
    double tpr_sd = std::numeric_limits<double>::quiet_NaN();
    double fpr_mean = std::numeric_limits<double>::quiet_NaN();
    double fpr_sd = std::numeric_limits<double>::quiet_NaN();
};

struct MetricsReport {
    std::vector<ReplicateRecord> records;  // ordered by scenario, method, replicate
    std::vector<MethodSummary> summaries;
    std::uint64_t seed = 0;

    const MethodSummary* find(const std::string& scenario, const std::string& method) const;
};

struct StudyConfig {
    std::vector<Scenario> scenarios;
    std::vector<SimMethod> methods;
    Index replicates = 20;
    Index bkmr_replicates = 2;
    std::uint64_t seed = 1;
    int workers = 1;
    PipelineSettings settings;
    TruthOptions truth;
};

/// The four standard scenarios: n in {1000, 2500} x R^2_M in {0.1, 0.4}.
std::vector<Scenario> standard_scenarios();

MetricsReport run_study(const StudyConfig& config);

/// Runs one (scenario, replicate) cell for every configured method; the
/// records equal the corresponding rows of run_study.
std::vector<ReplicateRecord> run_replicate(const StudyConfig& config, Index scenario_index,
                                           Index replicate, TruthCache& truths);

/// Mean and sd of per-replicate values, excluding failed replicates.
std::vector<MethodSummary> summarize(const std::vector<ReplicateRecord>& records);

} // namespace mixmed
