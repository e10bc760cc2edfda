#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mixmed/dataset.hpp"
#include "mixmed/elastic_net.hpp"
#include "mixmed/mediation.hpp"
#include "mixmed/rng.hpp"

namespace mixmed {

enum class FeatureSpec { main_only, higher_order };

const char* to_string(FeatureSpec spec);
FeatureSpec parse_feature_spec(const std::string& text);

/// One score term: X_first (main) or X_first * X_second (square when equal).
struct FeatureTerm {
    Index first = 0;
    Index second = -1;  // -1 for a main effect

    bool is_main() const { return second < 0; }
    std::string name(const std::vector<std::string>& exposure_names) const;
};

/// Main effects, then squares, then pairwise products (k < l) for higher_order.
std::vector<FeatureTerm> feature_terms(Index p, FeatureSpec spec);

/// Evaluates the terms on (already standardized) exposures.
MatrixXd build_features(const MatrixXd& standardized_exposures, const std::vector<FeatureTerm>& terms);

/// Fitted score. Coefficients act on products of exposures standardized with
/// the training means/sds, so ERS = sum_t coefficients[t] * term_t(x_std).
struct ErsModel {
    FeatureSpec spec = FeatureSpec::main_only;
    std::vector<FeatureTerm> terms;
    VectorXd coefficients;
    VectorXd confounder_coefficients;  // on standardized confounders, not part of the score
    double intercept = 0.0;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    double cv_error = 0.0;
    int relaxation_steps = 0;
    VectorXd exposure_means;
    VectorXd exposure_sds;
    std::vector<std::string> exposure_names;
    std::vector<std::size_t> train_rows;
    std::uint64_t seed = 0;

    std::vector<std::string> selected_features() const;
    /// Distinct exposures appearing in any term with a nonzero coefficient.
    Index selected_exposure_count() const;
};

/// Scores raw exposure rows. Throws ConfigurationError if `spec` differs from
/// the model's or the column count is wrong.
VectorXd build_ers(const ErsModel& model, const MatrixXd& exposures, FeatureSpec spec);

struct ErsFitOptions {
    FeatureSpec spec = FeatureSpec::main_only;
    CvOptions cv;
    Index min_exposures = 3;  // capped at p
    double relax_factor = 0.9;
    int max_relax_steps = 200;
};

/// Tunes (lambda1, lambda2) by CV and fits on `train`; lambda1 is then
/// shrunk by relax_factor until at least min(min_exposures, p) exposures are selected.
ErsModel fit_ers(const Dataset& train, SeededRng& rng, const ErsFitOptions& options = {});

struct ErsmaOptions {
    ErsFitOptions fit;
    double level = 0.95;
    /// Scalar ERS levels (reference, comparative). Unset means the 25th -> 75th
    /// percentile of the analysis-split scores.
    std::optional<Contrast> contrast;
    /// Raw exposure profiles (length p each) scored through the model to give
    /// the ERS levels. Takes precedence over `contrast`.
    std::optional<Contrast> exposure_profiles;
};

struct ErsmaResult {
    ErsModel model;
    VectorXd scores;  // analysis split
    std::vector<std::size_t> analysis_rows;
    MediationEffects effects;
};

/// Split, fit on the training half, score the analysis half and run the
/// product method with the score as the single exposure.
ErsmaResult ersma(const Dataset& data, SeededRng& rng, const ErsmaOptions& options = {});

} // namespace mixmed
