#include "mixmed/ersma.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "mixmed/error.hpp"

namespace mixmed {

const char* to_string(FeatureSpec spec) {
    return spec == FeatureSpec::main_only ? "main_only" : "higher_order";
}

FeatureSpec parse_feature_spec(const std::string& text) {
    if (text == "main_only" || text == "main") return FeatureSpec::main_only;
    if (text == "higher_order" || text == "main+squares+pairwise") return FeatureSpec::higher_order;
    throw ConfigurationError("unknown feature spec '" + text + "' (main_only | higher_order)");
}

std::string FeatureTerm::name(const std::vector<std::string>& exposure_names) const {
    auto label = [&](Index j) {
        return static_cast<std::size_t>(j) < exposure_names.size()
                   ? exposure_names[static_cast<std::size_t>(j)]
                   : "X" + std::to_string(j + 1);
    };
    if (is_main()) return label(first);
    if (first == second) return label(first) + "^2";
    return label(first) + "*" + label(second);
}

std::vector<FeatureTerm> feature_terms(Index p, FeatureSpec spec) {
    std::vector<FeatureTerm> terms;
    for (Index j = 0; j < p; ++j) terms.push_back({j, -1});
    if (spec == FeatureSpec::higher_order) {
        for (Index j = 0; j < p; ++j) terms.push_back({j, j});
        for (Index k = 0; k < p; ++k)
            for (Index l = k + 1; l < p; ++l) terms.push_back({k, l});
    }
    return terms;
}

MatrixXd build_features(const MatrixXd& x, const std::vector<FeatureTerm>& terms) {
    MatrixXd f(x.rows(), static_cast<Index>(terms.size()));
    for (std::size_t t = 0; t < terms.size(); ++t) {
        const auto& term = terms[t];
        if (term.first < 0 || term.first >= x.cols() || term.second >= x.cols())
            throw DomainError("feature term refers to a missing exposure");
        if (term.is_main())
            f.col(static_cast<Index>(t)) = x.col(term.first);
        else
            f.col(static_cast<Index>(t)) = x.col(term.first).cwiseProduct(x.col(term.second));
    }
    return f;
}

std::vector<std::string> ErsModel::selected_features() const {
    std::vector<std::string> out;
    for (std::size_t t = 0; t < terms.size(); ++t)
        if (coefficients(static_cast<Index>(t)) != 0.0) out.push_back(terms[t].name(exposure_names));
    return out;
}

Index ErsModel::selected_exposure_count() const {
    std::set<Index> used;
    for (std::size_t t = 0; t < terms.size(); ++t) {
        if (coefficients(static_cast<Index>(t)) == 0.0) continue;
        used.insert(terms[t].first);
        if (!terms[t].is_main()) used.insert(terms[t].second);
    }
    return static_cast<Index>(used.size());
}

VectorXd build_ers(const ErsModel& model, const MatrixXd& exposures, FeatureSpec spec) {
    if (spec != model.spec)
        throw ConfigurationError(std::string("feature spec ") + to_string(spec) +
                                 " does not match the model's " + to_string(model.spec));
    if (exposures.cols() != model.exposure_means.size())
        throw ConfigurationError("exposure matrix has " + std::to_string(exposures.cols()) +
                                 " columns, model expects " +
                                 std::to_string(model.exposure_means.size()));
    const MatrixXd x = apply_standardization(exposures, model.exposure_means, model.exposure_sds);
    return build_features(x, model.terms) * model.coefficients;
}

namespace {

// Standardizes columns; zero-variance columns become all-zero with sd 0.
Standardized standardize_lenient(const MatrixXd& m) {
    const Index n = m.rows();
    Standardized out;
    out.means = m.colwise().mean().transpose();
    out.values = m.rowwise() - out.means.transpose();
    out.sds = VectorXd::Zero(m.cols());
    for (Index j = 0; j < m.cols(); ++j) {
        const double sd = std::sqrt(out.values.col(j).squaredNorm() / static_cast<double>(n - 1));
        if (sd > 1e-12 * std::max(1.0, std::abs(out.means(j)))) {
            out.sds(j) = sd;
            out.values.col(j) /= sd;
        } else {
            out.values.col(j).setZero();
        }
    }
    return out;
}

} // namespace

ErsModel fit_ers(const Dataset& train, SeededRng& rng, const ErsFitOptions& options) {
    const Index p = train.p();
    if (p < 1) throw DomainError("ERS needs at least one exposure");
    if (!(options.relax_factor > 0.0 && options.relax_factor < 1.0))
        throw DomainError("relax_factor must lie in (0,1)");

    ErsModel model;
    model.spec = options.spec;
    model.terms = feature_terms(p, options.spec);
    model.exposure_names = train.exposure_names;
    model.train_rows = train.row_ids;
    model.seed = rng.seed();

    const Standardized xs = standardize(train.exposures, train.exposure_names);
    model.exposure_means = xs.means;
    model.exposure_sds = xs.sds;

    const MatrixXd features = build_features(xs.values, model.terms);
    std::vector<std::string> feature_names;
    for (const auto& t : model.terms) feature_names.push_back(t.name(model.exposure_names));
    const Standardized fs = standardize(features, feature_names);
    const Standardized cs = standardize_lenient(train.confounders);

    const Index nf = fs.values.cols();
    const Index nc = cs.values.cols();
    MatrixXd z(train.n(), nf + nc);
    z.leftCols(nf) = fs.values;
    z.rightCols(nc) = cs.values;
    std::vector<double> pf(static_cast<std::size_t>(nf + nc), 0.0);
    std::fill(pf.begin(), pf.begin() + nf, 1.0);

    const CvResult cv = cv_tune(z, train.outcome, pf, rng, options.cv);
    model.lambda2 = cv.lambda2;
    model.cv_error = cv.cv_error;

    const GramSystem system = GramSystem::from_data(z, train.outcome);
    const Index needed = std::min(options.min_exposures, p);
    double lambda1 = cv.lambda1;
    ElasticNetFit fit = elastic_net(system, lambda1, cv.lambda2, pf, options.cv.solver);
    auto exposures_selected = [&](const VectorXd& beta) {
        std::set<Index> used;
        for (Index t = 0; t < nf; ++t) {
            if (beta(t) == 0.0) continue;
            const auto& term = model.terms[static_cast<std::size_t>(t)];
            used.insert(term.first);
            if (!term.is_main()) used.insert(term.second);
        }
        return static_cast<Index>(used.size());
    };
    int steps = 0;
    while (exposures_selected(fit.beta) < needed) {
        if (steps == options.max_relax_steps)
            throw ConvergenceError("fewer than " + std::to_string(needed) +
                                   " exposures selected after " + std::to_string(steps) +
                                   " lambda1 reductions");
        lambda1 *= options.relax_factor;
        ++steps;
        fit = elastic_net(system, lambda1, cv.lambda2, pf, options.cv.solver, &fit.beta);
    }
    model.lambda1 = lambda1;
    model.relaxation_steps = steps;

    model.coefficients.resize(nf);
    for (Index t = 0; t < nf; ++t) model.coefficients(t) = fit.beta(t) / fs.sds(t);
    model.confounder_coefficients = fit.beta.tail(nc);
    model.intercept = fit.intercept;
    return model;
}

ErsmaResult ersma(const Dataset& data, SeededRng& rng, const ErsmaOptions& options) {
    if (data.n() < 4) throw InsufficientDataError("ersma needs at least 4 rows");
    SeededRng split_rng = rng.substream(1);
    SeededRng cv_rng = rng.substream(2);
    const Split split = split_train_analysis(data, split_rng);

    ErsmaResult result;
    result.model = fit_ers(split.train, cv_rng, options.fit);
    result.model.seed = rng.seed();
    result.analysis_rows = split.analysis_rows;
    result.scores = build_ers(result.model, split.analysis.exposures, options.fit.spec);

    const Index na = result.scores.size();
    const double mean = result.scores.mean();
    const double var = (result.scores.array() - mean).square().sum() / static_cast<double>(na - 1);
    if (!(var > 1e-24 * std::max(1.0, mean * mean)))
        throw DegenerateColumnError("ERS has zero variance on the analysis split");

    Contrast contrast;
    if (options.exposure_profiles) {
        options.exposure_profiles->require_dim(data.p());
        MatrixXd rows(2, data.p());
        rows.row(0) = options.exposure_profiles->reference.transpose();
        rows.row(1) = options.exposure_profiles->comparative.transpose();
        const VectorXd levels = build_ers(result.model, rows, options.fit.spec);
        contrast = Contrast::scalar(levels(0), levels(1));
    } else if (options.contrast) {
        options.contrast->require_dim(1);
        contrast = *options.contrast;
    } else {
        contrast = Contrast::scalar(quantile(result.scores, 0.25), quantile(result.scores, 0.75));
    }

    result.effects = product_mediation(result.scores, split.analysis.confounders,
                                       split.analysis.mediator, split.analysis.outcome, contrast,
                                       {options.level});
    result.effects.exposure = "ERS";
    result.effects.method = "ersma";
    return result;
}

} // namespace mixmed
