#include "mixmed/serialize.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>

#include "mixmed/error.hpp"

namespace mixmed {

std::string format_double(double value) {
    if (std::isnan(value)) return "NA";
    if (std::isinf(value)) return value > 0 ? "Inf" : "-Inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string content_hash12(std::string_view bytes) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(bytes)));
    return std::string(buf, 12);
}

namespace {

std::string csv_cell(const std::string& cell) {
    if (cell.find_first_of(",\"\n\r") == std::string::npos) return cell;
    std::string out = "\"";
    for (char c : cell) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

json vec_to_json(const VectorXd& v) {
    json j = json::array();
    for (Index i = 0; i < v.size(); ++i) j.push_back(v(i));
    return j;
}

VectorXd json_to_vec(const json& j) {
    VectorXd v(static_cast<Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i)
        v(static_cast<Index>(i)) = j[i].is_null() ? std::numeric_limits<double>::quiet_NaN() : j[i].get<double>();
    return v;
}

template <class Matrix>
json mat_to_json(const Matrix& m) {
    json j = json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
        j.push_back(std::move(row));
    }
    return j;
}

template <class Matrix>
Matrix json_to_mat(const json& j, Index cols) {
    Matrix m(static_cast<Index>(j.size()), cols);
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (static_cast<Index>(j[i].size()) != cols) throw ParseError("ragged matrix in artifact");
        for (Index k = 0; k < cols; ++k)
            m(static_cast<Index>(i), k) = j[i][static_cast<std::size_t>(k)].get<typename Matrix::Scalar>();
    }
    return m;
}

double json_double(const json& j) {
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

json acceptance_to_json(const Acceptance& a) { return {{"proposed", a.proposed}, {"accepted", a.accepted}}; }
Acceptance acceptance_from_json(const json& j) {
    Acceptance a;
    a.proposed = j.at("proposed").get<std::size_t>();
    a.accepted = j.at("accepted").get<std::size_t>();
    return a;
}

} // namespace

std::string CsvTable::str() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out += ',';
            out += csv_cell(cells[i]);
        }
        out += '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return out;
}

json to_json(const Effect& e) {
    return {{"estimate", e.estimate}, {"se", e.se}, {"ci_lo", e.ci_lo}, {"ci_hi", e.ci_hi}, {"p", e.p}};
}

json to_json(const MediationEffects& e) {
    return {{"exposure", e.exposure},
            {"method", e.method},
            {"reference", vec_to_json(e.contrast.reference)},
            {"comparative", vec_to_json(e.contrast.comparative)},
            {"te", to_json(e.te)},
            {"nde", to_json(e.nde)},
            {"nie", to_json(e.nie)},
            {"alpha_x", e.alpha_x},
            {"beta_x", e.beta_x},
            {"beta_m", e.beta_m},
            {"se_alpha_x", e.se_alpha_x},
            {"se_beta_x", e.se_beta_x},
            {"se_beta_m", e.se_beta_m}};
}

json to_json(const PosteriorSummary& s) {
    return {{"mean", s.mean}, {"sd", s.sd}, {"lo", s.lo}, {"hi", s.hi}};
}

json to_json(const MethodSummary& s) {
    return {{"scenario", s.scenario},
            {"method", s.method},
            {"replicates", s.replicates},
            {"excluded", s.excluded},
            {"relative_bias_mean", s.relative_bias_mean},
            {"relative_bias_sd", s.relative_bias_sd},
            {"abs_mean_relative_bias", std::abs(s.relative_bias_mean)},
            {"mean_absolute_relative_bias", s.mean_absolute_relative_bias},
            {"tpr_mean", s.tpr_mean},
            {"tpr_sd", s.tpr_sd},
            {"fpr_mean", s.fpr_mean},
            {"fpr_sd", s.fpr_sd}};
}

json to_json(const ReplicateRecord& r) {
    return {{"scenario", r.scenario}, {"method", r.method},     {"replicate", r.replicate},
            {"seed", r.seed},         {"stream", r.stream},     {"ok", r.ok},
            {"error", r.error},       {"estimate", r.estimate}, {"truth", r.truth},
            {"relative_bias", r.relative_bias}, {"tpr", r.tpr}, {"fpr", r.fpr}};
}

CsvTable effects_table(const std::vector<MediationEffects>& effects) {
    CsvTable t;
    t.header = {"exposure", "method", "effect", "estimate", "se", "ci_lo", "ci_hi", "p"};
    for (const auto& e : effects) {
        const std::pair<const char*, const Effect*> parts[] = {{"TE", &e.te}, {"NDE", &e.nde}, {"NIE", &e.nie}};
        for (const auto& [name, eff] : parts)
            t.rows.push_back({e.exposure, e.method, name, format_double(eff->estimate), format_double(eff->se),
                              format_double(eff->ci_lo), format_double(eff->ci_hi), format_double(eff->p)});
    }
    return t;
}

CsvTable scree_table(const PcaModel& model) {
    CsvTable t;
    t.header = {"component", "eigenvalue", "proportion", "cumulative"};
    const VectorXd prop = model.variance_proportions();
    const VectorXd cum = model.cumulative_proportions();
    for (Index j = 0; j < model.p(); ++j)
        t.rows.push_back({"PC" + std::to_string(j + 1), format_double(model.eigenvalues(j)),
                          format_double(prop(j)), format_double(cum(j))});
    return t;
}

CsvTable loadings_table(const PcaModel& model, const std::vector<std::string>& names) {
    CsvTable t;
    t.header = {"exposure"};
    for (Index j = 0; j < model.p(); ++j) t.header.push_back("PC" + std::to_string(j + 1));
    for (Index i = 0; i < model.loadings.rows(); ++i) {
        std::vector<std::string> row{static_cast<std::size_t>(i) < names.size() ? names[static_cast<std::size_t>(i)]
                                                                                 : "X" + std::to_string(i + 1)};
        for (Index j = 0; j < model.p(); ++j) row.push_back(format_double(model.loadings(i, j)));
        t.rows.push_back(std::move(row));
    }
    return t;
}

CsvTable pip_table(const BkmrFit& fit, const Pips& pips) {
    CsvTable t;
    const bool hier = fit.config.selection == SelectionMode::hierarchical;
    t.header = {"input", "pip"};
    if (hier) {
        t.header.push_back("group");
        t.header.push_back("group_pip");
        t.header.push_back("conditional_pip");
    }
    for (Index j = 0; j < pips.component.size(); ++j) {
        std::vector<std::string> row{static_cast<std::size_t>(j) < fit.z_names.size()
                                         ? fit.z_names[static_cast<std::size_t>(j)]
                                         : "z" + std::to_string(j + 1),
                                     format_double(pips.component(j))};
        if (hier) {
            const int g = fit.config.groups[static_cast<std::size_t>(j)];
            row.push_back(std::to_string(g + 1));
            row.push_back(format_double(pips.group(g)));
            row.push_back(format_double(pips.conditional(j)));
        }
        t.rows.push_back(std::move(row));
    }
    return t;
}

CsvTable posterior_table(const PosteriorEffects& effects) {
    CsvTable t;
    t.header = {"effect", "mean", "sd", "lo", "hi"};
    auto add = [&](const std::string& name, const PosteriorSummary& s) {
        t.rows.push_back({name, format_double(s.mean), format_double(s.sd), format_double(s.lo), format_double(s.hi)});
    };
    add("TE", effects.te_summary());
    add("NDE", effects.nde_summary());
    add("NIE", effects.nie_summary());
    for (Index j = 0; j < effects.cde.cols(); ++j)
        add("CDE(m=" + format_double(effects.m_values[static_cast<std::size_t>(j)]) + ")", effects.cde_summary(j));
    return t;
}

CsvTable records_table(const std::vector<ReplicateRecord>& records) {
    CsvTable t;
    t.header = {"scenario", "method", "replicate", "seed", "stream", "ok", "estimate",
                "truth", "relative_bias", "tpr", "fpr", "error"};
    for (const auto& r : records)
        t.rows.push_back({r.scenario, r.method, std::to_string(r.replicate), std::to_string(r.seed),
                          std::to_string(r.stream), r.ok ? "1" : "0", format_double(r.estimate),
                          format_double(r.truth), format_double(r.relative_bias), format_double(r.tpr),
                          format_double(r.fpr), r.error});
    return t;
}

CsvTable summary_table(const std::vector<MethodSummary>& summaries) {
    CsvTable t;
    t.header = {"scenario", "method", "replicates", "excluded", "relative_bias_mean", "relative_bias_sd",
                "abs_mean_relative_bias", "mean_absolute_relative_bias", "tpr_mean", "tpr_sd",
                "fpr_mean", "fpr_sd"};
    for (const auto& s : summaries)
        t.rows.push_back({s.scenario, s.method, std::to_string(s.replicates), std::to_string(s.excluded),
                          format_double(s.relative_bias_mean), format_double(s.relative_bias_sd),
                          format_double(std::abs(s.relative_bias_mean)),
                          format_double(s.mean_absolute_relative_bias), format_double(s.tpr_mean),
                          format_double(s.tpr_sd), format_double(s.fpr_mean), format_double(s.fpr_sd)});
    return t;
}

CsvTable long_metrics_table(const std::vector<MethodSummary>& summaries) {
    CsvTable t;
    t.header = {"scenario", "method", "metric", "mean", "sd"};
    for (const auto& s : summaries) {
        auto add = [&](const char* metric, double mean, double sd) {
            if (std::isnan(mean)) return;
            t.rows.push_back({s.scenario, s.method, metric, format_double(mean), format_double(sd)});
        };
        add("relative_bias", s.relative_bias_mean, s.relative_bias_sd);
        add("tpr", s.tpr_mean, s.tpr_sd);
        add("fpr", s.fpr_mean, s.fpr_sd);
    }
    return t;
}

json ers_model_to_json(const ErsModel& m) {
    json terms = json::array();
    for (const auto& t : m.terms) terms.push_back({{"first", t.first}, {"second", t.second}, {"name", t.name(m.exposure_names)}});
    return {{"feature_spec", to_string(m.spec)},
            {"terms", terms},
            {"coefficients", vec_to_json(m.coefficients)},
            {"confounder_coefficients", vec_to_json(m.confounder_coefficients)},
            {"intercept", m.intercept},
            {"lambda1", m.lambda1},
            {"lambda2", m.lambda2},
            {"cv_error", m.cv_error},
            {"relaxation_steps", m.relaxation_steps},
            {"exposure_means", vec_to_json(m.exposure_means)},
            {"exposure_sds", vec_to_json(m.exposure_sds)},
            {"exposure_names", m.exposure_names},
            {"selected_features", m.selected_features()},
            {"train_rows", m.train_rows},
            {"seed", m.seed}};
}

ErsModel ers_model_from_json(const json& j) {
    try {
        ErsModel m;
        m.spec = parse_feature_spec(j.at("feature_spec").get<std::string>());
        for (const auto& t : j.at("terms")) m.terms.push_back({t.at("first").get<Index>(), t.at("second").get<Index>()});
        m.coefficients = json_to_vec(j.at("coefficients"));
        m.confounder_coefficients = json_to_vec(j.at("confounder_coefficients"));
        m.intercept = j.at("intercept").get<double>();
        m.lambda1 = j.at("lambda1").get<double>();
        m.lambda2 = j.at("lambda2").get<double>();
        m.cv_error = j.at("cv_error").get<double>();
        m.relaxation_steps = j.at("relaxation_steps").get<int>();
        m.exposure_means = json_to_vec(j.at("exposure_means"));
        m.exposure_sds = json_to_vec(j.at("exposure_sds"));
        m.exposure_names = j.at("exposure_names").get<std::vector<std::string>>();
        m.train_rows = j.at("train_rows").get<std::vector<std::size_t>>();
        m.seed = j.at("seed").get<std::uint64_t>();
        if (m.coefficients.size() != static_cast<Index>(m.terms.size()))
            throw ParseError("ERS model: coefficient count does not match terms");
        return m;
    } catch (const json::exception& e) {
        throw ParseError(std::string("ERS model artifact: ") + e.what());
    }
}

json bkmr_fit_to_json(const BkmrFit& fit) {
    const KernelConfig& c = fit.config;
    json config = {{"selection", to_string(c.selection)}, {"groups", c.groups},
                   {"iterations", c.iterations},          {"thin", c.thin},
                   {"pi", c.pi},                          {"slab_upper", c.slab_upper},
                   {"sigma_shape", c.sigma_shape},        {"sigma_rate", c.sigma_rate},
                   {"lambda_shape", c.lambda_shape},      {"lambda_rate", c.lambda_rate},
                   {"lambda_step", c.lambda_step},        {"r_step", c.r_step},
                   {"r_birth_mean", c.r_birth_mean},      {"r_birth_sd", c.r_birth_sd},
                   {"lambda_init", c.lambda_init},        {"r_init", c.r_init}};
    const McmcChain& ch = fit.chain;
    json chain = {{"r", mat_to_json(ch.r)},
                  {"delta", mat_to_json(ch.delta)},
                  {"omega", mat_to_json(ch.omega)},
                  {"beta", mat_to_json(ch.beta)},
                  {"sigma2", vec_to_json(ch.sigma2)},
                  {"lambda", vec_to_json(ch.lambda)},
                  {"lambda_moves", acceptance_to_json(ch.lambda_moves)},
                  {"select_moves", acceptance_to_json(ch.select_moves)},
                  {"r_moves", acceptance_to_json(ch.r_moves)}};
    return {{"role", to_string(fit.role)},
            {"seed", fit.seed},
            {"stream", fit.stream},
            {"config", config},
            {"z_names", fit.z_names},
            {"x_names", fit.x_names},
            {"y", vec_to_json(fit.y)},
            {"z", mat_to_json(fit.z)},
            {"x", mat_to_json(fit.x)},
            {"warnings", fit.warnings},
            {"chain", chain}};
}

BkmrFit bkmr_fit_from_json(const json& j) {
    try {
        BkmrFit fit;
        fit.role = parse_model_role(j.at("role").get<std::string>());
        fit.seed = j.at("seed").get<std::uint64_t>();
        fit.stream = j.at("stream").get<std::uint64_t>();
        const json& c = j.at("config");
        KernelConfig& k = fit.config;
        k.selection = parse_selection_mode(c.at("selection").get<std::string>());
        k.groups = c.at("groups").get<std::vector<int>>();
        k.iterations = c.at("iterations").get<int>();
        k.thin = c.at("thin").get<int>();
        k.pi = c.at("pi").get<double>();
        k.slab_upper = c.at("slab_upper").get<double>();
        k.sigma_shape = c.at("sigma_shape").get<double>();
        k.sigma_rate = c.at("sigma_rate").get<double>();
        k.lambda_shape = c.at("lambda_shape").get<double>();
        k.lambda_rate = c.at("lambda_rate").get<double>();
        k.lambda_step = c.at("lambda_step").get<double>();
        k.r_step = c.at("r_step").get<double>();
        k.r_birth_mean = c.at("r_birth_mean").get<double>();
        k.r_birth_sd = c.at("r_birth_sd").get<double>();
        k.lambda_init = c.at("lambda_init").get<double>();
        k.r_init = c.at("r_init").get<double>();
        fit.z_names = j.at("z_names").get<std::vector<std::string>>();
        fit.x_names = j.at("x_names").get<std::vector<std::string>>();
        fit.warnings = j.at("warnings").get<std::vector<std::string>>();
        fit.y = json_to_vec(j.at("y"));
        const json& z = j.at("z");
        const json& x = j.at("x");
        const Index q = z.empty() ? 0 : static_cast<Index>(z[0].size());
        const Index cx = x.empty() ? 0 : static_cast<Index>(x[0].size());
        fit.z = json_to_mat<MatrixXd>(z, q);
        fit.x = json_to_mat<MatrixXd>(x, cx);
        const json& ch = j.at("chain");
        fit.chain.r = json_to_mat<MatrixXd>(ch.at("r"), q);
        fit.chain.delta = json_to_mat<MatrixXi>(ch.at("delta"), q);
        const json& om = ch.at("omega");
        fit.chain.omega = json_to_mat<MatrixXi>(om, om.empty() ? 0 : static_cast<Index>(om[0].size()));
        fit.chain.beta = json_to_mat<MatrixXd>(ch.at("beta"), cx);
        fit.chain.sigma2 = json_to_vec(ch.at("sigma2"));
        fit.chain.lambda = json_to_vec(ch.at("lambda"));
        fit.chain.lambda_moves = acceptance_from_json(ch.at("lambda_moves"));
        fit.chain.select_moves = acceptance_from_json(ch.at("select_moves"));
        fit.chain.r_moves = acceptance_from_json(ch.at("r_moves"));
        if (fit.z.rows() != fit.y.size() || fit.x.rows() != fit.y.size())
            throw ParseError("BKMR artifact: training data row counts differ");
        return fit;
    } catch (const json::exception& e) {
        throw ParseError(std::string("BKMR artifact: ") + e.what());
    }
}

json metrics_to_json(const MetricsReport& report) {
    json records = json::array();
    for (const auto& r : report.records) records.push_back(to_json(r));
    json summaries = json::array();
    for (const auto& s : report.summaries) summaries.push_back(to_json(s));
    return {{"seed", report.seed}, {"records", records}, {"summaries", summaries}};
}

MetricsReport metrics_from_json(const json& j) {
    try {
        MetricsReport report;
        report.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& r : j.at("records")) {
            ReplicateRecord rec;
            rec.scenario = r.at("scenario").get<std::string>();
            rec.method = r.at("method").get<std::string>();
            rec.replicate = r.at("replicate").get<Index>();
            rec.seed = r.at("seed").get<std::uint64_t>();
            rec.stream = r.at("stream").get<std::uint64_t>();
            rec.ok = r.at("ok").get<bool>();
            rec.error = r.at("error").get<std::string>();
            rec.estimate = json_double(r.at("estimate"));
            rec.truth = json_double(r.at("truth"));
            rec.relative_bias = json_double(r.at("relative_bias"));
            rec.tpr = json_double(r.at("tpr"));
            rec.fpr = json_double(r.at("fpr"));
            report.records.push_back(std::move(rec));
        }
        report.summaries = summarize(report.records);
        return report;
    } catch (const json::exception& e) {
        throw ParseError(std::string("metrics artifact: ") + e.what());
    }
}

} // namespace mixmed
