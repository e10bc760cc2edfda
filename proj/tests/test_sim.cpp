#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include "mixmed/error.hpp"
#include "mixmed/rng.hpp"
#include "mixmed/serialize.hpp"
#include "mixmed/sim.hpp"

using namespace mixmed;
namespace fs = std::filesystem;

namespace {

double sample_variance(const VectorXd& v) {
    const double mu = v.mean();
    return (v.array() - mu).square().sum() / static_cast<double>(v.size() - 1);
}

double sample_corr(const VectorXd& a, const VectorXd& b) {
    const VectorXd ca = a.array() - a.mean();
    const VectorXd cb = b.array() - b.mean();
    return ca.dot(cb) / std::sqrt(ca.squaredNorm() * cb.squaredNorm());
}

double r_squared(const VectorXd& y, const VectorXd& fitted) {
    return 1.0 - sample_variance(y - fitted) / sample_variance(y);
}

} // namespace

TEST_CASE("solve_sigma_for_r2") {
    CHECK(solve_sigma_for_r2(1.0, 0.5) == doctest::Approx(1.0));
    CHECK(solve_sigma_for_r2(2.0, 0.4) == doctest::Approx(3.0));
    CHECK(solve_sigma_for_r2(1.0, 1.0 - 1e-12) < 1e-11);
    CHECK_THROWS_AS(solve_sigma_for_r2(0.0, 0.5), DomainError);
    CHECK_THROWS_AS(solve_sigma_for_r2(1.0, 0.0), DomainError);
    CHECK_THROWS_AS(solve_sigma_for_r2(1.0, 1.0), DomainError);
}

TEST_CASE("standard scenario layout") {
    const Scenario sc = Scenario::standard(1000, 0.4);
    CHECK(sc.p() == 30);
    CHECK(sc.active_exposures().size() == 9);
    Index nonzero_beta = 0;
    for (Index j = 0; j < sc.p(); ++j) nonzero_beta += sc.beta_x(j) != 0.0;
    CHECK(nonzero_beta == 10);
    CHECK(sc.label() == "n1000_r2m0.4");
    CHECK(sc.population_label() == "r2m0.4");
    const MatrixXd r = sc.exposure_correlation();
    CHECK(r(0, 4) == 0.4);
    CHECK(r(5, 14) == 0.8);
    CHECK(r(15, 29) == 0.1);
    CHECK(r(4, 5) == 0.0);

    Scenario bad = sc;
    bad.block_corr = {0.4, 1.0, 0.1};
    CHECK_THROWS_AS(bad.validate(), DomainError);
    bad = sc;
    bad.alpha_x = VectorXd::Zero(3);
    CHECK_THROWS_AS(bad.validate(), DomainError);
}

TEST_CASE("SE-MA truth is beta_m times the sum of alpha_x") {
    const Scenario sc = Scenario::standard(1000, 0.4);
    CHECK(true_global_nie(sc, SimMethod::sema_adjusted) == doctest::Approx(2.16).epsilon(1e-12));
    CHECK(true_global_nie(sc, SimMethod::sema_unadjusted) == doctest::Approx(2.16).epsilon(1e-12));
    Scenario null = sc;
    null.alpha_x.setZero();
    CHECK(true_global_nie(null, SimMethod::sema_adjusted) == 0.0);
}

TEST_CASE("analytic linear-predictor variances match Monte Carlo") {
    Scenario sc = Scenario::standard(1000000, 0.4);
    SeededRng rng(5);
    const Dataset d = generate_dataset(sc, rng);
    const VectorXd lp_m = d.exposures * sc.alpha_x + d.confounders * sc.alpha_c;
    const double vm = mediator_linpred_variance(sc);
    CHECK(std::abs(sample_variance(lp_m) / vm - 1.0) < 0.005);

    const NoiseVariances noise = noise_variances(sc);
    const VectorXd lp_y = sc.beta_m * d.mediator + d.exposures * sc.beta_x + d.confounders * sc.beta_c;
    CHECK(std::abs(sample_variance(lp_y) / outcome_linpred_variance(sc, noise.mediator) - 1.0) < 0.005);
    CHECK(noise.mediator == doctest::Approx(vm * 0.6 / 0.4));
}

TEST_CASE("exposure correlation structure and R^2 calibration") {
    // X = C Theta + E: within block 2, cov = 0.8 + theta^2 1'Sigma_C 1 and var = 1 + the same term.
    const Scenario base = Scenario::standard(2500, 0.4);
    const double shared = base.theta * base.theta * base.confounder_correlation().sum();
    const double expected_corr = (0.8 + shared) / (1.0 + shared);
    for (double r2 : {0.1, 0.4}) {
        const Scenario sc = Scenario::standard(2500, r2);
        double corr_sum = 0.0, r2m_sum = 0.0, r2y_sum = 0.0;
        const int reps = 20;
        for (int rep = 0; rep < reps; ++rep) {
            SeededRng rng(100 + static_cast<std::uint64_t>(rep));
            const Dataset d = generate_dataset(sc, rng);
            corr_sum += sample_corr(d.exposures.col(6), d.exposures.col(11));
            r2m_sum += r_squared(d.mediator, d.exposures * sc.alpha_x + d.confounders * sc.alpha_c);
            r2y_sum += r_squared(d.outcome, sc.beta_m * d.mediator + d.exposures * sc.beta_x + d.confounders * sc.beta_c);
        }
        CHECK(std::abs(corr_sum / reps - expected_corr) < 0.02);
        CHECK(std::abs(r2m_sum / reps - r2) < 0.03);
        CHECK(std::abs(r2y_sum / reps - sc.r2_y) < 0.03);
    }
}

TEST_CASE("null DGP gives unit mediator noise and no exposure signal") {
    Scenario sc = Scenario::standard(500, 0.4);
    sc.alpha_x.setZero();
    sc.alpha_c.setZero();
    CHECK(noise_variances(sc).mediator == 1.0);
    SeededRng rng(3);
    const Dataset d = generate_dataset(sc, rng);
    CHECK(std::abs(sample_variance(d.mediator) - 1.0) < 0.2);
    for (Index j = 0; j < d.p(); ++j) CHECK(std::abs(sample_corr(d.exposures.col(j), d.mediator)) < 0.2);
}

TEST_CASE("dataset generation is deterministic per seed") {
    const Scenario sc = Scenario::standard(200, 0.1);
    SeededRng a(9), b(9), c(10);
    const Dataset da = generate_dataset(sc, a), db = generate_dataset(sc, b), dc = generate_dataset(sc, c);
    CHECK(da.exposures == db.exposures);
    CHECK(da.outcome == db.outcome);
    CHECK(da.outcome != dc.outcome);
}

TEST_CASE("summarize computes signed and absolute bias and excludes failures") {
    std::vector<ReplicateRecord> recs;
    auto add = [&](double bias, double tpr, double fpr, bool ok) {
        ReplicateRecord r;
        r.scenario = "s";
        r.method = "m";
        r.ok = ok;
        r.relative_bias = ok ? bias : std::numeric_limits<double>::quiet_NaN();
        r.tpr = ok ? tpr : std::numeric_limits<double>::quiet_NaN();
        r.fpr = ok ? fpr : std::numeric_limits<double>::quiet_NaN();
        recs.push_back(r);
    };
    add(10.0, 1.0, 0.0, true);
    add(-30.0, 0.5, 0.1, true);
    add(0.0, 0.0, 0.0, false);
    const auto sums = summarize(recs);
    REQUIRE(sums.size() == 1);
    const MethodSummary& s = sums.front();
    CHECK(s.replicates == 2);
    CHECK(s.excluded == 1);
    CHECK(s.relative_bias_mean == doctest::Approx(-10.0));
    CHECK(s.mean_absolute_relative_bias == doctest::Approx(20.0));
    CHECK(s.relative_bias_sd == doctest::Approx(std::sqrt(800.0)));
    CHECK(s.tpr_mean == doctest::Approx(0.75));
    CHECK(s.fpr_mean == doctest::Approx(0.05));
}

TEST_CASE("run_replicate reproduces the study rows") {
    StudyConfig cfg;
    cfg.scenarios = {Scenario::standard(300, 0.4)};
    cfg.methods = {SimMethod::sema_adjusted, SimMethod::pcma_first};
    cfg.replicates = 3;
    cfg.seed = 17;
    cfg.truth.reference_rows = 5000;
    const MetricsReport report = run_study(cfg);
    REQUIRE(report.records.size() == 6);
    TruthCache cache(cfg.truth);
    const auto rows = run_replicate(cfg, 0, 2, cache);
    REQUIRE(rows.size() == 2);
    for (const auto& row : rows) {
        bool found = false;
        for (const auto& r : report.records) {
            if (r.method != row.method || r.replicate != row.replicate) continue;
            found = true;
            CHECK(r.estimate == row.estimate);
            CHECK(r.truth == row.truth);
            CHECK(r.relative_bias == row.relative_bias);
        }
        CHECK(found);
    }
    const MethodSummary* s = report.find("n300_r2m0.4", "sema_adjusted");
    REQUIRE(s != nullptr);
    CHECK(s->replicates == 3);
    CHECK(s->tpr_mean >= 0.0);

    cfg.workers = 3;
    const MetricsReport parallel = run_study(cfg);
    REQUIRE(parallel.records.size() == report.records.size());
    for (std::size_t i = 0; i < parallel.records.size(); ++i)
        CHECK(parallel.records[i].estimate == report.records[i].estimate);
}

TEST_CASE("truth cache persists to and reloads from its file") {
    const fs::path file = fs::temp_directory_path() / "mixmed_truth_cache_test.json";
    fs::remove(file);
    TruthOptions opt;
    opt.reference_rows = 4000;
    opt.cache_file = file;
    const Scenario sc = Scenario::standard(1000, 0.4);
    double first = 0.0;
    {
        TruthCache cache(opt);
        first = cache.get(sc, SimMethod::pcma_first, {});
    }
    REQUIRE(fs::exists(file));
    // Overwrite the stored value: a reload must return the file contents, not recompute.
    std::ifstream in(file);
    const nlohmann::json j = nlohmann::json::parse(in);
    in.close();
    REQUIRE(j.size() == 1);
    nlohmann::json edited = j;
    edited[j.begin().key()] = 123.0;
    std::ofstream(file) << edited.dump();
    TruthCache reloaded(opt);
    CHECK(reloaded.get(sc, SimMethod::pcma_first, {}) == 123.0);
    CHECK(first != 123.0);
    fs::remove(file);
}

TEST_CASE("metrics JSON round trip") {
    MetricsReport rep;
    rep.seed = 4;
    ReplicateRecord r;
    r.scenario = "n100_r2m0.1";
    r.method = "sema_adjusted";
    r.estimate = 1.5;
    r.truth = 2.0;
    r.relative_bias = -25.0;
    r.tpr = 0.5;
    r.fpr = 0.0;
    rep.records = {r};
    rep.summaries = summarize(rep.records);
    const MetricsReport back = metrics_from_json(metrics_to_json(rep));
    REQUIRE(back.records.size() == 1);
    CHECK(back.records[0].estimate == 1.5);
    CHECK(back.records[0].relative_bias == -25.0);
    REQUIRE(back.summaries.size() == 1);
    CHECK(back.summaries[0].relative_bias_mean == -25.0);
    CHECK(back.seed == 4);
}
