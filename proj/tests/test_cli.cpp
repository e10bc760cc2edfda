#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mixmed/cli.hpp"
#include "mixmed/error.hpp"
#include "mixmed/rng.hpp"

using namespace mixmed;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
    int code = 0;
    std::string out, err;
};

Run cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    Run r;
    r.code = run_cli(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("mixmed_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::map<std::string, std::string> dir_contents(const fs::path& dir) {
    std::map<std::string, std::string> m;
    for (const auto& e : fs::directory_iterator(dir)) m[e.path().filename().string()] = slurp(e.path());
    return m;
}

// x -> m -> y with a direct path and one confounder.
fs::path toy_csv(const fs::path& dir, int n = 120) {
    const fs::path file = dir / "toy.csv";
    std::ofstream f(file);
    f << "x1,x2,m,y,c\n";
    SeededRng r(8);
    for (int i = 0; i < n; ++i) {
        const double c = r.normal();
        const double x1 = 0.3 * c + r.normal();
        const double x2 = r.normal();
        const double m = 0.5 * x1 + 0.5 * c + r.normal();
        const double y = 0.4 * m + 0.2 * x1 + c + r.normal();
        f << x1 << "," << x2 << "," << m << "," << y << "," << c << "\n";
    }
    return file;
}

std::vector<std::string> data_args(const fs::path& csv) {
    return {"--data", csv.string(), "--exposures", "x1,x2", "--mediator", "m", "--outcome", "y", "--confounders", "c"};
}

std::string artifact_with(const fs::path& dir, const std::string& prefix, const std::string& ext) {
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string name = e.path().filename().string();
        if (name.rfind(prefix, 0) == 0 && e.path().extension() == ext) return slurp(e.path());
    }
    return {};
}

long data_lines(const std::string& csv) {
    long lines = 0;
    std::istringstream in(csv);
    std::string line;
    while (std::getline(in, line))
        if (!line.empty() && line[0] != '#') ++lines;
    return lines - 1;  // header
}

} // namespace

TEST_CASE("cli: sema on a toy CSV") {
    const fs::path dir = fresh_dir("sema");
    const fs::path csv = dir / "one.csv";
    {
        std::ofstream f(csv);
        f << "x,m,y\n";
        SeededRng r(1);
        for (int i = 0; i < 60; ++i) {
            const double x = r.normal(), m = 0.5 * x + r.normal();
            f << x << "," << m << "," << 0.4 * m + r.normal() << "\n";
        }
    }
    auto args = std::vector<std::string>{"sema", "--data", csv.string(), "--exposures", "x", "--mediator", "m",
                                         "--outcome", "y", "--out", (dir / "out").string()};
    const Run r = cli(args);
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const json manifest = json::parse(r.out);
    CHECK(manifest["subcommand"] == "sema");
    CHECK(manifest["provenance"]["seed"].is_number());
    const std::string effects = artifact_with(dir / "out", "sema_effects_", ".csv");
    REQUIRE(!effects.empty());
    // One exposure: NIE, NDE and TE rows.
    CHECK(data_lines(effects) == 3);
    const json summary = json::parse(artifact_with(dir / "out", "sema_summary_", ".json"));
    CHECK(summary["effects"].size() == 1);
    CHECK(summary["adjusted"] == true);
}

TEST_CASE("cli: every analysis subcommand reruns byte-identically") {
    const fs::path dir = fresh_dir("determinism");
    const fs::path csv = toy_csv(dir);
    const auto base = data_args(csv);
    const std::vector<std::vector<std::string>> commands = {
        {"sema"},
        {"pcma", "--rule", "kaiser"},
        {"ersma", "--lambda2-points", "3"},
        {"bkmr-fit", "--iterations", "200"},
        {"bkmr-cma", "--iterations", "200", "--draws", "5"},
    };
    for (const auto& cmd : commands) {
        CAPTURE(cmd.front());
        std::vector<std::map<std::string, std::string>> runs;
        for (int rep = 0; rep < 2; ++rep) {
            const fs::path out = dir / (cmd.front() + std::to_string(rep));
            std::vector<std::string> args = cmd;
            args.insert(args.end(), base.begin(), base.end());
            args.insert(args.end(), {"--seed", "42", "--out", out.string()});
            if (rep == 1) args.insert(args.end(), {"--workers", "2"});
            const Run r = cli(args);
            REQUIRE_MESSAGE(r.code == 0, r.err);
            runs.push_back(dir_contents(out));
        }
        CHECK(!runs[0].empty());
        CHECK(runs[0] == runs[1]);
    }
}

TEST_CASE("cli: seed changes stochastic artifacts") {
    const fs::path dir = fresh_dir("seed");
    const fs::path csv = toy_csv(dir);
    std::vector<std::map<std::string, std::string>> runs;
    for (const char* seed : {"1", "2"}) {
        std::vector<std::string> args{"ersma", "--lambda2-points", "2"};
        const auto base = data_args(csv);
        args.insert(args.end(), base.begin(), base.end());
        args.insert(args.end(), {"--seed", seed, "--out", (dir / seed).string()});
        REQUIRE(cli(args).code == 0);
        runs.push_back(dir_contents(dir / seed));
    }
    CHECK(runs[0] != runs[1]);
}

TEST_CASE("cli: simulate and report") {
    const fs::path dir = fresh_dir("simulate");
    const Run r = cli({"simulate", "--methods", "sema_adjusted,sema_unadjusted", "--n", "300", "--r2m", "0.4",
                       "--replicates", "2", "--seed", "3", "--out", (dir / "a").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const std::string records = artifact_with(dir / "a", "simulate_records_", ".csv");
    CHECK(data_lines(records) == 4);
    const json metrics = json::parse(artifact_with(dir / "a", "simulate_metrics_", ".json"));
    CHECK(metrics["summaries"].size() == 2);

    const Run again = cli({"simulate", "--methods", "sema_adjusted,sema_unadjusted", "--n", "300", "--r2m", "0.4",
                           "--replicates", "2", "--seed", "3", "--workers", "2", "--out", (dir / "b").string()});
    REQUIRE(again.code == 0);
    CHECK(dir_contents(dir / "a") == dir_contents(dir / "b"));

    fs::path metrics_file;
    for (const auto& e : fs::directory_iterator(dir / "a"))
        if (e.path().filename().string().rfind("simulate_metrics_", 0) == 0) metrics_file = e.path();
    const Run rep = cli({"report", "--input", metrics_file.string(), "--out", (dir / "report").string()});
    REQUIRE_MESSAGE(rep.code == 0, rep.err);
    const std::string summary = artifact_with(dir / "report", "report_summary_", ".csv");
    CHECK(data_lines(summary) == 2);
}

TEST_CASE("cli: config file supplies options") {
    const fs::path dir = fresh_dir("config");
    const fs::path csv = toy_csv(dir);
    const fs::path ini = dir / "run.toml";
    {
        std::ofstream f(ini);
        f << "[pcma]\ndata = \"" << csv.generic_string() << "\"\nexposures = [\"x1\", \"x2\"]\n"
          << "mediator = \"m\"\noutcome = \"y\"\nrule = \"first\"\nk = 2\n";
    }
    const Run r = cli({"--config", ini.string(), "pcma", "--out", (dir / "out").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const json summary = json::parse(artifact_with(dir / "out", "pcma_summary_", ".json"));
    CHECK(summary["retained"] == 2);
}

TEST_CASE("cli: exit codes and structured errors") {
    const fs::path dir = fresh_dir("errors");
    const fs::path csv = toy_csv(dir);

    SUBCASE("usage error") {
        const Run r = cli({"sema", "--no-such-flag"});
        CHECK(r.code == 2);
        CHECK(json::parse(r.err)["kind"] == "config");
    }
    SUBCASE("missing required column option") {
        const Run r = cli({"sema", "--data", csv.string(), "--out", (dir / "o").string()});
        CHECK(r.code == 2);
    }
    SUBCASE("unknown column is a schema (config) error") {
        const Run r = cli({"sema", "--data", csv.string(), "--exposures", "nope", "--mediator", "m", "--outcome", "y",
                           "--out", (dir / "o").string()});
        CHECK(r.code == 2);
        const json e = json::parse(r.err);
        CHECK(e["error"] == "schema_error");
        CHECK(e["message"].get<std::string>().find("nope") != std::string::npos);
    }
    SUBCASE("unparseable cell is a data error") {
        const fs::path bad = dir / "bad.csv";
        std::ofstream(bad) << "x,m,y\n1,2,3\n2,abc,4\n3,4,5\n4,5,7\n";
        const Run r = cli({"sema", "--data", bad.string(), "--exposures", "x", "--mediator", "m", "--outcome", "y",
                           "--out", (dir / "o").string()});
        CHECK(r.code == 3);
    }
    SUBCASE("collinear exposures are a data error") {
        const fs::path dup = dir / "dup.csv";
        {
            std::ofstream f(dup);
            f.precision(17);
            f << "x1,x2,m,y\n";
            SeededRng g(2);
            for (int i = 0; i < 30; ++i) {
                const double x = g.normal();
                f << x << "," << 2.0 * x << "," << g.normal() << "," << g.normal() << "\n";
            }
        }
        const Run r = cli({"sema", "--data", dup.string(), "--exposures", "x1,x2", "--mediator", "m", "--outcome", "y",
                           "--out", (dir / "o").string()});
        CHECK(r.code == 3);
        CHECK(json::parse(r.err)["error"] == "collinearity");
    }
    SUBCASE("dependent kernel confounders are a data error") {
        const fs::path dup = dir / "dupc.csv";
        {
            std::ofstream f(dup);
            f.precision(17);
            f << "x,m,y,c1,c2\n";
            SeededRng g(3);
            for (int i = 0; i < 30; ++i) {
                const double c = g.normal();
                f << g.normal() << "," << g.normal() << "," << g.normal() << "," << c << "," << 2.0 * c << "\n";
            }
        }
        const Run r = cli({"bkmr-fit", "--data", dup.string(), "--exposures", "x", "--mediator", "m", "--outcome", "y",
                           "--confounders", "c1,c2", "--iterations", "100", "--out", (dir / "o").string()});
        // The OLS start catches the dependence before the sampler runs.
        CHECK(r.code == 3);
        CHECK(json::parse(r.err)["error"] == "collinearity");
    }
}

TEST_CASE("cli: exit status per error kind") {
    CHECK(exit_code(ErrorKind::config) == 2);
    CHECK(exit_code(ErrorKind::data) == 3);
    CHECK(exit_code(ErrorKind::numerical) == 4);
    CHECK(exit_code(NumericalError("x").kind()) == 4);
    CHECK(exit_code(ConvergenceError("x").kind()) == 4);
    CHECK(exit_code(ParseError("x").kind()) == 3);
    CHECK(exit_code(SchemaError("x").kind()) == 2);
}
