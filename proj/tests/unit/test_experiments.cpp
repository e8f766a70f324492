#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "mfc/experiments.hpp"

using namespace mfc;
using namespace mfc::experiments;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t count_lines(const fs::path& p) {
    const auto s = slurp(p);
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("mfc_experiments_test_" + name);
    fs::remove_all(dir);
    return dir;
}

// Small, fast configuration shared by the driver tests.
ExperimentConfig small_config(const std::string& name) {
    ExperimentConfig c;
    c.n_list = {4, 8};
    c.grid.count = 64;
    c.matching.fir_order = 16;
    c.output_dir = scratch(name);
    return c;
}

}  // namespace

TEST_CASE("config defaults and overrides") {
    const auto c = parse_config("{}");
    CHECK(c.seed == 42);
    CHECK(c.n_list == std::vector<std::size_t>{30, 60, 120, 200, 300, 400, 600});
    CHECK(c.compliant.p == 0.25);
    CHECK(c.violating.p == 0.6);
    CHECK(c.simulation.horizon == 400);
    CHECK(c.simulation.noise_sigma == 0.05);
    CHECK(c.simulation.amplitude == 1.0);
    CHECK(c.simulation.period == 50.0);
    CHECK(c.norm == NormKind::Hinf);
    CHECK(c.block == BlockKind::Two);
    CHECK(c.fanout_for(30) == 29);
    CHECK_FALSE(c.snapshot.has_value());

    const auto d = parse_config(R"({"seed": 7, "n_list": [5, 9], "fanout": 3, "norm": "h2", "block": "one",
        "grid": {"points": 100}, "simulation": {"sinusoid": {"period": 20}, "mode": "reference"},
        "profiles": {"violating": {"c": 2, "p": 0.7}}, "snapshot": "binary"})");
    CHECK(d.seed == 7);
    CHECK(d.fanout_for(9) == 3);
    CHECK(d.fanout_for(3) == 2);
    CHECK(d.norm == NormKind::H2);
    CHECK(d.grid.count == 100);
    CHECK(d.matching.grid.count == 100);
    CHECK(d.simulation.period == 20);
    CHECK(d.simulation.mode == Injection::Reference);
    CHECK(d.violating.c == 2);
    CHECK(d.snapshot == snapshot::Format::Binary);

    // The echo parses back to the same configuration.
    CHECK(config_to_json(parse_config(config_to_json(d))) == config_to_json(d));
}

TEST_CASE("config rejects unknown keys and bad values") {
    CHECK_THROWS_AS(parse_config(R"({"sed": 1})"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config(R"({"grid": {"point": 10}})"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config(R"({"simulation": {"sinusoid": {"phase": 1}}})"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config(R"({"n_list": [60, 30]})"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config(R"({"simulation": {"horizon": 0}})"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config(R"({"simulation": {"noise_sigma": -1}})"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config(R"({"lemma": {"m_list": []}})"), std::invalid_argument);
    CHECK_THROWS_AS(run_lemma_decay(parse_config(R"({"n_list": [4, 8], "lemma": {"m_list": [5]}})")),
                    std::invalid_argument);
    CHECK_THROWS_AS(parse_config(R"({"norm": "h3"})"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config(R"({"seed": "x"})"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("{"), std::invalid_argument);
}

TEST_CASE("loglog slope and hash") {
    std::vector<double> x{10, 20, 40, 80}, y;
    for (double v : x) y.push_back(3.0 * std::pow(v, -0.5));
    CHECK(loglog_slope(x, y) == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK_THROWS(loglog_slope({1.0}, {1.0}));
    CHECK_THROWS(loglog_slope({1.0, 2.0}, {0.0, 1.0}));
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("simulation: regulation, symmetry and shape") {
    ExperimentConfig c;
    c.matching.fir_order = 16;
    c.simulation.noise_sigma = 0.0;
    c.simulation.amplitude = 0.0;
    c.simulation.initial_state = {1.0, -0.5};
    c.simulation.horizon = 300;
    const auto model = ensemble::sample_population(5, 3);
    const auto q = ensemble::selfish_q(model, NormKind::Hinf, BlockKind::Two, c.matching);
    const auto t = simulate_population(model, q, c.simulation, 3);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK_FALSE(t.overflow[i]);
        CHECK(std::abs(t.y[i].front()) > 0.5);
        CHECK(std::abs(t.y[i].back()) < 1e-8);
        CHECK(std::abs(t.u[i].back()) < 1e-8);
    }

    // Identical agents and identical inputs give identical trajectories.
    c.simulation.amplitude = 1.0;
    const auto same = ensemble::make_model(std::vector<youla::AgentParameters>(4, {1.1, 0.9}));
    const auto qs = ensemble::selfish_q(same, NormKind::Hinf, BlockKind::Two, c.matching);
    const auto ts = simulate_population(same, qs, c.simulation, 3);
    double diff = 0.0;
    for (std::size_t i = 1; i < 4; ++i)
        for (std::size_t k = 0; k < ts.s.size(); ++k) diff = std::max(diff, std::abs(ts.y[i][k] - ts.y[0][k]));
    CHECK(diff <= 1e-10);

    // Default noise level, n = 60: 60 x 400 rows plus a header, bounded.
    ExperimentConfig d;
    d.matching.fir_order = 16;
    d.output_dir = scratch("simulate");
    const auto r = run_simulation(d);
    REQUIRE(r.runs.size() == 1);
    CHECK(r.runs[0].n == 60);
    CHECK(count_lines(r.runs[0].csv) == 60 * 400 + 1);
    CHECK(r.runs[0].overflowed.empty());
    CHECK(std::isfinite(r.runs[0].max_abs_y));
    CHECK(all_passed(r.checks));
    CHECK(fs::exists(d.output_dir / "trajectories_n60.manifest"));
    fs::remove_all(d.output_dir);
}

TEST_CASE("simulation flags an overflowing agent and continues") {
    ExperimentConfig c;
    c.simulation.overflow_limit = 1e-3;  // any motion counts as overflow
    c.simulation.horizon = 20;
    const auto model = ensemble::sample_population(3, 1);
    const auto t = simulate_population(model, ensemble::BlockQ::zero(3), c.simulation, 1);
    CHECK(t.overflow[0]);
    CHECK(t.overflow[2]);
    CHECK(std::isnan(t.y[0].back()));
}

TEST_CASE("matching report") {
    auto c = small_config("matching");
    c.matching.fir_order = 32;
    const auto r = run_matching(c);
    CHECK(r.mu < r.cost_zero);
    CHECK(r.converged);
    CHECK(r.taps.size() == 32);
    CHECK(count_lines(r.csv) == 33);
    CHECK(r.text().find("cost(Z=0)") != std::string::npos);
    // Same configuration, same report.
    const auto again = run_matching(c);
    CHECK(again.text() == r.text());
    CHECK(slurp(again.csv) == slurp(r.csv));
    // More taps never hurt.
    c.matching.fir_order = 64;
    CHECK(run_matching(c).mu <= r.mu * (1 + 1e-6));
    fs::remove_all(c.output_dir);

    auto bad = small_config("matching_bad");
    bad.agent.a = std::nan("");
    CHECK_THROWS(run_matching(bad));
}

TEST_CASE("scaling run: rows, manifest, determinism") {
    auto c = small_config("scaling_a");
    c.deterministic = true;
    c.snapshot = snapshot::Format::Text;
    const auto a = run_scaling(c);
    REQUIRE(a.records.size() == 2);
    for (const auto& r : a.records) {
        CHECK(r.error.empty());
        CHECK(r.cost_selfish > 0);
        CHECK(r.cost_violating >= r.cost_selfish);
    }
    CHECK(count_lines(a.csv) == 3);
    CHECK(slurp(a.csv).find(",NA,") != std::string::npos);
    const auto manifest = slurp(c.output_dir / "scaling.manifest");
    CHECK(manifest.find("config_hash") != std::string::npos);
    CHECK(manifest.find(kVersion) != std::string::npos);
    // Snapshots of the largest population restore bit-exactly.
    const auto snap = snapshot::load(c.output_dir / "scaling_compliant.json");
    CHECK(snap.params.size() == 8);
    REQUIRE(snap.q.has_value());
    CHECK(snap.q->off_diagonal_count() > 0);

    auto c2 = c;
    c2.output_dir = scratch("scaling_b");
    const auto b = run_scaling(c2);
    CHECK(slurp(a.csv) == slurp(b.csv));
    fs::remove_all(c.output_dir);
    fs::remove_all(c2.output_dir);
}

TEST_CASE("lemma decay run: bound validity on a small grid") {
    auto c = small_config("lemma");
    c.lemma.n_list = {4, 8, 16};
    c.lemma.m_list = {1, 2, 4};
    const auto r = run_lemma_decay(c);
    // 3 n values x 3 profiles x (3 M values + one H2 row)
    CHECK(r.records.size() == 36);
    for (const auto& rec : r.records) CHECK(rec.measured <= rec.bound);
    CHECK(r.checks.front().name == "bound_valid");
    CHECK(r.checks.front().passed);
    CHECK(r.slopes.size() == 6);
    CHECK(fs::exists(c.output_dir / "lemma_decay_slopes.csv"));
    fs::remove_all(c.output_dir);
}
