#include "mfc/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace mfc::experiments {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string num(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

// CSV cells never need quoting except free-text error fields.
std::string quoted(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c == '\n' ? ' ' : c);
    return out + "\"";
}

std::ofstream open_csv(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

json checks_json(const std::vector<Check>& checks) {
    json a = json::array();
    for (const auto& c : checks) a.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    return a;
}

void write_manifest(const fs::path& csv, const std::string& run, const ExperimentConfig& config, json extra) {
    const auto config_text = config_to_json(config);
    char hash[20];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(fnv1a64(config_text)));
    json m = {
        {"run", run},
        {"version", kVersion},
        {"seed", config.seed},
        {"deterministic", config.deterministic},
        {"config_hash", std::string("fnv1a64:") + hash},
        {"config", json::parse(config_text)},
        {"csv", csv.filename().string()},
    };
    for (auto& [k, v] : extra.items()) m[k] = v;
    auto path = csv;
    path.replace_extension(".manifest");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << m.dump(2) << "\n";
}

std::string snapshot_extension(snapshot::Format f) { return f == snapshot::Format::Text ? ".json" : ".cbor"; }

std::vector<matching::MatchingSolution> head(const std::vector<matching::MatchingSolution>& s, std::size_t n) {
    return {s.begin(), s.begin() + static_cast<std::ptrdiff_t>(n)};
}

// Standard normal via Box-Muller on portable uniforms.
double normal(std::mt19937_64& rng) {
    const double u1 = 1.0 - ensemble::portable_uniform(rng);
    const double u2 = ensemble::portable_uniform(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

std::string fmt_fixed(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

}  // namespace

bool all_passed(const std::vector<Check>& checks) {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

std::uint64_t fnv1a64(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_slope: need two or more points");
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0) || !(y[i] > 0)) throw std::invalid_argument("loglog_slope: values must be positive");
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(x.size());
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = std::log(x[i]) - mx;
        sxy += dx * (std::log(y[i]) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

// ------------------------------------------------------------------ scaling

ScalingResult run_scaling(const ExperimentConfig& config) {
    config.validate();
    Stopwatch total;
    ScalingResult result;
    const auto n_max = config.n_list.back();
    const auto cost = config.cost_options();

    Stopwatch t_setup;
    const auto full = ensemble::sample_population(n_max, config.seed, config.rho);
    const auto solutions = matching::solve_agents(full.factors(), config.norm, config.block, config.matching);
    const double setup_time = t_setup.seconds();

    std::vector<std::string> notes;
    std::optional<ensemble::BlockQ> last_q[3];
    std::optional<ensemble::EnsembleModel> last_model;
    for (const auto n : config.n_list) {
        ScalingRecord r;
        r.n = n;
        r.fanout = config.fanout_for(n);
        r.alpha_compliant = config.compliant.alpha(n);
        r.alpha_violating = config.violating.alpha(n);
        Stopwatch t;
        try {
            const auto model = ensemble::prefix(full, n);
            const auto q = ensemble::selfish_q(head(solutions, n), config.grid);
            const auto qc = ensemble::make_alpha_dominant(q, config.compliant, r.fanout,
                                                          ensemble::mix_seed(config.seed, n, 1), config.sign_mode);
            const auto qv = ensemble::make_alpha_dominant(q, config.violating, r.fanout,
                                                          ensemble::mix_seed(config.seed, n, 2), config.sign_mode);
            r.cost_selfish = ensemble::social_cost(model, q, config.norm, config.block, cost).value;
            r.cost_compliant = ensemble::social_cost(model, qc, config.norm, config.block, cost).value;
            r.cost_violating = ensemble::social_cost(model, qv, config.norm, config.block, cost).value;
            if (r.cost_selfish > r.cost_compliant)
                notes.push_back("n=" + std::to_string(n) + ": selfish cost exceeds compliant cost");
            if (config.snapshot && n == n_max) {
                last_q[0] = q;
                last_q[1] = qc;
                last_q[2] = qv;
                last_model = model;
            }
        } catch (const std::exception& e) {
            r.error = e.what();
        }
        r.wall_time_s = t.seconds();
        result.records.push_back(r);
    }

    result.csv = config.output_dir / "scaling.csv";
    {
        auto out = open_csv(result.csv);
        out << "n,seed,fanout,alpha_compliant,alpha_violating,cost_selfish,cost_compliant,cost_violating,"
               "wall_time_s,error\n";
        for (const auto& r : result.records) {
            const bool ok = r.error.empty();
            out << r.n << ',' << config.seed << ',' << r.fanout << ',' << num(r.alpha_compliant) << ','
                << num(r.alpha_violating) << ',' << (ok ? num(r.cost_selfish) : "nan") << ','
                << (ok ? num(r.cost_compliant) : "nan") << ',' << (ok ? num(r.cost_violating) : "nan") << ','
                << (config.deterministic ? "NA" : num(r.wall_time_s)) << ',' << quoted(r.error) << "\n";
        }
    }

    // Trend checks over the first and last rows.
    const auto& first = result.records.front();
    const auto& last = result.records.back();
    const bool rows_ok = std::all_of(result.records.begin(), result.records.end(),
                                     [](const ScalingRecord& r) { return r.error.empty(); });
    result.checks.push_back({"rows_complete", rows_ok, rows_ok ? "all rows evaluated" : "some rows failed"});
    if (rows_ok && result.records.size() >= 2) {
        double lo = first.cost_selfish, hi = first.cost_selfish;
        for (const auto& r : result.records) {
            lo = std::min(lo, r.cost_selfish);
            hi = std::max(hi, r.cost_selfish);
        }
        const double spread = hi / lo;
        result.checks.push_back({"selfish_flat", spread <= config.checks.selfish_spread,
                                 "max/min = " + num(spread) + " (limit " + num(config.checks.selfish_spread) + ")"});
        const double g0 = first.cost_compliant - first.cost_selfish;
        const double g1 = last.cost_compliant - last.cost_selfish;
        result.checks.push_back({"compliant_converges", g1 < config.checks.compliant_gap * g0,
                                 "gap " + num(g0) + " -> " + num(g1) + ", ratio " + num(g1 / g0) + " (limit " +
                                     num(config.checks.compliant_gap) + ")"});
        const double growth = last.cost_violating / first.cost_violating;
        result.checks.push_back({"violating_diverges", growth > config.checks.violating_growth,
                                 "ratio " + num(growth) + " (limit " + num(config.checks.violating_growth) + ")"});
    }

    json files = json::array();
    if (config.snapshot && last_model) {
        const char* names[3] = {"selfish", "compliant", "violating"};
        for (int k = 0; k < 3; ++k) {
            const auto path =
                config.output_dir / ("scaling_" + std::string(names[k]) + snapshot_extension(*config.snapshot));
            snapshot::save(path, snapshot::capture(*last_model, &*last_q[k]), *config.snapshot);
            files.push_back(path.filename().string());
        }
    }
    json times = json::object();
    times["setup_s"] = setup_time;
    for (const auto& r : result.records) times["n=" + std::to_string(r.n)] = r.wall_time_s;
    times["total_s"] = total.seconds();
    write_manifest(result.csv, "scaling", config,
                   {{"checks", checks_json(result.checks)},
                    {"soft_notes", notes},
                    {"wall_time_s", times},
                    {"resampled", full.resampled},
                    {"snapshots", files}});
    return result;
}

// ------------------------------------------------------------- lemma decay

DecayResult run_lemma_decay(const ExperimentConfig& config) {
    config.validate();
    Stopwatch total;
    DecayResult result;
    const auto& n_list = config.lemma.n_list.empty() ? config.n_list : config.lemma.n_list;
    const auto n_max = n_list.back();
    for (auto m : config.lemma.m_list)
        if (m < 1 || m > n_list.front()) throw std::invalid_argument("lemma-decay: M must lie in [1, min n]");
    const auto cost = config.cost_options();
    const auto full = ensemble::sample_population(n_max, config.seed, config.rho);
    const auto solutions = matching::solve_agents(full.factors(), config.norm, config.block, config.matching);

    for (const auto n : n_list) {
        const auto model = ensemble::prefix(full, n);
        const auto q0 = ensemble::selfish_q(head(solutions, n), config.grid);
        const auto& b = model.bounds;
        for (std::size_t k = 0; k < config.lemma.p_list.size(); ++k) {
            const ensemble::DominanceProfile profile{config.lemma.c, config.lemma.p_list[k]};
            const double alpha = profile.alpha(n);
            const auto q = ensemble::make_alpha_dominant(q0, alpha, n - 1,
                                                         ensemble::mix_seed(config.seed, n, 16 + k),
                                                         config.lemma.sign_mode);
            const std::string label = "p=" + num(profile.p);
            // The first M block rows of the average term are identical, so
            // the M-truncated norm is sqrt(M) times the single-row norm.
            const double row = ensemble::average_block_norm(model, q, 1, cost).value;
            for (const auto m : config.lemma.m_list) {
                DecayRecord r{label, profile.p, alpha, n, m, NormKind::Hinf,
                              std::sqrt(static_cast<double>(m)) * row,
                              ensemble::lemma_bound_hinf(m, n, b.gamma_h, q.gamma_q(), b.gamma_u, b.gamma_v, alpha)};
                result.records.push_back(r);
            }
            if (config.lemma.h2) {
                const double measured = ensemble::average_block_norm_h2(model, q, cost).value;
                const double bound =
                    ensemble::lemma_bound_h2(n, b.gamma_u, q.gamma_q(), b.gamma_h2, b.gamma_v2, alpha).total();
                result.records.push_back({label, profile.p, alpha, n, 0, NormKind::H2, measured, bound});
            }
        }
    }

    result.csv = config.output_dir / "lemma_decay.csv";
    {
        auto out = open_csv(result.csv);
        out << "profile,p,alpha,n,M,norm,measured,bound,seed\n";
        for (const auto& r : result.records)
            out << r.profile << ',' << num(r.p) << ',' << num(r.alpha) << ',' << r.n << ','
                << (r.m ? std::to_string(r.m) : std::string("NA")) << ',' << to_string(r.norm) << ','
                << num(r.measured) << ',' << num(r.bound) << ',' << config.seed << "\n";
    }

    std::size_t violations = 0;
    for (const auto& r : result.records)
        if (!(r.measured <= r.bound)) ++violations;
    result.checks.push_back({"bound_valid", violations == 0,
                             std::to_string(violations) + " violations in " + std::to_string(result.records.size()) +
                                 " rows"});

    // Slopes over n of the M = 1 (H-infinity) and whole-population (H2) quantities.
    std::vector<NormKind> kinds{NormKind::Hinf};
    if (config.lemma.h2) kinds.push_back(NormKind::H2);
    const auto m_ref = config.lemma.m_list.front();
    std::map<std::pair<double, int>, double> at_max;
    for (const auto kind : kinds) {
        for (const double p : config.lemma.p_list) {
            std::vector<double> xs, ys;
            for (const auto& r : result.records) {
                if (r.p != p || r.norm != kind) continue;
                if (kind == NormKind::Hinf && r.m != m_ref) continue;
                xs.push_back(static_cast<double>(r.n));
                ys.push_back(r.measured);
                if (r.n == n_max) at_max[{p, static_cast<int>(kind)}] = r.measured;
            }
            if (xs.size() < 2) continue;
            SlopeRecord s{p, kind, loglog_slope(xs, ys), p - 0.5};
            result.slopes.push_back(s);
            if (p < 0.5) {
                const bool ok = std::abs(s.slope - s.expected) <= config.checks.slope_tolerance;
                result.checks.push_back({"slope_" + to_string(kind) + "_p=" + num(p), ok,
                                         "slope " + num(s.slope) + ", expected " + num(s.expected) + " +- " +
                                             num(config.checks.slope_tolerance)});
            }
        }
        // A violating profile must end above every compliant one.
        for (const double pv : config.lemma.p_list) {
            if (pv < 0.5) continue;
            for (const double pc : config.lemma.p_list) {
                if (pc >= 0.5) continue;
                const double v = at_max[{pv, static_cast<int>(kind)}], c = at_max[{pc, static_cast<int>(kind)}];
                result.checks.push_back({"violating_above_" + to_string(kind) + "_p=" + num(pv) + "_vs_" + num(pc),
                                         v > c, num(v) + " vs " + num(c) + " at n=" + std::to_string(n_max)});
            }
        }
    }

    auto slopes_csv = config.output_dir / "lemma_decay_slopes.csv";
    {
        auto out = open_csv(slopes_csv);
        out << "p,norm,slope,expected\n";
        for (const auto& s : result.slopes)
            out << num(s.p) << ',' << to_string(s.norm) << ',' << num(s.slope) << ',' << num(s.expected) << "\n";
    }
    write_manifest(result.csv, "lemma-decay", config,
                   {{"checks", checks_json(result.checks)},
                    {"slopes_csv", slopes_csv.filename().string()},
                    {"wall_time_s", {{"total_s", total.seconds()}}},
                    {"resampled", full.resampled}});
    return result;
}

// -------------------------------------------------------------- simulation

Trajectories simulate_population(const ensemble::EnsembleModel& model, const ensemble::BlockQ& q,
                                 const SimulationConfig& sim, std::uint64_t seed) {
    if (q.n() != model.n()) throw std::invalid_argument("simulate_population: Q size does not match population");
    if (q.off_diagonal_count() != 0) throw std::invalid_argument("simulate_population: Q must be block diagonal");
    const auto n = model.n();
    const auto steps = static_cast<std::size_t>(sim.horizon);
    Trajectories t;
    t.y.assign(n, std::vector<double>(steps, std::nan("")));
    t.x1 = t.u = t.w = t.y;
    t.overflow.assign(n, false);
    t.s.resize(steps);
    for (std::size_t k = 0; k < steps; ++k)
        t.s[k] = sim.amplitude * std::sin(2.0 * kPi * static_cast<double>(k) / sim.period);

    for (std::size_t i = 0; i < n; ++i) {
        const auto& f = model.agents[i].factors;
        const auto& plant = f.plant;
        if (plant.d_yu() != 0.0) throw std::invalid_argument("simulate_population: plant has feedthrough u -> y");
        const auto k_sys = youla::controller_from_q(f, q.diagonal[i].realization());
        const Matrix a = plant.a(), bw = plant.b_w(), cy = plant.c_y(), dyw = plant.d_yw();
        const Vector bu = plant.b_u();
        Vector x = Vector::Zero(plant.n_x());
        for (Eigen::Index s = 0; s < std::min<Eigen::Index>(x.size(), 2); ++s) x(s) = sim.initial_state[s];
        Vector xc = Vector::Zero(k_sys.states());
        std::mt19937_64 rng(ensemble::mix_seed(seed, i, 0x5eed));
        for (std::size_t k = 0; k < steps; ++k) {
            const double w = sim.noise_sigma > 0 ? sim.noise_sigma * normal(rng) : 0.0;
            // A reference on y enters exactly where v does.
            Vector d(2);
            d << w, t.s[k];
            const double y = (cy * x + dyw * d)(0);
            const double u = (k_sys.C() * xc)(0) + k_sys.D()(0, 0) * y;
            t.y[i][k] = y;
            t.x1[i][k] = x(0);
            t.u[i][k] = u;
            t.w[i][k] = w;
            x = (a * x + bw * d + bu * u).eval();
            xc = (k_sys.A() * xc + k_sys.B().col(0) * y).eval();
            if (!x.allFinite() || !xc.allFinite() || x.cwiseAbs().maxCoeff() > sim.overflow_limit ||
                (xc.size() && xc.cwiseAbs().maxCoeff() > sim.overflow_limit)) {
                t.overflow[i] = true;
                break;
            }
        }
    }
    return t;
}

SimulationResult run_simulation(const ExperimentConfig& config) {
    config.validate();
    SimulationResult result;
    const auto& sim = config.simulation;
    std::vector<ensemble::EnsembleModel> models;
    if (!sim.agents.empty()) {
        models.push_back(ensemble::make_model(sim.agents, config.seed, config.rho));
    } else {
        const auto full = ensemble::sample_population(sim.n_list.back(), config.seed, config.rho);
        for (const auto n : sim.n_list) models.push_back(ensemble::prefix(full, n));
    }
    const auto solutions =
        matching::solve_agents(models.back().factors(), config.norm, config.block, config.matching);
    for (const auto& model : models) {
        Stopwatch t;
        const auto n = model.n();
        const auto q = ensemble::selfish_q(head(solutions, n), config.grid);
        const auto traj = simulate_population(model, q, sim, config.seed);
        TrajectoryRun run;
        run.n = n;
        run.csv = config.output_dir / ("trajectories_n" + std::to_string(n) + ".csv");
        auto out = open_csv(run.csv);
        out << "k,agent,y,x1,u,w,s,seed\n";
        for (std::size_t i = 0; i < n; ++i) {
            if (traj.overflow[i]) run.overflowed.push_back(i);
            for (std::size_t k = 0; k < traj.s.size(); ++k) {
                if (std::isfinite(traj.y[i][k])) run.max_abs_y = std::max(run.max_abs_y, std::abs(traj.y[i][k]));
                out << k << ',' << i << ',' << num(traj.y[i][k]) << ',' << num(traj.x1[i][k]) << ','
                    << num(traj.u[i][k]) << ',' << num(traj.w[i][k]) << ',' << num(traj.s[k]) << ','
                    << config.seed << "\n";
            }
        }
        out.close();
        Check c{"bounded_n=" + std::to_string(n), run.overflowed.empty(),
                std::to_string(run.overflowed.size()) + " overflowed agents, max |y| = " + num(run.max_abs_y)};
        result.checks.push_back(c);
        write_manifest(run.csv, "simulate", config,
                       {{"checks", checks_json({c})},
                        {"n", n},
                        {"injection", to_string(sim.mode)},
                        {"overflowed_agents", run.overflowed},
                        {"wall_time_s", {{"total_s", t.seconds()}}}});
        result.runs.push_back(std::move(run));
    }
    return result;
}

// ---------------------------------------------------------------- matching

std::string MatchingReport::text() const {
    std::ostringstream os;
    os << "agent a=" << num(a) << " b=" << num(b) << "\n"
       << "mu = " << fmt_fixed("%.10g", mu) << "\n"
       << "cost(Z=0) = " << fmt_fixed("%.10g", cost_zero) << "\n"
       << "certificate gap = " << fmt_fixed("%.3e", certificate_gap) << "\n"
       << "iterations = " << iterations << (converged ? "" : " (not converged)") << "\n"
       << "grid = " << grid_size << "\n"
       << "taps = " << taps.size() << "\n";
    for (const auto& w : warnings) os << "warning: " << w << "\n";
    for (const auto& c : checks) os << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
    return os.str();
}

MatchingReport run_matching(const ExperimentConfig& config) {
    config.validate();
    Stopwatch t;
    MatchingReport rep;
    rep.a = config.agent.a;
    rep.b = config.agent.b;
    if (!std::isfinite(rep.a) || !std::isfinite(rep.b)) throw std::invalid_argument("matching: a and b must be finite");
    const auto factors = youla::factorize_agent({rep.a, rep.b}, config.rho);
    const auto problem = matching::agent_problem(factors, config.norm, config.block, config.matching);
    const auto sol = matching::solve(problem);
    rep.mu = sol.cost;
    rep.cost_zero = matching::evaluate_cost(problem, lti::FirMatrix::zero(1, 1, 1));
    rep.certificate_gap = sol.certificate_gap;
    rep.iterations = sol.iterations;
    rep.converged = sol.converged;
    rep.grid_size = sol.grid_size;
    rep.taps = sol.z.scalar_taps();
    rep.warnings = sol.warnings;
    rep.checks.push_back({"improves_on_zero", rep.mu <= rep.cost_zero * (1 + 1e-12),
                          num(rep.mu) + " vs " + num(rep.cost_zero)});
    rep.checks.push_back({"converged", rep.converged, std::to_string(rep.iterations) + " iterations"});

    rep.csv = config.output_dir / "matching.csv";
    {
        auto out = open_csv(rep.csv);
        out << "k,tap\n";
        for (std::size_t k = 0; k < rep.taps.size(); ++k) out << k << ',' << num(rep.taps[k]) << "\n";
    }
    write_manifest(rep.csv, "matching", config,
                   {{"checks", checks_json(rep.checks)},
                    {"a", rep.a},
                    {"b", rep.b},
                    {"mu", rep.mu},
                    {"cost_zero", rep.cost_zero},
                    {"certificate_gap", rep.certificate_gap},
                    {"iterations", rep.iterations},
                    {"converged", rep.converged},
                    {"grid_size", rep.grid_size},
                    {"warnings", rep.warnings},
                    {"wall_time_s", {{"total_s", t.seconds()}}}});
    return rep;
}

}  // namespace mfc::experiments
