#pragma once

// Per-agent model matching: minimize ||H - U Z V|| over stable scalar Z,
// parametrized as an FIR filter of length L (always stable, and both
// objectives are convex in the taps).

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mfc/norms.hpp"
#include "mfc/youla.hpp"

namespace mfc::matching {

struct MatchingOptions {
    std::size_t fir_order = 64;  // number of taps L
    norms::FrequencyGrid grid{};
    // H-infinity reweighting.
    int max_iterations = 500;
    double tolerance = 1e-6;  // relative change of the max-cost between iterations
    double damping = 0.5;     // weight update: W <- (1-d) W + d W_new
    int max_grid_doublings = 2;
    // H2: truncation of the impulse responses of H and U V.
    double tail_tolerance = 1e-12;
    double ridge = 1e-10;
};

// H: p x m, U: p x 1, V: 1 x m, all stable.
struct MatchingProblem {
    lti::StateSpace h, u, v;
    NormKind norm = NormKind::Hinf;
    MatchingOptions options{};
    // Optional bound on ||Z||_inf, applied by scaling after the solve.
    std::optional<double> bound;
};

struct MatchingSolution {
    lti::FirMatrix z;  // 1 x 1
    double cost = 0.0;
    // (theta, sigma_max of the error) on the solve grid.
    std::vector<double> profile_theta;
    std::vector<double> profile_cost;
    int iterations = 0;
    bool converged = true;
    // max-cost minus a dual lower bound on the optimum (H-infinity only).
    double certificate_gap = 0.0;
    std::size_t grid_size = 0;
    bool bound_active = false;
    std::vector<std::string> warnings;
};

// Stacks the Z channel under the matched channel: [H; 0] - [U; -1] Z V,
// so the objective penalizes both the error and the effort Z V.
MatchingProblem with_identity_channel(MatchingProblem problem);

// Problem on one agent's factors. BlockKind::One matches the averaged
// (z) outputs only; BlockKind::Two keeps every regulated output, so the
// control-penalty channel enters the objective.
MatchingProblem agent_problem(const youla::YoulaFactors& factors, NormKind norm, BlockKind block,
                              const MatchingOptions& options = {});

MatchingSolution solve_h2(const MatchingProblem& problem);
MatchingSolution solve_hinf(const MatchingProblem& problem);
MatchingSolution solve(const MatchingProblem& problem);

// Objective value for a given Z: H-infinity over the refined grid or H2 over
// converged taps, matching the problem's norm.
double evaluate_cost(const MatchingProblem& problem, const lti::FirMatrix& z);

// Error system H - U Z V as a realization.
lti::StateSpace error_system(const MatchingProblem& problem, const lti::FirMatrix& z);

lti::FirMatrix enforce_bound(const lti::FirMatrix& z, double gamma, const norms::FrequencyGrid& grid = {});

// mu_M for M = 1..n from per-agent costs: running max (H-infinity) or
// root-mean-square of the first M costs (scaled H2).
std::vector<double> mu_sequence(std::span<const double> costs, NormKind norm);

std::vector<MatchingSolution> solve_agents(std::span<const youla::YoulaFactors> agents, NormKind norm,
                                           BlockKind block, const MatchingOptions& options = {});
std::vector<double> mu_sequence(std::span<const youla::YoulaFactors> agents, NormKind norm, BlockKind block,
                                const MatchingOptions& options = {});

}  // namespace mfc::matching
