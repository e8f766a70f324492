#pragma once

// Per-agent generalized plants and their observer-based Youla factors.
//
// The closed loop of a plant under any stabilizing controller is
// H - U Q V for a stable parameter Q; the factors here are built from a
// state-feedback gain F and an observer gain L so that Q = 0 gives the
// observer-based central controller.

#include <span>

#include "mfc/lti.hpp"

namespace mfc::youla {

// Realization with inputs [w (n_w); u (1)] and outputs [z (n_z); y (1)].
// The first `n_avg` regulated outputs are the channels compared against the
// population average; the remaining n_z - n_avg are penalty (xi) channels.
struct GeneralizedPlant {
    lti::StateSpace realization;
    Eigen::Index n_w = 0;
    Eigen::Index n_z = 0;
    Eigen::Index n_avg = 0;

    Eigen::Index n_x() const { return realization.states(); }
    Matrix a() const { return realization.A(); }
    Matrix b_w() const { return realization.B().leftCols(n_w); }
    Matrix b_u() const { return realization.B().rightCols(1); }
    Matrix c_z() const { return realization.C().topRows(n_z); }
    Matrix c_y() const { return realization.C().bottomRows(1); }
    Matrix d_zw() const { return realization.D().topLeftCorner(n_z, n_w); }
    Matrix d_zu() const { return realization.D().topRightCorner(n_z, 1); }
    Matrix d_yw() const { return realization.D().bottomLeftCorner(1, n_w); }
    double d_yu() const { return realization.D()(n_z, n_w); }
};

struct AgentParameters {
    double a = 1.0;
    double b = 1.0;

    bool operator==(const AgentParameters&) const = default;
};

inline constexpr double kDefaultControlWeight = 0.1;

// Ranges the case-study population is drawn from.
inline constexpr double kMinA = 0.5, kMaxA = 1.5;
inline constexpr double kMinB = 0.8, kMaxB = 1.2;
bool in_nominal_range(const AgentParameters& p);

// x1(k+1) = x1 + x2
// x2(k+1) = a x2 + w + b u
// y       = -x1 + v
// z = x1, xi = rho u; disturbances ordered [w, v].
GeneralizedPlant build_agent_plant(const AgentParameters& params, double rho = kDefaultControlWeight);

struct RiccatiWeights {
    double state = 1.0;        // identity state / process-noise weight scale
    double input = 1.0;        // control / measurement weight
    double tolerance = 1e-12;  // relative fixed-point change
    int max_iterations = 10'000;
};

// Stabilizing solution of P = Q + A'PA - A'PB (R + B'PB)^{-1} B'PA by
// fixed-point iteration from P = Q. Throws SynthesisError on non-convergence.
Matrix solve_dare(const Matrix& a, const Matrix& b, const Matrix& q, const Matrix& r,
                  double tolerance = 1e-12, int max_iterations = 10'000);

struct Gains {
    Matrix f;  // 1 x n_x, A + B_u F stable
    Matrix l;  // n_x x 1, A + L C_y stable
};

Gains stabilizing_gains(const GeneralizedPlant& plant, const RiccatiWeights& weights = {});

struct YoulaFactors {
    lti::StateSpace h;  // n_z x n_w
    lti::StateSpace u;  // n_z x 1
    lti::StateSpace v;  // 1 x n_w
    Gains gains;
    GeneralizedPlant plant;
};

YoulaFactors youla_factors(const GeneralizedPlant& plant, const Gains& gains);

// Observer-based controller (input y, output u) augmented with parameter q.
// Order is n_x + order(q).
lti::StateSpace controller_from_q(const YoulaFactors& factors, const lti::StateSpace& q);
lti::StateSpace central_controller(const YoulaFactors& factors);

// Closed loop w -> z of the plant under controller_from_q(factors, q).
lti::StateSpace closed_loop(const YoulaFactors& factors, const lti::StateSpace& q);

// max over probes of ||T_cl(l) - (H - U Q V)(l)||_F / max(1, ||(H - U Q V)(l)||_F).
double verify_parametrization(const YoulaFactors& factors, const lti::StateSpace& q,
                              std::span<const Complex> probes);

// Convenience: plant, gains and factors in one step.
YoulaFactors factorize_agent(const AgentParameters& params, double rho = kDefaultControlWeight,
                             const RiccatiWeights& weights = {});

}  // namespace mfc::youla
