#include "mfc/youla.hpp"

#include <cmath>
#include <string>

namespace mfc::youla {

bool in_nominal_range(const AgentParameters& p) {
    return p.a >= kMinA && p.a <= kMaxA && p.b >= kMinB && p.b <= kMaxB;
}

GeneralizedPlant build_agent_plant(const AgentParameters& params, double rho) {
    if (!std::isfinite(params.a) || !std::isfinite(params.b) || !std::isfinite(rho)) {
        throw std::invalid_argument("build_agent_plant: parameters must be finite");
    }
    Matrix a(2, 2);
    a << 1.0, 1.0, 0.0, params.a;
    // inputs [w, v, u]
    Matrix b(2, 3);
    b << 0.0, 0.0, 0.0, 1.0, 0.0, params.b;
    // outputs [z, xi, y]
    Matrix c(3, 2);
    c << 1.0, 0.0, 0.0, 0.0, -1.0, 0.0;
    Matrix d(3, 3);
    d << 0.0, 0.0, 0.0, 0.0, 0.0, rho, 0.0, 1.0, 0.0;
    return {lti::StateSpace(a, b, c, d), 2, 2, 1};
}

Matrix solve_dare(const Matrix& a, const Matrix& b, const Matrix& q, const Matrix& r, double tolerance,
                  int max_iterations) {
    Matrix p = q;
    for (int it = 0; it < max_iterations; ++it) {
        const Matrix bp = b.transpose() * p;
        const Matrix gain = (r + bp * b).ldlt().solve(bp * a);
        Matrix next = q + a.transpose() * p * a - a.transpose() * p * b * gain;
        next = 0.5 * (next + next.transpose()).eval();
        if (!next.allFinite() || next.norm() > 1e14) break;
        const double change = (next - p).norm();
        p = std::move(next);
        if (change <= tolerance * std::max(1.0, p.norm())) return p;
    }
    throw SynthesisError("solve_dare: Riccati iteration did not converge");
}

Gains stabilizing_gains(const GeneralizedPlant& plant, const RiccatiWeights& weights) {
    const auto n = plant.n_x();
    const Matrix a = plant.a();
    const Matrix bu = plant.b_u();
    const Matrix cy = plant.c_y();
    const Matrix qx = weights.state * Matrix::Identity(n, n);
    const Matrix r = weights.input * Matrix::Identity(1, 1);

    Gains g;
    try {
        const Matrix p = solve_dare(a, bu, qx, r, weights.tolerance, weights.max_iterations);
        g.f = -(r + bu.transpose() * p * bu).ldlt().solve(bu.transpose() * p * a);
    } catch (const SynthesisError&) {
        throw SynthesisError("stabilizing_gains: (A, B_u) pair is not stabilizable (Riccati did not converge)");
    }
    try {
        const Matrix p = solve_dare(a.transpose(), cy.transpose(), qx, r, weights.tolerance,
                                    weights.max_iterations);
        const Matrix k = -(r + cy * p * cy.transpose()).ldlt().solve(cy * p * a.transpose());
        g.l = k.transpose();
    } catch (const SynthesisError&) {
        throw SynthesisError("stabilizing_gains: (A, C_y) pair is not detectable (Riccati did not converge)");
    }

    const double rf = lti::spectral_radius(a + bu * g.f);
    const double rl = lti::spectral_radius(a + g.l * cy);
    if (rf > 1.0 - kStabilityMargin) {
        throw SynthesisError("stabilizing_gains: A + B_u F not stable (radius " + std::to_string(rf) + ")");
    }
    if (rl > 1.0 - kStabilityMargin) {
        throw SynthesisError("stabilizing_gains: A + L C_y not stable (radius " + std::to_string(rl) + ")");
    }
    return g;
}

YoulaFactors youla_factors(const GeneralizedPlant& plant, const Gains& gains) {
    if (plant.d_yu() != 0.0) {
        throw std::invalid_argument("youla_factors: measurement feedthrough from u is not supported");
    }
    const auto n = plant.n_x();
    const Matrix a = plant.a();
    const Matrix bw = plant.b_w();
    const Matrix bu = plant.b_u();
    const Matrix cz = plant.c_z();
    const Matrix cy = plant.c_y();
    const Matrix dzw = plant.d_zw();
    const Matrix dzu = plant.d_zu();
    const Matrix dyw = plant.d_yw();
    const Matrix& f = gains.f;
    const Matrix& l = gains.l;

    const Matrix a_state = a + bu * f;
    const Matrix a_error = a + l * cy;
    const Matrix b_error = bw + l * dyw;

    // States (x, e), e = x - xhat.
    Matrix ah = Matrix::Zero(2 * n, 2 * n);
    ah.topLeftCorner(n, n) = a_state;
    ah.topRightCorner(n, n) = -bu * f;
    ah.bottomRightCorner(n, n) = a_error;
    Matrix bh(2 * n, plant.n_w);
    bh.topRows(n) = bw;
    bh.bottomRows(n) = b_error;
    Matrix ch(plant.n_z, 2 * n);
    ch.leftCols(n) = cz + dzu * f;
    ch.rightCols(n) = -dzu * f;
    lti::StateSpace h(ah, bh, ch, dzw);

    lti::StateSpace u(a_state, bu, -(cz + dzu * f), -dzu);
    lti::StateSpace v(a_error, b_error, cy, dyw);

    for (const auto* sys : {&h, &u, &v}) {
        if (!lti::is_stable(*sys)) throw SynthesisError("youla_factors: factor is not stable; check the gains");
    }
    return {std::move(h), std::move(u), std::move(v), gains, plant};
}

lti::StateSpace controller_from_q(const YoulaFactors& factors, const lti::StateSpace& q) {
    if (q.inputs() != 1 || q.outputs() != 1) {
        throw std::invalid_argument("controller_from_q: Q must be 1x1");
    }
    if (!lti::is_stable(q)) throw std::invalid_argument("controller_from_q: Q must be stable");
    const auto& plant = factors.plant;
    const Matrix a = plant.a();
    const Matrix bu = plant.b_u();
    const Matrix cy = plant.c_y();
    const Matrix& f = factors.gains.f;
    const Matrix& l = factors.gains.l;
    const auto n = plant.n_x();
    const auto nq = q.states();
    const double dq = q.D()(0, 0);

    const Matrix f_eff = f - dq * cy;
    Matrix ak(n + nq, n + nq);
    ak.topLeftCorner(n, n) = a + l * cy + bu * f_eff;
    ak.topRightCorner(n, nq) = bu * q.C();
    ak.bottomLeftCorner(nq, n) = -q.B() * cy;
    ak.bottomRightCorner(nq, nq) = q.A();
    Matrix bk(n + nq, 1);
    bk.topRows(n) = dq * bu - l;
    bk.bottomRows(nq) = q.B();
    Matrix ck(1, n + nq);
    ck.leftCols(n) = f_eff;
    ck.rightCols(nq) = q.C();
    return {ak, bk, ck, q.D()};
}

lti::StateSpace central_controller(const YoulaFactors& factors) {
    const auto& plant = factors.plant;
    const Matrix& f = factors.gains.f;
    const Matrix& l = factors.gains.l;
    const Matrix a = plant.a() + l * plant.c_y() + plant.b_u() * f;
    return {a, -l, f, Matrix::Zero(1, 1)};
}

lti::StateSpace closed_loop(const YoulaFactors& factors, const lti::StateSpace& q) {
    const auto& plant = factors.plant;
    return lti::lft_lower(plant.realization, controller_from_q(factors, q), plant.n_z, plant.n_w);
}

double verify_parametrization(const YoulaFactors& factors, const lti::StateSpace& q,
                              std::span<const Complex> probes) {
    const auto loop = closed_loop(factors, q);
    double worst = 0.0;
    for (const Complex lambda : probes) {
        const CMatrix qv = lti::freq_response(q, lambda);
        const CMatrix param = lti::freq_response(factors.h, lambda) -
                              lti::freq_response(factors.u, lambda) * qv * lti::freq_response(factors.v, lambda);
        const CMatrix direct = lti::freq_response(loop, lambda);
        worst = std::max(worst, (direct - param).norm() / std::max(1.0, param.norm()));
    }
    return worst;
}

YoulaFactors factorize_agent(const AgentParameters& params, double rho, const RiccatiWeights& weights) {
    const auto plant = build_agent_plant(params, rho);
    return youla_factors(plant, stabilizing_gains(plant, weights));
}

}  // namespace mfc::youla
