#include <random>

#include "doctest.h"
#include "mfc/youla.hpp"
#include "test_support.hpp"

using namespace mfc;
using namespace mfc::youla;

namespace {

// Scalar stable plant: x+ = 0.5 x + w + u, z = x, y = x + 0.1 w.
GeneralizedPlant scalar_plant() {
    Matrix b(1, 2);
    b << 1.0, 1.0;
    Matrix c(2, 1);
    c << 1.0, 1.0;
    Matrix d(2, 2);
    d << 0.0, 0.0, 0.1, 0.0;
    return {lti::StateSpace(Matrix::Constant(1, 1, 0.5), b, c, d), 1, 1, 1};
}

}  // namespace

TEST_CASE("build_agent_plant") {
    const auto p = build_agent_plant({1.0, 1.0});
    Matrix a(2, 2);
    a << 1, 1, 0, 1;
    CHECK(p.a() == a);
    CHECK(p.b_u()(0, 0) == 0.0);
    CHECK(p.b_u()(1, 0) == 1.0);
    CHECK(p.c_y()(0, 0) == -1.0);
    CHECK(p.c_y()(0, 1) == 0.0);
    CHECK(p.d_yw()(0, 1) == 1.0);  // v enters the measurement
    CHECK(p.d_yw()(0, 0) == 0.0);
    CHECK(p.n_w == 2);
    CHECK(p.n_z == 2);
    CHECK(p.d_zu()(1, 0) == kDefaultControlWeight);

    CHECK(lti::spectral_radius(build_agent_plant({0.5, 0.8}).a()) == doctest::Approx(1.0));
    CHECK_THROWS_AS(build_agent_plant({std::nan(""), 1.0}), std::invalid_argument);
    CHECK_FALSE(in_nominal_range({2.0, 1.0}));
    CHECK(in_nominal_range({1.5, 0.8}));
}

TEST_CASE("stabilizing_gains") {
    SUBCASE("already stable scalar plant") {
        const auto plant = scalar_plant();
        const auto g = stabilizing_gains(plant);
        CHECK(std::abs(0.5 + g.f(0, 0)) < 1.0);
    }
    SUBCASE("unstable case-study agent") {
        const auto plant = build_agent_plant({1.2, 1.0});
        const auto g = stabilizing_gains(plant);
        Eigen::EigenSolver<Matrix> sf(plant.a() + plant.b_u() * g.f);
        Eigen::EigenSolver<Matrix> sl(plant.a() + g.l * plant.c_y());
        CHECK(sf.eigenvalues().cwiseAbs().maxCoeff() < 1.0 - kStabilityMargin);
        CHECK(sl.eigenvalues().cwiseAbs().maxCoeff() < 1.0 - kStabilityMargin);
    }
    SUBCASE("unstabilizable integrator") {
        Matrix b(1, 2);
        b << 1.0, 0.0;
        Matrix c(2, 1);
        c << 1.0, 1.0;
        const GeneralizedPlant plant{lti::StateSpace(Matrix::Ones(1, 1), b, c, Matrix::Zero(2, 2)), 1, 1, 1};
        CHECK_THROWS_AS(stabilizing_gains(plant), SynthesisError);
        try {
            stabilizing_gains(plant);
        } catch (const SynthesisError& e) {
            CHECK(std::string(e.what()).find("B_u") != std::string::npos);
        }
    }
}

TEST_CASE("youla_factors") {
    std::mt19937_64 rng(17);
    const auto probes = testing::random_unit_points(rng, 16);

    SUBCASE("Q = 0 recovers the central closed loop") {
        const auto f = factorize_agent({1.2, 1.0});
        const auto loop = lti::lft_lower(f.plant.realization, central_controller(f), f.plant.n_z, f.plant.n_w);
        for (const auto l : probes) {
            CHECK((lti::freq_response(loop, l) - lti::freq_response(f.h, l)).norm() < 1e-10);
        }
        CHECK(f.h.outputs() == 2);
        CHECK(f.h.inputs() == 2);
        CHECK(f.u.inputs() == 1);
        CHECK(f.v.outputs() == 1);
    }
    SUBCASE("stable plant with zero gains") {
        const auto plant = scalar_plant();
        const Gains zero{Matrix::Zero(1, 1), Matrix::Zero(1, 1)};
        const auto f = youla_factors(plant, zero);
        const auto open = plant.realization.output_rows(0, 1).input_cols(0, 1);
        for (const auto l : probes) {
            CHECK((lti::freq_response(f.h, l) - lti::freq_response(open, l)).norm() < 1e-12);
        }
    }
    SUBCASE("factors are stable with finite norms") {
        const auto f = factorize_agent({1.2, 1.0});
        CHECK(lti::is_stable(f.h));
        CHECK(lti::is_stable(f.u));
        CHECK(lti::is_stable(f.v));
    }
}

TEST_CASE("verify_parametrization") {
    std::mt19937_64 rng(23);
    const auto f = factorize_agent({1.2, 1.0});
    const auto probes16 = testing::random_unit_points(rng, 16);
    const auto probes32 = testing::random_unit_points(rng, 32);

    CHECK(verify_parametrization(f, lti::StateSpace::gain(0.0), probes16) <= 1e-10);
    CHECK(verify_parametrization(f, lti::StateSpace::gain(0.3), probes16) <= 1e-8);
    const auto q = testing::random_stable(rng, 2, 1, 1, 0.7);
    CHECK(verify_parametrization(f, q, probes32) <= 1e-8);

    const lti::StateSpace unstable(Matrix::Constant(1, 1, 1.1), Matrix::Ones(1, 1), Matrix::Ones(1, 1),
                                   Matrix::Zero(1, 1));
    CHECK_THROWS_AS(verify_parametrization(f, unstable, probes16), std::invalid_argument);
}

TEST_CASE("controller_from_q") {
    std::mt19937_64 rng(29);
    const auto f = factorize_agent({0.9, 1.1});
    CHECK(controller_from_q(f, lti::StateSpace::gain(0.0)) == central_controller(f));

    const auto q = testing::random_stable(rng, 3, 1, 1, 0.6);
    const auto k = controller_from_q(f, q);
    CHECK(k.states() == f.plant.n_x() + q.states());
    const auto loop = closed_loop(f, q);
    CHECK(lti::stability(loop).spectral_radius <= 1.0 - kStabilityMargin);

    const lti::StateSpace unstable(Matrix::Constant(1, 1, 1.1), Matrix::Ones(1, 1), Matrix::Ones(1, 1),
                                   Matrix::Zero(1, 1));
    CHECK_THROWS_AS(controller_from_q(f, unstable), std::invalid_argument);
}

TEST_CASE("random case-study agents factorize with a valid parametrization") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> ua(kMinA, kMaxA), ub(kMinB, kMaxB);
    const auto probes = testing::random_unit_points(rng, 8);
    for (int i = 0; i < 50; ++i) {
        const auto f = factorize_agent({ua(rng), ub(rng)});
        CHECK(lti::is_stable(f.h));
        CHECK(lti::is_stable(f.u));
        CHECK(lti::is_stable(f.v));
        const auto q = testing::random_stable(rng, 2, 1, 1, 0.8);
        CHECK(verify_parametrization(f, q, probes) <= 1e-8);
    }
}
