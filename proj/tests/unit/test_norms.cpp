#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "mfc/norms.hpp"
#include "test_support.hpp"

using namespace mfc;
using namespace mfc::norms;

TEST_CASE("hinf of a constant matrix is its largest singular value") {
    Matrix d(2, 2);
    d << 3, 0, 0, 1;
    const auto r = hinf_norm(lti::StateSpace::gain(d));
    CHECK(r.value == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("hinf of a first-order lowpass") {
    // |1 / (1 - 0.5 l)| peaks at l = 1 with value 2.
    const lti::StateSpace sys(Matrix::Constant(1, 1, 0.5), Matrix::Constant(1, 1, 0.5), Matrix::Ones(1, 1),
                              Matrix::Ones(1, 1));
    const auto r = hinf_norm(sys);
    CHECK(std::abs(r.value - 2.0) < 1e-4);
    CHECK(r.peak_theta == doctest::Approx(0.0));
}

TEST_CASE("interior peak is refined") {
    // Lightly damped resonance at theta = 1: poles 0.95 e^{+-j}.
    const double r0 = 0.95, w0 = 1.0;
    Matrix a(2, 2);
    a << 2 * r0 * std::cos(w0), -r0 * r0, 1, 0;
    const lti::StateSpace sys(a, Matrix(Eigen::Vector2d(1, 0)), Matrix(Eigen::RowVector2d(0, 1)), Matrix::Zero(1, 1));
    FrequencyGrid coarse;
    coarse.count = 64;
    coarse.max_doublings = 0;
    FrequencyGrid dense;
    dense.count = 200001;
    dense.max_doublings = 0;
    dense.refine_peak = false;
    const double truth = hinf_norm(sys, dense).value;
    const auto refined = hinf_norm(sys, coarse);
    coarse.refine_peak = false;
    const auto raw = hinf_norm(sys, coarse);
    CHECK(std::abs(refined.value - truth) <= std::abs(raw.value - truth));
    CHECK(refined.value <= truth * (1 + 1e-9));
}

TEST_CASE("grid adequacy on random systems") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        const auto sys = testing::random_stable(rng, 5, 2, 2, 0.8);
        const auto r = hinf_norm(sys);
        FrequencyGrid fine;
        fine.count = 8 * 512;
        fine.max_doublings = 0;
        const auto f = hinf_norm(sys, fine);
        CHECK(std::abs(r.value - f.value) <= 0.005 * f.value);
        CHECK(std::abs(r.value - r.coarse_value) <= 0.005 * r.value);
    }
}

TEST_CASE("scaled h2 norms") {
    SUBCASE("taps 3, 4") {
        const std::vector<double> taps{3.0, 4.0};
        const auto r = h2_norm_scaled(lti::FirMatrix::scalar(taps), 1);
        CHECK(r.value == doctest::Approx(5.0));
        CHECK(r.scaled);
    }
    SUBCASE("block diagonal of identical entries") {
        // n identical diagonal entries h: sqrt(n ||h||^2) / sqrt(n) = ||h||.
        const std::vector<double> h{1.0, -0.5, 0.25};
        const double hn = std::sqrt(1.0 + 0.25 + 0.0625);
        for (std::size_t n : {1u, 4u, 9u}) {
            std::vector<Matrix> taps;
            for (double t : h) taps.push_back(t * Matrix::Identity(n, n));
            CHECK(h2_norm_scaled(lti::FirMatrix(taps), n).value == doctest::Approx(hn));
        }
    }
    SUBCASE("state space agrees with a closed form") {
        // 1/(1 - 0.5 l): sum 0.25^k = 4/3.
        const lti::StateSpace sys(Matrix::Constant(1, 1, 0.5), Matrix::Constant(1, 1, 0.5), Matrix::Ones(1, 1),
                                  Matrix::Ones(1, 1));
        CHECK(h2_norm_scaled(sys, 1).value == doctest::Approx(std::sqrt(4.0 / 3.0)).epsilon(1e-8));
    }
    SUBCASE("unstable system cannot converge") {
        const lti::StateSpace sys(Matrix::Constant(1, 1, 1.01), Matrix::Ones(1, 1), Matrix::Ones(1, 1),
                                  Matrix::Zero(1, 1));
        CHECK_THROWS_AS(converged_taps(sys, 1e-8, 64, 1024), OverflowError);
    }
}

TEST_CASE("Parseval: tap energy equals frequency-domain energy") {
    std::mt19937_64 rng(3);
    std::vector<Matrix> taps;
    for (int k = 0; k < 12; ++k) taps.push_back(testing::random_matrix(rng, 3, 3));
    const lti::FirMatrix fir(taps);
    const double freq = frequency_domain_energy([&](Complex l) { return fir.response(l); }, 64);
    CHECK(std::abs(freq - fir.energy()) <= 1e-6 * fir.energy());
}

TEST_CASE("hinf invariants") {
    std::mt19937_64 rng(5);
    FrequencyGrid grid;
    grid.count = 1024;
    for (int trial = 0; trial < 4; ++trial) {
        const auto g1 = testing::random_stable(rng, 3, 2, 2, 0.7);
        const auto g2 = testing::random_stable(rng, 2, 2, 2, 0.7);
        const double n1 = hinf_norm(g1, grid).value, n2 = hinf_norm(g2, grid).value;
        CHECK(hinf_norm(lti::series(g2, g1), grid).value <= n1 * n2 * (1 + 1e-9));

        // Output and input permutations leave the norm unchanged.
        Matrix p(2, 2);
        p << 0, 1, 1, 0;
        const auto permuted = lti::series(lti::StateSpace::gain(p), lti::series(g1, lti::StateSpace::gain(p)));
        CHECK(hinf_norm(permuted, grid).value == doctest::Approx(n1).epsilon(1e-9));
    }
}

TEST_CASE("Lanczos agrees with dense SVD") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> nd;
    for (auto [m, n] : {std::pair{80, 80}, std::pair{150, 90}, std::pair{70, 200}}) {
        CMatrix a(m, n);
        for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = Complex(nd(rng), nd(rng));
        const double exact = Eigen::JacobiSVD<CMatrix>(a).singularValues()(0);
        const auto r = sigma_max(DenseOperator(a));
        CHECK(r.value == doctest::Approx(exact).epsilon(1e-8));
        const auto automatic = sigma_max_auto(DenseOperator(a));
        CHECK(automatic.method == SigmaMethod::Lanczos);
        CHECK(automatic.value == doctest::Approx(exact).epsilon(1e-8));
    }
    SUBCASE("rank one") {
        CVector u = CVector::Ones(100), v = CVector::LinSpaced(100, 1.0, 2.0);
        const CMatrix a = u * v.adjoint();
        CHECK(sigma_max(DenseOperator(a)).value == doctest::Approx(u.norm() * v.norm()).epsilon(1e-10));
    }
    SUBCASE("small operators go dense") {
        const CMatrix a = CMatrix::Identity(10, 10) * 2.0;
        const auto r = sigma_max_auto(DenseOperator(a));
        CHECK(r.method == SigmaMethod::DenseSvd);
        CHECK(r.value == doctest::Approx(2.0));
    }
    SUBCASE("2x2 closed form") {
        CMatrix a(2, 2);
        a << Complex(1, 2), 3, Complex(0, -1), Complex(4, 1);
        CHECK(sigma_max(a) == doctest::Approx(Eigen::JacobiSVD<CMatrix>(a).singularValues()(0)).epsilon(1e-12));
    }
}
