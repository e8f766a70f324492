#pragma once

// Discrete-time LTI systems in the lambda (delay) convention:
//   M(lambda) = D + C lambda (I - lambda A)^{-1} B = sum_k M_k lambda^k,
// with M_0 = D and M_k = C A^{k-1} B. A realization is stable when the
// spectral radius of A is below one, i.e. M is analytic on the closed disc.

#include <optional>
#include <span>
#include <vector>

#include "mfc/types.hpp"

namespace mfc::lti {

class StateSpace {
public:
    StateSpace() = default;
    StateSpace(Matrix a, Matrix b, Matrix c, Matrix d);

    // Memoryless gain with the given feedthrough.
    static StateSpace gain(Matrix d);
    static StateSpace gain(double d);
    // y(k) = u(k-1), scalar.
    static StateSpace delay();

    Eigen::Index states() const { return a_.rows(); }
    Eigen::Index inputs() const { return d_.cols(); }
    Eigen::Index outputs() const { return d_.rows(); }

    const Matrix& A() const { return a_; }
    const Matrix& B() const { return b_; }
    const Matrix& C() const { return c_; }
    const Matrix& D() const { return d_; }

    // Sub-systems selecting a contiguous range of outputs / inputs.
    StateSpace output_rows(Eigen::Index first, Eigen::Index count) const;
    StateSpace input_cols(Eigen::Index first, Eigen::Index count) const;

    bool operator==(const StateSpace& other) const = default;

private:
    Matrix a_ = Matrix::Zero(0, 0);
    Matrix b_ = Matrix::Zero(0, 0);
    Matrix c_ = Matrix::Zero(0, 0);
    Matrix d_ = Matrix::Zero(0, 0);
};

CMatrix freq_response(const StateSpace& sys, Complex lambda);

// Point on the unit circle for grid angle theta (lambda = e^{-j theta}).
inline Complex unit_point(double theta) { return std::polar(1.0, -theta); }

double spectral_radius(const Matrix& a);

struct Stability {
    bool stable = true;
    double spectral_radius = 0.0;
};

Stability stability(const StateSpace& sys, double margin = kStabilityMargin);
inline bool is_stable(const StateSpace& sys, double margin = kStabilityMargin) {
    return stability(sys, margin).stable;
}

// Finite impulse response: taps M_0..M_{L-1}, all p x m.
class FirMatrix {
public:
    FirMatrix() = default;
    explicit FirMatrix(std::vector<Matrix> taps);
    static FirMatrix scalar(std::span<const double> taps);
    static FirMatrix zero(Eigen::Index rows, Eigen::Index cols, std::size_t length);

    std::size_t length() const { return taps_.size(); }
    Eigen::Index rows() const { return taps_.front().rows(); }
    Eigen::Index cols() const { return taps_.front().cols(); }
    const std::vector<Matrix>& taps() const { return taps_; }
    const Matrix& tap(std::size_t k) const { return taps_.at(k); }

    // Scalar tap sequence of a 1x1 FIR.
    std::vector<double> scalar_taps() const;

    CMatrix response(Complex lambda) const;
    Complex scalar_response(Complex lambda) const;

    double energy() const;
    double h2_norm() const;
    // Energy carried by taps [first, L).
    double tail_energy(std::size_t first) const;

    FirMatrix scaled(double factor) const;
    StateSpace realization() const;

    bool operator==(const FirMatrix& other) const = default;

private:
    std::vector<Matrix> taps_;
};

struct ImpulseResponse {
    FirMatrix taps;
    // ||C A^{L-1}|| ||B|| / (1 - rho); present only for stable systems.
    std::optional<double> tail_estimate;
};

ImpulseResponse impulse_response(const StateSpace& sys, std::size_t length);

// Signal passes through `first`, then `second`: result = second * first.
StateSpace series(const StateSpace& first, const StateSpace& second);
StateSpace parallel(const StateSpace& a, const StateSpace& b);
StateSpace negate(const StateSpace& sys);
// Stack outputs of two systems sharing the same input.
StateSpace stack_outputs(const StateSpace& top, const StateSpace& bottom);

// Closed loop u -> y of y = G e, e = u + sign * K y.
StateSpace feedback(const StateSpace& forward, const StateSpace& back, double sign = -1.0);

// Lower linear fractional transformation. The plant is partitioned as
// inputs [w (n_w); u] and outputs [z (n_z); y]; the controller maps y -> u.
StateSpace lft_lower(const StateSpace& plant, const StateSpace& controller, Eigen::Index n_z,
                     Eigen::Index n_w);

// x(k+1) = A x + B u, y = C x + D u over the supplied input sequence.
std::vector<Vector> simulate(const StateSpace& sys, std::span<const Vector> inputs,
                             const Vector& x0);
std::vector<Vector> simulate(const StateSpace& sys, std::span<const Vector> inputs);

}  // namespace mfc::lti
