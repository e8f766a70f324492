#pragma once

#include <functional>
#include <vector>

#include "mfc/lti.hpp"

namespace mfc::norms {

// Uniform angles on [0, pi] with both endpoints; lambda = e^{-j theta}.
// Real-coefficient systems are conjugate symmetric, so the upper
// semicircle covers the whole unit circle.
struct FrequencyGrid {
    std::size_t count = 512;
    bool refine_peak = true;
    // Relative change tolerated when the grid is doubled; above it the grid
    // keeps doubling up to `max_doublings` times.
    double doubling_threshold = 0.005;
    int max_doublings = 4;

    std::vector<double> angles() const;
    // 2N - 1 points: every old point plus the midpoints.
    FrequencyGrid doubled() const;
};

enum class SigmaMethod { DenseSvd, Lanczos };

struct CostReport {
    double value = 0.0;
    double peak_theta = 0.0;
    std::size_t grid_size = 0;
    SigmaMethod method = SigmaMethod::DenseSvd;
    bool scaled = false;
    // Value on the grid before the last doubling; |value - coarse| / value is
    // the grid-adequacy shift.
    double coarse_value = 0.0;
};

std::string to_string(SigmaMethod method);

// Operators larger than this (in either dimension) use Lanczos.
inline constexpr Eigen::Index kDenseLimit = 64;

// Matrix-free map C^cols -> C^rows.
class LinearOperator {
public:
    virtual ~LinearOperator() = default;
    virtual Eigen::Index rows() const = 0;
    virtual Eigen::Index cols() const = 0;
    virtual void apply(const CVector& x, CVector& y) const = 0;
    virtual void apply_adjoint(const CVector& y, CVector& x) const = 0;
    // Dense copy, used for small operators and as a fallback.
    CMatrix to_dense() const;
};

class DenseOperator final : public LinearOperator {
public:
    explicit DenseOperator(CMatrix m) : m_(std::move(m)) {}
    Eigen::Index rows() const override { return m_.rows(); }
    Eigen::Index cols() const override { return m_.cols(); }
    void apply(const CVector& x, CVector& y) const override { y.noalias() = m_ * x; }
    void apply_adjoint(const CVector& y, CVector& x) const override { x.noalias() = m_.adjoint() * y; }

private:
    CMatrix m_;
};

struct LanczosOptions {
    // Converged when (residual / Ritz value)^2, the first-order estimate of
    // the relative Ritz value error, is below this.
    double tolerance = 1e-10;
    int max_steps = 40;
    int restarts = 3;
};

struct SigmaResult {
    double value = 0.0;
    SigmaMethod method = SigmaMethod::DenseSvd;
    bool converged = true;
};

double sigma_max(const CMatrix& m);
// Golub-Kahan-Lanczos bidiagonalization with full reorthogonalization;
// falls back to a dense SVD when restarts stagnate. A non-null `warm`
// of matching size is used as the start vector and receives the top right
// Ritz vector, so sweeps over nearby frequencies start close to the answer.
SigmaResult sigma_max(const LinearOperator& op, const LanczosOptions& options = {}, CVector* warm = nullptr);
// Dense SVD at or below kDenseLimit, Lanczos above it.
SigmaResult sigma_max_auto(const LinearOperator& op, const LanczosOptions& options = {}, CVector* warm = nullptr);

using SigmaAt = std::function<double(double theta)>;

// sup over the grid of sigma(theta), with one parabolic peak refinement
// and automatic grid doubling until the shift is within the threshold.
CostReport hinf_norm(const SigmaAt& sigma, const FrequencyGrid& grid = {},
                     SigmaMethod method = SigmaMethod::DenseSvd);
CostReport hinf_norm(const std::function<CMatrix(Complex)>& evaluator, const FrequencyGrid& grid = {});
CostReport hinf_norm(const lti::StateSpace& sys, const FrequencyGrid& grid = {});
CostReport hinf_norm(const lti::FirMatrix& fir, const FrequencyGrid& grid = {});

// Impulse response long enough that the trailing half carries at most
// `tail_tolerance` of the total energy. Throws OverflowError when the
// length cap is reached first.
lti::FirMatrix converged_taps(const lti::StateSpace& sys, double tail_tolerance = 1e-8,
                              std::size_t initial_length = 128, std::size_t max_length = 1 << 16);

// (1/sqrt(n)) sqrt(sum of squared taps over all entries).
CostReport h2_norm_scaled(const lti::FirMatrix& taps, std::size_t n);
CostReport h2_norm_scaled(const lti::StateSpace& sys, std::size_t n, double tail_tolerance = 1e-8);

// Mean of ||M(e^{-j theta})||_F^2 over a uniform grid of the full circle,
// the frequency-domain side of Parseval's identity.
double frequency_domain_energy(const std::function<CMatrix(Complex)>& evaluator, std::size_t points);

}  // namespace mfc::norms
