#include "mfc/norms.hpp"

#include <cmath>

namespace mfc::norms {

std::vector<double> FrequencyGrid::angles() const {
    if (count < 2) throw std::invalid_argument("FrequencyGrid: at least two points are required");
    std::vector<double> out(count);
    for (std::size_t k = 0; k < count; ++k) out[k] = kPi * static_cast<double>(k) / static_cast<double>(count - 1);
    out.back() = kPi;
    return out;
}

FrequencyGrid FrequencyGrid::doubled() const {
    FrequencyGrid g = *this;
    g.count = 2 * count - 1;
    return g;
}

std::string to_string(SigmaMethod method) { return method == SigmaMethod::DenseSvd ? "dense-svd" : "lanczos"; }

CMatrix LinearOperator::to_dense() const {
    CMatrix out(rows(), cols());
    CVector e = CVector::Zero(cols());
    CVector y(rows());
    for (Eigen::Index j = 0; j < cols(); ++j) {
        e(j) = 1.0;
        apply(e, y);
        out.col(j) = y;
        e(j) = 0.0;
    }
    return out;
}

double sigma_max(const CMatrix& m) {
    if (m.size() == 0) return 0.0;
    if (m.rows() == 1 || m.cols() == 1) return m.norm();
    if (m.rows() == 2 && m.cols() == 2) {
        // Largest eigenvalue of the 2x2 Gram matrix in closed form.
        const CMatrix g = m.adjoint() * m;
        const double tr = g(0, 0).real() + g(1, 1).real();
        const double det = (g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0)).real();
        const double disc = std::max(0.0, tr * tr - 4.0 * det);
        return std::sqrt(std::max(0.0, 0.5 * (tr + std::sqrt(disc))));
    }
    // Largest eigenvalue of the smaller Gram matrix.
    const CMatrix g = m.rows() < m.cols() ? CMatrix(m * m.adjoint()) : CMatrix(m.adjoint() * m);
    Eigen::SelfAdjointEigenSolver<CMatrix> es(g, Eigen::EigenvaluesOnly);
    return std::sqrt(std::max(es.eigenvalues().maxCoeff(), 0.0));
}

namespace {

CVector start_vector(Eigen::Index n) {
    CVector v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double t = static_cast<double>(i);
        v(i) = Complex(1.0 + 0.5 * std::cos(1.7 * t + 0.3), 0.5 * std::sin(0.61 * t * t + 1.1));
    }
    return v / v.norm();
}

// Classical Gram-Schmidt, applied twice.
void reorthogonalize(CVector& x, const CMatrix& basis, Eigen::Index count) {
    if (count == 0) return;
    for (int pass = 0; pass < 2; ++pass) {
        const CVector coeffs = basis.leftCols(count).adjoint() * x;
        x.noalias() -= basis.leftCols(count) * coeffs;
    }
}

}  // namespace

SigmaResult sigma_max(const LinearOperator& op, const LanczosOptions& options, CVector* warm) {
    const auto m = op.rows();
    const auto n = op.cols();
    if (m == 0 || n == 0) return {0.0, SigmaMethod::Lanczos, true};
    const auto kmax = std::min<Eigen::Index>(options.max_steps, std::min(m, n));
    constexpr double kTiny = 1e-300;

    CVector v = warm && warm->size() == n && warm->norm() > 0 ? CVector(*warm / warm->norm()) : start_vector(n);
    double best = 0.0;
    for (int restart = 0; restart <= options.restarts; ++restart) {
        CMatrix vb(n, kmax + 1);
        CMatrix ub(m, kmax);
        std::vector<double> alpha, beta;
        vb.col(0) = v;
        CVector u(m), w(n);
        op.apply(vb.col(0), u);
        for (Eigen::Index j = 0; j < kmax; ++j) {
            reorthogonalize(u, ub, j);
            alpha.push_back(u.norm());
            if (alpha.back() <= kTiny) {
                alpha.back() = 0.0;
                ub.col(j).setZero();
            } else {
                ub.col(j) = u / alpha.back();
            }
            op.apply_adjoint(ub.col(j), w);
            w -= alpha.back() * vb.col(j);
            reorthogonalize(w, vb, j + 1);
            beta.push_back(w.norm());

            // Ritz values from B B', which is tridiagonal for upper-bidiagonal B.
            const auto k = j + 1;
            Vector diag(k), sub(std::max<Eigen::Index>(k - 1, 0));
            for (Eigen::Index i = 0; i < k; ++i) {
                diag(i) = alpha[i] * alpha[i] + (i + 1 < k ? beta[i] * beta[i] : 0.0);
                if (i + 1 < k) sub(i) = beta[i] * alpha[i + 1];
            }
            Eigen::SelfAdjointEigenSolver<Matrix> es;
            es.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
            const double sigma = std::sqrt(std::max(es.eigenvalues()(k - 1), 0.0));
            const Vector left = es.eigenvectors().col(k - 1);
            best = std::max(best, sigma);
            const double residual = beta.back() * std::abs(left(k - 1));
            const bool exhausted = beta.back() <= kTiny * std::max(1.0, sigma);
            // The Ritz value error is second order in the residual.
            const double rel = residual / std::max(sigma, kTiny);
            const bool done = exhausted || rel * rel <= options.tolerance;
            if (done || j + 1 == kmax) {
                // Top right Ritz vector V B' w / sigma: restart point or warm start.
                Vector right = Vector::Zero(k);
                for (Eigen::Index i = 0; i < k; ++i) {
                    right(i) += alpha[i] * left(i);
                    if (i > 0) right(i) += beta[i - 1] * left(i - 1);
                }
                CVector ritz = vb.leftCols(k) * right.cast<Complex>();
                if (ritz.norm() > 0) v = ritz / ritz.norm();
                if (warm) *warm = v;
                if (done) return {best, SigmaMethod::Lanczos, true};
                break;
            }
            vb.col(j + 1) = w / beta.back();
            op.apply(vb.col(j + 1), u);
            u -= beta.back() * ub.col(j);
        }
    }
    // Stagnated: exact dense answer for this operator.
    Eigen::BDCSVD<CMatrix> svd(op.to_dense(), Eigen::ComputeThinV);
    if (warm) *warm = svd.matrixV().col(0);
    return {svd.singularValues()(0), SigmaMethod::DenseSvd, false};
}

SigmaResult sigma_max_auto(const LinearOperator& op, const LanczosOptions& options, CVector* warm) {
    if (op.rows() <= kDenseLimit && op.cols() <= kDenseLimit) {
        return {sigma_max(op.to_dense()), SigmaMethod::DenseSvd, true};
    }
    return sigma_max(op, options, warm);
}

namespace {

struct Peak {
    double value = 0.0;
    double theta = 0.0;
};

Peak refined_peak(const std::vector<double>& angles, const std::vector<double>& values, const SigmaAt& sigma,
                  bool refine) {
    std::size_t k = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[k]) k = i;
    }
    Peak p{values[k], angles[k]};
    // Endpoints are stationary by conjugate symmetry.
    if (!refine || k == 0 || k + 1 == values.size()) return p;
    const double x0 = angles[k - 1], x1 = angles[k], x2 = angles[k + 1];
    const double y0 = values[k - 1], y1 = values[k], y2 = values[k + 1];
    const double den = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0);
    if (std::abs(den) <= 1e-300) return p;
    const double num = (x1 - x0) * (x1 - x0) * (y1 - y2) - (x1 - x2) * (x1 - x2) * (y1 - y0);
    const double vertex = x1 - 0.5 * num / den;
    if (!(vertex > x0 && vertex < x2) || vertex == x1) return p;
    const double fv = sigma(vertex);
    if (fv > p.value) p = {fv, vertex};
    return p;
}

}  // namespace

CostReport hinf_norm(const SigmaAt& sigma, const FrequencyGrid& grid, SigmaMethod method) {
    auto angles = grid.angles();
    std::vector<double> values(angles.size());
    for (std::size_t i = 0; i < angles.size(); ++i) values[i] = sigma(angles[i]);
    Peak peak = refined_peak(angles, values, sigma, grid.refine_peak);
    double coarse = peak.value;

    FrequencyGrid current = grid;
    for (int d = 0; d < std::max(grid.max_doublings, 0); ++d) {
        const FrequencyGrid next = current.doubled();
        const auto fine = next.angles();
        std::vector<double> fine_values(fine.size());
        for (std::size_t i = 0; i < fine.size(); ++i) {
            fine_values[i] = i % 2 == 0 ? values[i / 2] : sigma(fine[i]);
        }
        angles = fine;
        values = std::move(fine_values);
        current = next;
        const Peak finer = refined_peak(angles, values, sigma, grid.refine_peak);
        coarse = peak.value;
        peak = finer;
        const double shift = std::abs(peak.value - coarse) / std::max(peak.value, 1e-300);
        if (shift <= grid.doubling_threshold) break;
    }
    CostReport r;
    r.value = peak.value;
    r.peak_theta = peak.theta;
    r.grid_size = current.count;
    r.method = method;
    r.coarse_value = coarse;
    return r;
}

CostReport hinf_norm(const std::function<CMatrix(Complex)>& evaluator, const FrequencyGrid& grid) {
    return hinf_norm([&](double th) { return sigma_max(evaluator(lti::unit_point(th))); }, grid);
}

CostReport hinf_norm(const lti::StateSpace& sys, const FrequencyGrid& grid) {
    return hinf_norm([&](Complex l) { return lti::freq_response(sys, l); }, grid);
}

CostReport hinf_norm(const lti::FirMatrix& fir, const FrequencyGrid& grid) {
    return hinf_norm([&](Complex l) { return fir.response(l); }, grid);
}

lti::FirMatrix converged_taps(const lti::StateSpace& sys, double tail_tolerance, std::size_t initial_length,
                              std::size_t max_length) {
    for (std::size_t len = std::max<std::size_t>(initial_length, 2); len <= max_length; len *= 2) {
        auto taps = lti::impulse_response(sys, len).taps;
        const double total = taps.energy();
        if (total == 0.0 || taps.tail_energy(len / 2) <= tail_tolerance * total) return taps;
    }
    throw OverflowError("converged_taps: impulse response energy did not settle within the length cap");
}

CostReport h2_norm_scaled(const lti::FirMatrix& taps, std::size_t n) {
    if (n == 0) throw std::invalid_argument("h2_norm_scaled: agent count must be positive");
    CostReport r;
    r.value = taps.h2_norm() / std::sqrt(static_cast<double>(n));
    r.coarse_value = r.value;
    r.grid_size = taps.length();
    r.scaled = true;
    return r;
}

CostReport h2_norm_scaled(const lti::StateSpace& sys, std::size_t n, double tail_tolerance) {
    return h2_norm_scaled(converged_taps(sys, tail_tolerance), n);
}

double frequency_domain_energy(const std::function<CMatrix(Complex)>& evaluator, std::size_t points) {
    double acc = 0.0;
    for (std::size_t k = 0; k < points; ++k) {
        const double th = 2.0 * kPi * static_cast<double>(k) / static_cast<double>(points);
        acc += evaluator(lti::unit_point(th)).squaredNorm();
    }
    return acc / static_cast<double>(points);
}

}  // namespace mfc::norms
