#include "mfc/lti.hpp"

#include <cmath>
#include <limits>

namespace mfc::lti {

namespace {

void require(bool condition, const char* message) {
    if (!condition) throw std::invalid_argument(message);
}

}  // namespace

StateSpace::StateSpace(Matrix a, Matrix b, Matrix c, Matrix d)
    : a_(std::move(a)), b_(std::move(b)), c_(std::move(c)), d_(std::move(d)) {
    require(a_.rows() == a_.cols(), "StateSpace: A must be square");
    require(b_.rows() == a_.rows(), "StateSpace: B rows must match A");
    require(c_.cols() == a_.rows(), "StateSpace: C cols must match A");
    require(d_.rows() == c_.rows(), "StateSpace: D rows must match C");
    require(d_.cols() == b_.cols(), "StateSpace: D cols must match B");
}

StateSpace StateSpace::gain(Matrix d) {
    const auto p = d.rows();
    const auto m = d.cols();
    return {Matrix::Zero(0, 0), Matrix::Zero(0, m), Matrix::Zero(p, 0), std::move(d)};
}

StateSpace StateSpace::gain(double d) { return gain(Matrix::Constant(1, 1, d)); }

StateSpace StateSpace::delay() {
    return {Matrix::Zero(1, 1), Matrix::Ones(1, 1), Matrix::Ones(1, 1), Matrix::Zero(1, 1)};
}

StateSpace StateSpace::output_rows(Eigen::Index first, Eigen::Index count) const {
    require(first >= 0 && count >= 0 && first + count <= outputs(), "output_rows: range out of bounds");
    return {a_, b_, c_.middleRows(first, count), d_.middleRows(first, count)};
}

StateSpace StateSpace::input_cols(Eigen::Index first, Eigen::Index count) const {
    require(first >= 0 && count >= 0 && first + count <= inputs(), "input_cols: range out of bounds");
    return {a_, b_.middleCols(first, count), c_, d_.middleCols(first, count)};
}

namespace {

// Small realizations go through stack-allocated matrices; the per-agent
// factors are evaluated millions of times in ensemble sweeps.
template <class Mat>
CMatrix response_impl(const StateSpace& sys, Complex lambda) {
    const auto n = sys.states();
    Mat m = Mat::Identity(n, n) - lambda * sys.A().cast<Complex>();
    Eigen::PartialPivLU<Mat> lu(m);
    // Pivot-ratio test; cheaper than a condition estimate and enough to
    // catch evaluation on (or numerically at) a pole.
    const auto pivots = lu.matrixLU().diagonal().cwiseAbs();
    if (!(pivots.minCoeff() > 1e3 * std::numeric_limits<double>::epsilon() * pivots.maxCoeff())) {
        throw PoleEvaluationError("freq_response: (I - lambda A) is singular at the requested point");
    }
    using Rhs = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, 0, Mat::MaxRowsAtCompileTime,
                              Eigen::Dynamic>;
    const Rhs x = lu.solve(sys.B().cast<Complex>());
    CMatrix result = sys.D().cast<Complex>();
    result.noalias() += lambda * (sys.C().cast<Complex>() * x);
    return result;
}

}  // namespace

CMatrix freq_response(const StateSpace& sys, Complex lambda) {
    if (sys.states() == 0) return sys.D().cast<Complex>();
    if (sys.states() <= 8)
        return response_impl<Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, 0, 8, 8>>(sys, lambda);
    return response_impl<CMatrix>(sys, lambda);
}

double spectral_radius(const Matrix& a) {
    if (a.rows() == 0) return 0.0;
    Eigen::EigenSolver<Matrix> solver(a, false);
    return solver.eigenvalues().cwiseAbs().maxCoeff();
}

Stability stability(const StateSpace& sys, double margin) {
    const double rho = spectral_radius(sys.A());
    return {rho <= 1.0 - margin, rho};
}

FirMatrix::FirMatrix(std::vector<Matrix> taps) : taps_(std::move(taps)) {
    require(!taps_.empty(), "FirMatrix: at least one tap is required");
    for (const auto& t : taps_) {
        require(t.rows() == taps_.front().rows() && t.cols() == taps_.front().cols(),
                "FirMatrix: all taps must share dimensions");
    }
}

FirMatrix FirMatrix::scalar(std::span<const double> taps) {
    std::vector<Matrix> out;
    out.reserve(taps.size());
    for (double t : taps) out.push_back(Matrix::Constant(1, 1, t));
    return FirMatrix(std::move(out));
}

FirMatrix FirMatrix::zero(Eigen::Index rows, Eigen::Index cols, std::size_t length) {
    return FirMatrix(std::vector<Matrix>(length, Matrix::Zero(rows, cols)));
}

std::vector<double> FirMatrix::scalar_taps() const {
    require(rows() == 1 && cols() == 1, "scalar_taps: FIR is not 1x1");
    std::vector<double> out;
    out.reserve(taps_.size());
    for (const auto& t : taps_) out.push_back(t(0, 0));
    return out;
}

CMatrix FirMatrix::response(Complex lambda) const {
    CMatrix acc = taps_.back().cast<Complex>();
    for (auto k = taps_.size() - 1; k-- > 0;) {
        acc = (acc * lambda).eval();
        acc += taps_[k].cast<Complex>();
    }
    return acc;
}

Complex FirMatrix::scalar_response(Complex lambda) const {
    Complex acc = taps_.back()(0, 0);
    for (auto k = taps_.size() - 1; k-- > 0;) acc = acc * lambda + taps_[k](0, 0);
    return acc;
}

double FirMatrix::energy() const { return tail_energy(0); }

double FirMatrix::h2_norm() const { return std::sqrt(energy()); }

double FirMatrix::tail_energy(std::size_t first) const {
    double e = 0.0;
    for (auto k = first; k < taps_.size(); ++k) e += taps_[k].squaredNorm();
    return e;
}

FirMatrix FirMatrix::scaled(double factor) const {
    std::vector<Matrix> out;
    out.reserve(taps_.size());
    for (const auto& t : taps_) out.push_back(factor * t);
    return FirMatrix(std::move(out));
}

StateSpace FirMatrix::realization() const {
    const auto p = rows();
    const auto m = cols();
    const auto lag = static_cast<Eigen::Index>(taps_.size()) - 1;
    if (lag == 0) return StateSpace::gain(taps_.front());
    // Shift register of past inputs u(k-1) .. u(k-lag).
    const auto n = m * lag;
    Matrix a = Matrix::Zero(n, n);
    a.bottomLeftCorner(n - m, n - m).setIdentity();
    Matrix b = Matrix::Zero(n, m);
    b.topRows(m).setIdentity();
    Matrix c(p, n);
    for (Eigen::Index k = 0; k < lag; ++k) c.middleCols(k * m, m) = taps_[k + 1];
    return {a, b, c, taps_.front()};
}

ImpulseResponse impulse_response(const StateSpace& sys, std::size_t length) {
    require(length >= 1, "impulse_response: length must be >= 1");
    std::vector<Matrix> taps;
    taps.reserve(length);
    taps.push_back(sys.D());
    Matrix ak_b = sys.B();  // A^{k-1} B
    Matrix c_ak = sys.C();  // C A^{k-1}, kept for the tail estimate
    constexpr double kGuard = 1e150;
    for (std::size_t k = 1; k < length; ++k) {
        taps.push_back(sys.C() * ak_b);
        if (!taps.back().allFinite() || taps.back().cwiseAbs().maxCoeff() > kGuard) {
            throw OverflowError("impulse_response: taps diverge before the requested length");
        }
        ak_b = sys.A() * ak_b;
        if (k + 1 < length) c_ak = c_ak * sys.A();
    }
    ImpulseResponse out{FirMatrix(std::move(taps)), std::nullopt};
    const auto st = stability(sys);
    if (st.stable) {
        const double cn = sys.states() == 0 ? 0.0 : c_ak.operatorNorm();
        const double bn = sys.states() == 0 ? 0.0 : sys.B().operatorNorm();
        out.tail_estimate = cn * bn / (1.0 - st.spectral_radius);
    }
    return out;
}

StateSpace series(const StateSpace& first, const StateSpace& second) {
    require(first.outputs() == second.inputs(), "series: interface dimension mismatch");
    const auto n1 = first.states();
    const auto n2 = second.states();
    Matrix a = Matrix::Zero(n1 + n2, n1 + n2);
    a.topLeftCorner(n1, n1) = first.A();
    a.bottomLeftCorner(n2, n1) = second.B() * first.C();
    a.bottomRightCorner(n2, n2) = second.A();
    Matrix b(n1 + n2, first.inputs());
    b.topRows(n1) = first.B();
    b.bottomRows(n2) = second.B() * first.D();
    Matrix c(second.outputs(), n1 + n2);
    c.leftCols(n1) = second.D() * first.C();
    c.rightCols(n2) = second.C();
    return {a, b, c, second.D() * first.D()};
}

StateSpace parallel(const StateSpace& x, const StateSpace& y) {
    require(x.inputs() == y.inputs() && x.outputs() == y.outputs(), "parallel: dimension mismatch");
    const auto n1 = x.states();
    const auto n2 = y.states();
    Matrix a = Matrix::Zero(n1 + n2, n1 + n2);
    a.topLeftCorner(n1, n1) = x.A();
    a.bottomRightCorner(n2, n2) = y.A();
    Matrix b(n1 + n2, x.inputs());
    b.topRows(n1) = x.B();
    b.bottomRows(n2) = y.B();
    Matrix c(x.outputs(), n1 + n2);
    c.leftCols(n1) = x.C();
    c.rightCols(n2) = y.C();
    return {a, b, c, x.D() + y.D()};
}

StateSpace negate(const StateSpace& sys) { return {sys.A(), sys.B(), -sys.C(), -sys.D()}; }

StateSpace stack_outputs(const StateSpace& top, const StateSpace& bottom) {
    require(top.inputs() == bottom.inputs(), "stack_outputs: input dimension mismatch");
    const auto n1 = top.states();
    const auto n2 = bottom.states();
    Matrix a = Matrix::Zero(n1 + n2, n1 + n2);
    a.topLeftCorner(n1, n1) = top.A();
    a.bottomRightCorner(n2, n2) = bottom.A();
    Matrix b(n1 + n2, top.inputs());
    b.topRows(n1) = top.B();
    b.bottomRows(n2) = bottom.B();
    Matrix c = Matrix::Zero(top.outputs() + bottom.outputs(), n1 + n2);
    c.topLeftCorner(top.outputs(), n1) = top.C();
    c.bottomRightCorner(bottom.outputs(), n2) = bottom.C();
    Matrix d(top.outputs() + bottom.outputs(), top.inputs());
    d.topRows(top.outputs()) = top.D();
    d.bottomRows(bottom.outputs()) = bottom.D();
    return {a, b, c, d};
}

StateSpace lft_lower(const StateSpace& plant, const StateSpace& controller, Eigen::Index n_z,
                     Eigen::Index n_w) {
    const auto n_y = plant.outputs() - n_z;
    const auto n_u = plant.inputs() - n_w;
    require(n_y >= 0 && n_u >= 0, "lft_lower: partition larger than plant");
    require(controller.inputs() == n_y && controller.outputs() == n_u,
            "lft_lower: controller dimensions do not match the plant partition");

    const Matrix b1 = plant.B().leftCols(n_w);
    const Matrix b2 = plant.B().rightCols(n_u);
    const Matrix c1 = plant.C().topRows(n_z);
    const Matrix c2 = plant.C().bottomRows(n_y);
    const Matrix d11 = plant.D().topLeftCorner(n_z, n_w);
    const Matrix d12 = plant.D().topRightCorner(n_z, n_u);
    const Matrix d21 = plant.D().bottomLeftCorner(n_y, n_w);
    const Matrix d22 = plant.D().bottomRightCorner(n_y, n_u);

    // u = Dk y + Ck xk with y = C2 x + D21 w + D22 u.
    const Matrix loop = Matrix::Identity(n_u, n_u) - controller.D() * d22;
    Eigen::FullPivLU<Matrix> lu(loop);
    if (n_u > 0 && (!lu.isInvertible() || lu.rcond() < 1e-12)) {
        throw std::domain_error("lft_lower: ill-posed algebraic loop (I - Dk D22 singular)");
    }
    const Matrix r = n_u > 0 ? Matrix(lu.inverse()) : Matrix::Zero(0, 0);
    const Matrix u_x = r * controller.D() * c2;
    const Matrix u_k = r * controller.C();
    const Matrix u_w = r * controller.D() * d21;
    const Matrix y_x = c2 + d22 * u_x;
    const Matrix y_k = d22 * u_k;
    const Matrix y_w = d21 + d22 * u_w;

    const auto np = plant.states();
    const auto nk = controller.states();
    Matrix a(np + nk, np + nk);
    a.topLeftCorner(np, np) = plant.A() + b2 * u_x;
    a.topRightCorner(np, nk) = b2 * u_k;
    a.bottomLeftCorner(nk, np) = controller.B() * y_x;
    a.bottomRightCorner(nk, nk) = controller.A() + controller.B() * y_k;
    Matrix b(np + nk, n_w);
    b.topRows(np) = b1 + b2 * u_w;
    b.bottomRows(nk) = controller.B() * y_w;
    Matrix c(n_z, np + nk);
    c.leftCols(np) = c1 + d12 * u_x;
    c.rightCols(nk) = d12 * u_k;
    return {a, b, c, d11 + d12 * u_w};
}

StateSpace feedback(const StateSpace& forward, const StateSpace& back, double sign) {
    require(back.inputs() == forward.outputs() && back.outputs() == forward.inputs(),
            "feedback: loop dimensions do not match");
    // Plant with inputs [u; f] and outputs [y; y]; e = u + sign f.
    const auto m = forward.inputs();
    const auto p = forward.outputs();
    Matrix b(forward.states(), 2 * m);
    b << forward.B(), sign * forward.B();
    Matrix c(2 * p, forward.states());
    c << forward.C(), forward.C();
    Matrix d(2 * p, 2 * m);
    d << forward.D(), sign * forward.D(), forward.D(), sign * forward.D();
    return lft_lower(StateSpace(forward.A(), b, c, d), back, p, m);
}

std::vector<Vector> simulate(const StateSpace& sys, std::span<const Vector> inputs, const Vector& x0) {
    require(x0.size() == sys.states(), "simulate: initial state dimension mismatch");
    std::vector<Vector> out;
    out.reserve(inputs.size());
    Vector x = x0;
    for (const auto& u : inputs) {
        require(u.size() == sys.inputs(), "simulate: input dimension mismatch");
        out.push_back(sys.C() * x + sys.D() * u);
        x = sys.A() * x + sys.B() * u;
    }
    return out;
}

std::vector<Vector> simulate(const StateSpace& sys, std::span<const Vector> inputs) {
    return simulate(sys, inputs, Vector::Zero(sys.states()));
}

}  // namespace mfc::lti
