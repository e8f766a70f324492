#include "mfc/matching.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace mfc::matching {

namespace {

void check_shapes(const MatchingProblem& pr) {
    if (pr.u.inputs() != 1 || pr.v.outputs() != 1) throw std::invalid_argument("matching: Z must be scalar");
    if (pr.h.outputs() != pr.u.outputs() || pr.h.inputs() != pr.v.inputs()) {
        throw std::invalid_argument("matching: H, U, V dimensions are inconsistent");
    }
    if (pr.options.fir_order < 1) throw std::invalid_argument("matching: FIR order must be >= 1");
    if (pr.bound && !(*pr.bound > 0.0)) throw std::invalid_argument("matching: bound must be positive");
}

double frob_inner(const Matrix& a, const Matrix& b) { return (a.array() * b.array()).sum(); }

Matrix padded_tap(const std::vector<Matrix>& taps, long k, Eigen::Index rows, Eigen::Index cols) {
    if (k < 0 || k >= static_cast<long>(taps.size())) return Matrix::Zero(rows, cols);
    return taps[static_cast<std::size_t>(k)];
}

// Frequency samples of H and P = U V on a grid.
struct Samples {
    std::vector<double> theta;
    std::vector<CMatrix> h, p;
};

Samples sample(const MatchingProblem& pr, const std::vector<double>& theta) {
    Samples s;
    s.theta = theta;
    s.h.reserve(theta.size());
    s.p.reserve(theta.size());
    for (double th : theta) {
        const Complex l = lti::unit_point(th);
        s.h.push_back(lti::freq_response(pr.h, l));
        s.p.push_back(lti::freq_response(pr.u, l) * lti::freq_response(pr.v, l));
    }
    return s;
}

Complex fir_at(const Vector& z, double theta) {
    Complex acc = 0.0;
    const Complex step = lti::unit_point(theta);
    Complex pw = 1.0;
    for (Eigen::Index l = 0; l < z.size(); ++l) {
        acc += z(l) * pw;
        pw *= step;
    }
    return acc;
}

lti::FirMatrix to_fir(const Vector& z) {
    std::vector<double> taps(z.data(), z.data() + z.size());
    return lti::FirMatrix::scalar(taps);
}

CMatrix hermitian_sqrt(const CMatrix& m) {
    if (m.rows() == 1) return CMatrix::Constant(1, 1, std::sqrt(std::max(0.0, m(0, 0).real())));
    Eigen::SelfAdjointEigenSolver<CMatrix> es(m);
    const Vector ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.cast<Complex>().asDiagonal() * es.eigenvectors().adjoint();
}

// Solve the Toeplitz normal equations G z = r, G_lm = g(|l - m|).
Vector solve_toeplitz(const Vector& g, const Vector& r, double ridge, bool& regularized) {
    const auto n = g.size();
    Matrix gm(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) gm(i, j) = g(std::abs(i - j));
    regularized = false;
    Eigen::LDLT<Matrix> ldlt(gm);
    const double scale = std::max(gm.diagonal().maxCoeff(), 1e-300);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-13 || !(g(0) > 0.0)) {
        regularized = true;
        gm.diagonal().array() += ridge * std::max(scale, 1.0);
        ldlt.compute(gm);
    }
    return ldlt.solve(r);
}

struct HinfRun {
    Vector z;
    double max_cost = 0.0;
    double lower = 0.0;
    int iterations = 0;
    bool converged = false;
    bool regularized = false;
    std::vector<double> profile;
};

HinfRun lawson(const Samples& s, const MatchingOptions& opt) {
    const auto nf = s.theta.size();
    const auto taps = static_cast<Eigen::Index>(opt.fir_order);
    const auto m = s.h.front().cols();

    Matrix cosv(taps, nf), sinv(taps, nf);
    for (std::size_t k = 0; k < nf; ++k)
        for (Eigen::Index l = 0; l < taps; ++l) {
            cosv(l, k) = std::cos(static_cast<double>(l) * s.theta[k]);
            sinv(l, k) = std::sin(static_cast<double>(l) * s.theta[k]);
        }
    // Conjugate symmetry: interior points stand for two points of the circle.
    std::vector<double> mult(nf, 2.0);
    mult.front() = mult.back() = 1.0;

    std::vector<CMatrix> w(nf, CMatrix::Identity(m, m));
    double total = 0.0;
    for (std::size_t k = 0; k < nf; ++k) total += mult[k] * static_cast<double>(m);
    for (auto& wk : w) wk /= total;

    std::vector<CMatrix> php(nf), phh(nf), hhh(nf);
    for (std::size_t k = 0; k < nf; ++k) {
        php[k] = s.p[k].adjoint() * s.p[k];
        phh[k] = s.p[k].adjoint() * s.h[k];
        hhh[k] = s.h[k].adjoint() * s.h[k];
    }

    HinfRun best;
    best.max_cost = std::numeric_limits<double>::infinity();
    double prev = std::numeric_limits<double>::infinity();
    Vector c(nf), bre(nf), bim(nf);
    std::vector<double> sig(nf);
    std::vector<CMatrix> err(nf);
    for (int it = 1; it <= opt.max_iterations; ++it) {
        double hconst = 0.0;
        for (std::size_t k = 0; k < nf; ++k) {
            c(k) = mult[k] * (php[k] * w[k]).trace().real();
            const Complex b = mult[k] * (phh[k] * w[k]).trace();
            bre(k) = b.real();
            bim(k) = b.imag();
            hconst += mult[k] * (hhh[k] * w[k]).trace().real();
        }
        const Vector g = cosv * c;
        const Vector r = cosv * bre - sinv * bim;
        bool reg = false;
        const Vector z = solve_toeplitz(g, r, opt.ridge, reg);
        best.regularized = best.regularized || reg;
        // Minimum of the weighted quadratic: a lower bound on the squared optimum.
        const double dual = hconst - z.dot(r);
        best.lower = std::max(best.lower, std::sqrt(std::max(dual, 0.0)));

        double mx = 0.0;
        for (std::size_t k = 0; k < nf; ++k) {
            err[k] = s.h[k] - fir_at(z, s.theta[k]) * s.p[k];
            sig[k] = norms::sigma_max(err[k]);
            mx = std::max(mx, sig[k]);
        }
        if (mx < best.max_cost) {
            best.z = z;
            best.max_cost = mx;
            best.profile = sig;
        }
        best.iterations = it;
        if (std::abs(prev - mx) <= opt.tolerance * std::max(mx, 1e-300) || mx == 0.0) {
            best.converged = true;
            break;
        }
        prev = mx;

        double sum = 0.0;
        std::vector<CMatrix> fresh(nf);
        for (std::size_t k = 0; k < nf; ++k) {
            const CMatrix g = err[k].adjoint() * err[k];
            const double tr = g.trace().real();
            const double wk = w[k].trace().real() * sig[k];
            fresh[k] = tr > 0 ? CMatrix(wk * g / tr) : CMatrix(w[k] * sig[k]);
            sum += mult[k] * fresh[k].trace().real();
        }
        if (!(sum > 0.0)) {
            best.converged = true;
            break;
        }
        for (std::size_t k = 0; k < nf; ++k) w[k] = (1.0 - opt.damping) * w[k] + opt.damping * fresh[k] / sum;
    }
    return best;
}

std::function<CMatrix(Complex)> error_evaluator(const MatchingProblem& pr, const lti::FirMatrix& z) {
    return [&pr, z](Complex l) -> CMatrix {
        return lti::freq_response(pr.h, l) -
               z.scalar_response(l) * (lti::freq_response(pr.u, l) * lti::freq_response(pr.v, l));
    };
}

void apply_bound(const MatchingProblem& pr, MatchingSolution& sol) {
    if (!pr.bound) return;
    const auto bounded = enforce_bound(sol.z, *pr.bound, pr.options.grid);
    if (bounded == sol.z) return;
    sol.z = bounded;
    sol.bound_active = true;
    sol.cost = evaluate_cost(pr, sol.z);
}

std::vector<double> profile_on(const MatchingProblem& pr, const lti::FirMatrix& z, const std::vector<double>& theta) {
    const auto f = error_evaluator(pr, z);
    std::vector<double> out;
    out.reserve(theta.size());
    for (double th : theta) out.push_back(norms::sigma_max(f(lti::unit_point(th))));
    return out;
}

}  // namespace

MatchingProblem with_identity_channel(MatchingProblem problem) {
    const auto m = problem.h.inputs();
    problem.h = lti::stack_outputs(problem.h, lti::StateSpace::gain(Matrix::Zero(1, m)));
    problem.u = lti::stack_outputs(problem.u, lti::StateSpace::gain(-1.0));
    return problem;
}

MatchingProblem agent_problem(const youla::YoulaFactors& factors, NormKind norm, BlockKind block,
                              const MatchingOptions& options) {
    const auto rows = block == BlockKind::One ? factors.plant.n_avg : factors.plant.n_z;
    MatchingProblem pr;
    pr.h = factors.h.output_rows(0, rows);
    pr.u = factors.u.output_rows(0, rows);
    pr.v = factors.v;
    pr.norm = norm;
    pr.options = options;
    return pr;
}

lti::StateSpace error_system(const MatchingProblem& problem, const lti::FirMatrix& z) {
    const auto uzv = lti::series(lti::series(problem.v, z.realization()), problem.u);
    return lti::parallel(problem.h, lti::negate(uzv));
}

double evaluate_cost(const MatchingProblem& problem, const lti::FirMatrix& z) {
    if (problem.norm == NormKind::H2) {
        return norms::converged_taps(error_system(problem, z), problem.options.tail_tolerance).h2_norm();
    }
    return norms::hinf_norm(error_evaluator(problem, z), problem.options.grid).value;
}

MatchingSolution solve_h2(const MatchingProblem& problem) {
    check_shapes(problem);
    if (problem.norm != NormKind::H2) throw std::invalid_argument("solve_h2: problem norm must be H2");
    const auto& opt = problem.options;
    const auto ht = norms::converged_taps(problem.h, opt.tail_tolerance).taps();
    const auto pt = norms::converged_taps(lti::series(problem.v, problem.u), opt.tail_tolerance).taps();
    const auto p = problem.h.outputs(), m = problem.h.inputs();
    const auto taps = static_cast<Eigen::Index>(opt.fir_order);
    const long np = static_cast<long>(pt.size()), nh = static_cast<long>(ht.size());

    Vector g = Vector::Zero(taps), r = Vector::Zero(taps);
    for (Eigen::Index d = 0; d < taps; ++d) {
        for (long t = 0; t + d < np; ++t) g(d) += frob_inner(pt[t], pt[t + d]);
        for (long t = 0; t + d < nh && t < np; ++t) r(d) += frob_inner(pt[t], ht[t + d]);
    }
    MatchingSolution sol;
    bool reg = false;
    const Vector z = solve_toeplitz(g, r, opt.ridge, reg);
    if (reg) sol.warnings.push_back("normal equations rank deficient; ridge regularization applied");
    sol.z = to_fir(z);

    // Error taps by direct convolution: avoids cancellation in the quadratic form.
    const long ne = std::max(nh, np + taps - 1);
    double energy = 0.0;
    for (long t = 0; t < ne; ++t) {
        Matrix e = padded_tap(ht, t, p, m);
        for (Eigen::Index l = 0; l < taps && l <= t; ++l) e -= z(l) * padded_tap(pt, t - l, p, m);
        energy += e.squaredNorm();
    }
    sol.cost = std::sqrt(energy);
    sol.iterations = 1;
    sol.profile_theta = opt.grid.angles();
    sol.profile_cost = profile_on(problem, sol.z, sol.profile_theta);
    sol.grid_size = sol.profile_theta.size();
    apply_bound(problem, sol);
    return sol;
}

MatchingSolution solve_hinf(const MatchingProblem& problem) {
    check_shapes(problem);
    if (problem.norm != NormKind::Hinf) throw std::invalid_argument("solve_hinf: problem norm must be Hinf");
    MatchingSolution sol;
    norms::FrequencyGrid grid = problem.options.grid;
    for (int attempt = 0;; ++attempt) {
        const auto theta = grid.angles();
        const auto run = lawson(sample(problem, theta), problem.options);
        sol.z = to_fir(run.z);
        sol.iterations += run.iterations;
        sol.converged = run.converged;
        sol.profile_theta = theta;
        sol.profile_cost = run.profile;
        sol.grid_size = theta.size();
        sol.certificate_gap = std::max(0.0, run.max_cost - run.lower);
        if (run.regularized) sol.warnings.push_back("weighted normal equations regularized");
        norms::FrequencyGrid check = grid;
        const auto report = norms::hinf_norm(error_evaluator(problem, sol.z), check);
        sol.cost = std::max(report.value, run.max_cost);
        const double shift = std::abs(sol.cost - run.max_cost) / std::max(sol.cost, 1e-300);
        if (shift <= grid.doubling_threshold || attempt >= problem.options.max_grid_doublings) {
            if (shift > grid.doubling_threshold) {
                sol.warnings.push_back("grid-adequacy shift above threshold after refinement");
            }
            break;
        }
        grid = grid.doubled();
    }
    if (!sol.converged) sol.warnings.push_back("iteration cap reached; returning best iterate");
    apply_bound(problem, sol);
    return sol;
}

MatchingSolution solve(const MatchingProblem& problem) {
    return problem.norm == NormKind::H2 ? solve_h2(problem) : solve_hinf(problem);
}

lti::FirMatrix enforce_bound(const lti::FirMatrix& z, double gamma, const norms::FrequencyGrid& grid) {
    if (!(gamma > 0.0)) throw std::invalid_argument("enforce_bound: gamma must be positive");
    const double n = norms::hinf_norm(z, grid).value;
    if (n <= gamma) return z;
    return z.scaled(gamma / n);
}

std::vector<double> mu_sequence(std::span<const double> costs, NormKind norm) {
    std::vector<double> out;
    out.reserve(costs.size());
    double run = 0.0;
    for (std::size_t i = 0; i < costs.size(); ++i) {
        if (norm == NormKind::Hinf) {
            run = std::max(run, costs[i]);
            out.push_back(run);
        } else {
            run += costs[i] * costs[i];
            out.push_back(std::sqrt(run / static_cast<double>(i + 1)));
        }
    }
    return out;
}

std::vector<MatchingSolution> solve_agents(std::span<const youla::YoulaFactors> agents, NormKind norm,
                                           BlockKind block, const MatchingOptions& options) {
    std::vector<MatchingSolution> out(agents.size());
    const std::size_t workers =
        std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, std::max<std::size_t>(agents.size(), 1));
    if (workers <= 1) {
        for (std::size_t i = 0; i < agents.size(); ++i) out[i] = solve(agent_problem(agents[i], norm, block, options));
        return out;
    }
    // Independent problems: results do not depend on the schedule.
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < agents.size(); i += workers) {
                    out[i] = solve(agent_problem(agents[i], norm, block, options));
                }
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

std::vector<double> mu_sequence(std::span<const youla::YoulaFactors> agents, NormKind norm, BlockKind block,
                                const MatchingOptions& options) {
    const auto sols = solve_agents(agents, norm, block, options);
    std::vector<double> costs;
    for (const auto& s : sols) costs.push_back(s.cost);
    return mu_sequence(costs, norm);
}

}  // namespace mfc::matching
