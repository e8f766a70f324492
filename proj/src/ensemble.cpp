#include "mfc/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mfc::ensemble {

double portable_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    // splitmix64 finalizer over the combined words.
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return mix(mix(mix(seed) ^ a) ^ b);
}

std::vector<youla::YoulaFactors> EnsembleModel::factors() const {
    std::vector<youla::YoulaFactors> out;
    out.reserve(agents.size());
    for (const auto& a : agents) out.push_back(a.factors);
    return out;
}

std::vector<youla::AgentParameters> EnsembleModel::parameters() const {
    std::vector<youla::AgentParameters> out;
    for (const auto& a : agents) out.push_back(a.params);
    return out;
}

std::vector<youla::AgentParameters> sample_parameters(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<youla::AgentParameters> out(n);
    for (auto& p : out) {
        p.a = youla::kMinA + (youla::kMaxA - youla::kMinA) * portable_uniform(rng);
        p.b = youla::kMinB + (youla::kMaxB - youla::kMinB) * portable_uniform(rng);
    }
    return out;
}

FactorBounds factor_bounds(const std::vector<Agent>& agents, const norms::FrequencyGrid& grid) {
    FactorBounds b;
    for (const auto& a : agents) {
        const auto& f = a.factors;
        const auto rows = f.plant.n_avg;
        const auto hz = f.h.output_rows(0, rows);
        b.gamma_h = std::max(b.gamma_h, norms::hinf_norm(hz, grid).value);
        b.gamma_u = std::max(b.gamma_u, norms::hinf_norm(f.u.output_rows(0, rows), grid).value);
        b.gamma_v = std::max(b.gamma_v, norms::hinf_norm(f.v, grid).value);
        b.gamma_h2 = std::max(b.gamma_h2, norms::converged_taps(hz, 1e-14).h2_norm());
        b.gamma_v2 = std::max(b.gamma_v2, norms::converged_taps(f.v, 1e-14).h2_norm());
    }
    return b;
}

EnsembleModel make_model(const std::vector<youla::AgentParameters>& params, std::uint64_t seed, double rho) {
    if (params.empty()) throw std::invalid_argument("make_model: empty population");
    EnsembleModel m;
    m.seed = seed;
    m.rho = rho;
    for (const auto& p : params) m.agents.push_back({p, youla::factorize_agent(p, rho)});
    m.bounds = factor_bounds(m.agents);
    return m;
}

EnsembleModel prefix(const EnsembleModel& model, std::size_t m) {
    if (m < 1 || m > model.n()) throw std::invalid_argument("prefix: need 1 <= m <= n");
    EnsembleModel out;
    out.seed = model.seed;
    out.rho = model.rho;
    out.resampled = model.resampled;
    out.agents.assign(model.agents.begin(), model.agents.begin() + static_cast<std::ptrdiff_t>(m));
    out.bounds = factor_bounds(out.agents);
    return out;
}

EnsembleModel sample_population(std::size_t n, std::uint64_t seed, double rho) {
    if (n < 2) throw std::invalid_argument("sample_population: n must be at least 2");
    EnsembleModel m;
    m.seed = seed;
    m.rho = rho;
    std::mt19937_64 rng(seed);
    while (m.agents.size() < n) {
        youla::AgentParameters p;
        p.a = youla::kMinA + (youla::kMaxA - youla::kMinA) * portable_uniform(rng);
        p.b = youla::kMinB + (youla::kMaxB - youla::kMinB) * portable_uniform(rng);
        try {
            m.agents.push_back({p, youla::factorize_agent(p, rho)});
        } catch (const SynthesisError&) {
            ++m.resampled;
        }
    }
    m.bounds = factor_bounds(m.agents);
    return m;
}

// ---------------------------------------------------------------- BlockQ

BlockQ BlockQ::diagonal_only(std::vector<lti::FirMatrix> entries, const norms::FrequencyGrid& grid) {
    BlockQ q;
    q.diagonal = std::move(entries);
    q.columns.assign(q.diagonal.size(), {});
    for (const auto& d : q.diagonal) {
        if (d.rows() != 1 || d.cols() != 1) throw std::invalid_argument("BlockQ: entries must be scalar");
        q.diagonal_norms.push_back(norms::hinf_norm(d, grid).value);
    }
    return q;
}

BlockQ BlockQ::zero(std::size_t n) {
    BlockQ q;
    q.diagonal.assign(n, lti::FirMatrix::scalar(std::vector<double>{0.0}));
    q.columns.assign(n, {});
    q.diagonal_norms.assign(n, 0.0);
    return q;
}

double BlockQ::gamma_q() const {
    return diagonal_norms.empty() ? 0.0 : *std::max_element(diagonal_norms.begin(), diagonal_norms.end());
}

double BlockQ::alpha_actual() const {
    double alpha = 0.0;
    for (std::size_t j = 0; j < columns.size(); ++j) {
        if (diagonal_norms[j] == 0.0) continue;
        double s = 0.0;
        for (const auto& c : columns[j]) s += std::abs(c.coefficient);
        alpha = std::max(alpha, s);
    }
    return alpha;
}

std::size_t BlockQ::off_diagonal_count() const {
    std::size_t k = 0;
    for (const auto& c : columns) k += c.size();
    return k;
}

double BlockQ::coefficient(std::size_t i, std::size_t j) const {
    if (i == j) return 1.0;
    for (const auto& c : columns.at(j))
        if (c.row == i) return c.coefficient;
    return 0.0;
}

double BlockQ::entry_norm(std::size_t i, std::size_t j) const {
    return std::abs(coefficient(i, j)) * diagonal_norms.at(j);
}

Complex BlockQ::entry(std::size_t i, std::size_t j, Complex lambda) const {
    const double c = coefficient(i, j);
    return c == 0.0 ? Complex(0.0) : c * diagonal.at(j).scalar_response(lambda);
}

CMatrix BlockQ::dense(Complex lambda) const {
    const auto n = static_cast<Eigen::Index>(this->n());
    CMatrix out = CMatrix::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const Complex qj = diagonal[j].scalar_response(lambda);
        out(j, j) = qj;
        for (const auto& c : columns[j]) out(static_cast<Eigen::Index>(c.row), j) += c.coefficient * qj;
    }
    return out;
}

double DominanceProfile::alpha(std::size_t n) const { return c * std::pow(static_cast<double>(n), p); }

std::string to_string(SignMode mode) { return mode == SignMode::Coherent ? "coherent" : "random"; }

SignMode parse_sign_mode(const std::string& s) {
    if (s == "coherent") return SignMode::Coherent;
    if (s == "random") return SignMode::Random;
    throw std::invalid_argument("unknown sign mode '" + s + "' (expected coherent or random)");
}

BlockQ selfish_q(const std::vector<matching::MatchingSolution>& solutions, const norms::FrequencyGrid& grid) {
    std::vector<lti::FirMatrix> entries;
    entries.reserve(solutions.size());
    for (const auto& s : solutions) entries.push_back(s.z);
    return BlockQ::diagonal_only(std::move(entries), grid);
}

BlockQ selfish_q(const EnsembleModel& model, NormKind norm, BlockKind block, const matching::MatchingOptions& options) {
    const auto f = model.factors();
    return selfish_q(matching::solve_agents(f, norm, block, options), options.grid);
}

BlockQ make_alpha_dominant(const BlockQ& q, double alpha, std::size_t fanout, std::uint64_t seed, SignMode mode) {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("make_alpha_dominant: alpha must be >= 0");
    if (q.off_diagonal_count() != 0) throw std::invalid_argument("make_alpha_dominant: input must be diagonal");
    const std::size_t n = q.n();
    if (alpha == 0.0) return q;
    if (n < 2) throw std::invalid_argument("make_alpha_dominant: needs at least two agents");
    if (fanout < 1 || fanout > n - 1) throw std::invalid_argument("make_alpha_dominant: fanout must be in [1, n-1]");

    BlockQ out = q;
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> rows(n - 1);
    for (std::size_t j = 0; j < n; ++j) {
        // Rows other than j, then a partial Fisher-Yates shuffle.
        for (std::size_t i = 0, k = 0; i < n; ++i)
            if (i != j) rows[k++] = i;
        for (std::size_t k = 0; k < fanout; ++k) {
            const auto r = k + static_cast<std::size_t>(portable_uniform(rng) * static_cast<double>(n - 1 - k));
            std::swap(rows[k], rows[std::min(r, n - 2)]);
        }
        std::vector<double> w(fanout);
        double total = 0.0;
        for (auto& x : w) {
            x = 1.0 - portable_uniform(rng);  // (0, 1]
            total += x;
        }
        auto& col = out.columns[j];
        col.clear();
        for (std::size_t k = 0; k < fanout; ++k) {
            double c = alpha * w[k] / total;
            if (mode == SignMode::Random && portable_uniform(rng) < 0.5) c = -c;
            col.push_back({rows[k], c});
        }
        std::sort(col.begin(), col.end(), [](const Coupling& a, const Coupling& b) { return a.row < b.row; });
    }
    return out;
}

BlockQ make_alpha_dominant(const BlockQ& q, const DominanceProfile& profile, std::size_t fanout, std::uint64_t seed,
                           SignMode mode) {
    if (!(profile.c > 0.0) || !(profile.p >= 0.0)) throw std::invalid_argument("DominanceProfile: need c > 0, p >= 0");
    return make_alpha_dominant(q, profile.alpha(q.n()), fanout, seed, mode);
}

DominanceCheck check_dominance(const BlockQ& q, double alpha) {
    DominanceCheck out;
    out.margins.resize(q.n());
    for (std::size_t j = 0; j < q.n(); ++j) {
        double off = 0.0;
        for (const auto& c : q.columns[j]) off += std::abs(c.coefficient) * q.diagonal_norms[j];
        const double allowed = alpha * q.diagonal_norms[j];
        out.margins[j] = allowed - off;
        // Relative slack for the rounding in the column sums.
        if (out.margins[j] < -1e-12 * std::max(allowed, off)) out.dominant = false;
    }
    return out;
}

// ---------------------------------------------------------------- frames

Frame evaluate_frame(const EnsembleModel& model, const BlockQ& q, Complex lambda, BlockKind block) {
    if (q.n() != model.n()) throw std::invalid_argument("evaluate_frame: Q size does not match the population");
    Frame f;
    f.n_avg = model.n_avg();
    f.p = block == BlockKind::One ? model.n_avg() : model.n_z();
    f.m = model.n_w();
    f.agents.resize(model.n());
    for (std::size_t j = 0; j < model.n(); ++j) {
        const auto& fac = model.agents[j].factors;
        auto& a = f.agents[j];
        a.h = lti::freq_response(fac.h, lambda).topRows(f.p);
        a.u = lti::freq_response(fac.u, lambda).topRows(f.p).col(0);
        a.v = lti::freq_response(fac.v, lambda).row(0).transpose();
        a.q = q.diagonal[j].scalar_response(lambda);
    }
    return f;
}

Matrix averaging_projector(std::size_t n) {
    const auto k = static_cast<Eigen::Index>(n);
    return Matrix::Identity(k, k) - Matrix::Constant(k, k, 1.0 / static_cast<double>(n));
}

namespace {

CMatrix assemble(const Frame& f, const BlockQ& q, bool social) {
    const auto n = static_cast<Eigen::Index>(f.agents.size());
    CMatrix out = CMatrix::Zero(n * f.p, n * f.m);
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto& aj = f.agents[j];
        out.block(j * f.p, j * f.m, f.p, f.m) = aj.h - aj.q * aj.u * aj.v.transpose();
        for (const auto& c : q.columns[j]) {
            const auto i = static_cast<Eigen::Index>(c.row);
            out.block(i * f.p, j * f.m, f.p, f.m) -= (c.coefficient * aj.q) * f.agents[i].u * aj.v.transpose();
        }
    }
    if (social) {
        for (Eigen::Index r = 0; r < f.n_avg; ++r) {
            for (Eigen::Index col = 0; col < out.cols(); ++col) {
                Complex mean = 0.0;
                for (Eigen::Index i = 0; i < n; ++i) mean += out(i * f.p + r, col);
                mean /= static_cast<double>(n);
                for (Eigen::Index i = 0; i < n; ++i) out(i * f.p + r, col) -= mean;
            }
        }
    }
    return out;
}

}  // namespace

CMatrix phi_at(const EnsembleModel& model, const BlockQ& q, Complex lambda, BlockKind block) {
    return assemble(evaluate_frame(model, q, lambda, block), q, false);
}

CMatrix psi_at(const EnsembleModel& model, const BlockQ& q, Complex lambda, BlockKind block) {
    return assemble(evaluate_frame(model, q, lambda, block), q, true);
}

Eigen::SparseMatrix<double> coupling_matrix(const BlockQ& q) {
    const auto n = static_cast<Eigen::Index>(q.n());
    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(q.off_diagonal_count());
    for (Eigen::Index j = 0; j < n; ++j)
        for (const auto& c : q.columns[j]) entries.emplace_back(static_cast<Eigen::Index>(c.row), j, c.coefficient);
    Eigen::SparseMatrix<double> out(n, n);
    out.setFromTriplets(entries.begin(), entries.end());
    return out;
}

EnsembleOperator::EnsembleOperator(const Frame& frame, const Eigen::SparseMatrix<double>& coupling, bool social)
    : frame_(frame), coupling_(coupling), social_(social) {
    if (coupling.rows() != static_cast<Eigen::Index>(frame.agents.size())) {
        throw std::invalid_argument("EnsembleOperator: coupling size does not match the frame");
    }
    // Wide fanout: a dense product beats the sparse one.
    if (coupling.nonZeros() * 8 > coupling.rows() * coupling.cols()) dense_ = Matrix(coupling);
}

Eigen::Index EnsembleOperator::rows() const { return static_cast<Eigen::Index>(frame_.agents.size()) * frame_.p; }
Eigen::Index EnsembleOperator::cols() const { return static_cast<Eigen::Index>(frame_.agents.size()) * frame_.m; }

namespace {

// y + C y (or y + C' y) for complex y and real sparse C.
CVector couple(const Eigen::SparseMatrix<double>& c, const Matrix& dense, const CVector& y, bool transpose) {
    if (c.nonZeros() == 0) return y;
    Matrix parts(y.size(), 2);
    parts.col(0) = y.real();
    parts.col(1) = y.imag();
    Matrix mixed;
    if (dense.size() > 0) {
        mixed.noalias() = transpose ? Matrix(dense.transpose() * parts) : Matrix(dense * parts);
    } else {
        mixed = transpose ? Matrix(c.transpose() * parts) : Matrix(c * parts);
    }
    CVector out = y;
    out.real() += mixed.col(0);
    out.imag() += mixed.col(1);
    return out;
}

void remove_means(CVector& y, Eigen::Index n, Eigen::Index p, Eigen::Index n_avg) {
    for (Eigen::Index r = 0; r < n_avg; ++r) {
        Complex mean = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) mean += y(i * p + r);
        mean /= static_cast<double>(n);
        for (Eigen::Index i = 0; i < n; ++i) y(i * p + r) -= mean;
    }
}

}  // namespace

void EnsembleOperator::apply(const CVector& x, CVector& y) const {
    const auto n = static_cast<Eigen::Index>(frame_.agents.size());
    const auto p = frame_.p, m = frame_.m;
    CVector s(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        s(j) = frame_.agents[j].q * frame_.agents[j].v.cwiseProduct(x.segment(j * m, m)).sum();
    }
    const CVector t = couple(coupling_, dense_, s, false);
    y.resize(n * p);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& a = frame_.agents[i];
        y.segment(i * p, p).noalias() = a.h * x.segment(i * m, m) - t(i) * a.u;
    }
    if (social_) remove_means(y, n, p, frame_.n_avg);
}

void EnsembleOperator::apply_adjoint(const CVector& yin, CVector& x) const {
    const auto n = static_cast<Eigen::Index>(frame_.agents.size());
    const auto p = frame_.p, m = frame_.m;
    CVector y = yin;
    if (social_) remove_means(y, n, p, frame_.n_avg);
    x.resize(n * m);
    CVector r(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& a = frame_.agents[i];
        x.segment(i * m, m).noalias() = a.h.adjoint() * y.segment(i * p, p);
        r(i) = -a.u.dot(y.segment(i * p, p));  // dot conjugates its first argument
    }
    const CVector s = couple(coupling_, dense_, r, true);
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto& a = frame_.agents[j];
        x.segment(j * m, m) += std::conj(a.q) * s(j) * a.v.conjugate();
    }
}

// ---------------------------------------------------------------- costs

namespace {

// Energy of one frame: ||Phi(lambda)||_F^2 or ||Psi(lambda)||_F^2, by columns.
double frame_energy(const Frame& f, const BlockQ& q, bool social) {
    const auto n = f.agents.size();
    double energy = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const auto& aj = f.agents[j];
        for (Eigen::Index ch = 0; ch < f.m; ++ch) {
            const Complex qv = aj.q * aj.v(ch);
            for (Eigen::Index r = 0; r < f.p; ++r) {
                const Complex diag = aj.h(r, ch) - aj.u(r) * qv;
                double sq = std::norm(diag);
                Complex sum = diag;
                for (const auto& c : q.columns[j]) {
                    const Complex val = -f.agents[c.row].u(r) * (c.coefficient * qv);
                    sq += std::norm(val);
                    sum += val;
                }
                if (social && r < f.n_avg) sq -= std::norm(sum) / static_cast<double>(n);
                energy += std::max(sq, 0.0);
            }
        }
    }
    return energy;
}

// Column sums of the z rows: R = 1' Phi_z, n_avg x (n m).
CMatrix column_sums(const Frame& f, const BlockQ& q) {
    const auto n = static_cast<Eigen::Index>(f.agents.size());
    CMatrix out(f.n_avg, n * f.m);
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto& aj = f.agents[j];
        CVector usum = aj.u.head(f.n_avg);
        for (const auto& c : q.columns[j]) usum += c.coefficient * f.agents[c.row].u.head(f.n_avg);
        out.middleCols(j * f.m, f.m) = aj.h.topRows(f.n_avg) - aj.q * usum * aj.v.transpose();
    }
    return out;
}

struct ParsevalResult {
    double mean = 0.0;
    std::size_t points = 0;
};

// Mean over the full circle of a conjugate-symmetric energy density sampled
// on [0, pi]; the grid doubles until the half-grid estimate agrees.
ParsevalResult parseval_mean(const std::function<double(double)>& energy, const CostOptions& opt) {
    norms::FrequencyGrid g;
    g.count = std::max<std::size_t>(opt.h2_points, 3);
    if (g.count % 2 == 0) ++g.count;
    auto theta = g.angles();
    std::vector<double> e(theta.size());
    for (std::size_t k = 0; k < theta.size(); ++k) e[k] = energy(theta[k]);
    auto mean_of = [](const std::vector<double>& v, std::size_t stride) {
        double acc = 0.0;
        std::size_t count = 0;
        for (std::size_t k = 0; k < v.size(); k += stride) {
            const bool end = k == 0 || k + stride >= v.size();
            acc += (end ? 1.0 : 2.0) * v[k];
            ++count;
        }
        return acc / (2.0 * static_cast<double>(count - 1));
    };
    for (int d = 0;; ++d) {
        const double fine = mean_of(e, 1), coarse = mean_of(e, 2);
        if (std::abs(fine - coarse) <= opt.h2_tolerance * std::max(fine, 1e-300) || d >= opt.h2_max_doublings) {
            return {fine, theta.size()};
        }
        g = g.doubled();
        const auto next = g.angles();
        std::vector<double> ne(next.size());
        for (std::size_t k = 0; k < next.size(); ++k) ne[k] = k % 2 == 0 ? e[k / 2] : energy(next[k]);
        theta = next;
        e = std::move(ne);
    }
}

norms::CostReport ensemble_cost(const EnsembleModel& model, const BlockQ& q, NormKind norm, BlockKind block,
                                bool social, const CostOptions& opt) {
    const double n = static_cast<double>(model.n());
    if (norm == NormKind::H2) {
        const auto pm = parseval_mean(
            [&](double th) { return frame_energy(evaluate_frame(model, q, lti::unit_point(th), block), q, social); },
            opt);
        norms::CostReport r;
        r.value = std::sqrt(pm.mean / n);
        r.coarse_value = r.value;
        r.grid_size = pm.points;
        r.scaled = true;
        return r;
    }
    const auto p = block == BlockKind::One ? model.n_avg() : model.n_z();
    const bool dense = static_cast<Eigen::Index>(model.n()) * std::max(p, model.n_w()) <= norms::kDenseLimit;
    const auto coupling = coupling_matrix(q);
    CVector warm;
    return norms::hinf_norm(
        [&](double th) {
            const auto frame = evaluate_frame(model, q, lti::unit_point(th), block);
            return norms::sigma_max_auto(EnsembleOperator(frame, coupling, social), opt.lanczos, &warm).value;
        },
        opt.grid, dense ? norms::SigmaMethod::DenseSvd : norms::SigmaMethod::Lanczos);
}

}  // namespace

norms::CostReport social_cost(const EnsembleModel& model, const BlockQ& q, NormKind norm, BlockKind block,
                              const CostOptions& options) {
    return ensemble_cost(model, q, norm, block, true, options);
}

norms::CostReport individual_cost(const EnsembleModel& model, const BlockQ& q, NormKind norm, BlockKind block,
                                  const CostOptions& options) {
    return ensemble_cost(model, q, norm, block, false, options);
}

norms::CostReport average_block_norm(const EnsembleModel& model, const BlockQ& q, std::size_t m,
                                     const CostOptions& options) {
    if (m < 1 || m > model.n()) throw std::invalid_argument("average_block_norm: need 1 <= M <= n");
    const double scale = std::sqrt(static_cast<double>(m)) / static_cast<double>(model.n());
    return norms::hinf_norm(
        [&](double th) {
            const auto r = column_sums(evaluate_frame(model, q, lti::unit_point(th), BlockKind::One), q);
            return scale * norms::sigma_max(r);
        },
        options.grid);
}

norms::CostReport average_block_norm_h2(const EnsembleModel& model, const BlockQ& q, const CostOptions& options) {
    const auto pm = parseval_mean(
        [&](double th) {
            return column_sums(evaluate_frame(model, q, lti::unit_point(th), BlockKind::One), q).squaredNorm();
        },
        options);
    norms::CostReport r;
    r.value = std::sqrt(pm.mean) / static_cast<double>(model.n());
    r.coarse_value = r.value;
    r.grid_size = pm.points;
    r.scaled = true;
    return r;
}

double lemma_bound_hinf(std::size_t m, std::size_t n, double gamma_h, double gamma_q, double gamma_u, double gamma_v,
                        double alpha) {
    return std::sqrt(static_cast<double>(m)) * (gamma_h + (1.0 + alpha) * gamma_q * gamma_u * gamma_v) /
           std::sqrt(static_cast<double>(n));
}

H2LemmaTerms lemma_bound_h2(std::size_t n, double gamma_u, double gamma_q, double gamma_h, double gamma_v,
                            double alpha) {
    const double s = std::sqrt(static_cast<double>(n));
    H2LemmaTerms t;
    t.h = gamma_h / s;
    t.uq = gamma_u * gamma_q * (1.0 + alpha) / s;
    t.uqv = t.uq * gamma_v;
    return t;
}

}  // namespace mfc::ensemble
