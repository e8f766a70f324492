#pragma once

// n-agent populations, the block Youla parameter Q and the ensemble maps
//   Phi = diag(H) - diag(U) Q diag(V),   Psi = T Phi,  T = I - (1/n) 1 1'.
// T acts on the averaged (z) outputs only; penalty outputs pass through.

#include <cstdint>

#include <Eigen/SparseCore>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mfc/matching.hpp"
#include "mfc/norms.hpp"
#include "mfc/youla.hpp"

namespace mfc::ensemble {

struct Agent {
    youla::AgentParameters params;
    youla::YoulaFactors factors;
};

// Population maxima of per-agent factor norms on the averaged outputs.
struct FactorBounds {
    double gamma_h = 0.0;   // max ||H_z||_inf
    double gamma_u = 0.0;   // max ||U_z||_inf
    double gamma_v = 0.0;   // max ||V||_inf
    double gamma_h2 = 0.0;  // max ||H_z||_2
    double gamma_v2 = 0.0;  // max ||V||_2
};

struct EnsembleModel {
    std::uint64_t seed = 0;
    double rho = youla::kDefaultControlWeight;
    std::vector<Agent> agents;
    FactorBounds bounds;
    int resampled = 0;  // draws rejected because synthesis failed

    std::size_t n() const { return agents.size(); }
    Eigen::Index n_avg() const { return agents.front().factors.plant.n_avg; }
    Eigen::Index n_z() const { return agents.front().factors.plant.n_z; }
    Eigen::Index n_w() const { return agents.front().factors.plant.n_w; }
    std::vector<youla::YoulaFactors> factors() const;
    std::vector<youla::AgentParameters> parameters() const;
};

// Uniform in [0, 1) from the top 53 bits; identical on every platform.
double portable_uniform(std::mt19937_64& rng);
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

// Uniform draws on the nominal ranges; populations for the same seed are
// nested (the first M agents of a size-n population form the size-M one).
std::vector<youla::AgentParameters> sample_parameters(std::size_t n, std::uint64_t seed);
EnsembleModel sample_population(std::size_t n, std::uint64_t seed, double rho = youla::kDefaultControlWeight);
EnsembleModel make_model(const std::vector<youla::AgentParameters>& params, std::uint64_t seed = 0,
                         double rho = youla::kDefaultControlWeight);
// First m agents of a population (bounds recomputed over the prefix).
EnsembleModel prefix(const EnsembleModel& model, std::size_t m);
FactorBounds factor_bounds(const std::vector<Agent>& agents, const norms::FrequencyGrid& grid = {});

struct Coupling {
    std::size_t row = 0;
    double coefficient = 0.0;  // Q_ij = coefficient * Q_jj
};

// Diagonal FIR entries plus sparse off-diagonal entries stored per column
// as multiples of the column's diagonal entry, so ||Q_ij|| = |c_ij| ||Q_jj||.
struct BlockQ {
    std::vector<lti::FirMatrix> diagonal;
    std::vector<std::vector<Coupling>> columns;
    std::vector<double> diagonal_norms;  // ||Q_jj||_inf

    static BlockQ diagonal_only(std::vector<lti::FirMatrix> entries, const norms::FrequencyGrid& grid = {});
    static BlockQ zero(std::size_t n);

    std::size_t n() const { return diagonal.size(); }
    double gamma_q() const;
    // Smallest alpha for which every column is dominant.
    double alpha_actual() const;
    std::size_t off_diagonal_count() const;
    double coefficient(std::size_t i, std::size_t j) const;
    double entry_norm(std::size_t i, std::size_t j) const;
    Complex entry(std::size_t i, std::size_t j, Complex lambda) const;
    CMatrix dense(Complex lambda) const;
};

// alpha(n) = c n^p; compliant (alpha = o(sqrt n)) iff p < 1/2.
struct DominanceProfile {
    double c = 1.0;
    double p = 0.0;
    double alpha(std::size_t n) const;
    bool compliant() const { return p < 0.5; }
};

// Coherent: nonnegative coefficients. Random: independent random signs.
enum class SignMode { Coherent, Random };
std::string to_string(SignMode mode);
SignMode parse_sign_mode(const std::string& s);

BlockQ selfish_q(const std::vector<matching::MatchingSolution>& solutions, const norms::FrequencyGrid& grid = {});
BlockQ selfish_q(const EnsembleModel& model, NormKind norm, BlockKind block,
                 const matching::MatchingOptions& options = {});

// Each column j spreads alpha ||Q_jj|| over `fanout` distinct random rows
// i != j with random positive weights (signs per `mode`); the diagonal is kept.
BlockQ make_alpha_dominant(const BlockQ& q, double alpha, std::size_t fanout, std::uint64_t seed,
                           SignMode mode = SignMode::Coherent);
BlockQ make_alpha_dominant(const BlockQ& q, const DominanceProfile& profile, std::size_t fanout,
                           std::uint64_t seed, SignMode mode = SignMode::Coherent);

struct DominanceCheck {
    bool dominant = true;
    std::vector<double> margins;  // alpha ||Q_jj|| - sum_i ||Q_ij||
};
DominanceCheck check_dominance(const BlockQ& q, double alpha);

// Per-agent frequency data at one lambda. Rows are the agent's outputs used
// by the objective (z only, or z and the penalty outputs).
struct AgentFrame {
    CMatrix h;  // p x m
    CVector u;  // p
    CVector v;  // m (row of V)
    Complex q;  // Q_jj
};

struct Frame {
    std::vector<AgentFrame> agents;
    Eigen::Index p = 0, m = 0, n_avg = 0;
};

Frame evaluate_frame(const EnsembleModel& model, const BlockQ& q, Complex lambda, BlockKind block);

// T = I - (1/n) 1 1'.
Matrix averaging_projector(std::size_t n);

// Dense assemblies, agent-major: block (i, j) is p x m.
CMatrix phi_at(const EnsembleModel& model, const BlockQ& q, Complex lambda, BlockKind block = BlockKind::Two);
CMatrix psi_at(const EnsembleModel& model, const BlockQ& q, Complex lambda, BlockKind block = BlockKind::Two);

// Off-diagonal coefficients c_ij as a sparse n x n matrix (zero diagonal).
Eigen::SparseMatrix<double> coupling_matrix(const BlockQ& q);

// Matrix-free Phi (social = false) or Psi (social = true) at one frame.
// `coupling` must be coupling_matrix(q) and outlive the operator.
class EnsembleOperator final : public norms::LinearOperator {
public:
    EnsembleOperator(const Frame& frame, const Eigen::SparseMatrix<double>& coupling, bool social);
    Eigen::Index rows() const override;
    Eigen::Index cols() const override;
    void apply(const CVector& x, CVector& y) const override;
    void apply_adjoint(const CVector& y, CVector& x) const override;

private:
    const Frame& frame_;
    const Eigen::SparseMatrix<double>& coupling_;
    Matrix dense_;
    bool social_;
};

struct CostOptions {
    norms::FrequencyGrid grid{};
    norms::LanczosOptions lanczos{};
    // Parseval grids for H2 double until the half-grid estimate agrees to this.
    double h2_tolerance = 1e-10;
    std::size_t h2_points = 513;
    int h2_max_doublings = 4;
};

// Social cost ||Psi|| and individual cost ||Phi||. H2 values are scaled by
// 1/sqrt(n); the two-block form stacks the penalty outputs under the
// (averaged) z outputs.
norms::CostReport social_cost(const EnsembleModel& model, const BlockQ& q, NormKind norm, BlockKind block,
                              const CostOptions& options = {});
norms::CostReport individual_cost(const EnsembleModel& model, const BlockQ& q, NormKind norm, BlockKind block,
                                  const CostOptions& options = {});

// Rank-one average term (1/n) 1 1' Phi on the z outputs. H-infinity: norm of
// its first M block rows. H2: (1/sqrt n) ||(1/n) 1 1' Phi||_2.
norms::CostReport average_block_norm(const EnsembleModel& model, const BlockQ& q, std::size_t m,
                                     const CostOptions& options = {});
norms::CostReport average_block_norm_h2(const EnsembleModel& model, const BlockQ& q,
                                        const CostOptions& options = {});

// sqrt(M) [gamma_h + (1 + alpha) gamma_Q gamma_u gamma_v] / sqrt(n).
double lemma_bound_hinf(std::size_t m, std::size_t n, double gamma_h, double gamma_q, double gamma_u,
                        double gamma_v, double alpha);

struct H2LemmaTerms {
    double h = 0.0;    // gamma_h / sqrt(n)
    double uq = 0.0;   // gamma_u gamma_Q (1 + alpha) / sqrt(n)
    double uqv = 0.0;  // gamma_u gamma_Q gamma_v (1 + alpha) / sqrt(n)
    double total() const { return h + uqv; }
};
// With H2 constants for gamma_h, gamma_v, total() bounds average_block_norm_h2.
H2LemmaTerms lemma_bound_h2(std::size_t n, double gamma_u, double gamma_q, double gamma_h, double gamma_v,
                            double alpha);

}  // namespace mfc::ensemble
