#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace mfc {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

enum class NormKind { Hinf, H2 };
enum class BlockKind { One, Two };

std::string to_string(NormKind kind);
std::string to_string(BlockKind kind);
NormKind parse_norm_kind(const std::string& text);
BlockKind parse_block_kind(const std::string& text);

// Raised when a transfer function is evaluated at (or numerically on) a pole.
class PoleEvaluationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Riccati non-convergence, unstable factors, and other synthesis failures.
class SynthesisError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class OverflowError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kPi = 3.14159265358979323846;

// Spectral-radius margin for a realization to count as stable.
inline constexpr double kStabilityMargin = 1e-6;

}  // namespace mfc
