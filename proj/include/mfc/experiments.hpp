#pragma once

// Experiment drivers behind the command-line tool: the scaling study
// (social cost of selfish / compliant / violating parameters against n),
// the decay study of the rank-one average term, closed-loop trajectory
// simulation and single-agent matching reports. Every run writes a CSV with
// a header row and a JSON sidecar `<run>.manifest`.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mfc/ensemble.hpp"
#include "mfc/snapshot.hpp"

namespace mfc::experiments {

inline constexpr const char* kVersion = "0.1.0";

struct TrendThresholds {
    double selfish_spread = 1.05;     // max/min of the selfish column
    double compliant_gap = 0.5;       // gap(n_max) < factor * gap(n_min)
    double violating_growth = 1.3;    // violating(n_max) > factor * violating(n_min)
    double slope_tolerance = 0.1;     // decay-rate fit
};

struct LemmaConfig {
    std::vector<std::size_t> n_list;  // empty: the top-level n list
    std::vector<std::size_t> m_list{1, 4, 16};
    std::vector<double> p_list{0.0, 0.25, 0.6};
    double c = 1.0;
    ensemble::SignMode sign_mode = ensemble::SignMode::Coherent;
    bool h2 = true;
};

enum class Injection { VChannel, Reference };
std::string to_string(Injection i);
Injection parse_injection(const std::string& s);

struct SimulationConfig {
    std::vector<std::size_t> n_list{60};
    int horizon = 400;
    double noise_sigma = 0.05;
    double amplitude = 1.0;
    double period = 50.0;
    Injection mode = Injection::VChannel;
    std::vector<double> initial_state{0.0, 0.0};
    // Explicit population instead of random draws (n_list is then ignored).
    std::vector<youla::AgentParameters> agents;
    double overflow_limit = 1e100;
};

struct SingleAgentConfig {
    double a = 1.0;
    double b = 1.0;
};

struct ExperimentConfig {
    std::uint64_t seed = 42;
    std::vector<std::size_t> n_list{30, 60, 120, 200, 300, 400, 600};
    double rho = youla::kDefaultControlWeight;
    ensemble::DominanceProfile compliant{1.0, 0.25};
    ensemble::DominanceProfile violating{1.0, 0.6};
    std::optional<std::size_t> fanout;  // unset: n - 1
    ensemble::SignMode sign_mode = ensemble::SignMode::Random;
    NormKind norm = NormKind::Hinf;
    BlockKind block = BlockKind::Two;
    norms::FrequencyGrid grid{};
    matching::MatchingOptions matching{};
    norms::LanczosOptions lanczos{};
    LemmaConfig lemma{};
    SimulationConfig simulation{};
    SingleAgentConfig agent{};
    TrendThresholds checks{};
    std::optional<snapshot::Format> snapshot;  // unset: no snapshots written
    std::filesystem::path output_dir = "results";
    bool deterministic = false;

    // Throws std::invalid_argument on violated invariants.
    void validate() const;
    std::size_t fanout_for(std::size_t n) const;
    ensemble::CostOptions cost_options() const;
};

// Unknown keys anywhere in the document are rejected.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const ExperimentConfig& config);

struct Check {
    std::string name;
    bool passed = false;
    std::string detail;
};
bool all_passed(const std::vector<Check>& checks);

struct ScalingRecord {
    std::size_t n = 0;
    std::size_t fanout = 0;
    double alpha_compliant = 0.0;
    double alpha_violating = 0.0;
    double cost_selfish = 0.0;
    double cost_compliant = 0.0;
    double cost_violating = 0.0;
    double wall_time_s = 0.0;
    std::string error;  // empty on success
};

struct ScalingResult {
    std::vector<ScalingRecord> records;
    std::vector<Check> checks;
    std::filesystem::path csv;
};

struct DecayRecord {
    std::string profile;
    double p = 0.0;
    double alpha = 0.0;
    std::size_t n = 0;
    std::size_t m = 0;  // 0 for the H2 quantity (whole population)
    NormKind norm = NormKind::Hinf;
    double measured = 0.0;
    double bound = 0.0;
};

struct SlopeRecord {
    double p = 0.0;
    NormKind norm = NormKind::Hinf;
    double slope = 0.0;
    double expected = 0.0;
};

struct DecayResult {
    std::vector<DecayRecord> records;
    std::vector<SlopeRecord> slopes;
    std::vector<Check> checks;
    std::filesystem::path csv;
};

struct TrajectoryRun {
    std::size_t n = 0;
    std::filesystem::path csv;
    std::vector<std::size_t> overflowed;  // agent indices
    double max_abs_y = 0.0;
};

struct SimulationResult {
    std::vector<TrajectoryRun> runs;
    std::vector<Check> checks;
};

struct MatchingReport {
    double a = 0.0, b = 0.0;
    double mu = 0.0;
    double cost_zero = 0.0;
    double certificate_gap = 0.0;
    int iterations = 0;
    bool converged = true;
    std::size_t grid_size = 0;
    std::vector<double> taps;
    std::vector<std::string> warnings;
    std::vector<Check> checks;
    std::filesystem::path csv;

    std::string text() const;
};

ScalingResult run_scaling(const ExperimentConfig& config);
DecayResult run_lemma_decay(const ExperimentConfig& config);
SimulationResult run_simulation(const ExperimentConfig& config);
MatchingReport run_matching(const ExperimentConfig& config);

// Simulates one population under the given diagonal parameters; rows are
// (k, agent, y, x1, u, w, s). Returns the per-agent trajectories of y.
struct Trajectories {
    std::vector<std::vector<double>> y, x1, u, w;
    std::vector<double> s;
    std::vector<bool> overflow;
};
Trajectories simulate_population(const ensemble::EnsembleModel& model, const ensemble::BlockQ& q,
                                 const SimulationConfig& sim, std::uint64_t seed);

// Ordinary least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

std::uint64_t fnv1a64(const std::string& text);

}  // namespace mfc::experiments
