// Command-line front end for the experiment drivers.
//
//   mfc_experiments scaling     [--config f] [--seed s] [--n-list 30,60] [--out dir] ...
//   mfc_experiments lemma-decay ...
//   mfc_experiments simulate    ...
//   mfc_experiments matching    [--a 1.0] [--b 1.0] [--fir-order L] ...
//
// Exit codes: 0 success, 2 a soft trend check failed, 3 hard error.

#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "mfc/experiments.hpp"

using namespace mfc;
using namespace mfc::experiments;

namespace {

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string n_list;
    std::string out;
    std::string norm;
    std::string block;
    bool deterministic = false;
    std::optional<double> a, b;
    std::optional<std::size_t> fir_order;
};

std::vector<std::size_t> parse_list(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        std::size_t pos = 0;
        const auto v = std::stoull(item, &pos);
        if (pos != item.size()) throw std::invalid_argument("bad --n-list entry '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw std::invalid_argument("--n-list is empty");
    return out;
}

void add_common(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config, "JSON config file (unknown keys are rejected)");
    cmd->add_option("--seed", o.seed, "Population / coupling seed");
    cmd->add_option("--n-list", o.n_list, "Comma-separated population sizes, ascending");
    cmd->add_option("--out", o.out, "Output directory");
    cmd->add_option("--norm", o.norm, "hinf or h2")->check(CLI::IsMember({"hinf", "h2"}));
    cmd->add_option("--block", o.block, "one or two")->check(CLI::IsMember({"one", "two"}));
    cmd->add_flag("--deterministic", o.deterministic, "Omit wall times from CSV output");
}

ExperimentConfig build(const Overrides& o, const std::string& command) {
    auto c = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
    if (o.seed) c.seed = *o.seed;
    if (!o.n_list.empty()) {
        const auto list = parse_list(o.n_list);
        if (command == "simulate") {
            c.simulation.n_list = list;
        } else if (command == "lemma-decay") {
            c.lemma.n_list = list;
        } else {
            c.n_list = list;
        }
    }
    if (!o.out.empty()) c.output_dir = o.out;
    if (!o.norm.empty()) c.norm = parse_norm_kind(o.norm);
    if (!o.block.empty()) c.block = parse_block_kind(o.block);
    if (o.deterministic) c.deterministic = true;
    if (o.a) c.agent.a = *o.a;
    if (o.b) c.agent.b = *o.b;
    if (o.fir_order) c.matching.fir_order = *o.fir_order;
    c.validate();
    return c;
}

int report(const std::vector<Check>& checks) {
    for (const auto& c : checks) std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
    return all_passed(checks) ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mean-field Youla experiments"};
    app.require_subcommand(1);
    Overrides o;
    auto* scaling = app.add_subcommand("scaling", "Social cost of selfish / compliant / violating Q against n");
    auto* decay = app.add_subcommand("lemma-decay", "Decay of the rank-one average term and its bounds");
    auto* simulate = app.add_subcommand("simulate", "Closed-loop trajectories under selfish controllers");
    auto* match = app.add_subcommand("matching", "Single-agent model-matching report");
    for (auto* cmd : {scaling, decay, simulate, match}) add_common(cmd, o);
    match->add_option("--a", o.a, "Agent parameter a");
    match->add_option("--b", o.b, "Agent parameter b");
    match->add_option("--fir-order", o.fir_order, "Number of FIR taps of Z")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 3;
    }

    try {
        if (scaling->parsed()) {
            const auto r = run_scaling(build(o, "scaling"));
            for (const auto& rec : r.records) {
                std::cout << "n=" << rec.n << " selfish=" << rec.cost_selfish << " compliant=" << rec.cost_compliant
                          << " violating=" << rec.cost_violating;
                if (!rec.error.empty()) std::cout << " error: " << rec.error;
                std::cout << "\n";
            }
            std::cout << "wrote " << r.csv.string() << "\n";
            return report(r.checks);
        }
        if (decay->parsed()) {
            const auto r = run_lemma_decay(build(o, "lemma-decay"));
            for (const auto& s : r.slopes)
                std::cout << "slope " << to_string(s.norm) << " p=" << s.p << ": " << s.slope << " (expected "
                          << s.expected << ")\n";
            std::cout << "wrote " << r.csv.string() << "\n";
            return report(r.checks);
        }
        if (simulate->parsed()) {
            const auto r = run_simulation(build(o, "simulate"));
            for (const auto& run : r.runs) std::cout << "wrote " << run.csv.string() << "\n";
            return report(r.checks);
        }
        const auto r = run_matching(build(o, "matching"));
        std::cout << r.text() << "wrote " << r.csv.string() << "\n";
        return all_passed(r.checks) ? 0 : 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
