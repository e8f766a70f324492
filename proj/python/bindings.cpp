#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mfc/experiments.hpp"
#include "mfc/snapshot.hpp"

namespace py = pybind11;
using namespace mfc;

namespace {

py::dict cost_dict(const norms::CostReport& r) {
    py::dict d;
    d["value"] = r.value;
    d["peak_theta"] = r.peak_theta;
    d["grid_size"] = r.grid_size;
    d["method"] = norms::to_string(r.method);
    d["scaled"] = r.scaled;
    d["coarse_value"] = r.coarse_value;
    return d;
}

py::list checks_list(const std::vector<experiments::Check>& checks) {
    py::list out;
    for (const auto& c : checks) {
        py::dict d;
        d["name"] = c.name;
        d["passed"] = c.passed;
        d["detail"] = c.detail;
        out.append(d);
    }
    return out;
}

experiments::ExperimentConfig config_from(const std::string& json_text) {
    return experiments::parse_config(json_text.empty() ? "{}" : json_text);
}

}  // namespace

PYBIND11_MODULE(_mfc, m) {
    m.doc() = "Mean-field Youla parametrization: factors, matching, ensembles and experiments";

    py::enum_<NormKind>(m, "NormKind").value("Hinf", NormKind::Hinf).value("H2", NormKind::H2);
    py::enum_<BlockKind>(m, "BlockKind").value("One", BlockKind::One).value("Two", BlockKind::Two);
    py::enum_<ensemble::SignMode>(m, "SignMode")
        .value("Coherent", ensemble::SignMode::Coherent)
        .value("Random", ensemble::SignMode::Random);

    py::register_exception<SynthesisError>(m, "SynthesisError", PyExc_RuntimeError);
    py::register_exception<PoleEvaluationError>(m, "PoleEvaluationError", PyExc_ArithmeticError);
    py::register_exception<OverflowError>(m, "OverflowError", PyExc_OverflowError);

    // ---------------------------------------------------------------- lti
    py::class_<lti::StateSpace>(m, "StateSpace")
        .def(py::init<Matrix, Matrix, Matrix, Matrix>(), py::arg("A"), py::arg("B"), py::arg("C"), py::arg("D"))
        .def_static("gain", py::overload_cast<double>(&lti::StateSpace::gain))
        .def_static("delay", &lti::StateSpace::delay)
        .def_property_readonly("A", &lti::StateSpace::A)
        .def_property_readonly("B", &lti::StateSpace::B)
        .def_property_readonly("C", &lti::StateSpace::C)
        .def_property_readonly("D", &lti::StateSpace::D)
        .def_property_readonly("states", &lti::StateSpace::states)
        .def_property_readonly("inputs", &lti::StateSpace::inputs)
        .def_property_readonly("outputs", &lti::StateSpace::outputs)
        .def("__call__", [](const lti::StateSpace& s, Complex l) { return lti::freq_response(s, l); });

    m.def("freq_response", &lti::freq_response, py::arg("sys"), py::arg("lam"));
    m.def("is_stable", [](const lti::StateSpace& s) { return lti::is_stable(s); });
    m.def("impulse_taps", [](const lti::StateSpace& s, std::size_t length) {
        return lti::impulse_response(s, length).taps.taps();
    });

    // -------------------------------------------------------------- youla
    py::class_<youla::AgentParameters>(m, "AgentParameters")
        .def(py::init([](double a, double b) { return youla::AgentParameters{a, b}; }), py::arg("a") = 1.0,
             py::arg("b") = 1.0)
        .def_readwrite("a", &youla::AgentParameters::a)
        .def_readwrite("b", &youla::AgentParameters::b)
        .def("__repr__", [](const youla::AgentParameters& p) {
            return "AgentParameters(a=" + std::to_string(p.a) + ", b=" + std::to_string(p.b) + ")";
        });

    py::class_<youla::YoulaFactors>(m, "YoulaFactors")
        .def_readonly("h", &youla::YoulaFactors::h)
        .def_readonly("u", &youla::YoulaFactors::u)
        .def_readonly("v", &youla::YoulaFactors::v)
        .def_property_readonly("F", [](const youla::YoulaFactors& f) { return f.gains.f; })
        .def_property_readonly("L", [](const youla::YoulaFactors& f) { return f.gains.l; })
        .def_property_readonly("plant", [](const youla::YoulaFactors& f) { return f.plant.realization; });

    m.def("factorize_agent",
          [](double a, double b, double rho) { return youla::factorize_agent({a, b}, rho); }, py::arg("a"),
          py::arg("b"), py::arg("rho") = youla::kDefaultControlWeight);
    m.def("controller_from_q", &youla::controller_from_q, py::arg("factors"), py::arg("q"));
    m.def("closed_loop", &youla::closed_loop, py::arg("factors"), py::arg("q"));
    m.def(
        "verify_parametrization",
        [](const youla::YoulaFactors& f, const lti::StateSpace& q, const std::vector<Complex>& probes) {
            return youla::verify_parametrization(f, q, probes);
        },
        py::arg("factors"), py::arg("q"), py::arg("probes"));

    // -------------------------------------------------------------- norms
    m.def(
        "hinf_norm",
        [](const lti::StateSpace& s, std::size_t points) {
            norms::FrequencyGrid g;
            g.count = points;
            return cost_dict(norms::hinf_norm(s, g));
        },
        py::arg("sys"), py::arg("points") = 512);
    m.def(
        "h2_norm_scaled",
        [](const lti::StateSpace& s, std::size_t n) { return cost_dict(norms::h2_norm_scaled(s, n)); },
        py::arg("sys"), py::arg("n") = 1);
    m.def("sigma_max", py::overload_cast<const CMatrix&>(&norms::sigma_max));

    // ----------------------------------------------------------- matching
    py::class_<matching::MatchingSolution>(m, "MatchingSolution")
        .def_property_readonly("z", [](const matching::MatchingSolution& s) { return s.z.scalar_taps(); })
        .def_readonly("cost", &matching::MatchingSolution::cost)
        .def_readonly("iterations", &matching::MatchingSolution::iterations)
        .def_readonly("converged", &matching::MatchingSolution::converged)
        .def_readonly("certificate_gap", &matching::MatchingSolution::certificate_gap)
        .def_readonly("grid_size", &matching::MatchingSolution::grid_size)
        .def_readonly("warnings", &matching::MatchingSolution::warnings);

    m.def(
        "solve_matching",
        [](const lti::StateSpace& h, const lti::StateSpace& u, const lti::StateSpace& v, NormKind norm,
           std::size_t fir_order, bool identity_channel) {
            matching::MatchingProblem p;
            p.h = h;
            p.u = u;
            p.v = v;
            p.norm = norm;
            p.options.fir_order = fir_order;
            if (identity_channel) p = matching::with_identity_channel(p);
            return matching::solve(p);
        },
        py::arg("h"), py::arg("u"), py::arg("v"), py::arg("norm") = NormKind::Hinf, py::arg("fir_order") = 64,
        py::arg("identity_channel") = false);
    m.def(
        "solve_agent",
        [](const youla::YoulaFactors& f, NormKind norm, BlockKind block, std::size_t fir_order) {
            matching::MatchingOptions o;
            o.fir_order = fir_order;
            return matching::solve(matching::agent_problem(f, norm, block, o));
        },
        py::arg("factors"), py::arg("norm") = NormKind::Hinf, py::arg("block") = BlockKind::Two,
        py::arg("fir_order") = 64);
    m.def(
        "mu_sequence",
        [](const std::vector<double>& costs, NormKind norm) { return matching::mu_sequence(costs, norm); },
        py::arg("costs"), py::arg("norm"));

    // ----------------------------------------------------------- ensemble
    py::class_<ensemble::FactorBounds>(m, "FactorBounds")
        .def_readonly("gamma_h", &ensemble::FactorBounds::gamma_h)
        .def_readonly("gamma_u", &ensemble::FactorBounds::gamma_u)
        .def_readonly("gamma_v", &ensemble::FactorBounds::gamma_v)
        .def_readonly("gamma_h2", &ensemble::FactorBounds::gamma_h2)
        .def_readonly("gamma_v2", &ensemble::FactorBounds::gamma_v2);

    py::class_<ensemble::EnsembleModel>(m, "EnsembleModel")
        .def_property_readonly("n", &ensemble::EnsembleModel::n)
        .def_readonly("seed", &ensemble::EnsembleModel::seed)
        .def_readonly("rho", &ensemble::EnsembleModel::rho)
        .def_readonly("bounds", &ensemble::EnsembleModel::bounds)
        .def_property_readonly("parameters", &ensemble::EnsembleModel::parameters)
        .def_property_readonly("factors", &ensemble::EnsembleModel::factors)
        .def("__len__", &ensemble::EnsembleModel::n);

    m.def("sample_population", &ensemble::sample_population, py::arg("n"), py::arg("seed"),
          py::arg("rho") = youla::kDefaultControlWeight);
    m.def("make_model", &ensemble::make_model, py::arg("params"), py::arg("seed") = 0,
          py::arg("rho") = youla::kDefaultControlWeight);

    py::class_<ensemble::BlockQ>(m, "BlockQ")
        .def_property_readonly("n", &ensemble::BlockQ::n)
        .def_property_readonly("gamma_q", &ensemble::BlockQ::gamma_q)
        .def_property_readonly("alpha_actual", &ensemble::BlockQ::alpha_actual)
        .def_property_readonly("off_diagonal_count", &ensemble::BlockQ::off_diagonal_count)
        .def_readonly("diagonal_norms", &ensemble::BlockQ::diagonal_norms)
        .def("coefficient", &ensemble::BlockQ::coefficient)
        .def("dense", &ensemble::BlockQ::dense, py::arg("lam"))
        .def_static("zero", &ensemble::BlockQ::zero)
        .def_static("diagonal_only", [](const std::vector<std::vector<double>>& taps) {
            std::vector<lti::FirMatrix> d;
            for (const auto& t : taps) d.push_back(lti::FirMatrix::scalar(t));
            return ensemble::BlockQ::diagonal_only(d);
        });

    m.def(
        "selfish_q",
        [](const ensemble::EnsembleModel& model, NormKind norm, BlockKind block, std::size_t fir_order) {
            matching::MatchingOptions o;
            o.fir_order = fir_order;
            return ensemble::selfish_q(model, norm, block, o);
        },
        py::arg("model"), py::arg("norm") = NormKind::Hinf, py::arg("block") = BlockKind::Two,
        py::arg("fir_order") = 64);
    m.def(
        "make_alpha_dominant",
        [](const ensemble::BlockQ& q, double alpha, std::optional<std::size_t> fanout, std::uint64_t seed,
           ensemble::SignMode mode) { return ensemble::make_alpha_dominant(q, alpha, fanout.value_or(q.n() - 1), seed, mode); },
        py::arg("q"), py::arg("alpha"), py::arg("fanout") = py::none(), py::arg("seed") = 0,
        py::arg("mode") = ensemble::SignMode::Random);
    m.def(
        "check_dominance", [](const ensemble::BlockQ& q, double alpha) { return ensemble::check_dominance(q, alpha).dominant; },
        py::arg("q"), py::arg("alpha"));
    m.def("averaging_projector", &ensemble::averaging_projector, py::arg("n"));
    m.def("phi_at", &ensemble::phi_at, py::arg("model"), py::arg("q"), py::arg("lam"),
          py::arg("block") = BlockKind::Two);
    m.def("psi_at", &ensemble::psi_at, py::arg("model"), py::arg("q"), py::arg("lam"),
          py::arg("block") = BlockKind::Two);
    m.def(
        "social_cost",
        [](const ensemble::EnsembleModel& model, const ensemble::BlockQ& q, NormKind norm, BlockKind block) {
            return cost_dict(ensemble::social_cost(model, q, norm, block));
        },
        py::arg("model"), py::arg("q"), py::arg("norm") = NormKind::Hinf, py::arg("block") = BlockKind::Two);
    m.def(
        "individual_cost",
        [](const ensemble::EnsembleModel& model, const ensemble::BlockQ& q, NormKind norm, BlockKind block) {
            return cost_dict(ensemble::individual_cost(model, q, norm, block));
        },
        py::arg("model"), py::arg("q"), py::arg("norm") = NormKind::Hinf, py::arg("block") = BlockKind::Two);
    m.def(
        "average_block_norm",
        [](const ensemble::EnsembleModel& model, const ensemble::BlockQ& q, std::size_t m_rows) {
            return cost_dict(ensemble::average_block_norm(model, q, m_rows));
        },
        py::arg("model"), py::arg("q"), py::arg("m") = 1);
    m.def("lemma_bound_hinf", &ensemble::lemma_bound_hinf, py::arg("m"), py::arg("n"), py::arg("gamma_h"),
          py::arg("gamma_q"), py::arg("gamma_u"), py::arg("gamma_v"), py::arg("alpha"));
    m.def(
        "lemma_bound_h2",
        [](std::size_t n, double gu, double gq, double gh, double gv, double alpha) {
            return ensemble::lemma_bound_h2(n, gu, gq, gh, gv, alpha).total();
        },
        py::arg("n"), py::arg("gamma_u"), py::arg("gamma_q"), py::arg("gamma_h"), py::arg("gamma_v"),
        py::arg("alpha"));

    // ----------------------------------------------------------- snapshot
    m.def(
        "snapshot_encode",
        [](const ensemble::EnsembleModel& model, const ensemble::BlockQ* q, const std::string& format) {
            const auto bytes = snapshot::encode(snapshot::capture(model, q), snapshot::parse_format(format));
            return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
        },
        py::arg("model"), py::arg("q") = nullptr, py::arg("format") = "text");
    m.def(
        "snapshot_decode",
        [](const py::bytes& data) {
            const std::string s = data;
            const auto snap = snapshot::decode(std::vector<std::uint8_t>(s.begin(), s.end()));
            return py::make_tuple(snapshot::restore_model(snap),
                                  snap.q ? py::cast(*snap.q) : py::object(py::none()));
        },
        py::arg("data"));

    // -------------------------------------------------------- experiments
    m.def("default_config", [] { return experiments::config_to_json(experiments::ExperimentConfig{}); });
    m.def(
        "run_scaling",
        [](const std::string& config) {
            const auto r = experiments::run_scaling(config_from(config));
            py::list rows;
            for (const auto& x : r.records) {
                py::dict d;
                d["n"] = x.n;
                d["cost_selfish"] = x.cost_selfish;
                d["cost_compliant"] = x.cost_compliant;
                d["cost_violating"] = x.cost_violating;
                d["alpha_compliant"] = x.alpha_compliant;
                d["alpha_violating"] = x.alpha_violating;
                d["error"] = x.error;
                rows.append(d);
            }
            return py::dict(py::arg("records") = rows, py::arg("checks") = checks_list(r.checks),
                            py::arg("csv") = r.csv.string());
        },
        py::arg("config") = "");
    m.def(
        "run_lemma_decay",
        [](const std::string& config) {
            const auto r = experiments::run_lemma_decay(config_from(config));
            py::list slopes;
            for (const auto& s : r.slopes)
                slopes.append(py::dict(py::arg("p") = s.p, py::arg("norm") = to_string(s.norm),
                                       py::arg("slope") = s.slope, py::arg("expected") = s.expected));
            return py::dict(py::arg("slopes") = slopes, py::arg("checks") = checks_list(r.checks),
                            py::arg("csv") = r.csv.string());
        },
        py::arg("config") = "");
    m.def(
        "run_simulation",
        [](const std::string& config) {
            const auto r = experiments::run_simulation(config_from(config));
            py::list runs;
            for (const auto& x : r.runs)
                runs.append(py::dict(py::arg("n") = x.n, py::arg("csv") = x.csv.string(),
                                     py::arg("overflowed") = x.overflowed, py::arg("max_abs_y") = x.max_abs_y));
            return py::dict(py::arg("runs") = runs, py::arg("checks") = checks_list(r.checks));
        },
        py::arg("config") = "");
    m.def(
        "run_matching",
        [](const std::string& config) {
            const auto r = experiments::run_matching(config_from(config));
            return py::dict(py::arg("mu") = r.mu, py::arg("cost_zero") = r.cost_zero,
                            py::arg("certificate_gap") = r.certificate_gap, py::arg("taps") = r.taps,
                            py::arg("converged") = r.converged, py::arg("report") = r.text(),
                            py::arg("checks") = checks_list(r.checks), py::arg("csv") = r.csv.string());
        },
        py::arg("config") = "");

    m.attr("__version__") = experiments::kVersion;
}
