#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "mfc/experiments.hpp"

namespace mfc::experiments {

using json = nlohmann::json;

namespace {

void only_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw std::invalid_argument("config: '" + where + "' must be an object");
    const std::set<std::string> keys(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j.items())
        if (!keys.count(k)) throw std::invalid_argument("config: unknown key '" + where + (where.empty() ? "" : ".") + k + "'");
}

template <class T>
void read(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw std::invalid_argument(std::string("config: bad value for '") + key + "': " + j.at(key).dump());
    }
}

void read_profile(const json& j, ensemble::DominanceProfile& p, const std::string& where) {
    only_keys(j, {"c", "p"}, where);
    read(j, "c", p.c);
    read(j, "p", p.p);
}

}  // namespace

std::string to_string(Injection i) { return i == Injection::VChannel ? "v-channel" : "reference"; }

Injection parse_injection(const std::string& s) {
    if (s == "v-channel" || s == "v") return Injection::VChannel;
    if (s == "reference") return Injection::Reference;
    throw std::invalid_argument("unknown injection mode '" + s + "' (expected v-channel or reference)");
}

void ExperimentConfig::validate() const {
    auto ascending = [](const std::vector<std::size_t>& v, const char* name) {
        if (v.empty()) throw std::invalid_argument(std::string("config: ") + name + " is empty");
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (v[i] < 2) throw std::invalid_argument(std::string("config: ") + name + " entries must be >= 2");
            if (i > 0 && v[i] <= v[i - 1])
                throw std::invalid_argument(std::string("config: ") + name + " must be strictly ascending");
        }
    };
    ascending(n_list, "n_list");
    if (!lemma.n_list.empty()) ascending(lemma.n_list, "lemma.n_list");
    if (lemma.m_list.empty()) throw std::invalid_argument("config: lemma.m_list is empty");
    if (simulation.agents.empty()) ascending(simulation.n_list, "simulation.n_list");
    if (simulation.horizon < 1) throw std::invalid_argument("config: simulation.horizon must be >= 1");
    if (!(simulation.noise_sigma >= 0)) throw std::invalid_argument("config: simulation.noise_sigma must be >= 0");
    if (!(simulation.period > 0)) throw std::invalid_argument("config: simulation.period must be > 0");
    if (simulation.initial_state.size() != 2)
        throw std::invalid_argument("config: simulation.initial_state needs 2 entries");
    if (fanout && *fanout < 1) throw std::invalid_argument("config: fanout must be >= 1");
    if (!(rho > 0)) throw std::invalid_argument("config: rho must be > 0");
    if (grid.count < 3) throw std::invalid_argument("config: grid.points must be >= 3");
    if (matching.fir_order < 1) throw std::invalid_argument("config: matching.fir_order must be >= 1");
}

std::size_t ExperimentConfig::fanout_for(std::size_t n) const { return fanout ? std::min(*fanout, n - 1) : n - 1; }

ensemble::CostOptions ExperimentConfig::cost_options() const {
    ensemble::CostOptions o;
    o.grid = grid;
    o.lanczos = lanczos;
    return o;
}

ExperimentConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }
    only_keys(j,
              {"seed", "n_list", "rho", "profiles", "fanout", "sign_mode", "norm", "block", "grid", "matching",
               "lanczos", "lemma", "simulation", "agent", "checks", "snapshot", "output_dir", "deterministic"},
              "");
    ExperimentConfig c;
    read(j, "seed", c.seed);
    read(j, "n_list", c.n_list);
    read(j, "rho", c.rho);
    if (j.contains("profiles")) {
        const auto& p = j["profiles"];
        only_keys(p, {"compliant", "violating"}, "profiles");
        if (p.contains("compliant")) read_profile(p["compliant"], c.compliant, "profiles.compliant");
        if (p.contains("violating")) read_profile(p["violating"], c.violating, "profiles.violating");
    }
    if (j.contains("fanout") && !j["fanout"].is_null()) {
        if (!j["fanout"].is_number_unsigned()) throw std::invalid_argument("config: fanout must be a positive integer");
        c.fanout = j["fanout"].get<std::size_t>();
    }
    if (j.contains("sign_mode")) c.sign_mode = ensemble::parse_sign_mode(j["sign_mode"].get<std::string>());
    if (j.contains("norm")) c.norm = parse_norm_kind(j["norm"].get<std::string>());
    if (j.contains("block")) c.block = parse_block_kind(j["block"].get<std::string>());
    if (j.contains("grid")) {
        const auto& g = j["grid"];
        only_keys(g, {"points", "refine_peak", "doubling_threshold", "max_doublings"}, "grid");
        read(g, "points", c.grid.count);
        read(g, "refine_peak", c.grid.refine_peak);
        read(g, "doubling_threshold", c.grid.doubling_threshold);
        read(g, "max_doublings", c.grid.max_doublings);
    }
    c.matching.grid = c.grid;
    if (j.contains("matching")) {
        const auto& m = j["matching"];
        only_keys(m,
                  {"fir_order", "max_iterations", "tolerance", "damping", "max_grid_doublings", "tail_tolerance",
                   "ridge"},
                  "matching");
        read(m, "fir_order", c.matching.fir_order);
        read(m, "max_iterations", c.matching.max_iterations);
        read(m, "tolerance", c.matching.tolerance);
        read(m, "damping", c.matching.damping);
        read(m, "max_grid_doublings", c.matching.max_grid_doublings);
        read(m, "tail_tolerance", c.matching.tail_tolerance);
        read(m, "ridge", c.matching.ridge);
    }
    if (j.contains("lanczos")) {
        const auto& l = j["lanczos"];
        only_keys(l, {"tolerance", "max_steps", "restarts"}, "lanczos");
        read(l, "tolerance", c.lanczos.tolerance);
        read(l, "max_steps", c.lanczos.max_steps);
        read(l, "restarts", c.lanczos.restarts);
    }
    if (j.contains("lemma")) {
        const auto& l = j["lemma"];
        only_keys(l, {"n_list", "m_list", "p_list", "c", "sign_mode", "h2"}, "lemma");
        read(l, "n_list", c.lemma.n_list);
        read(l, "m_list", c.lemma.m_list);
        read(l, "p_list", c.lemma.p_list);
        read(l, "c", c.lemma.c);
        read(l, "h2", c.lemma.h2);
        if (l.contains("sign_mode")) c.lemma.sign_mode = ensemble::parse_sign_mode(l["sign_mode"].get<std::string>());
    }
    if (j.contains("simulation")) {
        const auto& s = j["simulation"];
        only_keys(s,
                  {"n_list", "horizon", "noise_sigma", "sinusoid", "mode", "initial_state", "agents",
                   "overflow_limit"},
                  "simulation");
        read(s, "n_list", c.simulation.n_list);
        read(s, "horizon", c.simulation.horizon);
        read(s, "noise_sigma", c.simulation.noise_sigma);
        read(s, "initial_state", c.simulation.initial_state);
        read(s, "overflow_limit", c.simulation.overflow_limit);
        if (s.contains("mode")) c.simulation.mode = parse_injection(s["mode"].get<std::string>());
        if (s.contains("sinusoid")) {
            const auto& w = s["sinusoid"];
            only_keys(w, {"amplitude", "period"}, "simulation.sinusoid");
            read(w, "amplitude", c.simulation.amplitude);
            read(w, "period", c.simulation.period);
        }
        if (s.contains("agents")) {
            for (const auto& a : s["agents"]) {
                only_keys(a, {"a", "b"}, "simulation.agents[]");
                youla::AgentParameters p;
                read(a, "a", p.a);
                read(a, "b", p.b);
                c.simulation.agents.push_back(p);
            }
        }
    }
    if (j.contains("agent")) {
        const auto& a = j["agent"];
        only_keys(a, {"a", "b"}, "agent");
        read(a, "a", c.agent.a);
        read(a, "b", c.agent.b);
    }
    if (j.contains("checks")) {
        const auto& t = j["checks"];
        only_keys(t, {"selfish_spread", "compliant_gap", "violating_growth", "slope_tolerance"}, "checks");
        read(t, "selfish_spread", c.checks.selfish_spread);
        read(t, "compliant_gap", c.checks.compliant_gap);
        read(t, "violating_growth", c.checks.violating_growth);
        read(t, "slope_tolerance", c.checks.slope_tolerance);
    }
    if (j.contains("snapshot") && !j["snapshot"].is_null())
        c.snapshot = snapshot::parse_format(j["snapshot"].get<std::string>());
    if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
    read(j, "deterministic", c.deterministic);
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string config_to_json(const ExperimentConfig& c) {
    json agents = json::array();
    for (const auto& a : c.simulation.agents) agents.push_back({{"a", a.a}, {"b", a.b}});
    json j = {
        {"seed", c.seed},
        {"n_list", c.n_list},
        {"rho", c.rho},
        {"profiles",
         {{"compliant", {{"c", c.compliant.c}, {"p", c.compliant.p}}},
          {"violating", {{"c", c.violating.c}, {"p", c.violating.p}}}}},
        {"fanout", c.fanout ? json(*c.fanout) : json(nullptr)},
        {"sign_mode", ensemble::to_string(c.sign_mode)},
        {"norm", to_string(c.norm)},
        {"block", to_string(c.block)},
        {"grid",
         {{"points", c.grid.count},
          {"refine_peak", c.grid.refine_peak},
          {"doubling_threshold", c.grid.doubling_threshold},
          {"max_doublings", c.grid.max_doublings}}},
        {"matching",
         {{"fir_order", c.matching.fir_order},
          {"max_iterations", c.matching.max_iterations},
          {"tolerance", c.matching.tolerance},
          {"damping", c.matching.damping},
          {"max_grid_doublings", c.matching.max_grid_doublings},
          {"tail_tolerance", c.matching.tail_tolerance},
          {"ridge", c.matching.ridge}}},
        {"lanczos",
         {{"tolerance", c.lanczos.tolerance}, {"max_steps", c.lanczos.max_steps}, {"restarts", c.lanczos.restarts}}},
        {"lemma",
         {{"n_list", c.lemma.n_list},
          {"m_list", c.lemma.m_list},
          {"p_list", c.lemma.p_list},
          {"c", c.lemma.c},
          {"sign_mode", ensemble::to_string(c.lemma.sign_mode)},
          {"h2", c.lemma.h2}}},
        {"simulation",
         {{"n_list", c.simulation.n_list},
          {"horizon", c.simulation.horizon},
          {"noise_sigma", c.simulation.noise_sigma},
          {"sinusoid", {{"amplitude", c.simulation.amplitude}, {"period", c.simulation.period}}},
          {"mode", to_string(c.simulation.mode)},
          {"initial_state", c.simulation.initial_state},
          {"agents", agents},
          {"overflow_limit", c.simulation.overflow_limit}}},
        {"agent", {{"a", c.agent.a}, {"b", c.agent.b}}},
        {"checks",
         {{"selfish_spread", c.checks.selfish_spread},
          {"compliant_gap", c.checks.compliant_gap},
          {"violating_growth", c.checks.violating_growth},
          {"slope_tolerance", c.checks.slope_tolerance}}},
        {"snapshot", c.snapshot ? json(snapshot::to_string(*c.snapshot)) : json(nullptr)},
        {"output_dir", c.output_dir.string()},
        {"deterministic", c.deterministic},
    };
    return j.dump(2);
}

}  // namespace mfc::experiments
