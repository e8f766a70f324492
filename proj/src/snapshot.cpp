#include "mfc/snapshot.hpp"

#include <bit>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "json.hpp"

namespace mfc::snapshot {

using json = nlohmann::json;

namespace {

constexpr const char* kKind = "mfc-snapshot";

bool same_bits(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

struct Writer {
    Format format;
    json num(double x) const { return format == Format::Text ? json(hexfloat(x)) : json(x); }
};

double num(const json& j) {
    if (j.is_string()) return parse_hexfloat(j.get<std::string>());
    if (j.is_number()) return j.get<double>();
    throw std::runtime_error("snapshot: expected a number, got " + std::string(j.type_name()));
}

json encode_fir(const lti::FirMatrix& f, const Writer& w) {
    json taps = json::array();
    for (const auto& t : f.taps())
        for (Eigen::Index i = 0; i < t.rows(); ++i)
            for (Eigen::Index k = 0; k < t.cols(); ++k) taps.push_back(w.num(t(i, k)));
    return {{"rows", f.rows()}, {"cols", f.cols()}, {"length", f.length()}, {"taps", std::move(taps)}};
}

lti::FirMatrix decode_fir(const json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto len = j.at("length").get<std::size_t>();
    const auto& taps = j.at("taps");
    if (taps.size() != len * static_cast<std::size_t>(rows * cols))
        throw std::runtime_error("snapshot: FIR tap count does not match its shape");
    std::vector<Matrix> out;
    std::size_t idx = 0;
    for (std::size_t l = 0; l < len; ++l) {
        Matrix t(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index k = 0; k < cols; ++k) t(i, k) = num(taps[idx++]);
        out.push_back(std::move(t));
    }
    return lti::FirMatrix(std::move(out));
}

json to_json(const Snapshot& s, Format format) {
    const Writer w{format};
    json params = json::array();
    for (const auto& p : s.params) params.push_back({{"a", w.num(p.a)}, {"b", w.num(p.b)}});
    json j = {
        {"kind", kKind},
        {"version", kVersion},
        {"seed", s.seed},
        {"rho", w.num(s.rho)},
        {"resampled", s.resampled},
        {"params", std::move(params)},
        {"bounds",
         {{"gamma_h", w.num(s.bounds.gamma_h)},
          {"gamma_u", w.num(s.bounds.gamma_u)},
          {"gamma_v", w.num(s.bounds.gamma_v)},
          {"gamma_h2", w.num(s.bounds.gamma_h2)},
          {"gamma_v2", w.num(s.bounds.gamma_v2)}}},
    };
    if (s.q) {
        json diag = json::array(), norms = json::array(), cols = json::array();
        for (const auto& d : s.q->diagonal) diag.push_back(encode_fir(d, w));
        for (double x : s.q->diagonal_norms) norms.push_back(w.num(x));
        for (const auto& c : s.q->columns) {
            json col = json::array();
            for (const auto& e : c) col.push_back({{"row", e.row}, {"c", w.num(e.coefficient)}});
            cols.push_back(std::move(col));
        }
        j["q"] = {{"diagonal", std::move(diag)}, {"diagonal_norms", std::move(norms)}, {"columns", std::move(cols)}};
    }
    return j;
}

Snapshot from_json(const json& j) {
    if (j.value("kind", "") != kKind) throw std::runtime_error("snapshot: not an mfc snapshot");
    if (j.at("version").get<int>() != kVersion)
        throw std::runtime_error("snapshot: unsupported version " + j.at("version").dump());
    Snapshot s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.rho = num(j.at("rho"));
    s.resampled = j.at("resampled").get<int>();
    for (const auto& p : j.at("params")) s.params.push_back({num(p.at("a")), num(p.at("b"))});
    const auto& b = j.at("bounds");
    s.bounds = {num(b.at("gamma_h")), num(b.at("gamma_u")), num(b.at("gamma_v")), num(b.at("gamma_h2")),
                num(b.at("gamma_v2"))};
    if (j.contains("q")) {
        const auto& jq = j.at("q");
        ensemble::BlockQ q;
        for (const auto& d : jq.at("diagonal")) q.diagonal.push_back(decode_fir(d));
        for (const auto& x : jq.at("diagonal_norms")) q.diagonal_norms.push_back(num(x));
        for (const auto& col : jq.at("columns")) {
            std::vector<ensemble::Coupling> c;
            for (const auto& e : col) c.push_back({e.at("row").get<std::size_t>(), num(e.at("c"))});
            q.columns.push_back(std::move(c));
        }
        if (q.columns.size() != q.diagonal.size() || q.diagonal_norms.size() != q.diagonal.size())
            throw std::runtime_error("snapshot: inconsistent block Q");
        s.q = std::move(q);
    }
    return s;
}

}  // namespace

std::string to_string(Format f) { return f == Format::Text ? "text" : "binary"; }

Format parse_format(const std::string& s) {
    if (s == "text" || s == "json") return Format::Text;
    if (s == "binary" || s == "cbor") return Format::Binary;
    throw std::invalid_argument("unknown snapshot format '" + s + "' (expected text or binary)");
}

std::string hexfloat(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", x);
    return buf;
}

double parse_hexfloat(const std::string& s) {
    char* end = nullptr;
    const double x = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') throw std::runtime_error("snapshot: bad number '" + s + "'");
    return x;
}

Snapshot capture(const ensemble::EnsembleModel& model, const ensemble::BlockQ* q) {
    Snapshot s;
    s.seed = model.seed;
    s.rho = model.rho;
    s.resampled = model.resampled;
    s.params = model.parameters();
    s.bounds = model.bounds;
    if (q) s.q = *q;
    return s;
}

ensemble::EnsembleModel restore_model(const Snapshot& s) {
    ensemble::EnsembleModel m;
    m.seed = s.seed;
    m.rho = s.rho;
    m.resampled = s.resampled;
    for (const auto& p : s.params) m.agents.push_back({p, youla::factorize_agent(p, s.rho)});
    m.bounds = s.bounds;
    return m;
}

std::vector<std::uint8_t> encode(const Snapshot& s, Format format) {
    const auto j = to_json(s, format);
    if (format == Format::Binary) return json::to_cbor(j);
    const auto text = j.dump(1) + "\n";
    return {text.begin(), text.end()};
}

Snapshot decode(std::span<const std::uint8_t> bytes) {
    if (bytes.empty()) throw std::runtime_error("snapshot: empty input");
    try {
        // A CBOR map header is 0xa0..0xbf; text snapshots start with '{'.
        if ((bytes[0] & 0xe0) == 0xa0) return from_json(json::from_cbor(bytes.begin(), bytes.end()));
        return from_json(json::parse(bytes.begin(), bytes.end()));
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("snapshot: ") + e.what());
    }
}

void save(const std::filesystem::path& path, const Snapshot& s, Format format) {
    const auto bytes = encode(s, format);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("snapshot: cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Snapshot load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("snapshot: cannot read " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode(bytes);
}

bool operator==(const ensemble::FactorBounds& a, const ensemble::FactorBounds& b) {
    return same_bits(a.gamma_h, b.gamma_h) && same_bits(a.gamma_u, b.gamma_u) && same_bits(a.gamma_v, b.gamma_v) &&
           same_bits(a.gamma_h2, b.gamma_h2) && same_bits(a.gamma_v2, b.gamma_v2);
}

bool operator==(const ensemble::BlockQ& a, const ensemble::BlockQ& b) {
    if (a.n() != b.n() || a.columns.size() != b.columns.size()) return false;
    for (std::size_t j = 0; j < a.n(); ++j) {
        const auto& ta = a.diagonal[j].taps();
        const auto& tb = b.diagonal[j].taps();
        if (ta.size() != tb.size()) return false;
        for (std::size_t k = 0; k < ta.size(); ++k) {
            if (ta[k].rows() != tb[k].rows() || ta[k].cols() != tb[k].cols()) return false;
            for (Eigen::Index i = 0; i < ta[k].size(); ++i)
                if (!same_bits(ta[k].data()[i], tb[k].data()[i])) return false;
        }
        if (!same_bits(a.diagonal_norms[j], b.diagonal_norms[j])) return false;
        if (a.columns[j].size() != b.columns[j].size()) return false;
        for (std::size_t k = 0; k < a.columns[j].size(); ++k) {
            if (a.columns[j][k].row != b.columns[j][k].row) return false;
            if (!same_bits(a.columns[j][k].coefficient, b.columns[j][k].coefficient)) return false;
        }
    }
    return true;
}

bool operator==(const Snapshot& a, const Snapshot& b) {
    if (a.seed != b.seed || !same_bits(a.rho, b.rho) || a.resampled != b.resampled) return false;
    if (a.params.size() != b.params.size()) return false;
    for (std::size_t i = 0; i < a.params.size(); ++i)
        if (!same_bits(a.params[i].a, b.params[i].a) || !same_bits(a.params[i].b, b.params[i].b)) return false;
    if (!(a.bounds == b.bounds)) return false;
    if (a.q.has_value() != b.q.has_value()) return false;
    return !a.q || *a.q == *b.q;
}

}  // namespace mfc::snapshot
