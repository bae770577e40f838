// io.hpp: CSV tables, job config parsing and run manifests

#pragma once

#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "tso/core.hpp"
#include "tso/expfit.hpp"
#include "tso/lindblad.hpp"
#include "tso/models.hpp"
#include "tso/presets.hpp"
#include "tso/spectral.hpp"
#include "tso/surrogate.hpp"

namespace tso::io {

using json = nlohmann::json;

inline constexpr const char* version = "0.1.0";

// Shortest decimal text that parses back to the same double.
inline std::string format_double(double x) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

inline double parse_double(std::string_view s, const std::string& where) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || r.ec != std::errc{} || r.ptr != s.data() + s.size())
        throw ConfigError(where + ": '" + std::string(s) + "' is not a number");
    return v;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + p.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + p.string());
    out << content;
    if (!out) throw ConfigError("write failed for " + p.string());
}

// ---------------------------------------------------------------------------
// CSV

// "# key: value" lines before the header become metadata.
struct CsvTable {
    std::vector<std::pair<std::string, std::string>> meta;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    const std::string* find_meta(const std::string& key) const {
        for (const auto& [k, v] : meta)
            if (k == key) return &v;
        return nullptr;
    }
    std::size_t column(const std::string& name, const std::string& where) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw ConfigError(where + ": missing column '" + name + "'");
    }
};

namespace detail {

inline std::string trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return std::string(s);
}

inline std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        out.push_back(trim(std::string_view(line).substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

} // namespace detail

inline CsvTable parse_csv(const std::string& text, const std::string& where = "csv") {
    CsvTable t;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string s = detail::trim(line);
        if (s.empty()) continue;
        if (s.front() == '#') {
            const auto colon = s.find(':');
            if (colon != std::string::npos && t.header.empty())
                t.meta.emplace_back(detail::trim(std::string_view(s).substr(1, colon - 1)),
                                    detail::trim(std::string_view(s).substr(colon + 1)));
            continue;
        }
        auto cells = detail::split(s);
        if (t.header.empty()) {
            t.header = std::move(cells);
        } else {
            if (cells.size() != t.header.size())
                throw ConfigError(where + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                                  " fields, found " + std::to_string(cells.size()));
            t.rows.push_back(std::move(cells));
        }
    }
    if (t.header.empty()) throw ConfigError(where + ": no header row");
    return t;
}

// ---------------------------------------------------------------------------
// surrogate bath tables

inline std::string bath_to_csv(const SurrogateBath& b) {
    validate(b);
    std::string s = "# unit: " + unit_name(b.unit) + "\nmode,Omega,g_to_next,Gamma,re_c,im_c,d_loc\n";
    for (std::size_t n = 0; n < b.n_modes(); ++n) {
        s += std::to_string(n + 1) + ',' + format_double(b.omega[n]) + ',';
        if (n + 1 < b.n_modes()) s += format_double(b.g[n]);
        s += ',' + format_double(b.gamma[n]) + ',' + format_double(b.c[n].real()) + ',' + format_double(b.c[n].imag()) + ',';
        if (!b.dims.empty()) s += std::to_string(b.dims[n]);
        s += '\n';
    }
    return s;
}

inline SurrogateBath bath_from_csv(const std::string& text, const std::string& where = "bath table") {
    const CsvTable t = parse_csv(text, where);
    const auto* unit = t.find_meta("unit");
    if (!unit) throw ConfigError(where + ": missing '# unit:' header");
    SurrogateBath b;
    b.unit = parse_unit(*unit);
    const std::size_t cm = t.column("mode", where), co = t.column("Omega", where), cg = t.column("g_to_next", where),
                      cG = t.column("Gamma", where), cr = t.column("re_c", where), ci = t.column("im_c", where),
                      cd = t.column("d_loc", where);
    std::size_t with_dims = 0;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& row = t.rows[r];
        const std::string at = where + " row " + std::to_string(r + 1);
        if (row[cm] != std::to_string(r + 1)) throw ConfigError(at + ": modes must be numbered 1, 2, ...");
        b.omega.push_back(parse_double(row[co], at + " Omega"));
        if (r + 1 < t.rows.size()) b.g.push_back(parse_double(row[cg], at + " g_to_next"));
        else if (!row[cg].empty()) throw ConfigError(at + ": last mode has no g_to_next");
        b.gamma.push_back(parse_double(row[cG], at + " Gamma"));
        b.c.emplace_back(parse_double(row[cr], at + " re_c"), parse_double(row[ci], at + " im_c"));
        if (!row[cd].empty()) {
            b.dims.push_back(static_cast<int>(parse_double(row[cd], at + " d_loc")));
            ++with_dims;
        }
    }
    if (with_dims != 0 && with_dims != t.rows.size()) throw ConfigError(where + ": d_loc given for some modes only");
    try {
        validate(b);
    } catch (const DomainError& e) {
        throw ConfigError(where + ": " + e.what());
    }
    return b;
}

inline json bath_to_json(const SurrogateBath& b) {
    validate(b);
    json modes = json::array();
    for (std::size_t n = 0; n < b.n_modes(); ++n) {
        json m = {{"mode", n + 1}, {"Omega", b.omega[n]}, {"Gamma", b.gamma[n]}, {"re_c", b.c[n].real()}, {"im_c", b.c[n].imag()}};
        if (n + 1 < b.n_modes()) m["g_to_next"] = b.g[n];
        if (!b.dims.empty()) m["d_loc"] = b.dims[n];
        modes.push_back(std::move(m));
    }
    return {{"unit", unit_name(b.unit)}, {"modes", std::move(modes)}};
}

// ---------------------------------------------------------------------------
// config access with key paths in error messages

inline const json& member(const json& j, const std::string& key, const std::string& path) {
    if (!j.is_object()) throw ConfigError(path + ": expected an object");
    auto it = j.find(key);
    if (it == j.end()) throw ConfigError(path + "/" + key + ": required key missing");
    return *it;
}

inline bool has(const json& j, const std::string& key) { return j.is_object() && j.contains(key); }

inline double number(const json& j, const std::string& path) {
    if (!j.is_number()) throw ConfigError(path + ": expected a number");
    return j.get<double>();
}

inline double number(const json& j, const std::string& key, const std::string& path) {
    return number(member(j, key, path), path + "/" + key);
}

inline double number_or(const json& j, const std::string& key, const std::string& path, double fallback) {
    return has(j, key) ? number(j, key, path) : fallback;
}

inline long integer(const json& j, const std::string& path) {
    if (!j.is_number_integer()) throw ConfigError(path + ": expected an integer");
    return j.get<long>();
}

inline long integer_or(const json& j, const std::string& key, const std::string& path, long fallback) {
    return has(j, key) ? integer(j.at(key), path + "/" + key) : fallback;
}

inline std::string text(const json& j, const std::string& key, const std::string& path) {
    const json& v = member(j, key, path);
    if (!v.is_string()) throw ConfigError(path + "/" + key + ": expected a string");
    return v.get<std::string>();
}

inline std::string text_or(const json& j, const std::string& key, const std::string& path, const std::string& fallback) {
    return has(j, key) ? text(j, key, path) : fallback;
}

inline bool flag_or(const json& j, const std::string& key, const std::string& path, bool fallback) {
    if (!has(j, key)) return fallback;
    if (!j.at(key).is_boolean()) throw ConfigError(path + "/" + key + ": expected true or false");
    return j.at(key).get<bool>();
}

inline std::vector<int> int_list(const json& j, const std::string& path) {
    if (!j.is_array()) throw ConfigError(path + ": expected an array");
    std::vector<int> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(static_cast<int>(integer(j[i], path + "/" + std::to_string(i))));
    return out;
}

inline Unit unit_at(const json& j, const std::string& path) {
    const std::string u = text(j, "unit", path);
    try {
        return parse_unit(u);
    } catch (const ConfigError&) {
        throw ConfigError(path + "/unit: unknown unit '" + u + "' (omega_c, cm-1, 100cm-1)");
    }
}

inline SurrogateBath bath_from_json(const json& j, const std::string& path = "") {
    SurrogateBath b;
    b.unit = unit_at(j, path);
    const json& modes = member(j, "modes", path);
    if (!modes.is_array() || modes.empty()) throw ConfigError(path + "/modes: expected a nonempty array");
    for (std::size_t n = 0; n < modes.size(); ++n) {
        const std::string at = path + "/modes/" + std::to_string(n);
        const json& m = modes[n];
        if (has(m, "mode") && integer(m.at("mode"), at + "/mode") != static_cast<long>(n + 1))
            throw ConfigError(at + "/mode: modes must be numbered 1, 2, ...");
        b.omega.push_back(number(m, "Omega", at));
        if (n + 1 < modes.size()) b.g.push_back(number(m, "g_to_next", at));
        b.gamma.push_back(number(m, "Gamma", at));
        b.c.emplace_back(number(m, "re_c", at), number_or(m, "im_c", at, 0.0));
        if (has(m, "d_loc")) b.dims.push_back(static_cast<int>(integer(m.at("d_loc"), at + "/d_loc")));
    }
    if (!b.dims.empty() && b.dims.size() != b.n_modes()) throw ConfigError(path + "/modes: d_loc given for some modes only");
    try {
        validate(b);
    } catch (const DomainError& e) {
        throw ConfigError((path.empty() ? std::string("bath") : path) + ": " + e.what());
    }
    return b;
}

// Surrogate bath from {"preset": name}, {"file": path} or an inline table;
// "dims" overrides the truncation.
inline SurrogateBath surrogate_from_config(const json& j, const std::string& path, const std::filesystem::path& base = {}) {
    SurrogateBath b;
    if (has(j, "preset")) {
        const std::string name = text(j, "preset", path);
        bool found = false;
        for (const auto& p : presets::all())
            if (p.name == name) {
                b = p.bath;
                found = true;
            }
        if (!found) throw ConfigError(path + "/preset: unknown preset '" + name + "'");
    } else if (has(j, "file")) {
        std::filesystem::path f = text(j, "file", path);
        if (f.is_relative()) f = base / f;
        const std::string content = read_file(f);
        if (f.extension() == ".json") b = bath_from_json(json::parse(content, nullptr, true, true), path + "/file");
        else b = bath_from_csv(content, f.string());
    } else {
        b = bath_from_json(j, path);
    }
    if (has(j, "dims")) {
        b.dims = int_list(j.at("dims"), path + "/dims");
        try {
            validate(b);
        } catch (const DomainError& e) {
            throw ConfigError(path + "/dims: " + e.what());
        }
    }
    return b;
}

// Temperature keys: "beta", "temperature" (energy units) or "kelvin".
inline Beta beta_from_config(const json& j, Unit unit, const std::string& path) {
    const int given = has(j, "beta") + has(j, "temperature") + has(j, "kelvin");
    if (given > 1) throw ConfigError(path + ": give one of beta, temperature, kelvin");
    try {
        if (has(j, "beta")) {
            const json& b = j.at("beta");
            if (b.is_string() && b.get<std::string>() == "inf") return Beta::zero_temperature();
            return Beta::value(number(b, path + "/beta"));
        }
        if (has(j, "temperature")) return Beta::from_temperature(number(j, "temperature", path));
        if (has(j, "kelvin")) {
            const double cm = units::kelvin_to_cm(number(j, "kelvin", path));
            if (unit == Unit::omega_c) throw ConfigError(path + "/kelvin: needs a wavenumber unit");
            return Beta::from_temperature(unit == Unit::cm1 ? cm : cm / 100.0);
        }
    } catch (const DomainError& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return Beta::zero_temperature();
}

inline SpectralComponent component_from_config(const json& j, Unit unit, const std::string& path) {
    const std::string type = text(j, "type", path);
    SpectralComponent c;
    if (type == "ohmic") {
        c = Ohmic{number(j, "cutoff", path), number_or(j, "scale", path, 1.0)};
    } else if (type == "adolphs_renger") {
        AdolphsRenger ar;
        const double f = unit == Unit::cm1_x100 ? 0.01 : 1.0;
        if (unit == Unit::omega_c && !(has(j, "cutoff1") && has(j, "cutoff2")))
            throw ConfigError(path + ": adolphs_renger in omega_c units needs cutoff1 and cutoff2");
        ar.cutoff1 = number_or(j, "cutoff1", path, ar.cutoff1 * f);
        ar.cutoff2 = number_or(j, "cutoff2", path, ar.cutoff2 * f);
        ar.weight1 = number_or(j, "weight1", path, ar.weight1);
        ar.weight2 = number_or(j, "weight2", path, ar.weight2);
        c = ar;
    } else if (type == "lorentzian") {
        c = AntisymLorentzian{number(j, "center", path), number(j, "width", path), number(j, "huang_rhys", path)};
    } else if (type == "tabulated") {
        const json& pts = member(j, "points", path);
        if (!pts.is_array()) throw ConfigError(path + "/points: expected an array of [w, J] pairs");
        Tabulated t;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const std::string at = path + "/points/" + std::to_string(i);
            if (!pts[i].is_array() || pts[i].size() != 2) throw ConfigError(at + ": expected [w, J]");
            t.points.emplace_back(number(pts[i][0], at + "/0"), number(pts[i][1], at + "/1"));
        }
        c = std::move(t);
    } else {
        throw ConfigError(path + "/type: unknown spectral family '" + type + "' (ohmic, adolphs_renger, lorentzian, tabulated)");
    }
    try {
        validate(c);
    } catch (const DomainError& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return c;
}

inline BathSpec bath_spec_from_config(const json& j, const std::string& path) {
    const Unit unit = unit_at(j, path);
    const json& comps = member(j, "components", path);
    if (!comps.is_array() || comps.empty()) throw ConfigError(path + "/components: expected a nonempty array");
    std::vector<SpectralComponent> cs;
    for (std::size_t i = 0; i < comps.size(); ++i) cs.push_back(component_from_config(comps[i], unit, path + "/components/" + std::to_string(i)));
    return BathSpec(std::move(cs), beta_from_config(j, unit, path), unit);
}

// ---------------------------------------------------------------------------
// exponential fits

inline std::string fit_to_csv(const ExponentialFit& f) {
    std::string s = "# residual: " + format_double(f.residual) + "\n# dt: " + format_double(f.dt) +
                    "\n# n_samples: " + std::to_string(f.n_samples) + "\nre_lambda,im_lambda,re_w,im_w\n";
    for (std::size_t k = 0; k < f.n_terms(); ++k)
        s += format_double(f.rates[k].real()) + ',' + format_double(f.rates[k].imag()) + ',' + format_double(f.weights[k].real()) +
             ',' + format_double(f.weights[k].imag()) + '\n';
    return s;
}

inline ExponentialFit fit_from_csv(const std::string& text, const std::string& where = "fit table") {
    const CsvTable t = parse_csv(text, where);
    ExponentialFit f;
    if (const auto* r = t.find_meta("residual")) f.residual = parse_double(*r, where + " residual");
    if (const auto* r = t.find_meta("dt")) f.dt = parse_double(*r, where + " dt");
    if (const auto* r = t.find_meta("n_samples")) f.n_samples = static_cast<std::size_t>(parse_double(*r, where + " n_samples"));
    const std::size_t a = t.column("re_lambda", where), b = t.column("im_lambda", where), c = t.column("re_w", where),
                      d = t.column("im_w", where);
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const std::string at = where + " row " + std::to_string(r + 1);
        f.rates.emplace_back(parse_double(t.rows[r][a], at), parse_double(t.rows[r][b], at));
        f.weights.emplace_back(parse_double(t.rows[r][c], at), parse_double(t.rows[r][d], at));
    }
    if (f.rates.empty()) throw ConfigError(where + ": no terms");
    return f;
}

// ---------------------------------------------------------------------------
// result tables

inline std::string trajectory_csv(const Trajectory& tr) {
    std::string s = "t";
    for (const auto& n : tr.observable_names) s += ',' + n + "_re," + n + "_im";
    s += '\n';
    for (std::size_t k = 0; k < tr.t.size(); ++k) {
        s += format_double(tr.t[k]);
        for (const auto& o : tr.observables) s += ',' + format_double(o[k].real()) + ',' + format_double(o[k].imag());
        s += '\n';
    }
    return s;
}

inline std::string complex_series_csv(const std::vector<double>& t, const std::vector<cplx>& v, const std::string& name) {
    if (t.size() != v.size()) throw ContractError("time and value columns differ in length");
    std::string s = "t," + name + "_re," + name + "_im\n";
    for (std::size_t k = 0; k < t.size(); ++k)
        s += format_double(t[k]) + ',' + format_double(v[k].real()) + ',' + format_double(v[k].imag()) + '\n';
    return s;
}

inline std::string columns_csv(const std::vector<std::string>& header, const std::vector<std::vector<double>>& cols) {
    if (header.size() != cols.size()) throw ContractError("one header per column");
    std::string s;
    for (std::size_t j = 0; j < header.size(); ++j) s += (j ? "," : "") + header[j];
    s += '\n';
    const std::size_t n = cols.empty() ? 0 : cols.front().size();
    for (const auto& c : cols)
        if (c.size() != n) throw ContractError("columns differ in length");
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t j = 0; j < cols.size(); ++j) s += (j ? "," : "") + format_double(cols[j][k]);
        s += '\n';
    }
    return s;
}

inline std::string spectrum_csv(const std::vector<double>& omega, const std::vector<double>& s_abs) {
    if (omega.size() != s_abs.size()) throw ContractError("frequency and spectrum columns differ in length");
    std::string s = "omega,S_abs\n";
    for (std::size_t k = 0; k < omega.size(); ++k) s += format_double(omega[k]) + ',' + format_double(s_abs[k]) + '\n';
    return s;
}

// ---------------------------------------------------------------------------
// manifests

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t x) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
    return buf;
}

// Hash of the canonical (sorted-key, compact) form, so whitespace and key
// order in the config file do not matter.
inline std::string config_hash(const json& config) { return "fnv1a64:" + hex64(fnv1a(config.dump())); }

inline json manifest(const std::string& command, const json& config, std::uint64_t seed) {
    return {{"command", command},
            {"config_hash", config_hash(config)},
            {"config", config},
            {"seed", seed},
            {"versions",
             {{"tso", version},
              {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                            std::to_string(EIGEN_MINOR_VERSION)},
              {"compiler", __VERSION__}}}};
}

inline json model_layout(const LindbladModel& m) {
    json f = json::array();
    for (std::size_t i = 0; i < m.dims.size(); ++i)
        f.push_back({{"label", i < m.factor_labels.size() ? m.factor_labels[i] : std::string()}, {"dim", m.dims[i]}});
    json jumps = json::array();
    for (const auto& j : m.jumps) jumps.push_back({{"label", j.label}, {"rate", j.rate}});
    return {{"unit", unit_name(m.unit)}, {"dim", m.dim()}, {"factors", std::move(f)}, {"jumps", std::move(jumps)}};
}

inline json ode_tolerances(const ode::Options& o) { return {{"rtol", o.rtol}, {"atol", o.atol}}; }

} // namespace tso::io
