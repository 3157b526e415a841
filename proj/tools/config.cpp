#include "config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace hypersde::cli {

namespace {

void only_keys(const Json& j, std::string_view where, std::initializer_list<const char*> keys) {
    if (!j.is_object()) throw ConfigError(std::string(where) + ": expected an object");
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& item : j.items())
        if (!allowed.count(item.key()))
            throw ConfigError(std::string(where) + ": unknown key '" + item.key() + "'");
}

double number(const Json& j, std::string_view where) {
    if (!j.is_number()) throw ConfigError(std::string(where) + ": expected a number");
    return j.get<double>();
}

Vec vector_of(const Json& j, std::string_view where) {
    if (j.is_number()) return Vec::Constant(1, j.get<double>());
    if (!j.is_array() || j.empty()) throw ConfigError(std::string(where) + ": expected a number or array");
    Vec v(static_cast<long>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<long>(i)) = number(j[i], where);
    return v;
}

Mat matrix_of(const Json& j, std::string_view where) {
    if (j.is_number()) return Mat::Constant(1, 1, j.get<double>());
    if (!j.is_array() || j.empty() || !j[0].is_array())
        throw ConfigError(std::string(where) + ": expected a number or array of rows");
    const auto rows = static_cast<long>(j.size());
    const auto cols = static_cast<long>(j[0].size());
    Mat m(rows, cols);
    for (long r = 0; r < rows; ++r) {
        const auto& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<long>(row.size()) != cols)
            throw ConfigError(std::string(where) + ": ragged matrix");
        for (long c = 0; c < cols; ++c) m(r, c) = number(row[static_cast<std::size_t>(c)], where);
    }
    return m;
}

Json vec_json(const Vec& v) {
    Json a = Json::array();
    for (long i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

Json mat_json(const Mat& m) {
    Json a = Json::array();
    for (long r = 0; r < m.rows(); ++r) a.push_back(vec_json(m.row(r).transpose()));
    return a;
}

Profile profile_of(const Json& j, std::string_view where) {
    if (j.is_number()) return Profile::constant(j.get<double>());
    only_keys(j, where, {"constant", "table"});
    if (j.size() != 1) throw ConfigError(std::string(where) + ": give exactly one of constant, table");
    if (j.contains("constant")) return Profile::constant(vector_of(j["constant"], where));
    const auto& t = j["table"];
    if (!t.is_array() || t.empty()) throw ConfigError(std::string(where) + ": table must be a non-empty array");
    std::vector<double> xs;
    std::vector<Vec> vals;
    for (const auto& row : t) {
        if (!row.is_array() || row.size() < 2)
            throw ConfigError(std::string(where) + ": table rows are [x, value...]");
        xs.push_back(number(row[0], where));
        Vec v(static_cast<long>(row.size() - 1));
        for (std::size_t i = 1; i < row.size(); ++i) v(static_cast<long>(i - 1)) = number(row[i], where);
        vals.push_back(v);
    }
    try {
        return Profile::table(std::move(xs), std::move(vals));
    } catch (const InvalidArgument& e) {
        throw ConfigError(std::string(where) + ": " + e.what());
    }
}

Json profile_json(const Profile& p) {
    Json j = Json::object();
    if (p.is_constant()) {
        j["constant"] = vec_json(p.constant_value());
        return j;
    }
    Json t = Json::array();
    for (std::size_t i = 0; i < p.abscissae().size(); ++i) {
        Json row = Json::array({p.abscissae()[i]});
        for (long c = 0; c < p.values()[i].size(); ++c) row.push_back(p.values()[i](c));
        t.push_back(row);
    }
    j["table"] = t;
    return j;
}

SystemParams params_of(const Json& j) {
    only_keys(j, "params", {"lambda", "mu", "eta_plus", "eta_minus", "q", "rho", "A", "B", "M",
                            "sigma", "X0", "u0", "v0", "T"});
    SystemParams p = preset("fig1").params;
    if (j.contains("lambda")) p.lambda = number(j["lambda"], "params.lambda");
    if (j.contains("mu")) p.mu = number(j["mu"], "params.mu");
    if (j.contains("eta_plus")) p.eta_plus = profile_of(j["eta_plus"], "params.eta_plus");
    if (j.contains("eta_minus")) p.eta_minus = profile_of(j["eta_minus"], "params.eta_minus");
    if (j.contains("q")) p.q = number(j["q"], "params.q");
    if (j.contains("rho")) p.rho = number(j["rho"], "params.rho");
    if (j.contains("A")) p.A = matrix_of(j["A"], "params.A");
    if (j.contains("B")) p.B = vector_of(j["B"], "params.B");
    if (j.contains("M")) p.M = vector_of(j["M"], "params.M").transpose();
    if (j.contains("sigma")) p.sigma = profile_of(j["sigma"], "params.sigma");
    if (j.contains("X0")) p.X0 = vector_of(j["X0"], "params.X0");
    if (j.contains("u0")) p.u0 = profile_of(j["u0"], "params.u0");
    if (j.contains("v0")) p.v0 = profile_of(j["v0"], "params.v0");
    if (j.contains("T")) p.T = number(j["T"], "params.T");
    try {
        p.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("params: ") + e.what());
    }
    return p;
}

std::complex<double> pole_of(const Json& j) {
    if (j.is_number()) return {j.get<double>(), 0.0};
    if (j.is_array() && j.size() == 2)
        return {number(j[0], "controller.poles"), number(j[1], "controller.poles")};
    throw ConfigError("controller.poles: entries are numbers or [re, im] pairs");
}

}  // namespace

std::string_view to_string(ControllerKind kind) {
    switch (kind) {
        case ControllerKind::open_loop: return "open_loop";
        case ControllerKind::stabilizing: return "stabilizing";
        case ControllerKind::lq: return "lq";
    }
    return "?";
}

ControllerKind controller_kind(std::string_view name) {
    if (name == "open_loop") return ControllerKind::open_loop;
    if (name == "stabilizing") return ControllerKind::stabilizing;
    if (name == "lq") return ControllerKind::lq;
    throw ConfigError("unknown controller kind '" + std::string(name) + "'");
}

ScenarioConfig config_from_json(const Json& j) {
    only_keys(j, "config", {"preset", "params", "grid", "controller", "montecarlo", "outputs"});
    ScenarioConfig c = preset("fig1");
    if (j.contains("preset")) {
        if (!j["preset"].is_string()) throw ConfigError("preset: expected a string");
        c = preset(j["preset"].get<std::string>());
    }
    if (j.contains("params")) {
        // params start from the chosen preset, so partial overrides work
        Json merged = config_to_json(c)["params"];
        for (const auto& item : j["params"].items()) merged[item.key()] = item.value();
        only_keys(j["params"], "params", {"lambda", "mu", "eta_plus", "eta_minus", "q", "rho", "A", "B",
                                          "M", "sigma", "X0", "u0", "v0", "T"});
        c.params = params_of(merged);
    }
    if (j.contains("grid")) {
        only_keys(j["grid"], "grid", {"nx"});
        if (j["grid"].contains("nx")) {
            if (!j["grid"]["nx"].is_number_integer()) throw ConfigError("grid.nx: expected an integer");
            c.nx = j["grid"]["nx"].get<int>();
        }
    }
    if (c.nx < 8) throw ConfigError("grid.nx: need at least 8 cells");
    if (j.contains("controller")) {
        const auto& k = j["controller"];
        only_keys(k, "controller", {"kind", "poles", "q_weight", "r_weight"});
        if (k.contains("kind")) {
            if (!k["kind"].is_string()) throw ConfigError("controller.kind: expected a string");
            c.controller.kind = controller_kind(k["kind"].get<std::string>());
        }
        if (k.contains("poles")) {
            if (!k["poles"].is_array()) throw ConfigError("controller.poles: expected an array");
            c.controller.poles.clear();
            for (const auto& p : k["poles"]) c.controller.poles.push_back(pole_of(p));
        }
        if (k.contains("q_weight")) c.controller.q_weight = number(k["q_weight"], "controller.q_weight");
        if (k.contains("r_weight")) c.controller.r_weight = number(k["r_weight"], "controller.r_weight");
    }
    if (c.controller.q_weight < 0.0) throw ConfigError("controller.q_weight: must be >= 0");
    if (!(c.controller.r_weight > 0.0)) throw ConfigError("controller.r_weight: must be > 0");
    if (j.contains("montecarlo")) {
        const auto& m = j["montecarlo"];
        only_keys(m, "montecarlo", {"n_paths", "base_seed", "threads"});
        if (m.contains("n_paths")) {
            if (!m["n_paths"].is_number_integer()) throw ConfigError("montecarlo.n_paths: expected an integer");
            c.montecarlo.n_paths = m["n_paths"].get<int>();
        }
        if (m.contains("base_seed")) {
            if (!m["base_seed"].is_number_unsigned()) throw ConfigError("montecarlo.base_seed: expected an unsigned integer");
            c.montecarlo.base_seed = m["base_seed"].get<std::uint64_t>();
        }
        if (m.contains("threads")) {
            if (!m["threads"].is_number_integer()) throw ConfigError("montecarlo.threads: expected an integer");
            c.montecarlo.threads = m["threads"].get<int>();
        }
    }
    if (c.montecarlo.n_paths < 2) throw ConfigError("montecarlo.n_paths: need at least 2");
    if (c.montecarlo.threads < 1) throw ConfigError("montecarlo.threads: need at least 1");
    if (j.contains("outputs")) {
        const auto& o = j["outputs"];
        only_keys(o, "outputs", {"directory", "fields"});
        if (o.contains("directory")) {
            if (!o["directory"].is_string()) throw ConfigError("outputs.directory: expected a string");
            c.outputs.directory = o["directory"].get<std::string>();
        }
        if (o.contains("fields")) {
            if (!o["fields"].is_boolean()) throw ConfigError("outputs.fields: expected a boolean");
            c.outputs.fields = o["fields"].get<bool>();
        }
    }
    return c;
}

Json config_to_json(const ScenarioConfig& c) {
    const auto& p = c.params;
    Json params = {
        {"lambda", p.lambda},
        {"mu", p.mu},
        {"eta_plus", profile_json(p.eta_plus)},
        {"eta_minus", profile_json(p.eta_minus)},
        {"q", p.q},
        {"rho", p.rho},
        {"A", mat_json(p.A)},
        {"B", vec_json(p.B)},
        {"M", vec_json(p.M.transpose())},
        {"sigma", profile_json(p.sigma)},
        {"X0", vec_json(p.X0)},
        {"u0", profile_json(p.u0)},
        {"v0", profile_json(p.v0)},
        {"T", p.T},
    };
    Json poles = Json::array();
    for (const auto& z : c.controller.poles) {
        if (z.imag() == 0.0)
            poles.push_back(z.real());
        else
            poles.push_back(Json::array({z.real(), z.imag()}));
    }
    Json j;
    j["params"] = params;
    j["grid"] = {{"nx", c.nx}};
    j["controller"] = {{"kind", to_string(c.controller.kind)},
                       {"poles", poles},
                       {"q_weight", c.controller.q_weight},
                       {"r_weight", c.controller.r_weight}};
    j["montecarlo"] = {{"n_paths", c.montecarlo.n_paths},
                       {"base_seed", c.montecarlo.base_seed},
                       {"threads", c.montecarlo.threads}};
    j["outputs"] = {{"directory", c.outputs.directory}, {"fields", c.outputs.fields}};
    return j;
}

ScenarioConfig load_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open config " + file.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + file.string() + ": " + e.what());
    }
    return config_from_json(j);
}

std::string emit_config(const ScenarioConfig& config) {
    // nlohmann prints the shortest representation that reads back exactly
    return config_to_json(config).dump(2) + "\n";
}

ScenarioConfig preset(std::string_view name) {
    ScenarioConfig c;
    if (name == "fig1") {
        c.params = fig1_params();
    } else if (name == "decoupled") {
        c.params = decoupled_params();
    } else {
        throw ConfigError("unknown preset '" + std::string(name) + "'");
    }
    return c;
}

std::filesystem::path output_directory(const ScenarioConfig& config) {
    if (!config.outputs.directory.empty()) return config.outputs.directory;
    if (const char* env = std::getenv("HYPERSDE_OUT"); env && *env) return env;
    return "out";
}

}  // namespace hypersde::cli
