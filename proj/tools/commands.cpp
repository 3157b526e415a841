#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "config.hpp"
#include "hypersde/analysis.hpp"
#include "hypersde/linalg.hpp"

namespace hypersde::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
    std::string preset = "fig1";
    std::string config;
    int nx = 0;
    std::string out;
    std::optional<std::uint64_t> seed;
    int paths = 0;
    int threads = 0;
    bool quick = false;
    std::vector<std::string> poles;
    double horizon = 0.0;
    std::optional<double> qweight;
    std::optional<double> rweight;
    std::string controller;
    std::string plant = "coupled";
    bool fields = false;
};

class Csv {
public:
    Csv(const fs::path& file, const std::vector<std::string>& header) : out_(file) {
        if (!out_) throw ConfigError("cannot write " + file.string());
        for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
        out_ << '\n';
    }
    void row(const std::vector<double>& values) {
        char buf[32];
        for (std::size_t i = 0; i < values.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", values[i]);
            out_ << (i ? "," : "") << buf;
        }
        out_ << '\n';
    }
    ~Csv() noexcept(false) {
        out_.flush();
        if (!out_) throw ConfigError("write failed");
    }

private:
    std::ofstream out_;
};

std::vector<std::string> indexed(const std::string& stem, int n) {
    std::vector<std::string> out;
    for (int i = 1; i <= n; ++i) out.push_back(stem + "_" + std::to_string(i));
    return out;
}

void write_json(const fs::path& file, const Json& j) {
    std::ofstream out(file);
    if (!out) throw ConfigError("cannot write " + file.string());
    out << j.dump(2) << '\n';
}

std::vector<std::complex<double>> parse_poles(const std::string& text) {
    std::vector<std::complex<double>> poles;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const double v = std::stod(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            poles.emplace_back(v, 0.0);
        } catch (const std::exception&) {
            throw ConfigError("bad pole list '" + text + "'");
        }
    }
    if (poles.empty()) throw ConfigError("empty pole list");
    return poles;
}

std::string pole_label(const std::vector<std::complex<double>>& poles) {
    std::string s = "pole";
    char buf[32];
    for (const auto& p : poles) {
        std::snprintf(buf, sizeof buf, "_%g", p.real());
        s += buf;
    }
    return s;
}

ScenarioConfig resolve(const Options& o) {
    ScenarioConfig c = o.config.empty() ? preset(o.preset) : load_config(o.config);
    if (o.nx > 0) c.nx = o.nx;
    else if (o.quick) c.nx = 50;
    if (o.nx != 0 && o.nx < 8) throw ConfigError("--nx: need at least 8 cells");
    if (o.seed) c.montecarlo.base_seed = *o.seed;
    if (o.paths > 0) c.montecarlo.n_paths = o.paths;
    else if (o.quick) c.montecarlo.n_paths = 400;
    if (o.threads > 0) c.montecarlo.threads = o.threads;
    if (o.horizon > 0.0) c.params.T = o.horizon;
    if (o.qweight) c.controller.q_weight = *o.qweight;
    if (o.rweight) c.controller.r_weight = *o.rweight;
    if (!o.controller.empty()) c.controller.kind = controller_kind(o.controller);
    if (!o.out.empty()) c.outputs.directory = o.out;
    if (o.fields) c.outputs.fields = true;
    if (o.poles.size() == 1) c.controller.poles = parse_poles(o.poles.front());
    try {
        c.params.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(std::string("params: ") + e.what());
    }
    if (c.montecarlo.n_paths < 2) throw ConfigError("--paths: need at least 2");
    if (!(c.controller.r_weight > 0.0)) throw ConfigError("--rweight: must be > 0");
    return c;
}

fs::path prepare_output(const ScenarioConfig& c) {
    const fs::path dir = output_directory(c);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
    return dir;
}

/// Everything a run needs once the kernels are solved.
struct Setup {
    ScenarioConfig config;
    std::shared_ptr<const KernelSet> ks;
    SpaceTimeGrid grid;
    DelayedSdeModel model;

    explicit Setup(ScenarioConfig c) : config(std::move(c)) {
        ks = std::make_shared<const KernelSet>(solve_kernels(config.params, config.nx));
        grid = make_grid(config.params, config.nx);
        model = make_delayed_model(config.params, *ks, grid);
    }

    const SystemParams& params() const { return config.params; }
    LqWeights weights() const {
        const int n = params().n();
        return LqWeights::constant(config.controller.q_weight * Mat::Identity(n, n),
                                   config.controller.r_weight);
    }
};

struct Variant {
    std::string label;
    Controller controller = Controller::open_loop();
    Json info = Json::object();
};

Variant stabilizing_variant(const Setup& s, std::vector<std::complex<double>> poles) {
    if (poles.empty()) poles = default_poles(s.params().n());
    const RowVec K = stabilizing_gain(s.model.A, s.model.B, s.model.h, poles);
    Variant v;
    v.label = pole_label(poles);
    v.controller = feedback_controller(K, s.model);
    Json kj = Json::array();
    for (long i = 0; i < K.size(); ++i) kj.push_back(K(i));
    Json pj = Json::array();
    for (const auto& p : poles) pj.push_back(Json::array({p.real(), p.imag()}));
    v.info = {{"kind", "stabilizing"}, {"poles", pj}, {"gain", kj}};
    return v;
}

Variant lq_variant(const Setup& s) {
    auto lq = std::make_shared<const LqSolution>(
        solve_lq(s.params(), *s.ks, s.model, s.weights(), s.grid));
    Variant v;
    v.label = "lq";
    v.controller = lq_controller(lq, s.params().sigma);
    Json p0 = Json::array();
    for (long i = 0; i < lq->P.front().size(); ++i) p0.push_back(lq->P.front()(i));
    v.info = {{"kind", "lq"},
              {"q_weight", s.config.controller.q_weight},
              {"r_weight", s.config.controller.r_weight},
              {"P0", p0}};
    return v;
}

Variant single_variant(const Setup& s) {
    switch (s.config.controller.kind) {
        case ControllerKind::open_loop: {
            Variant v;
            v.label = "open_loop";
            v.info = {{"kind", "open_loop"}};
            return v;
        }
        case ControllerKind::stabilizing: return stabilizing_variant(s, s.config.controller.poles);
        case ControllerKind::lq: return lq_variant(s);
    }
    throw ConfigError("unknown controller kind");
}

PlantModel plant_of(const std::string& name) {
    if (name == "coupled") return PlantModel::coupled;
    if (name == "delayed") return PlantModel::delayed;
    throw ConfigError("--plant: expected coupled or delayed");
}

void summary_line(std::ostream& out, Json j) { out << j.dump() << '\n'; }

// kernels ---------------------------------------------------------------

int cmd_kernels(const Options& o, std::ostream& out) {
    const ScenarioConfig c = resolve(o);
    const fs::path dir = prepare_output(c);
    const KernelSet ks = solve_kernels(c.params, c.nx);
    const int n = c.params.n();
    {
        Csv csv(dir / "kernels.csv", {"x", "y", "K_uu", "K_uv", "K_vu", "K_vv"});
        const double dx = ks.dx();
        for (int i = 0; i <= ks.nx(); ++i)
            for (int j = 0; j <= i; ++j)
                csv.row({i * dx, j * dx, ks.field(KernelName::uu).at(i, j),
                         ks.field(KernelName::uv).at(i, j), ks.field(KernelName::vu).at(i, j),
                         ks.field(KernelName::vv).at(i, j)});
    }
    {
        auto header = indexed("gamma_alpha", n);
        for (auto& h : indexed("gamma_beta", n)) header.push_back(h);
        header.insert(header.begin(), "x");
        Csv csv(dir / "gammas.csv", header);
        for (int i = 0; i <= ks.nx(); ++i) {
            std::vector<double> row{i * ks.dx()};
            for (int r = 0; r < n; ++r) row.push_back(ks.gamma_alpha_nodes()[static_cast<std::size_t>(i)](r));
            for (int r = 0; r < n; ++r) row.push_back(ks.gamma_beta_nodes()[static_cast<std::size_t>(i)](r));
            csv.row(row);
        }
    }
    const auto res = kernel_residuals(ks, c.params);
    const auto stat = [](const ResidualStat& s) { return Json{{"max", s.max}, {"mean", s.mean}}; };
    Json j = {{"command", "kernels"},
              {"nx", c.nx},
              {"iterations", ks.iterations},
              {"last_change", ks.last_change},
              {"gamma_alpha_0", ks.gamma_alpha_nodes().front()(0)},
              {"gamma_beta_0", ks.gamma_beta_nodes().front()(0)},
              {"residuals",
               {{"transport_uu", stat(res.transport_uu)},
                {"transport_uv", stat(res.transport_uv)},
                {"transport_vu", stat(res.transport_vu)},
                {"transport_vv", stat(res.transport_vv)},
                {"gamma_alpha_ode", stat(res.gamma_alpha_ode)},
                {"gamma_beta_ode", stat(res.gamma_beta_ode)},
                {"boundary_alpha", stat(res.boundary_alpha)},
                {"boundary_beta", stat(res.boundary_beta)},
                {"diagonal_uv", stat(res.diagonal_uv)},
                {"diagonal_vu", stat(res.diagonal_vu)}}},
              {"max_differential", res.max_differential()},
              {"max_algebraic", res.max_algebraic()}};
    write_json(dir / "kernels.json", j);
    summary_line(out, {{"command", "kernels"},
                       {"nx", c.nx},
                       {"iterations", ks.iterations},
                       {"max_differential", res.max_differential()},
                       {"max_algebraic", res.max_algebraic()}});
    return exit_pass;
}

// simulate --------------------------------------------------------------

int cmd_simulate(const Options& o, std::ostream& out) {
    Setup s(resolve(o));
    const fs::path dir = prepare_output(s.config);
    const Variant v = single_variant(s);
    const BrownianPath path = sample_brownian(s.config.montecarlo.base_seed, s.grid.nt, s.grid.dt);
    const int n = s.params().n();
    const PlantModel plant = plant_of(o.plant);
    const bool fields = s.config.outputs.fields && plant == PlantModel::coupled;
    Trajectory tr = plant == PlantModel::coupled
                        ? simulate_coupled(s.params(), *s.ks, v.controller, path, s.grid,
                                           SimOptions{fields, 1e12})
                        : simulate_delayed_sde(s.model, v.controller, path, s.grid);
    {
        auto header = indexed("X", n);
        header.insert(header.begin(), "t");
        for (const char* h : {"v_in", "v_bs", "v_eff", "beta0"}) header.push_back(h);
        Csv csv(dir / "trajectory.csv", header);
        for (int k = 0; k <= tr.steps(); ++k) {
            const auto i = static_cast<std::size_t>(k);
            std::vector<double> row{tr.times[i]};
            for (int r = 0; r < n; ++r) row.push_back(tr.X[i](r));
            row.insert(row.end(), {tr.v_in[i], tr.v_bs[i], tr.v_eff[i], tr.beta0[i]});
            csv.row(row);
        }
    }
    if (fields) {
        tr = apply_transform(tr, *s.ks);
        Csv csv(dir / "fields.csv", {"t", "x", "u", "v", "alpha", "beta"});
        for (int k = 0; k <= tr.steps(); ++k) {
            const auto i = static_cast<std::size_t>(k);
            for (int x = 0; x <= s.grid.nx; ++x)
                csv.row({tr.times[i], s.grid.x(x), (*tr.u_field)[i](x), (*tr.v_field)[i](x),
                         (*tr.alpha_field)[i](x), (*tr.beta_field)[i](x)});
        }
    }
    summary_line(out, {{"command", "simulate"},
                       {"controller", v.info},
                       {"plant", o.plant},
                       {"seed", s.config.montecarlo.base_seed},
                       {"X_T", tr.X.back()(0)}});
    return exit_pass;
}

// ensembles -------------------------------------------------------------

MonteCarloResult ensemble(const Setup& s, const Variant& v, PlantModel plant) {
    RunSpec setup{s.params(), s.ks, s.grid, v.controller, plant, s.weights(), {}};
    return monte_carlo(setup, s.config.montecarlo.n_paths, s.config.montecarlo.base_seed,
                       s.config.montecarlo.threads);
}

Json ensemble_summary(const Setup& s, const Variant& v, const MonteCarloResult& r) {
    std::vector<double> J;
    for (const auto& c : r.costs) J.push_back(c.total());
    const auto cost = estimate_mean(J);
    Json j = {{"label", v.label},
              {"controller", v.info},
              {"n_paths", r.report.n_paths},
              {"cost_mean", cost.mean},
              {"cost_std_error", cost.std_error},
              {"bound_violations", bound_violations(r.report)}};
    try {
        const auto fit = log_mean_fit(r.report, s.grid.delay(), s.grid.horizon());
        j["decay_rate"] = fit.slope;
        j["decay_rate_std_error"] = fit.slope_std_error;
    } catch (const InvalidArgument&) {
        j["decay_rate"] = nullptr;
    }
    j["var_X_final"] = r.report.var_X.back();
    j["v_min_final"] = r.report.v_min.back();
    return j;
}

void write_ensemble_csv(const fs::path& file, const MonteCarloResult& r, int n) {
    auto header = indexed("mean_X", n);
    header.insert(header.begin(), "t");
    for (const char* h : {"var_X", "v_min", "cost_running"}) header.push_back(h);
    Csv csv(file, header);
    const auto& rep = r.report;
    for (std::size_t k = 0; k < rep.times.size(); ++k) {
        std::vector<double> row{rep.times[k]};
        for (int i = 0; i < n; ++i) row.push_back(rep.mean_X[k](i));
        row.insert(row.end(), {rep.var_X[k], rep.v_min[k], r.cost_running[k]});
        csv.row(row);
    }
}

void write_variance_csv(const fs::path& file, const VarianceReport& rep, int n) {
    auto header = indexed("mean_X", n);
    header.insert(header.begin(), "t");
    for (const char* h : {"var_X", "stderr_var", "v_min"}) header.push_back(h);
    Csv csv(file, header);
    for (std::size_t k = 0; k < rep.times.size(); ++k) {
        std::vector<double> row{rep.times[k]};
        for (int i = 0; i < n; ++i) row.push_back(rep.mean_X[k](i));
        row.insert(row.end(), {rep.var_X[k], rep.stderr_var[k], rep.v_min[k]});
        csv.row(row);
    }
}

int cmd_stabilize(const Options& o, std::ostream& out) {
    ScenarioConfig c = resolve(o);
    c.controller.kind = ControllerKind::stabilizing;
    Setup s(std::move(c));
    const fs::path dir = prepare_output(s.config);
    const Variant v = stabilizing_variant(s, s.config.controller.poles);
    const auto r = ensemble(s, v, plant_of(o.plant));
    write_ensemble_csv(dir / "stabilize.csv", r, s.params().n());
    Json j = ensemble_summary(s, v, r);
    j["command"] = "stabilize";
    write_json(dir / "stabilize.json", j);
    summary_line(out, j);
    return exit_pass;
}

int cmd_lq(const Options& o, std::ostream& out) {
    ScenarioConfig c = resolve(o);
    c.controller.kind = ControllerKind::lq;
    Setup s(std::move(c));
    const fs::path dir = prepare_output(s.config);
    const auto lq = solve_lq(s.params(), *s.ks, s.model, s.weights(), s.grid);
    {
        const int n = s.params().n();
        std::vector<std::string> header{"t"};
        for (int r = 1; r <= n; ++r)
            for (int q = 1; q <= n; ++q) header.push_back("P_" + std::to_string(r) + "_" + std::to_string(q));
        Csv csv(dir / "riccati.csv", header);
        for (int k = 0; k <= lq.K; ++k) {
            std::vector<double> row{k * lq.dt};
            const Mat& P = lq.P[static_cast<std::size_t>(k)];
            for (int r = 0; r < n; ++r)
                for (int q = 0; q < n; ++q) row.push_back(P(r, q));
            csv.row(row);
        }
    }
    const Variant v = lq_variant(s);
    const auto r = ensemble(s, v, plant_of(o.plant));
    write_ensemble_csv(dir / "lq.csv", r, s.params().n());
    Json j = ensemble_summary(s, v, r);
    j["command"] = "lq";
    write_json(dir / "lq.json", j);
    summary_line(out, j);
    return exit_pass;
}

int cmd_montecarlo(const Options& o, std::ostream& out) {
    Setup s(resolve(o));
    const fs::path dir = prepare_output(s.config);
    std::vector<Variant> variants;
    const bool fig1 = s.params() == fig1_params();
    if (o.poles.size() > 1) {
        for (const auto& p : o.poles) variants.push_back(stabilizing_variant(s, parse_poles(p)));
    } else if (s.config.controller.kind == ControllerKind::stabilizing &&
               s.config.controller.poles.empty() && fig1) {
        // the reference scenario compares a low and a high gain
        variants.push_back(stabilizing_variant(s, {{-0.5, 0.0}}));
        variants.push_back(stabilizing_variant(s, {{-2.0, 0.0}}));
    } else {
        variants.push_back(single_variant(s));
    }
    Json runs = Json::array();
    for (const auto& v : variants) {
        const auto r = ensemble(s, v, plant_of(o.plant));
        write_variance_csv(dir / ("variance_" + v.label + ".csv"), r.report, s.params().n());
        runs.push_back(ensemble_summary(s, v, r));
    }
    Json j = {{"command", "montecarlo"},
              {"n_paths", s.config.montecarlo.n_paths},
              {"base_seed", s.config.montecarlo.base_seed},
              {"plant", o.plant},
              {"variants", runs}};
    write_json(dir / "montecarlo.json", j);
    summary_line(out, j);
    return exit_pass;
}

// check -----------------------------------------------------------------

class CheckLog {
public:
    explicit CheckLog(std::ostream& out) : out_(out) {}
    /// value must not exceed limit.
    void at_most(const std::string& name, double value, double limit) {
        record(name, value, limit, std::isfinite(value) && value <= limit);
    }
    int exit_code() const { return failures_ ? exit_check_failed : exit_pass; }
    int failures() const { return failures_; }

private:
    void record(const std::string& name, double value, double limit, bool pass) {
        if (!pass) ++failures_;
        Json j = {{"check", name}, {"pass", pass}, {"value", value}, {"limit", limit}};
        out_ << j.dump() << '\n';
    }
    std::ostream& out_;
    int failures_ = 0;
};

double max_abs_z(const std::vector<std::vector<Vec>>& samples_by_path, std::size_t slot) {
    const long n = samples_by_path.front()[slot].size();
    double worst = 0.0;
    for (long c = 0; c < n; ++c) {
        std::vector<double> x;
        double scale = 0.0;
        for (const auto& s : samples_by_path) {
            x.push_back(s[slot](c));
            scale = std::max(scale, std::abs(x.back()));
        }
        // identically zero up to rounding: nothing to test
        if (scale < 1e-12) continue;
        const auto m = estimate_mean(x);
        worst = std::max(worst, m.z_score());
    }
    return worst;
}

double max_norm(const std::vector<Vec>& v) {
    double m = 0.0;
    for (const auto& x : v) m = std::max(m, x.lpNorm<Eigen::Infinity>());
    return m;
}

int cmd_check(const Options& o, std::ostream& out) {
    ScenarioConfig c = resolve(o);
    if (o.paths <= 0 && !o.quick) c.montecarlo.n_paths = 2000;
    Setup s(std::move(c));
    const auto& p = s.params();
    const auto& grid = s.grid;
    const int L = grid.delay_steps, nt = grid.nt, N = s.config.montecarlo.n_paths;
    const std::uint64_t seed = s.config.montecarlo.base_seed;
    CheckLog log(out);

    const auto res = kernel_residuals(*s.ks, p);
    // first-order residuals: 1e-2 at nx = 200
    log.at_most("kernel_differential_residual", res.max_differential(), 2.0 / s.config.nx);
    log.at_most("kernel_algebraic_residual", res.max_algebraic(), 1e-8);
    log.at_most("gamma_alpha_0_plus_M",
                (s.ks->gamma_alpha_nodes().front() + p.M).lpNorm<Eigen::Infinity>(), 1e-14);
    log.at_most("gamma_beta_0", s.ks->gamma_beta_nodes().front().lpNorm<Eigen::Infinity>(), 1e-14);

    const Variant v = stabilizing_variant(s, s.config.controller.poles);

    // transform identities along one closed-loop path
    {
        const BrownianPath path = sample_brownian(seed, nt, grid.dt);
        Trajectory tr = simulate_coupled(p, *s.ks, v.controller, path, grid, SimOptions{true, 1e12});
        tr = apply_transform(tr, *s.ks);
        const auto [u, w] = invert_transform(*tr.alpha_field, *tr.beta_field, tr.X, *s.ks);
        double round = 0.0, top = 0.0, bottom = 0.0;
        for (int k = 0; k <= nt; ++k) {
            const auto i = static_cast<std::size_t>(k);
            round = std::max({round, (u[i] - (*tr.u_field)[i]).lpNorm<Eigen::Infinity>(),
                              (w[i] - (*tr.v_field)[i]).lpNorm<Eigen::Infinity>()});
            top = std::max(top, std::abs((*tr.beta_field)[i](grid.nx) - tr.v_eff[i]));
            bottom = std::max(bottom, std::abs((*tr.alpha_field)[i](0) - p.q * (*tr.beta_field)[i](0)));
        }
        log.at_most("transform_round_trip", round, 1e-8);
        log.at_most("target_boundary_distal", top, 1e-8);
        log.at_most("target_boundary_proximal", bottom, 1e-10);
    }

    // coupled plant against the delayed SDE on shared paths
    {
        double num = 0.0, den = 0.0;
        for (int i = 0; i < 8; ++i) {
            const BrownianPath path = sample_brownian(path_seed(seed, static_cast<std::uint64_t>(i)), nt, grid.dt);
            const auto a = simulate_coupled(p, *s.ks, v.controller, path, grid);
            const auto b = simulate_delayed_sde(s.model, v.controller, path, grid);
            for (int k = L; k <= nt; ++k) {
                const auto j = static_cast<std::size_t>(k);
                num += (a.X[j] - b.X[j]).squaredNorm();
                den += a.X[j].squaredNorm();
            }
        }
        log.at_most("reduction_relative_rms", std::sqrt(num / den), 0.05);
    }

    // predictor identities on the delayed SDE
    {
        const std::vector<int> steps{L, (L + nt) / 2, nt - 1};
        const LagTables tables(p, *s.ks, grid);
        std::vector<std::vector<Vec>> pred, link_noise, ybar;
        double link = 0.0;
        for (int i = 0; i < N; ++i) {
            const BrownianPath path = sample_brownian(path_seed(seed, static_cast<std::uint64_t>(i)), nt, grid.dt);
            const auto tr = simulate_delayed_sde(s.model, v.controller, path, grid);
            const auto ar = artstein_residuals(s.model, tr, path, grid, steps);
            pred.push_back(ar.predictor);
            link_noise.push_back(ar.link_drift);
            link = std::max(link, max_norm(ar.link));
            ybar.push_back(ybar_residuals(tables, s.model, tr, path, grid, steps));
        }
        double zp = 0.0, zl = 0.0, zy = 0.0;
        for (std::size_t k = 0; k < steps.size(); ++k) {
            zp = std::max(zp, max_abs_z(pred, k));
            zl = std::max(zl, max_abs_z(link_noise, k));
            zy = std::max(zy, max_abs_z(ybar, k));
        }
        log.at_most("predictor_residual_mean_z", zp, 5.0);
        log.at_most("link_noise_mean_z", zl, 5.0);
        log.at_most("link_exact_residual", link, 1e-9);
        log.at_most("shifted_predictor_residual_mean_z", zy, 5.0);
    }

    // variance split, lower bound and cost identity on the coupled plant
    {
        const std::vector<int> probes{L, nt / 2, nt};
        RunSpec setup{p, s.ks, grid, v.controller, PlantModel::coupled, s.weights(), probes};
        const auto r = monte_carlo(setup, N, seed, s.config.montecarlo.threads);
        log.at_most("variance_bound_violations", bound_violations(r.report), 0.0);
        double zd = 0.0, zc = 0.0;
        for (std::size_t i = 0; i < probes.size(); ++i) {
            const auto k = static_cast<std::size_t>(probes[i]);
            const auto d = variance_decomposition(r.probes[i], r.report.times[k], r.report.v_min[k]);
            zd = std::max(zd, d.z_score());
            zc = std::max(zc, std::abs(d.correlation) / d.correlation_std_error);
        }
        log.at_most("variance_decomposition_z", zd, 5.0);
        log.at_most("window_independence_z", zc, 5.0);
        const auto cc = cost_decomposition_check(r, p, *s.ks, s.weights(), grid);
        log.at_most("cost_decomposition_z", cc.z_score(), 5.0);
    }

    summary_line(out, {{"command", "check"}, {"failures", log.failures()}, {"pass", log.failures() == 0}});
    return log.exit_code();
}

void add_common(CLI::App* sub, Options& o) {
    sub->add_option("--preset", o.preset, "Built-in scenario (fig1, decoupled)");
    sub->add_option("--config", o.config, "Scenario JSON file")->check(CLI::ExistingFile);
    sub->add_option("--nx,--grid-nx", o.nx, "Spatial cells");
    sub->add_option("--out", o.out, "Output directory (default $HYPERSDE_OUT or ./out)");
    sub->add_option("--seed", o.seed, "Base seed");
    sub->add_option("--paths", o.paths, "Monte Carlo paths");
    sub->add_option("--threads", o.threads, "Worker threads");
    sub->add_flag("--quick", o.quick, "Coarse grid and few paths");
    sub->add_option("--poles", o.poles, "Comma separated pole set; repeat for several variants")
        ->allow_extra_args(false);
    sub->add_option("--horizon", o.horizon, "Horizon T");
    sub->add_option("--qweight", o.qweight, "State weight Q = q I");
    sub->add_option("--rweight", o.rweight, "Control weight R");
    sub->add_option("--controller", o.controller, "open_loop, stabilizing or lq");
    sub->add_option("--plant", o.plant, "coupled or delayed");
    sub->add_flag("--fields", o.fields, "Also write field snapshots");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Boundary-actuated stochastic plant: kernels, simulation, control, Monte Carlo"};
    app.require_subcommand(1);
    Options o;
    struct Cmd {
        const char* name;
        const char* help;
        int (*fn)(const Options&, std::ostream&);
    };
    const Cmd cmds[] = {
        {"kernels", "Solve the backstepping kernels and write them as CSV", cmd_kernels},
        {"simulate", "Simulate one path", cmd_simulate},
        {"stabilize", "Ensemble under the predictor feedback", cmd_stabilize},
        {"lq", "Finite-horizon LQ controller and its ensemble", cmd_lq},
        {"montecarlo", "Variance report for one or more controller variants", cmd_montecarlo},
        {"check", "Run the identity suite; exit 0 iff every check passes", cmd_check},
    };
    std::vector<std::pair<CLI::App*, const Cmd*>> subs;
    for (const auto& c : cmds) {
        auto* sub = app.add_subcommand(c.name, c.help);
        add_common(sub, o);
        subs.emplace_back(sub, &c);
    }

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_pass;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return exit_pass;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage;
    }

    try {
        for (const auto& [sub, cmd] : subs)
            if (sub->parsed()) return cmd->fn(o, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage;
    } catch (const InvalidArgument& e) {
        err << "error: " << e.what() << '\n';
        return exit_usage;
    } catch (const Error& e) {
        err << "failed: " << e.what() << '\n';
        return exit_check_failed;
    }
    return exit_usage;
}

}  // namespace hypersde::cli
