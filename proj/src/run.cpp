#include "qsmfg/run.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <set>

#include "qsmfg/io.hpp"

namespace qsmfg {

using nlohmann::json;

namespace {

/// Reads typed keys from one JSON object and remembers which were consumed.
class Section {
public:
    Section(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
        if (!j_.is_object()) throw ConfigError(prefix_.empty() ? "config" : prefix_.substr(0, prefix_.size() - 1), "must be an object");
    }

    template <class T>
    T get(const std::string& key, T fallback) {
        used_.insert(key);
        if (!j_.contains(key)) return fallback;
        try {
            return j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(prefix_ + key, "has the wrong type");
        }
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    const json& sub(const std::string& key) {
        used_.insert(key);
        return j_.contains(key) ? j_.at(key) : empty_;
    }

    std::string name(const std::string& key) const { return prefix_ + key; }

    void finish() const {
        for (const auto& item : j_.items())
            if (!used_.count(item.key())) throw ConfigError(prefix_ + item.key(), "unknown key");
    }

private:
    const json& j_;
    std::string prefix_;
    std::set<std::string> used_;
    inline static const json empty_ = json::object();
};

void need(bool ok, const std::string& field, const std::string& reason) {
    if (!ok) throw ConfigError(field, reason);
}

MemoryKernel parse_kernel(const json& j) {
    Section s(j, "model.kernel.");
    const auto type = s.get<std::string>("type", "zero");
    const double k0 = s.get<double>("k0", 1.0);
    const double decay = s.get<double>("decay", 1.0);
    s.finish();
    need(k0 >= 0.0, "model.kernel.k0", "must be nonnegative");
    need(decay > 0.0, "model.kernel.decay", "must be positive");
    if (type == "zero") return MemoryKernel::zero();
    if (type == "constant") return MemoryKernel::constant(k0);
    if (type == "linear") return MemoryKernel::linear(k0);
    if (type == "exponential") return MemoryKernel::exponential(k0, decay);
    throw ConfigError("model.kernel.type", "unknown kernel '" + type + "'");
}

Example1Params example1_params(Section& s, int dim) {
    Example1Params p;
    p.dim = dim;
    p.delta = s.get("delta", p.delta);
    p.epsilon = s.get("epsilon", p.epsilon);
    p.kappa = s.get("kappa", p.kappa);
    p.sigma = s.get("sigma", p.sigma);
    p.radius = s.get("radius", p.radius);
    p.beta = s.get("beta", p.beta);
    p.potential = s.get("potential", p.potential);
    need(p.delta > 0.0, "model.delta", "must be positive");
    need(p.epsilon >= 0.0, "model.epsilon", "must be nonnegative");
    need(p.sigma > 0.0, "model.sigma", "must be positive");
    need(p.radius > 0.0, "model.radius", "must be positive");
    return p;
}

/// Builds the model from its section; used both for validation and for runs.
std::unique_ptr<Model> make_model(const std::string& name, const json& params, int dim) {
    Section s(params, "model.");
    s.get<std::string>("name", name);
    std::unique_ptr<Model> out;
    if (name == "example1") {
        out = std::make_unique<Example1Model>(example1_params(s, dim));
    } else if (name == "example2") {
        const Example1Params p = example1_params(s, dim);
        out = std::make_unique<Example2Model>(p, parse_kernel(s.sub("kernel")));
    } else if (name == "separated") {
        SeparatedParams p;
        p.dim = dim;
        p.control_scale = s.get("control_scale", p.control_scale);
        p.radius = s.get("radius", p.radius);
        p.beta = s.get("beta", p.beta);
        p.potential = s.get("potential", p.potential);
        p.gamma = s.get("gamma", p.gamma);
        p.eta = s.get("eta", p.eta);
        need(p.control_scale > 0.0, "model.control_scale", "must be positive");
        need(p.radius > 0.0, "model.radius", "must be positive");
        out = std::make_unique<SeparatedModel>(p);
    } else if (name == "constant") {
        const double cost = s.get("cost", 1.0);
        const double radius = s.get("radius", 1.0);
        need(radius > 0.0, "model.radius", "must be positive");
        out = std::make_unique<ConstantCostModel>(dim, cost, radius);
    } else {
        throw ConfigError("model.name", "unknown model '" + name + "'");
    }
    s.finish();
    return out;
}

json vector_json(const std::vector<double>& v) { return json(v); }

void write_outputs(const RunConfig& cfg, const TrajectorySolution& sol, const Model& model, const json& summary) {
    namespace fs = std::filesystem;
    const fs::path dir(cfg.output);
    fs::create_directories(dir);
    auto open = [&](const std::string& name, bool bin = false) {
        std::ofstream f(dir / name, bin ? std::ios::binary : std::ios::out);
        if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
        return f;
    };
    {
        auto f = open("summary.json");
        f << summary.dump(2) << '\n';
    }
    {
        auto f = open("convergence.csv");
        write_csv(f, sol.log);
    }
    FpTrajectory fp;
    fp.dt = cfg.coupling.dt;
    fp.horizon = cfg.coupling.horizon;
    fp.times = sol.times;
    fp.densities = sol.m;
    fp.drifts = sol.drifts;
    {
        auto f = open("m.csv");
        write_csv(f, fp);
    }
    if (cfg.binary) {
        auto f = open("m.bin", true);
        write_binary(f, fp);
    }
    {
        auto f = open("u.csv");
        f << "t,node,value\n";
        for (std::size_t j = 0; j < sol.u.size(); ++j)
            for (std::size_t k = 0; k < sol.u[j].size(); ++k)
                f << format_double(sol.times[j]) << ',' << k << ',' << format_double(sol.u[j][k]) << '\n';
    }
    {
        auto f = open("mu.csv");
        const int dx = cfg.grid.dim();
        const int da = model.controls().dim();
        f << "t";
        for (int i = 0; i < dx; ++i) f << ",x" << i;
        for (int i = 0; i < da; ++i) f << ",a" << i;
        f << ",weight\n";
        for (std::size_t j = 0; j < sol.mu.size(); ++j)
            for (const Atom& at : sol.mu[j].atoms()) {
                f << format_double(sol.times[j]);
                for (Eigen::Index i = 0; i < at.x.size(); ++i) f << ',' << format_double(at.x[i]);
                for (Eigen::Index i = 0; i < at.a.size(); ++i) f << ',' << format_double(at.a[i]);
                f << ',' << format_double(at.w) << '\n';
            }
    }
    if (!sol.lambda.empty()) {
        auto f = open("lambda.csv");
        f << "t,lambda\n";
        for (std::size_t j = 0; j < sol.lambda.size(); ++j)
            f << format_double(sol.times[j]) << ',' << format_double(sol.lambda[j]) << '\n';
    }
    if (cfg.residual_history) {
        // re-solve each final slice to expose the policy-iteration residuals
        auto f = open("hjb_residuals.csv");
        f << "t,iteration,residual\n";
        for (std::size_t j = 0; j < sol.u.size(); ++j) {
            const auto frozen = model.freeze(slice_context(model, sol.times, sol.mu, j));
            const HjbSolution h = sol.lambda.empty() ? solve_discounted(*frozen, cfg.grid, sol.rho, cfg.coupling.hjb)
                                                     : solve_discounted_normalized(*frozen, cfg.grid, sol.rho, cfg.coupling.hjb);
            for (std::size_t i = 0; i < h.residual_history.size(); ++i)
                f << format_double(sol.times[j]) << ',' << i << ',' << format_double(h.residual_history[i]) << '\n';
        }
    }
}

} // namespace

RunConfig parse_config(const json& j) {
    RunConfig c;
    Section top(j, "");

    const json& g = top.sub("grid");
    {
        Section s(g, "grid.");
        const int dim = s.get("dim", 1);
        const int n = s.get("n", 32);
        s.finish();
        need(dim == 1 || dim == 2, "grid.dim", "must be 1 or 2");
        need(n >= 8, "grid.n", "must be at least 8");
        c.grid = Grid(dim, n);
    }
    {
        Section s(top.sub("time"), "time.");
        c.coupling.horizon = s.get("T", c.coupling.horizon);
        c.coupling.dt = s.get("dt", c.coupling.dt);
        s.finish();
    }
    {
        Section s(top.sub("tolerances"), "tolerances.");
        c.coupling.outer_tol = s.get("outer", c.coupling.outer_tol);
        c.coupling.inner.tol = s.get("inner", c.coupling.inner.tol);
        c.coupling.hjb.tol = s.get("hjb", c.coupling.hjb.tol);
        c.coupling.ergodic_tol = s.get("ergodic", c.coupling.ergodic_tol);
        s.finish();
        need(c.coupling.outer_tol > 0.0, "tolerances.outer", "must be positive");
        need(c.coupling.inner.tol > 0.0, "tolerances.inner", "must be positive");
        need(c.coupling.hjb.tol > 0.0, "tolerances.hjb", "must be positive");
        need(c.coupling.ergodic_tol > 0.0, "tolerances.ergodic", "must be positive");
    }
    const auto mode = top.get<std::string>("mode", "discounted");
    if (mode == "discounted")
        c.mode = HorizonMode::discounted;
    else if (mode == "ergodic")
        c.mode = HorizonMode::ergodic;
    else
        throw ConfigError("mode", "must be 'discounted' or 'ergodic'");
    try {
        c.coupling.strategy = parse_strategy(top.get<std::string>("strategy", "gamma"));
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument&) {
        throw ConfigError("strategy", "must be 'gamma' or 'psi'");
    }
    c.coupling.rho = top.get("rho", c.coupling.rho);
    c.coupling.rho0 = top.get("rho0", c.coupling.rho0);
    c.coupling.max_halvings = top.get("max_halvings", c.coupling.max_halvings);
    c.coupling.max_outer = top.get("max_outer", c.coupling.max_outer);
    c.coupling.inner.max_iterations = top.get("max_inner", c.coupling.inner.max_iterations);
    c.coupling.hjb.max_iterations = top.get("max_hjb", c.coupling.hjb.max_iterations);
    c.coupling.damping = top.get("damping", c.coupling.damping);
    c.coupling.threads = top.get("threads", c.coupling.threads);
    c.seed = top.get<unsigned long long>("seed", c.seed);
    c.validation_samples = top.get("validation_samples", c.validation_samples);
    c.output = top.get<std::string>("output", "");
    need(c.validation_samples >= 1, "validation_samples", "must be at least 1");
    {
        Section s(top.sub("m0"), "m0.");
        try {
            c.m0 = parse_initial_density(s.get<std::string>("kind", "von_mises"));
        } catch (const std::invalid_argument&) {
            throw ConfigError("m0.kind", "must be uniform, von_mises or two_bump");
        }
        c.m0_concentration = s.get("concentration", c.m0_concentration);
        c.m0_centre = s.get("centre", c.m0_centre);
        s.finish();
        need(c.m0_concentration >= 0.0, "m0.concentration", "must be nonnegative");
    }
    {
        Section s(top.sub("diagnostics"), "diagnostics.");
        c.kset = s.get("kset", c.kset);
        c.residual_history = s.get("residual_history", c.residual_history);
        c.binary = s.get("binary", c.binary);
        s.finish();
    }
    const json& model = top.sub("model");
    need(model.is_object(), "model", "must be an object");
    c.model_name = model.contains("name") && model.at("name").is_string() ? model.at("name").get<std::string>() : "";
    need(!c.model_name.empty(), "model.name", "is required");
    c.model_params = model;
    c.sweep = top.sub("sweep");
    need(c.sweep.is_object(), "sweep", "must be an object");
    top.finish();

    if (c.mode == HorizonMode::ergodic && j.contains("rho")) throw ConfigError("rho", "ergodic runs use rho0 and max_halvings");
    try {
        c.coupling.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        // CouplingConfig messages are "field: reason"; map the names used in the file
        std::string msg = e.what();
        const auto colon = msg.find(':');
        std::string field = msg.substr(0, colon);
        const std::string reason = colon == std::string::npos ? msg : msg.substr(colon + 2);
        if (field == "T" || field == "dt") field = "time." + field;
        throw ConfigError(field, reason);
    }
    const auto m = make_model(c.model_name, c.model_params, c.grid.dim());
    if (m->uses_history() && c.coupling.strategy != Strategy::psi)
        throw ConfigError("strategy", "models with memory require 'psi'");
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config", "cannot open '" + path + "'");
    json j;
    try {
        j = json::parse(f);
    } catch (const json::parse_error& e) {
        throw ConfigError("config", std::string("not valid JSON: ") + e.what());
    }
    return parse_config(j);
}

std::unique_ptr<Model> build_model(const RunConfig& c) { return make_model(c.model_name, c.model_params, c.grid.dim()); }

DensityField build_initial_density(const RunConfig& c) {
    return initial_density(c.grid, c.m0, c.m0_concentration, c.m0_centre);
}

RunResult execute(const RunConfig& cfg) {
    const auto model = build_model(cfg);
    const DensityField m0 = build_initial_density(cfg);
    const auto start = std::chrono::steady_clock::now();
    RunResult r;
    r.solution = cfg.mode == HorizonMode::ergodic ? ergodic_drive(*model, m0, cfg.coupling)
                                                  : solve_trajectory(*model, m0, cfg.coupling);
    const TrajectorySolution& sol = r.solution;
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    json s;
    s["model"] = cfg.model_name;
    s["mode"] = cfg.mode == HorizonMode::ergodic ? "ergodic" : "discounted";
    s["strategy"] = to_string(cfg.coupling.strategy);
    s["grid"] = {{"dim", cfg.grid.dim()}, {"n", cfg.grid.n()}};
    s["time"] = {{"T", cfg.coupling.horizon}, {"dt", cfg.coupling.dt}, {"slices", sol.times.size()}};
    s["rho"] = sol.rho;
    s["converged"] = sol.converged;
    s["outer_iterations"] = sol.outer_iterations;
    s["final_outer_error"] = sol.log.empty() ? 0.0 : sol.log.back().error;
    s["worst_hjb_residual"] = sol.worst_hjb_residual();
    s["worst_mu_residual"] = sol.worst_mu_residual();
    s["worst_mass_error"] = sol.worst_mass_error();
    s["contraction_ratio"] = sol.contraction_ratio;
    s["damped_inner"] = sol.damped_inner;
    s["max_abs_cost"] = sol.max_abs_cost.empty() ? 0.0 : *std::max_element(sol.max_abs_cost.begin(), sol.max_abs_cost.end());
    if (!sol.lambda.empty()) {
        s["lambda"] = vector_json(sol.lambda);
        json inc = json::array();
        for (double v : sol.ergodic_increments) inc.push_back(std::isfinite(v) ? json(v) : json(nullptr));
        s["ergodic"] = {{"rhos", vector_json(sol.ergodic_rhos)}, {"increments", inc}, {"direct_gap", sol.ergodic_direct_gap}};
    }
    if (cfg.kset) {
        const KsetReport k = kset_report(*model, sol);
        s["kset"] = {{"rho_u_max", k.rho_u_max}, {"cost_max", k.cost_max}, {"holder_du", k.holder_du},
                     {"holder_m", k.holder_m},   {"holder_mu", k.holder_mu}, {"sobolev", k.sobolev},
                     {"max_du", k.max_du},       {"max_lap_u", k.max_lap_u}};
    }
    s["threads"] = cfg.coupling.threads;
    s["seed"] = cfg.seed;
    s["timing_seconds"] = seconds;
    r.summary = std::move(s);
    r.code = sol.converged ? exit_ok : exit_not_converged;
    if (!cfg.output.empty()) write_outputs(cfg, sol, *model, r.summary);
    return r;
}

std::vector<json> expand_sweep(const json& config, std::vector<std::string>* keys) {
    const json axes = config.contains("sweep") ? config.at("sweep") : json::object();
    if (!axes.is_object()) throw ConfigError("sweep", "must be an object");
    json base = config;
    base.erase("sweep");
    std::vector<json> points{base};
    if (keys) keys->clear();
    for (const auto& axis : axes.items()) {
        if (!axis.value().is_array() || axis.value().empty()) throw ConfigError("sweep." + axis.key(), "must be a nonempty array");
        if (keys) keys->push_back(axis.key());
        std::string ptr = "/" + axis.key();
        std::replace(ptr.begin(), ptr.end(), '.', '/');
        std::vector<json> next;
        for (const json& p : points)
            for (const json& v : axis.value()) {
                json q = p;
                q[json::json_pointer(ptr)] = v;
                next.push_back(std::move(q));
            }
        points = std::move(next);
    }
    return points;
}

json validation_summary(const RunConfig& cfg) {
    const auto model = build_model(cfg);
    const ValidationReport rep = validate_model(*model, cfg.grid, cfg.seed, cfg.validation_samples);
    json checks = json::array();
    for (const auto& c : rep.checks)
        checks.push_back({{"name", c.name}, {"passed", c.passed}, {"worst", c.worst}, {"tolerance", c.tolerance}, {"detail", c.detail}});
    return {{"model", cfg.model_name}, {"passed", rep.passed()}, {"checks", checks}};
}

} // namespace qsmfg
