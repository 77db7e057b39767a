#include "qsmfg/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "qsmfg/parallel.hpp"

namespace qsmfg {

namespace {

ControlField controls_for(const FrozenModel& f, const Grid& g, const VectorField& du) {
    std::vector<Vec> a(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) a[k] = f.control(g.coord(k), du.at(k));
    return ControlField(g, f.controls(), std::move(a));
}

/// g = H_p = -b(x, a)
VectorField fp_drift(const FrozenModel& f, const ControlField& a) {
    const Grid& g = a.grid();
    VectorField out(g);
    for (std::size_t k = 0; k < g.size(); ++k) out.set(k, -f.drift(g.coord(k), a[k]));
    return out;
}

ControlField reference_policy(const Model& model, const Grid& g) {
    return ControlField::constant(g, model.controls(), model.controls().closest_to_origin());
}

double cheap_w1(const JointMeasure& a, const JointMeasure& b, const ControlField& pa, const ControlField& pb,
                const TransportOptions& opt) {
    // same state density and identical policies: nothing to transport
    if (sup_distance(pa, pb) == 0.0) return 0.0;
    return wasserstein1_joint(a, b, opt);
}

/// Discounted slice solve, either plain or in normalised variables.
struct SliceSolver {
    double rho = 1.0;
    bool normalized = false;
    HjbOptions options;

    HjbSolution operator()(const FrozenModel& f, const Grid& g, const ControlField* warm) const {
        return normalized ? solve_discounted_normalized(f, g, rho, options, warm) : solve_discounted(f, g, rho, options, warm);
    }
};

ContextBuilder builder_for(const Model& model, const std::vector<double>& times, const std::vector<JointMeasure>& mu,
                           std::size_t j) {
    if (!model.uses_history()) return [](const JointMeasure& c) { return MuContext::instant(c); };
    auto prefix = std::make_shared<MeasureTrajectory>();
    prefix->times.assign(times.begin(), times.begin() + static_cast<std::ptrdiff_t>(j) + 1);
    prefix->measures.assign(mu.begin(), mu.begin() + static_cast<std::ptrdiff_t>(j));
    const double t = times[j];
    return [prefix, t](const JointMeasure& c) {
        auto full = std::make_shared<MeasureTrajectory>(*prefix);
        full->measures.push_back(c);
        return MuContext::history(t, std::move(full));
    };
}

std::vector<double> time_grid(const CouplingConfig& cfg) {
    const std::size_t n = cfg.steps();
    std::vector<double> t(n + 1);
    for (std::size_t j = 0; j <= n; ++j) t[j] = static_cast<double>(j) * cfg.dt;
    return t;
}

/// Brings every slice to a joint fixed point of mu and u for the final m:
/// alternate solve_mu at the current Du with the HJB solve at the new mu
/// until W1(mu, pushforward(m, alpha*(Du; mu))) <= inner tol.
void polish(const Model& model, const CouplingConfig& cfg, const SliceSolver& solver, std::vector<GridField> u_start,
            TrajectorySolution& sol) {
    const std::size_t n = sol.m.size();
    const Grid& grid = sol.m.front().grid();
    sol.u.assign(n, GridField());
    sol.mu.assign(n, JointMeasure());
    sol.policy.assign(n, ControlField());
    sol.hjb_residual.assign(n, 0.0);
    sol.mu_residual.assign(n, 0.0);
    sol.max_abs_cost.assign(n, 0.0);
    if (solver.normalized) sol.lambda.assign(n, 0.0);
    std::vector<double> ratios(n, 0.0);
    std::vector<char> damped(n, 0);

    auto one = [&](std::size_t j) {
        const ContextBuilder ctx = builder_for(model, sol.times, sol.mu, j);
        VectorField du = gradient_central(u_start[j]);
        std::optional<ControlField> warm;
        for (int round = 0; round < cfg.max_outer; ++round) {
            const MuSolve ms = solve_mu(model, sol.m[j], du, ctx, cfg.inner);
            ratios[j] = std::max(ratios[j], ms.ratio);
            damped[j] = damped[j] || ms.damped;
            const auto frozen = model.freeze(ctx(ms.mu));
            HjbSolution h = solver(*frozen, grid, warm ? &*warm : nullptr);
            const double r = cheap_w1(ms.mu, pushforward(sol.m[j], h.policy), ms.policy, h.policy, cfg.inner.transport);
            sol.u[j] = h.u;
            sol.mu[j] = ms.mu;
            sol.policy[j] = ms.policy;
            sol.hjb_residual[j] = h.residual;
            sol.mu_residual[j] = r;
            sol.max_abs_cost[j] = h.max_abs_cost;
            if (solver.normalized) sol.lambda[j] = h.lambda.value_or(0.0);
            if (r <= cfg.inner.tol) break;
            du = gradient_central(h.u);
            warm = std::move(h.policy);
        }
    };
    if (model.uses_history()) {
        for (std::size_t j = 0; j < n; ++j) one(j);
    } else {
        parallel_for(n, cfg.threads, one);
    }
    for (std::size_t j = 0; j < n; ++j) {
        sol.contraction_ratio = std::max(sol.contraction_ratio, ratios[j]);
        sol.damped_inner = sol.damped_inner || damped[j];
    }
}

struct Slices {
    std::vector<GridField> u;
    std::vector<double> lambda;
    std::vector<JointMeasure> mu;
    std::vector<ControlField> policy;
    std::vector<VectorField> drift;
    std::vector<double> ratio;
    std::vector<char> damped;

    explicit Slices(std::size_t n) : u(n), lambda(n, 0.0), mu(n), policy(n), drift(n), ratio(n, 0.0), damped(n, 0) {}
};

FpTrajectory evolve(const DensityField& m0, const CouplingConfig& cfg, const std::vector<VectorField>& drift) {
    return fp_evolve(m0, [&](std::size_t j, const DensityField&) { return drift[j]; }, cfg.horizon, cfg.dt);
}

TrajectorySolution finish(const Model& model, const CouplingConfig& cfg, const SliceSolver& solver,
                          const std::vector<double>& times, FpTrajectory&& fp, const Slices& s,
                          std::vector<OuterRecord>&& log, bool converged) {
    TrajectorySolution sol;
    sol.times = times;
    sol.m = std::move(fp.densities);
    sol.drifts = std::move(fp.drifts);
    sol.log = std::move(log);
    sol.outer_iterations = static_cast<int>(sol.log.size());
    sol.converged = converged;
    sol.rho = solver.rho;
    for (std::size_t j = 0; j < s.ratio.size(); ++j) {
        sol.contraction_ratio = std::max(sol.contraction_ratio, s.ratio[j]);
        sol.damped_inner = sol.damped_inner || s.damped[j];
    }
    polish(model, cfg, solver, s.u, sol);
    return sol;
}

TrajectorySolution run_gamma(const Model& model, const DensityField& m0, const CouplingConfig& cfg,
                             const InitialGuess& guess, const SliceSolver& solver) {
    if (model.uses_history()) throw std::invalid_argument("gamma_iterate: models with memory need the psi strategy");
    const Grid& grid = m0.grid();
    const std::vector<double> times = time_grid(cfg);
    const std::size_t n = times.size();
    std::vector<GridField> ubar = guess.u.empty() ? std::vector<GridField>(n, GridField(grid)) : guess.u;
    std::vector<DensityField> mbar = guess.m.empty() ? std::vector<DensityField>(n, m0) : guess.m;
    if (ubar.size() != n || mbar.size() != n) throw std::invalid_argument("gamma_iterate: initial guess has the wrong length");

    Slices s(n);
    std::vector<JointMeasure> prev_mu;
    std::vector<OuterRecord> log;
    FpTrajectory fp;
    bool converged = false;
    for (int it = 1; it <= cfg.max_outer; ++it) {
        parallel_for(n, cfg.threads, [&](std::size_t j) {
            const MuSolve ms = solve_mu(model, mbar[j], gradient_central(ubar[j]), cfg.inner);
            s.ratio[j] = std::max(s.ratio[j], ms.ratio);
            s.damped[j] = s.damped[j] || ms.damped;
            const auto frozen = model.freeze(MuContext::instant(ms.mu));
            const bool warm = it > 1;
            HjbSolution h = solver(*frozen, grid, warm ? &s.policy[j] : nullptr);
            ControlField a = warm && cfg.damping < 1.0 ? ControlField::blend(h.policy, s.policy[j], cfg.damping) : h.policy;
            s.drift[j] = fp_drift(*frozen, a);
            s.policy[j] = std::move(a);
            s.u[j] = std::move(h.u);
            s.mu[j] = ms.mu;
        });
        fp = evolve(m0, cfg, s.drift);

        OuterRecord rec;
        rec.iteration = it;
        std::vector<double> e(n), de(n), me(n), mue(n, 0.0);
        parallel_for(n, cfg.threads, [&](std::size_t j) {
            de[j] = sup_distance(gradient_central(s.u[j]), gradient_central(ubar[j]));
            me[j] = wasserstein1_state(fp.densities[j], mbar[j], cfg.inner.transport);
            if (!prev_mu.empty()) mue[j] = wasserstein1_joint(s.mu[j], prev_mu[j], cfg.inner.transport);
            e[j] = de[j] + me[j];
        });
        for (std::size_t j = 0; j < n; ++j) {
            rec.error = std::max(rec.error, e[j]);
            rec.du_error = std::max(rec.du_error, de[j]);
            rec.m_error = std::max(rec.m_error, me[j]);
            rec.mu_error = std::max(rec.mu_error, mue[j]);
        }
        log.push_back(rec);
        ubar = s.u;
        mbar = fp.densities;
        prev_mu = s.mu;
        if (rec.error <= cfg.outer_tol) {
            converged = true;
            break;
        }
    }
    return finish(model, cfg, solver, times, std::move(fp), s, std::move(log), converged);
}

TrajectorySolution run_psi(const Model& model, const DensityField& m0, const CouplingConfig& cfg,
                           std::vector<JointMeasure> mu, const SliceSolver& solver) {
    const Grid& grid = m0.grid();
    const std::vector<double> times = time_grid(cfg);
    const std::size_t n = times.size();
    if (mu.empty()) mu.assign(n, pushforward(m0, reference_policy(model, grid)));
    if (mu.size() != n) throw std::invalid_argument("psi_iterate: initial trajectory has the wrong length");

    Slices s(n);
    std::vector<GridField> prev_u;
    std::vector<DensityField> prev_m;
    std::vector<OuterRecord> log;
    FpTrajectory fp;
    bool converged = false;
    for (int it = 1; it <= cfg.max_outer; ++it) {
        std::shared_ptr<const MeasureTrajectory> traj;
        if (model.uses_history()) traj = std::make_shared<const MeasureTrajectory>(MeasureTrajectory{times, mu});
        parallel_for(n, cfg.threads, [&](std::size_t j) {
            const MuContext ctx = traj ? MuContext::history(times[j], traj) : MuContext::instant(mu[j]);
            const auto frozen = model.freeze(ctx);
            const bool warm = it > 1;
            HjbSolution h = solver(*frozen, grid, warm ? &s.policy[j] : nullptr);
            ControlField a = warm && cfg.damping < 1.0 ? ControlField::blend(h.policy, s.policy[j], cfg.damping) : h.policy;
            s.drift[j] = fp_drift(*frozen, a);
            s.policy[j] = std::move(a);
            s.u[j] = std::move(h.u);
        });
        fp = evolve(m0, cfg, s.drift);

        OuterRecord rec;
        rec.iteration = it;
        std::vector<JointMeasure> next(n);
        std::vector<double> de(n, 0.0), me(n, 0.0), mue(n);
        parallel_for(n, cfg.threads, [&](std::size_t j) {
            next[j] = pushforward(fp.densities[j], s.policy[j]);
            mue[j] = wasserstein1_joint(next[j], mu[j], cfg.inner.transport);
            if (!prev_u.empty()) {
                de[j] = sup_distance(gradient_central(s.u[j]), gradient_central(prev_u[j]));
                me[j] = wasserstein1_state(fp.densities[j], prev_m[j], cfg.inner.transport);
            }
        });
        for (std::size_t j = 0; j < n; ++j) {
            rec.mu_error = std::max(rec.mu_error, mue[j]);
            rec.du_error = std::max(rec.du_error, de[j]);
            rec.m_error = std::max(rec.m_error, me[j]);
        }
        rec.error = rec.mu_error;
        log.push_back(rec);
        prev_u = s.u;
        prev_m = fp.densities;
        mu = std::move(next);
        if (rec.error <= cfg.outer_tol) {
            converged = true;
            break;
        }
    }
    s.mu = mu;
    return finish(model, cfg, solver, times, std::move(fp), s, std::move(log), converged);
}

TrajectorySolution run_strategy(const Model& model, const DensityField& m0, const CouplingConfig& cfg,
                                const SliceSolver& solver, const InitialGuess& guess,
                                const std::vector<JointMeasure>& mu_guess) {
    if (cfg.strategy == Strategy::psi) return run_psi(model, m0, cfg, mu_guess, solver);
    return run_gamma(model, m0, cfg, guess, solver);
}

void check_inputs(const Model& model, const DensityField& m0, const CouplingConfig& cfg) {
    cfg.validate();
    if (m0.grid().dim() != model.dim()) throw std::invalid_argument("m0: grid dimension differs from the model");
}

} // namespace

// ---------------------------------------------------------------------------

MuSolve solve_mu(const Model& model, const DensityField& m, const VectorField& du, const ContextBuilder& context,
                 const MuOptions& opt) {
    const Grid& g = m.grid();
    if (du.dim() != g.dim() || du.grid() != g) throw std::invalid_argument("solve_mu: Du lives on a different grid");
    if (!(opt.tol > 0.0) || opt.max_iterations < 1) throw std::invalid_argument("solve_mu: need tol > 0 and max_iterations >= 1");
    auto alpha = [&](const JointMeasure& mu) { return controls_for(*model.freeze(context(mu)), g, du); };

    MuSolve s;
    const ControlField start = alpha(pushforward(m, reference_policy(model, g)));
    ControlField a = start;
    JointMeasure mu = pushforward(m, a);
    double prev = -1.0;
    for (int it = 1; it <= opt.max_iterations; ++it) {
        ControlField a_next = alpha(mu);
        JointMeasure next = pushforward(m, a_next);
        const double d = cheap_w1(mu, next, a, a_next, opt.transport);
        if (prev > opt.ratio_floor) s.ratio = std::max(s.ratio, d / prev);
        prev = d;
        s.iterations = it;
        s.residual = d;
        if (d <= opt.tol) {
            s.converged = true;
            s.mu = std::move(mu);
            s.policy = std::move(a);
            return s;
        }
        mu = std::move(next);
        a = std::move(a_next);
    }

    // Fallback for the non-contractive regime: half steps on the policy.
    s.damped = true;
    a = start;
    mu = pushforward(m, a);
    for (int it = 1; it <= 10 * opt.max_iterations; ++it) {
        const ControlField target = alpha(mu);
        const double r = cheap_w1(mu, pushforward(m, target), a, target, opt.transport);
        s.iterations = opt.max_iterations + it;
        s.residual = r;
        if (r <= opt.tol) {
            s.converged = true;
            break;
        }
        a = ControlField::blend(target, a, 0.5);
        mu = pushforward(m, a);
    }
    s.mu = std::move(mu);
    s.policy = std::move(a);
    return s;
}

MuSolve solve_mu(const Model& model, const DensityField& m, const VectorField& du, const MuOptions& options) {
    if (model.uses_history()) throw std::invalid_argument("solve_mu: a model with memory needs a context builder");
    return solve_mu(model, m, du, [](const JointMeasure& c) { return MuContext::instant(c); }, options);
}

void CouplingConfig::validate() const {
    auto need = [](bool ok, const char* field, const char* reason) {
        if (!ok) throw std::invalid_argument(std::string(field) + ": " + reason);
    };
    need(outer_tol > 0.0, "outer_tol", "must be positive");
    need(max_outer >= 1, "max_outer", "must be at least 1");
    need(damping > 0.0 && damping <= 1.0, "damping", "must lie in (0, 1]");
    need(inner.tol > 0.0, "inner_tol", "must be positive");
    need(inner.max_iterations >= 1, "inner_max_iterations", "must be at least 1");
    need(hjb.tol > 0.0, "hjb_tol", "must be positive");
    need(hjb.max_iterations >= 1, "hjb_max_iterations", "must be at least 1");
    need(rho > 0.0, "rho", "must be positive");
    need(dt > 0.0, "dt", "must be positive");
    need(horizon >= 0.0, "T", "must be nonnegative");
    const double q = horizon / dt;
    need(std::fabs(q - std::round(q)) <= 1e-9 * std::max(1.0, q), "T", "must be a multiple of dt");
    need(rho0 > 0.0, "rho0", "must be positive");
    need(max_halvings >= 1, "max_halvings", "must be at least 1");
    need(ergodic_tol > 0.0, "ergodic_tol", "must be positive");
    need(threads >= 1, "threads", "must be at least 1");
}

std::size_t CouplingConfig::steps() const { return static_cast<std::size_t>(std::llround(horizon / dt)); }

double TrajectorySolution::worst_hjb_residual() const {
    return hjb_residual.empty() ? 0.0 : *std::max_element(hjb_residual.begin(), hjb_residual.end());
}

double TrajectorySolution::worst_mu_residual() const {
    return mu_residual.empty() ? 0.0 : *std::max_element(mu_residual.begin(), mu_residual.end());
}

double TrajectorySolution::worst_mass_error() const {
    double w = 0.0;
    for (const auto& d : m) w = std::max(w, std::fabs(d.mass() - 1.0));
    return w;
}

TrajectorySolution gamma_iterate(const Model& model, const DensityField& m0, const CouplingConfig& config,
                                 const InitialGuess& guess) {
    check_inputs(model, m0, config);
    return run_gamma(model, m0, config, guess, SliceSolver{config.rho, false, config.hjb});
}

TrajectorySolution psi_iterate(const Model& model, const DensityField& m0, const CouplingConfig& config) {
    check_inputs(model, m0, config);
    return run_psi(model, m0, config, {}, SliceSolver{config.rho, false, config.hjb});
}

TrajectorySolution solve_trajectory(const Model& model, const DensityField& m0, const CouplingConfig& config,
                                    const InitialGuess& guess) {
    return config.strategy == Strategy::psi ? psi_iterate(model, m0, config) : gamma_iterate(model, m0, config, guess);
}

TrajectorySolution ergodic_drive(const Model& model, const DensityField& m0, const CouplingConfig& config) {
    check_inputs(model, m0, config);
    std::vector<double> rhos;
    std::vector<double> increments;
    TrajectorySolution prev;
    bool have_prev = false;
    bool all_converged = true;
    for (int k = 0; k <= config.max_halvings; ++k) {
        const double rho = std::ldexp(config.rho0, -k);
        InitialGuess guess;
        std::vector<JointMeasure> mu_guess;
        if (have_prev) {
            guess.u = prev.u;
            guess.m = prev.m;
            mu_guess = prev.mu;
        }
        TrajectorySolution cur = run_strategy(model, m0, config, SliceSolver{rho, true, config.hjb}, guess, mu_guess);
        all_converged = all_converged && cur.converged;
        rhos.push_back(rho);
        if (have_prev) {
            double inc = 0.0;
            for (std::size_t j = 0; j < cur.u.size(); ++j) {
                const double d = std::fabs(cur.lambda[j] - prev.lambda[j]) + (cur.u[j] - prev.u[j]).sup_norm() +
                                 wasserstein1_state(cur.m[j], prev.m[j], config.inner.transport);
                inc = std::max(inc, d);
            }
            increments.push_back(inc);
        } else {
            increments.push_back(std::numeric_limits<double>::quiet_NaN());
        }
        prev = std::move(cur);
        have_prev = true;
        if (increments.back() <= config.ergodic_tol) break;
    }

    TrajectorySolution sol = std::move(prev);
    sol.ergodic_rhos = std::move(rhos);
    sol.ergodic_increments = std::move(increments);
    sol.converged = all_converged && sol.ergodic_increments.back() <= config.ergodic_tol;

    // direct ergodic cross-check on every slice
    ErgodicOptions eo;
    eo.inner = config.hjb;
    std::vector<double> gap(sol.u.size(), 0.0);
    parallel_for(sol.u.size(), model.uses_history() ? 1 : config.threads, [&](std::size_t j) {
        const auto frozen = model.freeze(slice_context(model, sol.times, sol.mu, j));
        const HjbSolution d = solve_ergodic(*frozen, sol.m[j].grid(), eo, &sol.policy[j]);
        gap[j] = std::fabs(*d.lambda - sol.lambda[j]) + (d.u - sol.u[j]).sup_norm();
    });
    sol.ergodic_direct_gap = *std::max_element(gap.begin(), gap.end());
    return sol;
}

MuContext slice_context(const Model& model, const std::vector<double>& times, const std::vector<JointMeasure>& mu,
                        std::size_t j) {
    if (!model.uses_history()) return MuContext::instant(mu.at(j));
    auto t = std::make_shared<MeasureTrajectory>();
    t->times.assign(times.begin(), times.begin() + static_cast<std::ptrdiff_t>(j) + 1);
    t->measures.assign(mu.begin(), mu.begin() + static_cast<std::ptrdiff_t>(j) + 1);
    return MuContext::history(times.at(j), std::move(t));
}

KsetReport kset_report(const Model& model, const TrajectorySolution& sol, std::size_t points) {
    KsetReport r;
    const std::size_t n = sol.u.size();
    if (n == 0) return r;
    const Grid& grid = sol.m.front().grid();
    const auto mesh = model.controls().mesh(model.dim() == 1 ? 101 : 21);
    std::vector<VectorField> du(n);
    for (std::size_t j = 0; j < n; ++j) {
        du[j] = gradient_central(sol.u[j]);
        r.max_du = std::max(r.max_du, du[j].sup_norm());
        r.max_lap_u = std::max(r.max_lap_u, laplacian(sol.u[j]).sup_norm());
        r.rho_u_max = std::max(r.rho_u_max, sol.lambda.empty() ? sol.rho * sol.u[j].sup_norm() : std::fabs(sol.lambda[j]));
        const auto frozen = model.freeze(slice_context(model, sol.times, sol.mu, j));
        for (std::size_t k = 0; k < grid.size(); ++k) {
            const Vec x = grid.coord(k);
            for (const Vec& a : mesh) r.cost_max = std::max(r.cost_max, std::fabs(frozen->cost(x, a)));
            r.cost_max = std::max(r.cost_max, std::fabs(frozen->cost(x, sol.policy[j][k])));
        }
    }
    if (n >= 2) {
        const auto idx = subsample_indices(n - 1, points);
        for (std::size_t a = 0; a < idx.size(); ++a)
            for (std::size_t b = a + 1; b < idx.size(); ++b) {
                const std::size_t i = idx[a];
                const std::size_t j = idx[b];
                const double s = std::sqrt(sol.times[j] - sol.times[i]);
                r.holder_du = std::max(r.holder_du, sup_distance(du[i], du[j]) / s);
                r.holder_m = std::max(r.holder_m, wasserstein1_state(sol.m[i], sol.m[j]) / s);
                r.holder_mu = std::max(r.holder_mu, wasserstein1_joint(sol.mu[i], sol.mu[j]) / s);
            }
        FpTrajectory fp;
        fp.dt = sol.times[1] - sol.times[0];
        fp.times = sol.times;
        fp.densities = sol.m;
        r.sobolev = sobolev_surrogate(fp);
    }
    return r;
}

std::vector<std::pair<double, double>> gradient_modulus(const TrajectorySolution& sol) {
    const std::size_t n = sol.u.size();
    std::vector<VectorField> du(n);
    for (std::size_t j = 0; j < n; ++j) du[j] = gradient_central(sol.u[j]);
    std::vector<std::pair<double, double>> out;
    double running = 0.0;
    for (std::size_t lag = 1; lag < n; ++lag) {
        for (std::size_t j = 0; j + lag < n; ++j) running = std::max(running, sup_distance(du[j], du[j + lag]));
        out.emplace_back(sol.times[lag] - sol.times[0], running);
    }
    return out;
}

std::string to_string(Strategy s) { return s == Strategy::psi ? "psi" : "gamma"; }

Strategy parse_strategy(const std::string& name) {
    if (name == "gamma") return Strategy::gamma;
    if (name == "psi") return Strategy::psi;
    throw std::invalid_argument("strategy: unknown value '" + name + "'");
}

} // namespace qsmfg
