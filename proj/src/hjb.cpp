#include "qsmfg/hjb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

namespace qsmfg {

namespace {

using SpMat = Eigen::SparseMatrix<double>;

struct Coefficients {
    VectorField drift;
    GridField cost;
};

Coefficients evaluate(const FrozenModel& frozen, const Grid& grid, const ControlField& policy) {
    Coefficients c{VectorField(grid), GridField(grid)};
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const Vec x = grid.coord(k);
        c.drift.set(k, frozen.drift(x, policy[k]));
        c.cost[k] = frozen.cost(x, policy[k]);
    }
    return c;
}

double residual_with(const Grid& grid, const GridField& u, double rho, double shift, const Coefficients& c) {
    const GridField lap = laplacian(u);
    const VectorField gu = gradient_upwind(u, c.drift);
    double r = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double f = rho * u[k] + shift - lap[k] - c.drift.at(k).dot(gu.at(k)) - c.cost[k];
        r = std::max(r, std::fabs(f));
    }
    return r;
}

/// rho u - lap u - b . grad_upwind u, optionally bordered by the shift column
/// and the pinning row u(x0) = 0.
SpMat assemble(const Grid& grid, const VectorField& b, double rho, bool augmented) {
    const auto n = static_cast<Eigen::Index>(grid.size());
    const double h = grid.h();
    const double ih2 = 1.0 / (h * h);
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(grid.size() * (2 + 4 * grid.dim()) + 1);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const auto row = static_cast<Eigen::Index>(k);
        double diag = rho + 2.0 * grid.dim() * ih2;
        for (int ax = 0; ax < grid.dim(); ++ax) {
            const auto fwd = static_cast<Eigen::Index>(grid.neighbor(k, ax, 1));
            const auto bwd = static_cast<Eigen::Index>(grid.neighbor(k, ax, -1));
            t.emplace_back(row, fwd, -ih2);
            t.emplace_back(row, bwd, -ih2);
            const double bk = b.components[ax][k];
            if (bk > 0.0) {
                t.emplace_back(row, fwd, -bk / h);
                diag += bk / h;
            } else if (bk < 0.0) {
                t.emplace_back(row, bwd, bk / h);
                diag -= bk / h;
            }
        }
        t.emplace_back(row, row, diag);
        if (augmented) t.emplace_back(row, n, 1.0);
    }
    if (augmented) t.emplace_back(n, static_cast<Eigen::Index>(normalization_node(grid)), 1.0);
    const Eigen::Index size = augmented ? n + 1 : n;
    SpMat a(size, size);
    a.setFromTriplets(t.begin(), t.end());
    a.makeCompressed();
    return a;
}

Eigen::VectorXd solve_linear(const SpMat& a, const Eigen::VectorXd& rhs, bool iterative) {
    if (iterative) {
        Eigen::BiCGSTAB<SpMat, Eigen::DiagonalPreconditioner<double>> it;
        it.setTolerance(1e-15);
        it.setMaxIterations(4 * static_cast<int>(a.rows()));
        it.compute(a);
        Eigen::VectorXd x = it.solve(rhs);
        const double target = 1e-14 * (1.0 + rhs.lpNorm<Eigen::Infinity>());
        for (int refine = 0; refine < 6 && it.info() == Eigen::Success; ++refine) {
            const Eigen::VectorXd r = rhs - a * x;
            if (r.lpNorm<Eigen::Infinity>() <= target) return x;
            x += it.solve(r);
        }
    }
    Eigen::SparseLU<SpMat> lu;
    lu.compute(a);
    if (lu.info() != Eigen::Success) throw HjbError("hjb: policy-evaluation matrix is singular");
    Eigen::VectorXd x = lu.solve(rhs);
    if (lu.info() != Eigen::Success) throw HjbError("hjb: policy-evaluation solve failed");
    return x;
}

double max_abs(const GridField& f) { return f.sup_norm(); }

/// Policy iteration on rho u + shift - lap u + H = 0. With `augmented` the
/// shift is an unknown and u(x0) = 0; otherwise shift = 0.
HjbSolution policy_iteration(const FrozenModel& frozen, const Grid& grid, double rho, bool augmented,
                             const HjbOptions& opt, const ControlField* warm) {
    if (opt.max_iterations < 1) throw std::invalid_argument("hjb: max_iterations must be positive");
    HjbSolution s;
    ControlField policy = warm ? *warm : improve_policy(frozen, GridField(grid));
    if (policy.grid() != grid) throw std::invalid_argument("hjb: warm start lives on a different grid");
    const bool iterative = grid.dim() == 2 && !augmented;
    double theta = 1.0;
    double prev = std::numeric_limits<double>::infinity();
    double shift = 0.0;
    for (int it = 1; it <= opt.max_iterations; ++it) {
        const Coefficients c = evaluate(frozen, grid, policy);
        const SpMat a = assemble(grid, c.drift, rho, augmented);
        Eigen::VectorXd rhs(a.rows());
        for (std::size_t k = 0; k < grid.size(); ++k) rhs[static_cast<Eigen::Index>(k)] = c.cost[k];
        // A maps constants to rho * constant, so the mean of l is carried
        // exactly and only the fluctuation goes through the solver.
        double level = 0.0;
        if (augmented) {
            rhs[rhs.size() - 1] = 0.0;
        } else {
            level = rhs.mean();
            rhs.array() -= level;
        }
        Eigen::VectorXd x = solve_linear(a, rhs, iterative);
        if (!augmented) x.array() += level / rho;
        GridField u(grid);
        for (std::size_t k = 0; k < grid.size(); ++k) u[k] = x[static_cast<Eigen::Index>(k)];
        if (!u.values().empty() && !std::isfinite(x.sum())) throw HjbError("hjb: non-finite policy evaluation");
        shift = augmented ? x[x.size() - 1] : 0.0;
        if (augmented) u += -u[normalization_node(grid)];  // the pin holds only to rounding

        const ControlField next = improve_policy(frozen, u);
        const Coefficients cn = evaluate(frozen, grid, next);
        const double r = residual_with(grid, u, rho, shift, cn);
        s.residual_history.push_back(r);
        s.u = std::move(u);
        s.iterations = it;
        s.residual = r;
        s.policy = next;
        s.max_abs_cost = max_abs(cn.cost);
        if (r <= opt.tol) {
            s.converged = true;
            break;
        }
        // Safeguard: a growing residual halves the policy step.
        if (r > prev) theta = std::max(theta * 0.5, 1.0 / 64.0);
        prev = r;
        policy = theta == 1.0 ? next : ControlField::blend(next, policy, theta);
    }
    if (augmented) s.lambda = shift;
    return s;
}

} // namespace

ControlField improve_policy(const FrozenModel& frozen, const GridField& u) {
    const Grid& grid = u.grid();
    const VectorField du = gradient_central(u);
    std::vector<Vec> a(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) a[k] = frozen.control(grid.coord(k), du.at(k));
    return ControlField(grid, frozen.controls(), std::move(a));
}

double hjb_residual(const FrozenModel& frozen, const GridField& u, double rho, double shift) {
    return residual_with(u.grid(), u, rho, shift, evaluate(frozen, u.grid(), improve_policy(frozen, u)));
}

HjbSolution solve_discounted(const FrozenModel& frozen, const Grid& grid, double rho, const HjbOptions& options,
                             const ControlField* warm_start) {
    if (!(rho > 0.0)) throw std::invalid_argument("solve_discounted: rho must be positive");
    return policy_iteration(frozen, grid, rho, false, options, warm_start);
}

HjbSolution solve_discounted(const Model& model, const MuContext& ctx, double rho, const Grid& grid,
                             const HjbOptions& options, const ControlField* warm_start) {
    if (grid.dim() != model.dim()) throw std::invalid_argument("solve_discounted: grid and model dimensions differ");
    return solve_discounted(*model.freeze(ctx), grid, rho, options, warm_start);
}

HjbSolution solve_discounted_normalized(const FrozenModel& frozen, const Grid& grid, double rho,
                                        const HjbOptions& options, const ControlField* warm_start) {
    if (!(rho > 0.0)) throw std::invalid_argument("solve_discounted_normalized: rho must be positive");
    HjbSolution s = policy_iteration(frozen, grid, rho, true, options, warm_start);
    s.discount = rho;
    return s;
}

HjbSolution solve_ergodic(const FrozenModel& frozen, const Grid& grid, const ErgodicOptions& options,
                          const ControlField* warm_start) {
    if (options.mode == ErgodicMode::direct) return policy_iteration(frozen, grid, 0.0, true, options.inner, warm_start);

    if (!(options.rho0 > 0.0)) throw std::invalid_argument("solve_ergodic: rho0 must be positive");
    // Each discounted problem is solved for (w, rho u(x0)) with w = u - u(x0):
    // the same equation, but without the 1/rho growth of u.
    HjbSolution prev;
    const ControlField* warm = warm_start;
    for (int k = 0; k <= options.max_halvings; ++k) {
        const double rho = std::ldexp(options.rho0, -k);
        HjbSolution cur = policy_iteration(frozen, grid, rho, true, options.inner, warm);
        cur.discount = rho;
        if (k > 0) {
            cur.cauchy_increment = std::fabs(*cur.lambda - *prev.lambda) + (cur.u - prev.u).sup_norm();
            if (cur.cauchy_increment < options.inner.tol) return cur;
        }
        prev = std::move(cur);
        warm = &prev.policy;
    }
    prev.converged = false;
    return prev;
}

HjbSolution solve_ergodic(const Model& model, const MuContext& ctx, const Grid& grid, const ErgodicOptions& options,
                          const ControlField* warm_start) {
    if (grid.dim() != model.dim()) throw std::invalid_argument("solve_ergodic: grid and model dimensions differ");
    return solve_ergodic(*model.freeze(ctx), grid, options, warm_start);
}

DependenceReport continuous_dependence_report(const Model& model, const MuContext& ctx1, const MuContext& ctx2,
                                              double rho, const Grid& grid, const HjbOptions& options) {
    const auto f1 = model.freeze(ctx1);
    const auto f2 = model.freeze(ctx2);
    const HjbSolution s1 = solve_discounted(*f1, grid, rho, options);
    const HjbSolution s2 = solve_discounted(*f2, grid, rho, options);
    const std::size_t x0 = normalization_node(grid);

    DependenceReport r;
    GridField w1 = s1.u;
    GridField w2 = s2.u;
    w1 += -s1.u[x0];
    w2 += -s2.u[x0];
    r.value_difference = (w1 - w2).sup_norm();
    r.gradient_difference = sup_distance(gradient_central(s1.u), gradient_central(s2.u));
    r.normalized_difference = r.value_difference + r.gradient_difference;
    r.rho_sup_difference = rho * (s1.u - s2.u).sup_norm();

    const auto mesh = model.controls().mesh(model.dim() == 1 ? 101 : 21);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const Vec x = grid.coord(k);
        for (const Vec& a : mesh) {
            r.drift_difference = std::max(r.drift_difference, (f1->drift(x, a) - f2->drift(x, a)).norm());
            r.cost_difference = std::max(r.cost_difference, std::fabs(f1->cost(x, a) - f2->cost(x, a)));
        }
    }
    // Either one-sided difference may appear in the upwind term.
    double g = 0.0;
    for (const auto* s : {&s1, &s2})
        for (double sign : {1.0, -1.0}) g = std::max(g, gradient_upwind(s->u, VectorField(grid, sign)).sup_norm());
    r.comparison_bound = g * r.drift_difference + r.cost_difference;
    return r;
}

} // namespace qsmfg
