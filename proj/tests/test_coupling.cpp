#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "qsmfg/coupling.hpp"

using namespace qsmfg;

namespace {

Example1Params example1(double epsilon, double kappa = 0.4) {
    Example1Params p;
    p.delta = 1.0;
    p.epsilon = epsilon;
    p.kappa = kappa;
    p.beta = 0.5;
    p.potential = 0.6;
    return p;
}

CouplingConfig small_config(Strategy s = Strategy::gamma) {
    CouplingConfig c;
    c.dt = 0.05;
    c.horizon = 0.5;
    c.strategy = s;
    c.outer_tol = 1e-9;
    return c;
}

/// u(x) = amplitude cos(2 pi x) on a 1-d grid, a gradient that drives controls
/// into the interior and onto the boundary of the ball.
VectorField cosine_gradient(const Grid& g, double amplitude) {
    GridField u(g);
    for (std::size_t k = 0; k < g.size(); ++k) u[k] = amplitude * std::cos(2 * std::numbers::pi * g.coord(k)[0]);
    return gradient_central(u);
}

double max_w1_state(const TrajectorySolution& a, const TrajectorySolution& b) {
    double d = 0.0;
    for (std::size_t j = 0; j < a.m.size(); ++j) d = std::max(d, wasserstein1_state(a.m[j], b.m[j]));
    return d;
}

double max_du_gap(const TrajectorySolution& a, const TrajectorySolution& b) {
    double d = 0.0;
    for (std::size_t j = 0; j < a.u.size(); ++j)
        d = std::max(d, sup_distance(gradient_central(a.u[j]), gradient_central(b.u[j])));
    return d;
}

void check_invariants(const TrajectorySolution& sol, double tol) {
    CHECK(sol.worst_mass_error() <= 1e-12);
    for (std::size_t j = 0; j < sol.m.size(); ++j) {
        CHECK(sol.m[j].field().min() >= -1e-13);
        // mu is generated by its stored policy
        CHECK(wasserstein1_joint(sol.mu[j], pushforward(sol.m[j], sol.policy[j])) <= 1e-13);
    }
    CHECK(sol.worst_mu_residual() <= tol);
    CHECK(sol.worst_hjb_residual() <= 1e-8);
}

} // namespace

TEST_CASE("solve_mu without measure dependence stops after one step") {
    const Grid g(1, 32);
    const Example1Model model(example1(0.0));
    const DensityField m = initial_density(g, InitialDensity::von_mises);
    const MuSolve s = solve_mu(model, m, cosine_gradient(g, 0.3));
    CHECK(s.converged);
    CHECK(s.iterations == 1);
    CHECK(s.residual == 0.0);
    CHECK_FALSE(s.damped);
}

TEST_CASE("solve_mu contraction ratio tracks the Lipschitz constant of alpha*") {
    const Grid g(1, 32);
    // off-centre mass so that int a dmu does not vanish by symmetry
    const DensityField m = initial_density(g, InitialDensity::von_mises, 6.0, 0.3);
    for (double eps : {0.5, 0.1}) {
        const Example1Model model(example1(eps));
        const double lam = model.constants().lambda0;
        CHECK(lam == doctest::Approx(eps));
        // a large gradient puts the controls in the ball where l0 matters
        const MuSolve s = solve_mu(model, m, cosine_gradient(g, 0.1));
        INFO("eps " << eps << " ratio " << s.ratio);
        CHECK(s.converged);
        CHECK(s.iterations > 2);
        CHECK(s.ratio > 0.0);
        CHECK(s.residual <= 1e-10);
        CHECK(s.ratio <= 1.1 * lam);
        CHECK(wasserstein1_joint(s.mu, pushforward(m, s.policy)) <= 1e-14);
    }
}

TEST_CASE("solve_mu validates its inputs") {
    const Grid g(1, 16);
    const Example1Model model(example1(0.2));
    const DensityField m = DensityField::uniform(g);
    MuOptions bad;
    bad.tol = 0.0;
    CHECK_THROWS_AS(solve_mu(model, m, cosine_gradient(g, 0.1), bad), std::invalid_argument);
    CHECK_THROWS_AS(solve_mu(model, m, cosine_gradient(Grid(1, 8), 0.1)), std::invalid_argument);
    const Example2Model mem(example1(0.2), MemoryKernel::constant(1.0));
    CHECK_THROWS_AS(solve_mu(mem, m, cosine_gradient(g, 0.1)), std::invalid_argument);
}

TEST_CASE("config validation names the field") {
    auto message = [](CouplingConfig c) {
        try {
            c.validate();
        } catch (const std::invalid_argument& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CouplingConfig c;
    CHECK(message(c).empty());
    c.rho = 0.0;
    CHECK(message(c).rfind("rho:", 0) == 0);
    c = CouplingConfig{};
    c.horizon = 0.33;
    CHECK(message(c).rfind("T:", 0) == 0);
    c = CouplingConfig{};
    c.damping = 1.5;
    CHECK(message(c).rfind("damping:", 0) == 0);
    c = CouplingConfig{};
    c.dt = -1;
    CHECK(message(c).rfind("dt:", 0) == 0);
    CHECK(parse_strategy("psi") == Strategy::psi);
    CHECK(to_string(Strategy::gamma) == "gamma");
    CHECK_THROWS_AS(parse_strategy("delta"), std::invalid_argument);
}

TEST_CASE("a model without any coupling converges in two outer steps") {
    const Grid g(1, 32);
    const ConstantCostModel model(1, 0.7);
    CouplingConfig cfg = small_config();
    cfg.damping = 1.0;
    const TrajectorySolution sol = solve_trajectory(model, initial_density(g, InitialDensity::von_mises), cfg);
    CHECK(sol.converged);
    CHECK(sol.outer_iterations == 2);
    for (const auto& u : sol.u)
        for (std::size_t k = 0; k < g.size(); ++k) CHECK(u[k] == doctest::Approx(0.7).epsilon(1e-11));
    check_invariants(sol, 1e-10);
}

TEST_CASE("separated coupling leaves Du untouched") {
    const Grid g(1, 32);
    SeparatedParams p;
    p.beta = 0.4;
    p.gamma = 0.8;
    p.eta = 0.3;
    const SeparatedModel model(p);
    const SeparatedModel bare = model.without_coupling();
    const DensityField m0 = initial_density(g, InitialDensity::two_bump, 5.0);
    const TrajectorySolution a = solve_trajectory(model, m0, small_config());
    const TrajectorySolution b = solve_trajectory(bare, m0, small_config());
    CHECK(a.converged);
    CHECK(max_du_gap(a, b) <= 1e-10);
    CHECK(max_w1_state(a, b) <= 1e-12);
    // the shift is l1(mu) / rho at each slice
    for (std::size_t j = 0; j < a.u.size(); ++j) {
        const double shift = model.coupling_cost(a.mu[j]);
        CHECK((a.u[j] - b.u[j]).sup_norm() <= std::fabs(shift) + 1e-9);
    }
}

TEST_CASE("weak coupling: gamma and psi agree and the limit ignores the seed") {
    const Grid g(1, 32);
    const Example1Model model(example1(0.3, 0.5));
    const DensityField m0 = initial_density(g, InitialDensity::von_mises, 4.0, 0.3);
    const CouplingConfig cg = small_config(Strategy::gamma);
    const CouplingConfig cp = small_config(Strategy::psi);
    const TrajectorySolution a = solve_trajectory(model, m0, cg);
    const TrajectorySolution b = solve_trajectory(model, m0, cp);
    REQUIRE(a.converged);
    REQUIRE(b.converged);
    check_invariants(a, cg.inner.tol);
    check_invariants(b, cp.inner.tol);
    const double tol = 10 * cg.outer_tol;
    CHECK(max_du_gap(a, b) <= tol);
    CHECK(max_w1_state(a, b) <= tol);

    // second seed: a rough initial guess for u and a different m
    InitialGuess seed;
    for (std::size_t j = 0; j < a.u.size(); ++j) {
        GridField u(g);
        for (std::size_t k = 0; k < g.size(); ++k) u[k] = std::sin(6 * std::numbers::pi * g.coord(k)[0]) + 0.1 * j;
        seed.u.push_back(u);
        seed.m.push_back(initial_density(g, InitialDensity::two_bump, 8.0));
    }
    const TrajectorySolution c = gamma_iterate(model, m0, cg, seed);
    REQUIRE(c.converged);
    CHECK(max_du_gap(a, c) <= tol);
    CHECK(max_w1_state(a, c) <= tol);

    // outer errors shrink geometrically after the first step
    for (std::size_t i = 2; i < a.log.size(); ++i) CHECK(a.log[i].error <= a.log[i - 1].error * 1.05);
}

TEST_CASE("memory kernel zero reduces example 2 to example 1") {
    const Grid g(1, 24);
    const Example1Params p = example1(0.3, 0.5);
    const Example1Model inst(p);
    const Example2Model mem(p, MemoryKernel::zero());
    const DensityField m0 = initial_density(g, InitialDensity::von_mises);
    const CouplingConfig cfg = small_config(Strategy::psi);
    const TrajectorySolution a = psi_iterate(mem, m0, cfg);
    REQUIRE(a.converged);
    // with K = 0 the aggregate is the zero measure, which switches coupling off
    const TrajectorySolution b = psi_iterate(Example1Model(example1(0.0, 0.0)), m0, cfg);
    CHECK(max_du_gap(a, b) <= 1e-9);
    CHECK(max_w1_state(a, b) <= 1e-9);
    CHECK_THROWS_AS(gamma_iterate(mem, m0, cfg), std::invalid_argument);
    (void)inst;
}

TEST_CASE("memory model with a live kernel converges under psi") {
    const Grid g(1, 24);
    const Example2Model mem(example1(0.3, 0.5), MemoryKernel::exponential(1.0, 0.5));
    const CouplingConfig cfg = small_config(Strategy::psi);
    const TrajectorySolution sol = psi_iterate(mem, initial_density(g, InitialDensity::von_mises), cfg);
    CHECK(sol.converged);
    check_invariants(sol, cfg.inner.tol);
}

TEST_CASE("threads do not change the answer") {
    const Grid g(1, 24);
    const Example1Model model(example1(0.3, 0.5));
    const DensityField m0 = initial_density(g, InitialDensity::von_mises);
    CouplingConfig one = small_config();
    CouplingConfig many = one;
    many.threads = 4;
    const TrajectorySolution a = solve_trajectory(model, m0, one);
    const TrajectorySolution b = solve_trajectory(model, m0, many);
    CHECK(max_du_gap(a, b) == 0.0);
    CHECK(max_w1_state(a, b) == 0.0);
}

TEST_CASE("ergodic driver") {
    const Grid g(1, 24);
    SUBCASE("constant cost gives lambda = c") {
        const ConstantCostModel model(1, 0.4);
        CouplingConfig cfg = small_config();
        cfg.horizon = 0.1;
        const TrajectorySolution sol = ergodic_drive(model, DensityField::uniform(g), cfg);
        CHECK(sol.converged);
        for (double l : sol.lambda) CHECK(l == doctest::Approx(0.4).epsilon(1e-10));
        CHECK(sol.ergodic_direct_gap <= 1e-9);
    }
    SUBCASE("example 1 increments shrink and match the direct solve") {
        const Example1Model model(example1(0.3, 0.5));
        CouplingConfig cfg = small_config();
        cfg.horizon = 0.1;
        cfg.ergodic_tol = 1e-7;
        const TrajectorySolution sol = ergodic_drive(model, initial_density(g, InitialDensity::von_mises), cfg);
        CHECK(sol.converged);
        const auto& inc = sol.ergodic_increments;
        REQUIRE(inc.size() >= 3);
        for (std::size_t k = 2; k < std::min<std::size_t>(inc.size(), 9); ++k) {
            INFO("k " << k << " " << inc[k - 1] << " -> " << inc[k]);
            CHECK(inc[k] <= inc[k - 1]);
        }
        CHECK(sol.ergodic_direct_gap <= 10 * cfg.ergodic_tol);
    }
}

TEST_CASE("kset report is stable under dt halving") {
    const Grid g(1, 24);
    const Example1Model model(example1(0.3, 0.5));
    const DensityField m0 = initial_density(g, InitialDensity::von_mises, 6.0);
    CouplingConfig a = small_config();
    a.horizon = 1.0;
    CouplingConfig b = a;
    b.dt = a.dt / 2;
    const KsetReport ra = kset_report(model, solve_trajectory(model, m0, a));
    const KsetReport rb = kset_report(model, solve_trajectory(model, m0, b));
    auto close = [](double x, double y) { return std::max(x, y) <= 2.0 * std::min(x, y) + 1e-12; };
    CHECK(close(ra.rho_u_max, rb.rho_u_max));
    CHECK(close(ra.cost_max, rb.cost_max));
    CHECK(close(ra.holder_m, rb.holder_m));
    CHECK(close(ra.holder_du, rb.holder_du));
    CHECK(close(ra.max_du, rb.max_du));
    CHECK(ra.rho_u_max <= ra.cost_max + 1e-12);
}
