#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "qsmfg/grid.hpp"
#include "qsmfg/measure.hpp"
#include "qsmfg/model.hpp"

namespace qsmfg {

/// Raised when a policy-evaluation system cannot be factorised.
class HjbError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct HjbOptions {
    double tol = 1e-10;
    int max_iterations = 100;
};

struct HjbSolution {
    GridField u;
    /// Ergodic constant; empty for discounted solves.
    std::optional<double> lambda;
    /// Sup norm of the discrete equation at (u, policy).
    double residual = 0.0;
    ControlField policy;
    int iterations = 0;
    bool converged = false;
    std::vector<double> residual_history;
    /// max over nodes of |l(x, policy(x))|.
    double max_abs_cost = 0.0;
    /// Vanishing-discount runs: smallest discount reached and the last Cauchy
    /// increment. Zero for direct solves.
    double discount = 0.0;
    double cauchy_increment = 0.0;
};

/// Node used to pin the ergodic solution: the node at coordinate 0.
inline std::size_t normalization_node(const Grid&) { return 0; }

/// alpha*(x, D_central u(x)) at every node.
ControlField improve_policy(const FrozenModel& frozen, const GridField& u);

/// Sup norm over nodes of rho u + shift - lap u - b(x, a_u) . grad_upwind u - l(x, a_u)
/// with a_u = improve_policy(u).
double hjb_residual(const FrozenModel& frozen, const GridField& u, double rho, double shift = 0.0);

/// Policy iteration for rho u - lap u + H(x, Du) = 0 on the periodic grid.
/// Evaluation uses upwind advection (an M-matrix), improvement uses central
/// gradients. Does not throw on non-convergence; check `converged`.
HjbSolution solve_discounted(const FrozenModel& frozen, const Grid& grid, double rho, const HjbOptions& options = {},
                             const ControlField* warm_start = nullptr);
HjbSolution solve_discounted(const Model& model, const MuContext& ctx, double rho, const Grid& grid,
                             const HjbOptions& options = {}, const ControlField* warm_start = nullptr);

/// The discounted problem solved for w = u - u(x0) and c = rho u(x0): returns
/// u = w and lambda = c. Same equation as solve_discounted, but it keeps its
/// accuracy as rho -> 0 where u itself grows like 1 / rho.
HjbSolution solve_discounted_normalized(const FrozenModel& frozen, const Grid& grid, double rho,
                                        const HjbOptions& options = {}, const ControlField* warm_start = nullptr);

enum class ErgodicMode { direct, vanishing_discount };

struct ErgodicOptions {
    HjbOptions inner;
    ErgodicMode mode = ErgodicMode::direct;
    /// Vanishing discount: rho_k = rho0 2^-k until the Cauchy increment
    /// |lambda_k - lambda_k+1| + |w_k - w_k+1| drops below inner.tol.
    double rho0 = 1.0;
    int max_halvings = 60;
};

/// lambda - lap u + H(x, Du) = 0 with u(x0) = 0.
HjbSolution solve_ergodic(const FrozenModel& frozen, const Grid& grid, const ErgodicOptions& options = {},
                          const ControlField* warm_start = nullptr);
HjbSolution solve_ergodic(const Model& model, const MuContext& ctx, const Grid& grid,
                          const ErgodicOptions& options = {}, const ControlField* warm_start = nullptr);

struct DependenceReport {
    /// |w1 - w2| + |D w1 - D w2| with w = u - u(x0), sup over nodes.
    double normalized_difference = 0.0;
    double value_difference = 0.0;
    double gradient_difference = 0.0;
    /// rho |u1 - u2|
    double rho_sup_difference = 0.0;
    /// max over nodes and control mesh of |b1 - b2| and |l1 - l2|.
    double drift_difference = 0.0;
    double cost_difference = 0.0;
    /// Comparison-principle bound on rho |u1 - u2|: G |b1 - b2| + |l1 - l2|
    /// with G the larger measured upwind gradient norm.
    double comparison_bound = 0.0;
};

DependenceReport continuous_dependence_report(const Model& model, const MuContext& ctx1, const MuContext& ctx2,
                                              double rho, const Grid& grid, const HjbOptions& options = {});

} // namespace qsmfg
