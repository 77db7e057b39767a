#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qsmfg/fp.hpp"
#include "qsmfg/hjb.hpp"
#include "qsmfg/measure.hpp"
#include "qsmfg/model.hpp"

namespace qsmfg {

// ---------------------------------------------------------------------------
// Inner fixed point for mu at one time slice

struct MuOptions {
    double tol = 1e-10;
    int max_iterations = 200;
    /// Step ratios W1_k+1 / W1_k are only recorded when W1_k exceeds this.
    double ratio_floor = 1e-11;
    TransportOptions transport;
};

struct MuSolve {
    /// Last iterate mu_k with W1(mu_k, Psi(mu_k)) <= tol on success.
    JointMeasure mu;
    /// The control field with mu = pushforward(m, policy).
    ControlField policy;
    /// W1(mu, pushforward(m, alpha*(Du; mu)))
    double residual = 0.0;
    /// max_k W1(mu_k+1, mu_k) / W1(mu_k, mu_k-1) of the plain Picard run; 0
    /// when fewer than two steps cleared the floor.
    double ratio = 0.0;
    int iterations = 0;
    bool converged = false;
    /// The plain iteration failed and the policy-damped fallback ran.
    bool damped = false;
};

/// Builds the model's measure argument from a candidate mu for the slice.
using ContextBuilder = std::function<MuContext(const JointMeasure&)>;

/// Picard iteration mu_k+1 = pushforward(m, alpha*(., Du; mu_k)) from
/// mu_0 = pushforward(m, alpha*(., Du; nu_ref)), nu_ref = m times the point
/// of A closest to 0. On failure reruns with policies damped by 1/2 and ten
/// times the budget.
MuSolve solve_mu(const Model& model, const DensityField& m, const VectorField& du, const ContextBuilder& context,
                 const MuOptions& options = {});
MuSolve solve_mu(const Model& model, const DensityField& m, const VectorField& du, const MuOptions& options = {});

// ---------------------------------------------------------------------------
// Trajectory solvers

enum class Strategy { gamma, psi };
enum class HorizonMode { discounted, ergodic };

struct CouplingConfig {
    double outer_tol = 1e-8;
    int max_outer = 60;
    /// Weight of the new policy when blending with the previous one, in (0, 1].
    double damping = 0.5;
    MuOptions inner;
    HjbOptions hjb;
    double rho = 1.0;
    double dt = 0.05;
    double horizon = 1.0;
    Strategy strategy = Strategy::gamma;
    /// Vanishing-discount driver: rho_k = rho0 2^-k, k = 0..max_halvings,
    /// until the increment drops below ergodic_tol.
    double rho0 = 1.0;
    int max_halvings = 40;
    double ergodic_tol = 1e-7;
    int threads = 1;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
    std::size_t steps() const;
};

struct OuterRecord {
    int iteration = 0;
    double error = 0.0;
    double du_error = 0.0;  ///< max_j |Du_k - Du_k-1|
    double m_error = 0.0;   ///< max_j W1(m_k, m_k-1)
    double mu_error = 0.0;  ///< max_j W1(mu_k, mu_k-1)
};

struct TrajectorySolution {
    std::vector<double> times;
    std::vector<GridField> u;
    /// Ergodic constants per slice; empty for discounted runs.
    std::vector<double> lambda;
    std::vector<DensityField> m;
    std::vector<JointMeasure> mu;
    /// mu[j] = pushforward(m[j], policy[j]) exactly.
    std::vector<ControlField> policy;
    /// FP drifts g_j carrying m_j to m_j+1.
    std::vector<VectorField> drifts;
    std::vector<double> hjb_residual;
    std::vector<double> mu_residual;
    /// max over nodes of |l(x, policy)| per slice.
    std::vector<double> max_abs_cost;

    std::vector<OuterRecord> log;
    int outer_iterations = 0;
    bool converged = false;
    /// Worst plain-Picard ratio met in any solve_mu call.
    double contraction_ratio = 0.0;
    bool damped_inner = false;
    double rho = 0.0;

    /// Vanishing-discount runs: increments per rho_k and the agreement with
    /// direct ergodic solves on the final slices.
    std::vector<double> ergodic_rhos;
    std::vector<double> ergodic_increments;
    double ergodic_direct_gap = 0.0;

    double worst_hjb_residual() const;
    double worst_mu_residual() const;
    double worst_mass_error() const;
};

/// Optional starting point (u_bar, m_bar) for gamma_iterate; either part may
/// be left empty. Defaults: u_bar = 0 and m_bar(t) = m0.
struct InitialGuess {
    std::vector<GridField> u;
    std::vector<DensityField> m;
};

/// Outer Picard on (u, m) for instant-context models.
TrajectorySolution gamma_iterate(const Model& model, const DensityField& m0, const CouplingConfig& config,
                                 const InitialGuess& guess = {});

/// Outer Picard on the mu trajectory; accepts models with memory.
TrajectorySolution psi_iterate(const Model& model, const DensityField& m0, const CouplingConfig& config);

/// Dispatches on config.strategy.
TrajectorySolution solve_trajectory(const Model& model, const DensityField& m0, const CouplingConfig& config,
                                    const InitialGuess& guess = {});

/// Discounted coupled solves along rho_k = rho0 2^-k with warm starts; stops
/// when max_j(|dlambda| + |dw| + W1(dm)) <= ergodic_tol and re-checks the
/// final slices against direct ergodic HJB solves.
TrajectorySolution ergodic_drive(const Model& model, const DensityField& m0, const CouplingConfig& config);

// ---------------------------------------------------------------------------
// Diagnostics

struct KsetReport {
    /// max_j rho |u_j| (discounted) or max_j |lambda_j| (ergodic).
    double rho_u_max = 0.0;
    /// max over slices, nodes and the control mesh of |l|.
    double cost_max = 0.0;
    double holder_du = 0.0;
    double holder_m = 0.0;
    double holder_mu = 0.0;
    double sobolev = 0.0;
    double max_du = 0.0;
    double max_lap_u = 0.0;
};

KsetReport kset_report(const Model& model, const TrajectorySolution& sol, std::size_t points = 21);

/// omega(delta) = max over |t - s| <= delta of |Du(t) - Du(s)|, for delta in
/// multiples of dt up to the horizon.
std::vector<std::pair<double, double>> gradient_modulus(const TrajectorySolution& sol);

/// MuContext for slice j of a trajectory: the measure itself for instant
/// models, the history prefix mu_0..mu_j otherwise.
MuContext slice_context(const Model& model, const std::vector<double>& times, const std::vector<JointMeasure>& mu,
                        std::size_t j);

std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& name);

} // namespace qsmfg
