#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qsmfg/grid.hpp"
#include "qsmfg/measure.hpp"

namespace qsmfg {

class FpError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Densities m_j at t_j = j dt, j = 0..N_T, and the drifts g_j that carried
/// m_j to m_j+1 (N_T of them).
struct FpTrajectory {
    double dt = 0.0;
    double horizon = 0.0;
    std::vector<double> times;
    std::vector<DensityField> densities;
    std::vector<VectorField> drifts;

    std::size_t steps() const { return drifts.size(); }
    /// max over steps of |mass - 1|.
    double worst_mass_error() const;
};

/// One implicit Euler step of dm/dt = lap m + div(m g).
///
/// Fluxes are conservative: central diffusion plus upwind advection with the
/// face velocity -(g_i + g_i+1) / 2. The system matrix has unit column sums
/// and nonpositive off-diagonals, so mass is kept and m stays nonnegative.
DensityField fp_step(const DensityField& m, const VectorField& g, double dt);

/// Drift for the step leaving t_j, given j and m_j.
using DriftProvider = std::function<VectorField(std::size_t, const DensityField&)>;

/// Sequential fp_step from m0 up to T = N_T dt. T must be a multiple of dt.
FpTrajectory fp_evolve(const DensityField& m0, const DriftProvider& drift, double horizon, double dt);

/// Time indices used by the pairwise Hölder reports: all of 0..last when there
/// are at most `points`, otherwise `points` evenly spread ones with both ends.
std::vector<std::size_t> subsample_indices(std::size_t last, std::size_t points);

/// max over pairs of W1(m_j, m_k) / |t_j - t_k|^(1/2).
double holder_report(const FpTrajectory& trajectory, std::size_t points = 21);

/// sum_j dt sum_x h^d (m^2 + |forward gradient of m|^2), a discrete
/// L2(H1) norm of the trajectory.
double sobolev_surrogate(const FpTrajectory& trajectory);

enum class InitialDensity { uniform, von_mises, two_bump };

InitialDensity parse_initial_density(const std::string& name);

/// Smooth initial densities: uniform, a von Mises bump prod_i exp(k cos(2 pi (x_i - c)))
/// centred at c, or an equal mixture of bumps at c and c + 1/2.
DensityField initial_density(const Grid& grid, InitialDensity kind, double concentration = 4.0, double centre = 0.25);

} // namespace qsmfg
