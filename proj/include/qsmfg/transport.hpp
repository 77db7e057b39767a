#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace qsmfg {

class TransportError : public std::runtime_error {
public:
    explicit TransportError(const std::string& what) : std::runtime_error(what) {}
};

struct TransportOptions {
    enum class Method { exact, sinkhorn };

    Method method = Method::exact;
    /// Pivot budget of the network simplex.
    std::size_t max_pivots = 2'000'000;
    /// Largest accepted total atom count (supply + demand side).
    std::size_t max_atoms = 4096;
    /// Entropic regularisation of the Sinkhorn mode. The returned cost is the
    /// transport cost of the regularised plan and overestimates the exact
    /// value by O(epsilon * log(atoms)).
    double sinkhorn_epsilon = 1e-3;
    int sinkhorn_max_iterations = 20000;
    double sinkhorn_tolerance = 1e-12;
};

struct TransportResult {
    double cost = 0.0;
    std::size_t pivots = 0;
};

/// Exact balanced transportation problem min <P, C> over couplings of
/// `supply` and `demand`, solved by the primal network simplex on the
/// bipartite graph. Totals must agree within 1e-10 relative; the residual
/// mismatch is absorbed into the demand side before solving. Zero-weight
/// atoms are dropped.
TransportResult solve_transport(std::span<const double> supply, std::span<const double> demand,
                                const Eigen::MatrixXd& cost, const TransportOptions& options = {});

/// Log-domain Sinkhorn iterations for the same problem. Returns the cost of
/// the entropic plan.
TransportResult sinkhorn_transport(std::span<const double> supply, std::span<const double> demand,
                                   const Eigen::MatrixXd& cost, const TransportOptions& options = {});

} // namespace qsmfg
