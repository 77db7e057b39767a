#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "qsmfg/control_set.hpp"
#include "qsmfg/grid.hpp"
#include "qsmfg/transport.hpp"

namespace qsmfg {

/// Probability density on the nodes of a grid: nonnegative values with
/// sum(values) * h^d = 1.
class DensityField {
public:
    DensityField() = default;
    /// Validates the invariants (mass within 1e-12, min >= 0).
    explicit DensityField(GridField values);

    /// Clamps negatives to zero and rescales to unit mass.
    static DensityField normalized(GridField values);
    static DensityField uniform(const Grid& grid);
    /// All mass on one node.
    static DensityField delta(const Grid& grid, std::size_t node);

    const Grid& grid() const { return field_.grid(); }
    const GridField& field() const { return field_; }
    double operator[](std::size_t k) const { return field_[k]; }
    std::size_t size() const { return field_.size(); }
    double mass() const { return field_.sum() * grid().cell_volume(); }
    /// Node weights m(x_i) * h^d.
    std::vector<double> weights() const;

private:
    GridField field_;
};

/// One control in A per grid node.
class ControlField {
public:
    ControlField() = default;
    /// Values outside A by less than 1e-12 are projected; larger violations throw.
    ControlField(const Grid& grid, const ControlSet& set, std::vector<Vec> values);
    static ControlField constant(const Grid& grid, const ControlSet& set, const Vec& a);

    const Grid& grid() const { return grid_; }
    const ControlSet& control_set() const { return set_; }
    std::size_t size() const { return values_.size(); }
    const Vec& operator[](std::size_t k) const { return values_[k]; }
    const std::vector<Vec>& values() const { return values_; }

    /// Pointwise convex combination theta * a + (1 - theta) * b.
    static ControlField blend(const ControlField& a, const ControlField& b, double theta);
    /// max over nodes of |a(x) - b(x)|.
    friend double sup_distance(const ControlField& a, const ControlField& b);

private:
    Grid grid_;
    ControlSet set_;
    std::vector<Vec> values_;
};

struct Atom {
    Vec x;
    Vec a;
    double w = 0.0;
};

/// Weighted atoms on T^d x A. Produced by pushforward (one atom per grid
/// node, graph-supported) or by memory aggregation (total mass may differ
/// from one).
class JointMeasure {
public:
    JointMeasure() = default;
    explicit JointMeasure(std::vector<Atom> atoms, std::optional<Grid> source = std::nullopt);

    const std::vector<Atom>& atoms() const { return atoms_; }
    std::size_t size() const { return atoms_.size(); }
    double mass() const;
    const std::optional<Grid>& source_grid() const { return source_; }
    int state_dim() const { return atoms_.empty() ? 0 : static_cast<int>(atoms_.front().x.size()); }
    int control_dim() const { return atoms_.empty() ? 0 : static_cast<int>(atoms_.front().a.size()); }

    /// Integral of a over the measure.
    Vec mean_control() const;
    /// Same atoms with weights multiplied by s.
    JointMeasure scaled(double s) const;

private:
    std::vector<Atom> atoms_;
    std::optional<Grid> source_;
};

/// Image of m under x -> (x, a(x)).
JointMeasure pushforward(const DensityField& m, const ControlField& a);

/// First marginal of a graph measure produced on `grid` (atoms binned to
/// their node).
DensityField state_marginal(const JointMeasure& mu, const Grid& grid);

/// Ground metric on T^d x A: torus distance plus Euclidean control distance.
double joint_distance(const Vec& x1, const Vec& a1, const Vec& x2, const Vec& a2);

/// Exact W1 between measures of equal mass (within 1e-10) under the
/// joint ground metric.
double wasserstein1_joint(const JointMeasure& nu1, const JointMeasure& nu2, const TransportOptions& options = {});

/// W1 on T^d. d = 1 uses the circle CDF formula, d = 2 the atom LP.
double wasserstein1_state(const DensityField& m1, const DensityField& m2, const TransportOptions& options = {});

/// Circle CDF method for d = 1: min over c of h * sum_i |D_i - c| where D is
/// the cumulative difference of node weights.
double wasserstein1_circle(const DensityField& m1, const DensityField& m2);

/// Atom LP for any d with the torus ground metric.
double wasserstein1_state_lp(const DensityField& m1, const DensityField& m2, const TransportOptions& options = {});

} // namespace qsmfg
