#pragma once

#include <vector>

#include "qsmfg/grid.hpp"

namespace qsmfg {

/// Compact control set A in R^k: a closed ball centred at the origin or a box.
class ControlSet {
public:
    enum class Kind { ball, box };

    static ControlSet ball(int dim, double radius);
    static ControlSet box(Vec lo, Vec hi);

    Kind kind() const { return kind_; }
    int dim() const { return dim_; }
    double radius() const { return radius_; }
    const Vec& lo() const { return lo_; }
    const Vec& hi() const { return hi_; }

    bool contains(const Vec& a, double tol = 0.0) const;
    /// Closest point of A.
    Vec project(const Vec& a) const;
    /// Closest point of A to the origin.
    Vec closest_to_origin() const;
    double diameter() const;

    /// Brute-force candidate set with `points_per_axis` nodes along each
    /// axis. Points are ordered lexicographically; for a 2-D ball the
    /// interior lattice is followed by a boundary ring of matching spacing.
    std::vector<Vec> mesh(int points_per_axis) const;
    /// Lattice spacing of mesh(points_per_axis) (largest over axes).
    double mesh_spacing(int points_per_axis) const;
    /// True when `a` lies within `tol` of the boundary of A.
    bool on_boundary(const Vec& a, double tol) const;

private:
    Kind kind_ = Kind::ball;
    int dim_ = 1;
    double radius_ = 1.0;
    Vec lo_;
    Vec hi_;
};

} // namespace qsmfg
