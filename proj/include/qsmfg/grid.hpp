#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace qsmfg {

/// Small fixed-capacity vector used for points of T^d, momenta p and
/// controls a. Never allocates (capacity 2 matches the supported dimensions).
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 2, 1>;

/// Uniform periodic grid on the unit torus T^d, d in {1, 2}.
///
/// Nodes sit at x_i = i * h with h = 1 / n on every axis. Flat indices are
/// row-major with axis 0 varying fastest.
class Grid {
public:
    Grid() = default;
    Grid(int dim, int n);

    int dim() const { return dim_; }
    int n() const { return n_; }
    double h() const { return 1.0 / n_; }
    /// h^d, the quadrature weight of one node.
    double cell_volume() const;
    std::size_t size() const { return size_; }

    std::size_t flat(int i0, int i1 = 0) const;
    std::array<int, 2> multi_index(std::size_t flat) const;
    Vec coord(std::size_t flat) const;
    /// Node reached from `flat` by `offset` steps along `axis`, wrapping.
    std::size_t neighbor(std::size_t flat, int axis, int offset) const;

    friend bool operator==(const Grid&, const Grid&) = default;

private:
    int dim_ = 1;
    int n_ = 8;
    std::size_t size_ = 8;
};

/// Quotient metric on T^d: sum over axes of min(|dx|, 1 - |dx|).
double torus_distance(const Vec& x, const Vec& y);
/// Periodic representative of x in [0, 1)^d.
Vec wrap_point(const Vec& x);

/// Real values on the nodes of a grid.
class GridField {
public:
    GridField() = default;
    explicit GridField(const Grid& grid, double fill = 0.0);
    /// Throws std::invalid_argument when the value count mismatches the grid
    /// or a value is not finite.
    GridField(const Grid& grid, std::vector<double> values);

    template <class F>
    static GridField from_function(const Grid& grid, F&& f) {
        GridField out(grid);
        for (std::size_t k = 0; k < grid.size(); ++k) out.values_[k] = f(grid.coord(k));
        return out;
    }

    const Grid& grid() const { return grid_; }
    std::size_t size() const { return values_.size(); }
    double operator[](std::size_t k) const { return values_[k]; }
    double& operator[](std::size_t k) { return values_[k]; }
    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }
    const std::vector<double>& data() const { return values_; }

    double sum() const;
    double mean() const;
    double max() const;
    double min() const;
    double sup_norm() const;

    GridField& operator+=(const GridField& o);
    GridField& operator-=(const GridField& o);
    GridField& operator*=(double s);
    GridField& operator+=(double c);

private:
    Grid grid_;
    std::vector<double> values_;
};

GridField operator+(GridField a, const GridField& b);
GridField operator-(GridField a, const GridField& b);
GridField operator*(double s, GridField a);

/// One GridField per axis.
struct VectorField {
    std::vector<GridField> components;

    VectorField() = default;
    explicit VectorField(const Grid& grid, double fill = 0.0);
    explicit VectorField(std::vector<GridField> comps);

    const Grid& grid() const { return components.front().grid(); }
    int dim() const { return static_cast<int>(components.size()); }
    Vec at(std::size_t node) const;
    void set(std::size_t node, const Vec& v);
    /// max over nodes of the Euclidean norm.
    double sup_norm() const;
};

/// max over nodes of |a(x) - b(x)| (Euclidean in the component index).
double sup_distance(const VectorField& a, const VectorField& b);

/// Second-order central Laplacian with periodic wrap.
GridField laplacian(const GridField& f);

/// Second-order central gradient with periodic wrap.
VectorField gradient_central(const GridField& f);

/// Per-axis one-sided difference chosen by the sign of the matching drift
/// component: forward for positive drift, backward for negative, central
/// where the drift is exactly zero.
VectorField gradient_upwind(const GridField& f, const VectorField& drift);

} // namespace qsmfg
