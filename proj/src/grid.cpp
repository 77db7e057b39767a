#include "qsmfg/grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace qsmfg {

Grid::Grid(int dim, int n) : dim_(dim), n_(n) {
    if (dim != 1 && dim != 2) throw std::invalid_argument("grid: dimension must be 1 or 2, got " + std::to_string(dim));
    if (n < 8) throw std::invalid_argument("grid: need at least 8 nodes per axis, got " + std::to_string(n));
    size_ = dim == 1 ? static_cast<std::size_t>(n) : static_cast<std::size_t>(n) * n;
}

double Grid::cell_volume() const { return dim_ == 1 ? h() : h() * h(); }

std::size_t Grid::flat(int i0, int i1) const {
    auto wrap = [this](int i) { return ((i % n_) + n_) % n_; };
    if (dim_ == 1) return static_cast<std::size_t>(wrap(i0));
    return static_cast<std::size_t>(wrap(i0)) + static_cast<std::size_t>(n_) * wrap(i1);
}

std::array<int, 2> Grid::multi_index(std::size_t flat) const {
    if (dim_ == 1) return {static_cast<int>(flat), 0};
    return {static_cast<int>(flat % n_), static_cast<int>(flat / n_)};
}

Vec Grid::coord(std::size_t flat) const {
    const auto idx = multi_index(flat);
    Vec x(dim_);
    for (int a = 0; a < dim_; ++a) x[a] = idx[a] * h();
    return x;
}

std::size_t Grid::neighbor(std::size_t flat, int axis, int offset) const {
    auto idx = multi_index(flat);
    idx[axis] += offset;
    return this->flat(idx[0], idx[1]);
}

double torus_distance(const Vec& x, const Vec& y) {
    double d = 0.0;
    for (Eigen::Index a = 0; a < x.size(); ++a) {
        double dx = std::fabs(x[a] - y[a]);
        dx -= std::floor(dx);
        d += std::min(dx, 1.0 - dx);
    }
    return d;
}

Vec wrap_point(const Vec& x) {
    Vec out = x;
    for (Eigen::Index a = 0; a < x.size(); ++a) out[a] = x[a] - std::floor(x[a]);
    return out;
}

GridField::GridField(const Grid& grid, double fill) : grid_(grid), values_(grid.size(), fill) {}

GridField::GridField(const Grid& grid, std::vector<double> values) : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.size())
        throw std::invalid_argument("grid field: expected " + std::to_string(grid_.size()) + " values, got " +
                                    std::to_string(values_.size()));
    for (double v : values_)
        if (!std::isfinite(v)) throw std::invalid_argument("grid field: non-finite value");
}

double GridField::sum() const {
    double s = 0.0;
    for (double v : values_) s += v;
    return s;
}

double GridField::mean() const { return sum() / static_cast<double>(values_.size()); }
double GridField::max() const { return *std::max_element(values_.begin(), values_.end()); }
double GridField::min() const { return *std::min_element(values_.begin(), values_.end()); }

double GridField::sup_norm() const {
    double s = 0.0;
    for (double v : values_) s = std::max(s, std::fabs(v));
    return s;
}

GridField& GridField::operator+=(const GridField& o) {
    for (std::size_t k = 0; k < values_.size(); ++k) values_[k] += o.values_[k];
    return *this;
}

GridField& GridField::operator-=(const GridField& o) {
    for (std::size_t k = 0; k < values_.size(); ++k) values_[k] -= o.values_[k];
    return *this;
}

GridField& GridField::operator*=(double s) {
    for (double& v : values_) v *= s;
    return *this;
}

GridField& GridField::operator+=(double c) {
    for (double& v : values_) v += c;
    return *this;
}

GridField operator+(GridField a, const GridField& b) { return a += b; }
GridField operator-(GridField a, const GridField& b) { return a -= b; }
GridField operator*(double s, GridField a) { return a *= s; }

VectorField::VectorField(const Grid& grid, double fill) : components(grid.dim(), GridField(grid, fill)) {}

VectorField::VectorField(std::vector<GridField> comps) : components(std::move(comps)) {
    if (components.empty()) throw std::invalid_argument("vector field: no components");
    for (const auto& c : components)
        if (!(c.grid() == components.front().grid())) throw std::invalid_argument("vector field: grid mismatch");
}

Vec VectorField::at(std::size_t node) const {
    Vec v(dim());
    for (int a = 0; a < dim(); ++a) v[a] = components[a][node];
    return v;
}

void VectorField::set(std::size_t node, const Vec& v) {
    for (int a = 0; a < dim(); ++a) components[a][node] = v[a];
}

double VectorField::sup_norm() const {
    double s = 0.0;
    for (std::size_t k = 0; k < grid().size(); ++k) s = std::max(s, at(k).norm());
    return s;
}

double sup_distance(const VectorField& a, const VectorField& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.grid().size(); ++k) s = std::max(s, (a.at(k) - b.at(k)).norm());
    return s;
}

GridField laplacian(const GridField& f) {
    const Grid& g = f.grid();
    const double inv_h2 = 1.0 / (g.h() * g.h());
    GridField out(g);
    for (std::size_t k = 0; k < g.size(); ++k) {
        double acc = 0.0;
        for (int a = 0; a < g.dim(); ++a)
            acc += f[g.neighbor(k, a, 1)] - 2.0 * f[k] + f[g.neighbor(k, a, -1)];
        out[k] = acc * inv_h2;
    }
    return out;
}

VectorField gradient_central(const GridField& f) {
    const Grid& g = f.grid();
    VectorField out(g);
    const double inv_2h = 0.5 / g.h();
    for (int a = 0; a < g.dim(); ++a)
        for (std::size_t k = 0; k < g.size(); ++k)
            out.components[a][k] = (f[g.neighbor(k, a, 1)] - f[g.neighbor(k, a, -1)]) * inv_2h;
    return out;
}

VectorField gradient_upwind(const GridField& f, const VectorField& drift) {
    const Grid& g = f.grid();
    if (drift.dim() != g.dim() || !(drift.grid() == g))
        throw std::invalid_argument("gradient_upwind: drift must have one component per axis on the same grid");
    VectorField out(g);
    const double inv_h = 1.0 / g.h();
    for (int a = 0; a < g.dim(); ++a) {
        for (std::size_t k = 0; k < g.size(); ++k) {
            const double fwd = f[g.neighbor(k, a, 1)];
            const double bwd = f[g.neighbor(k, a, -1)];
            const double b = drift.components[a][k];
            double d;
            if (b > 0.0)
                d = (fwd - f[k]) * inv_h;
            else if (b < 0.0)
                d = (f[k] - bwd) * inv_h;
            else
                d = 0.5 * (fwd - bwd) * inv_h;
            out.components[a][k] = d;
        }
    }
    return out;
}

} // namespace qsmfg
