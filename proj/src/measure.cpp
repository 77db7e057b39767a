#include "qsmfg/measure.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace qsmfg {

DensityField::DensityField(GridField values) : field_(std::move(values)) {
    const double mn = field_.min();
    if (mn < 0.0) throw std::invalid_argument("density: negative value " + std::to_string(mn));
    const double mass = field_.sum() * grid().cell_volume();
    if (std::fabs(mass - 1.0) > 1e-12)
        throw std::invalid_argument("density: mass " + std::to_string(mass) + " differs from 1");
}

DensityField DensityField::normalized(GridField values) {
    for (double& v : values.values()) v = std::max(v, 0.0);
    const double mass = values.sum() * values.grid().cell_volume();
    if (!(mass > 0.0)) throw std::invalid_argument("density: cannot normalise a field with zero mass");
    values *= 1.0 / mass;
    return DensityField(std::move(values));
}

DensityField DensityField::uniform(const Grid& grid) { return DensityField(GridField(grid, 1.0)); }

DensityField DensityField::delta(const Grid& grid, std::size_t node) {
    GridField f(grid, 0.0);
    f[node] = 1.0 / grid.cell_volume();
    return DensityField(std::move(f));
}

std::vector<double> DensityField::weights() const {
    std::vector<double> w(field_.data());
    const double vol = grid().cell_volume();
    for (double& v : w) v *= vol;
    return w;
}

ControlField::ControlField(const Grid& grid, const ControlSet& set, std::vector<Vec> values)
    : grid_(grid), set_(set), values_(std::move(values)) {
    if (values_.size() != grid_.size()) throw std::invalid_argument("control field: value count mismatch");
    for (auto& a : values_) {
        if (a.size() != set_.dim()) throw std::invalid_argument("control field: control dimension mismatch");
        if (!set_.contains(a)) {
            if (!set_.contains(a, 1e-12)) throw std::invalid_argument("control field: value outside the control set");
            a = set_.project(a);
        }
    }
}

ControlField ControlField::constant(const Grid& grid, const ControlSet& set, const Vec& a) {
    return ControlField(grid, set, std::vector<Vec>(grid.size(), a));
}

ControlField ControlField::blend(const ControlField& a, const ControlField& b, double theta) {
    std::vector<Vec> v(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) v[k] = theta * a[k] + (1.0 - theta) * b[k];
    return ControlField(a.grid_, a.set_, std::move(v));
}

double sup_distance(const ControlField& a, const ControlField& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s = std::max(s, (a[k] - b[k]).norm());
    return s;
}

JointMeasure::JointMeasure(std::vector<Atom> atoms, std::optional<Grid> source)
    : atoms_(std::move(atoms)), source_(std::move(source)) {
    for (const auto& at : atoms_)
        if (!(at.w >= 0.0)) throw std::invalid_argument("joint measure: negative atom weight");
}

double JointMeasure::mass() const {
    double s = 0.0;
    for (const auto& at : atoms_) s += at.w;
    return s;
}

Vec JointMeasure::mean_control() const {
    Vec s = Vec::Zero(control_dim());
    for (const auto& at : atoms_) s += at.w * at.a;
    return s;
}

JointMeasure JointMeasure::scaled(double s) const {
    std::vector<Atom> out = atoms_;
    for (auto& at : out) at.w *= s;
    return JointMeasure(std::move(out), source_);
}

JointMeasure pushforward(const DensityField& m, const ControlField& a) {
    if (!(m.grid() == a.grid())) throw std::invalid_argument("pushforward: density and control field grids differ");
    const Grid& g = m.grid();
    const double vol = g.cell_volume();
    std::vector<Atom> atoms(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) atoms[k] = Atom{g.coord(k), a[k], m[k] * vol};
    return JointMeasure(std::move(atoms), g);
}

DensityField state_marginal(const JointMeasure& mu, const Grid& grid) {
    GridField f(grid, 0.0);
    const double inv_vol = 1.0 / grid.cell_volume();
    for (const auto& at : mu.atoms()) {
        const Vec x = wrap_point(at.x);
        int i0 = static_cast<int>(std::lround(x[0] * grid.n()));
        int i1 = grid.dim() == 2 ? static_cast<int>(std::lround(x[1] * grid.n())) : 0;
        f[grid.flat(i0, i1)] += at.w * inv_vol;
    }
    return DensityField::normalized(std::move(f));
}

double joint_distance(const Vec& x1, const Vec& a1, const Vec& x2, const Vec& a2) {
    return torus_distance(x1, x2) + (a1 - a2).norm();
}

double wasserstein1_joint(const JointMeasure& nu1, const JointMeasure& nu2, const TransportOptions& options) {
    const double m1 = nu1.mass();
    const double m2 = nu2.mass();
    if (std::fabs(m1 - m2) > 1e-10)
        throw std::invalid_argument("wasserstein1_joint: masses " + std::to_string(m1) + " and " + std::to_string(m2) +
                                    " differ");
    if (nu1.size() + nu2.size() > options.max_atoms)
        throw TransportError("wasserstein1_joint: " + std::to_string(nu1.size() + nu2.size()) +
                             " atoms exceed the configured cap of " + std::to_string(options.max_atoms));
    // drop empty atoms before building the dense cost matrix
    std::vector<const Atom*> p1;
    std::vector<const Atom*> p2;
    for (const auto& at : nu1.atoms())
        if (at.w > 0.0) p1.push_back(&at);
    for (const auto& at : nu2.atoms())
        if (at.w > 0.0) p2.push_back(&at);
    if (p1.empty() || p2.empty()) return 0.0;
    std::vector<double> s(p1.size());
    std::vector<double> d(p2.size());
    Eigen::MatrixXd c(p1.size(), p2.size());
    for (std::size_t i = 0; i < p1.size(); ++i) {
        s[i] = p1[i]->w;
        for (std::size_t j = 0; j < p2.size(); ++j) c(i, j) = joint_distance(p1[i]->x, p1[i]->a, p2[j]->x, p2[j]->a);
    }
    for (std::size_t j = 0; j < p2.size(); ++j) d[j] = p2[j]->w;
    return solve_transport(s, d, c, options).cost;
}

double wasserstein1_circle(const DensityField& m1, const DensityField& m2) {
    if (!(m1.grid() == m2.grid())) throw std::invalid_argument("wasserstein1: grids differ");
    if (m1.grid().dim() != 1) throw std::invalid_argument("wasserstein1_circle: only defined for d = 1");
    const Grid& g = m1.grid();
    const double h = g.h();
    std::vector<double> cum(g.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        acc += (m1[i] - m2[i]) * h;
        cum[i] = acc;
    }
    std::vector<double> sorted = cum;
    const auto mid = sorted.begin() + static_cast<long>(sorted.size() / 2);
    std::nth_element(sorted.begin(), mid, sorted.end());
    const double c = *mid;
    double w = 0.0;
    for (double v : cum) w += std::fabs(v - c);
    return w * h;
}

double wasserstein1_state_lp(const DensityField& m1, const DensityField& m2, const TransportOptions& options) {
    if (!(m1.grid() == m2.grid())) throw std::invalid_argument("wasserstein1: grids differ");
    const Grid& g = m1.grid();
    std::vector<std::size_t> i1;
    std::vector<std::size_t> i2;
    for (std::size_t k = 0; k < g.size(); ++k) {
        if (m1[k] > 0.0) i1.push_back(k);
        if (m2[k] > 0.0) i2.push_back(k);
    }
    if (i1.size() + i2.size() > options.max_atoms)
        throw TransportError("wasserstein1_state: atom count exceeds the configured cap");
    const double vol = g.cell_volume();
    std::vector<double> s(i1.size());
    std::vector<double> d(i2.size());
    Eigen::MatrixXd c(i1.size(), i2.size());
    for (std::size_t i = 0; i < i1.size(); ++i) {
        s[i] = m1[i1[i]] * vol;
        const Vec xi = g.coord(i1[i]);
        for (std::size_t j = 0; j < i2.size(); ++j) c(i, j) = torus_distance(xi, g.coord(i2[j]));
    }
    for (std::size_t j = 0; j < i2.size(); ++j) d[j] = m2[i2[j]] * vol;
    return solve_transport(s, d, c, options).cost;
}

double wasserstein1_state(const DensityField& m1, const DensityField& m2, const TransportOptions& options) {
    if (m1.grid().dim() == 1) return wasserstein1_circle(m1, m2);
    return wasserstein1_state_lp(m1, m2, options);
}

} // namespace qsmfg
