#include "qsmfg/control_set.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace qsmfg {

ControlSet ControlSet::ball(int dim, double radius) {
    if (dim < 1 || dim > 2) throw std::invalid_argument("control set: dimension must be 1 or 2");
    if (!(radius > 0.0)) throw std::invalid_argument("control set: ball radius must be positive");
    ControlSet s;
    s.kind_ = Kind::ball;
    s.dim_ = dim;
    s.radius_ = radius;
    s.lo_ = Vec::Constant(dim, -radius);
    s.hi_ = Vec::Constant(dim, radius);
    return s;
}

ControlSet ControlSet::box(Vec lo, Vec hi) {
    if (lo.size() != hi.size() || lo.size() < 1 || lo.size() > 2)
        throw std::invalid_argument("control set: box bounds must share dimension 1 or 2");
    for (Eigen::Index k = 0; k < lo.size(); ++k)
        if (!(lo[k] < hi[k])) throw std::invalid_argument("control set: box needs lo < hi componentwise");
    ControlSet s;
    s.kind_ = Kind::box;
    s.dim_ = static_cast<int>(lo.size());
    s.lo_ = std::move(lo);
    s.hi_ = std::move(hi);
    s.radius_ = 0.5 * (s.hi_ - s.lo_).norm();
    return s;
}

bool ControlSet::contains(const Vec& a, double tol) const {
    if (a.size() != dim_) return false;
    if (kind_ == Kind::ball) return a.norm() <= radius_ + tol;
    for (int k = 0; k < dim_; ++k)
        if (a[k] < lo_[k] - tol || a[k] > hi_[k] + tol) return false;
    return true;
}

Vec ControlSet::project(const Vec& a) const {
    if (kind_ == Kind::ball) {
        const double r = a.norm();
        return r <= radius_ ? a : Vec(a * (radius_ / r));
    }
    Vec out = a;
    for (int k = 0; k < dim_; ++k) out[k] = std::clamp(a[k], lo_[k], hi_[k]);
    return out;
}

Vec ControlSet::closest_to_origin() const { return project(Vec::Zero(dim_)); }

double ControlSet::diameter() const { return kind_ == Kind::ball ? 2.0 * radius_ : (hi_ - lo_).norm(); }

double ControlSet::mesh_spacing(int points_per_axis) const {
    if (points_per_axis < 2) throw std::invalid_argument("control mesh: need at least 2 points per axis");
    return (hi_ - lo_).maxCoeff() / (points_per_axis - 1);
}

std::vector<Vec> ControlSet::mesh(int points_per_axis) const {
    if (points_per_axis < 2) throw std::invalid_argument("control mesh: need at least 2 points per axis");
    const int m = points_per_axis;
    auto node = [&](int axis, int i) {
        // hit the endpoints exactly
        if (i == m - 1) return hi_[axis];
        return lo_[axis] + (hi_[axis] - lo_[axis]) * static_cast<double>(i) / (m - 1);
    };
    std::vector<Vec> pts;
    if (dim_ == 1) {
        pts.reserve(m);
        for (int i = 0; i < m; ++i) pts.push_back(Vec::Constant(1, node(0, i)));
        return pts;
    }
    for (int j = 0; j < m; ++j)
        for (int i = 0; i < m; ++i) {
            Vec a(2);
            a << node(0, i), node(1, j);
            if (kind_ == Kind::box || a.norm() <= radius_) pts.push_back(a);
        }
    if (kind_ == Kind::ball) {
        const double spacing = mesh_spacing(m);
        const int ring = std::max(8, static_cast<int>(std::ceil(2.0 * std::numbers::pi * radius_ / spacing)));
        for (int k = 0; k < ring; ++k) {
            const double th = 2.0 * std::numbers::pi * k / ring;
            Vec a(2);
            a << radius_ * std::cos(th), radius_ * std::sin(th);
            pts.push_back(a);
        }
    }
    return pts;
}

bool ControlSet::on_boundary(const Vec& a, double tol) const {
    if (kind_ == Kind::ball) return a.norm() >= radius_ - tol;
    for (int k = 0; k < dim_; ++k)
        if (a[k] <= lo_[k] + tol || a[k] >= hi_[k] - tol) return true;
    return false;
}

} // namespace qsmfg
