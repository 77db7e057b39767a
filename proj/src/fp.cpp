#include "qsmfg/fp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

namespace qsmfg {

double FpTrajectory::worst_mass_error() const {
    double w = 0.0;
    for (const auto& m : densities) w = std::max(w, std::fabs(m.mass() - 1.0));
    return w;
}

DensityField fp_step(const DensityField& m, const VectorField& g, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("fp_step: dt must be positive");
    const Grid& grid = m.grid();
    if (g.dim() != grid.dim() || g.grid() != grid) throw std::invalid_argument("fp_step: drift lives on a different grid");
    const double h = grid.h();
    const double dif = dt / (h * h);
    const double adv = dt / h;

    using Triplet = Eigen::Triplet<double>;
    std::vector<Triplet> t;
    t.reserve(grid.size() * (1 + 4 * grid.dim()));
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        t.emplace_back(i, i, 1.0);
        for (int ax = 0; ax < grid.dim(); ++ax) {
            // face k+1/2 between i and j: flux F = v+ m_i - v- m_j leaves i, enters j
            const std::size_t kn = grid.neighbor(k, ax, 1);
            const auto j = static_cast<Eigen::Index>(kn);
            const double v = -0.5 * (g.components[ax][k] + g.components[ax][kn]);
            const double vp = std::max(v, 0.0);
            const double vm = std::max(-v, 0.0);
            const double out_i = dif + adv * vp;  // coefficient of m_i in the transfer i -> j
            const double out_j = dif + adv * vm;  // coefficient of m_j in the transfer j -> i
            t.emplace_back(i, i, out_i);
            t.emplace_back(j, i, -out_i);
            t.emplace_back(j, j, out_j);
            t.emplace_back(i, j, -out_j);
        }
    }
    Eigen::SparseMatrix<double> a(static_cast<Eigen::Index>(grid.size()), static_cast<Eigen::Index>(grid.size()));
    a.setFromTriplets(t.begin(), t.end());
    a.makeCompressed();

    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(a);
    if (lu.info() != Eigen::Success) throw FpError("fp_step: factorisation failed");
    const Eigen::Map<const Eigen::VectorXd> rhs(m.field().data().data(), static_cast<Eigen::Index>(grid.size()));
    Eigen::VectorXd x = lu.solve(rhs);
    // one refinement step pulls the mass error to rounding level
    x += lu.solve(rhs - a * x);

    GridField out(grid);
    double lowest = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k) {
        out[k] = x[static_cast<Eigen::Index>(k)];
        lowest = std::min(lowest, out[k]);
    }
    if (lowest < -1e-13) throw FpError("fp_step: negative density " + std::to_string(lowest));
    if (lowest < 0.0) {
        for (double& v : out.values()) v = std::max(v, 0.0);
        out *= 1.0 / (out.sum() * grid.cell_volume());
    }
    const double mass = out.sum() * grid.cell_volume();
    if (std::fabs(mass - 1.0) > 1e-12) throw FpError("fp_step: mass drift " + std::to_string(mass - 1.0));
    return DensityField(std::move(out));
}

FpTrajectory fp_evolve(const DensityField& m0, const DriftProvider& drift, double horizon, double dt) {
    if (!(dt > 0.0) || horizon < 0.0) throw std::invalid_argument("fp_evolve: need dt > 0 and T >= 0");
    const double steps = horizon / dt;
    const auto n = static_cast<std::size_t>(std::llround(steps));
    if (std::fabs(steps - static_cast<double>(n)) > 1e-9 * std::max(1.0, steps))
        throw std::invalid_argument("fp_evolve: T must be a multiple of dt");
    FpTrajectory tr;
    tr.dt = dt;
    tr.horizon = horizon;
    tr.times.reserve(n + 1);
    tr.densities.reserve(n + 1);
    tr.times.push_back(0.0);
    tr.densities.push_back(m0);
    for (std::size_t j = 0; j < n; ++j) {
        VectorField g = drift(j, tr.densities.back());
        tr.densities.push_back(fp_step(tr.densities.back(), g, dt));
        tr.drifts.push_back(std::move(g));
        tr.times.push_back(static_cast<double>(j + 1) * dt);
    }
    return tr;
}

std::vector<std::size_t> subsample_indices(std::size_t last, std::size_t points) {
    std::vector<std::size_t> idx;
    if (points < 2 || last + 1 <= points) {
        for (std::size_t j = 0; j <= last; ++j) idx.push_back(j);
        return idx;
    }
    for (std::size_t i = 0; i < points; ++i) {
        const std::size_t j = (i * last + (points - 1) / 2) / (points - 1);
        if (idx.empty() || idx.back() != j) idx.push_back(j);
    }
    return idx;
}

double holder_report(const FpTrajectory& trajectory, std::size_t points) {
    if (trajectory.densities.size() < 2) throw std::invalid_argument("holder_report: need at least two densities");
    const auto idx = subsample_indices(trajectory.densities.size() - 1, points);
    double best = 0.0;
    for (std::size_t a = 0; a < idx.size(); ++a)
        for (std::size_t b = a + 1; b < idx.size(); ++b) {
            const double w = wasserstein1_state(trajectory.densities[idx[a]], trajectory.densities[idx[b]]);
            best = std::max(best, w / std::sqrt(trajectory.times[idx[b]] - trajectory.times[idx[a]]));
        }
    return best;
}

double sobolev_surrogate(const FpTrajectory& trajectory) {
    double total = 0.0;
    for (std::size_t j = 1; j < trajectory.densities.size(); ++j) {
        const GridField& m = trajectory.densities[j].field();
        const Grid& g = m.grid();
        double s = 0.0;
        for (std::size_t k = 0; k < g.size(); ++k) {
            s += m[k] * m[k];
            for (int ax = 0; ax < g.dim(); ++ax) {
                const double d = (m[g.neighbor(k, ax, 1)] - m[k]) / g.h();
                s += d * d;
            }
        }
        total += trajectory.dt * s * g.cell_volume();
    }
    return total;
}

InitialDensity parse_initial_density(const std::string& name) {
    if (name == "uniform") return InitialDensity::uniform;
    if (name == "von_mises") return InitialDensity::von_mises;
    if (name == "two_bump") return InitialDensity::two_bump;
    throw std::invalid_argument("unknown initial density '" + name + "'");
}

DensityField initial_density(const Grid& grid, InitialDensity kind, double concentration, double centre) {
    if (kind == InitialDensity::uniform) return DensityField::uniform(grid);
    if (concentration < 0.0) throw std::invalid_argument("initial density: concentration must be nonnegative");
    constexpr double two_pi = 2.0 * std::numbers::pi;
    auto bump = [&](const Vec& x, double c) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < x.size(); ++i) s += std::cos(two_pi * (x[i] - c));
        return std::exp(concentration * (s - static_cast<double>(x.size())));
    };
    GridField f = GridField::from_function(grid, [&](const Vec& x) {
        return kind == InitialDensity::von_mises ? bump(x, centre) : bump(x, centre) + bump(x, centre + 0.5);
    });
    return DensityField::normalized(std::move(f));
}

} // namespace qsmfg
