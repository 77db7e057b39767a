#include "qsmfg/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace qsmfg {

namespace {

struct Reduced {
    std::vector<double> supply;
    std::vector<double> demand;
    std::vector<int> rows;  // original indices kept
    std::vector<int> cols;
};

Reduced reduce_problem(std::span<const double> supply, std::span<const double> demand) {
    Reduced r;
    double s_total = 0.0;
    double d_total = 0.0;
    for (std::size_t i = 0; i < supply.size(); ++i) {
        if (supply[i] < 0.0) throw TransportError("transport: negative supply weight");
        s_total += supply[i];
        if (supply[i] > 0.0) {
            r.supply.push_back(supply[i]);
            r.rows.push_back(static_cast<int>(i));
        }
    }
    for (std::size_t j = 0; j < demand.size(); ++j) {
        if (demand[j] < 0.0) throw TransportError("transport: negative demand weight");
        d_total += demand[j];
        if (demand[j] > 0.0) {
            r.demand.push_back(demand[j]);
            r.cols.push_back(static_cast<int>(j));
        }
    }
    const double scale = std::max({s_total, d_total, 1e-300});
    if (std::fabs(s_total - d_total) > 1e-10 * scale)
        throw TransportError("transport: supply total " + std::to_string(s_total) + " differs from demand total " +
                             std::to_string(d_total));
    return r;
}

/// Primal network simplex on the complete bipartite graph rows x cols.
///
/// The basis is a spanning tree of m + n - 1 cells stored with adjacency
/// lists; node potentials are recomputed by a tree walk after each pivot.
/// Pricing uses block search; after a long run of degenerate pivots the
/// solver switches to Bland's rule until the objective strictly decreases.
class NetworkSimplex {
public:
    NetworkSimplex(const std::vector<double>& supply, const std::vector<double>& demand, Eigen::MatrixXd cost)
        : m_(static_cast<int>(supply.size())), n_(static_cast<int>(demand.size())), cost_(std::move(cost)) {
        init_northwest(supply, demand);
        block_ = std::max(16, static_cast<int>(std::sqrt(static_cast<double>(m_) * n_)));
        const double cmax = cost_.size() ? cost_.cwiseAbs().maxCoeff() : 0.0;
        eps_ = 1e-12 * (1.0 + cmax);
    }

    TransportResult run(std::size_t max_pivots) {
        TransportResult res;
        potential_.assign(m_ + n_, 0.0);
        parent_.assign(m_ + n_, -1);
        parent_cell_.assign(m_ + n_, -1);
        depth_.assign(m_ + n_, 0);
        std::size_t degenerate_streak = 0;
        const std::size_t bland_after = static_cast<std::size_t>(m_ + n_);
        while (true) {
            compute_potentials();
            const bool bland = degenerate_streak > bland_after;
            const auto [ei, ej] = bland ? price_bland() : price_block();
            if (ei < 0) break;
            if (res.pivots >= max_pivots)
                throw TransportError("transport: pivot budget of " + std::to_string(max_pivots) + " exhausted");
            const double theta = pivot(ei, ej, bland);
            ++res.pivots;
            degenerate_streak = theta > 0.0 ? 0 : degenerate_streak + 1;
        }
        double total = 0.0;
        for (std::size_t k = 0; k < cell_row_.size(); ++k) total += flow_[k] * cost_(cell_row_[k], cell_col_[k]);
        res.cost = total;
        return res;
    }

private:
    void add_cell(int i, int j, double f) {
        const int id = static_cast<int>(cell_row_.size());
        cell_row_.push_back(i);
        cell_col_.push_back(j);
        flow_.push_back(f);
        row_cells_[i].push_back(id);
        col_cells_[j].push_back(id);
    }

    void init_northwest(const std::vector<double>& supply, const std::vector<double>& demand) {
        row_cells_.assign(m_, {});
        col_cells_.assign(n_, {});
        int i = 0;
        int j = 0;
        double s = supply[0];
        double d = demand[0];
        while (true) {
            const double f = std::max(0.0, std::min(s, d));
            add_cell(i, j, f);
            s -= f;
            d -= f;
            const bool last_row = i == m_ - 1;
            const bool last_col = j == n_ - 1;
            if (last_row && last_col) break;
            if ((s <= d && !last_row) || last_col) {
                ++i;
                s = supply[i];
                d = std::max(d, 0.0);
            } else {
                ++j;
                d = demand[j];
                s = std::max(s, 0.0);
            }
        }
    }

    // Node ids: rows 0..m-1, columns m..m+n-1. Potentials satisfy
    // c(i, j) = pot(i) + pot(m + j) on every basic cell.
    void compute_potentials() {
        std::fill(parent_.begin(), parent_.end(), -1);
        stack_.clear();
        stack_.push_back(0);
        potential_[0] = 0.0;
        depth_[0] = 0;
        parent_[0] = 0;
        parent_cell_[0] = -1;
        while (!stack_.empty()) {
            const int node = stack_.back();
            stack_.pop_back();
            const auto& cells = node < m_ ? row_cells_[node] : col_cells_[node - m_];
            for (int c : cells) {
                const int other = node < m_ ? m_ + cell_col_[c] : cell_row_[c];
                if (parent_[other] != -1) continue;
                parent_[other] = node;
                parent_cell_[other] = c;
                depth_[other] = depth_[node] + 1;
                potential_[other] = cost_(cell_row_[c], cell_col_[c]) - potential_[node];
                stack_.push_back(other);
            }
        }
    }

    double reduced(int i, int j) const { return cost_(i, j) - potential_[i] - potential_[m_ + j]; }

    std::pair<int, int> price_block() {
        const long total = static_cast<long>(m_) * n_;
        double best = -eps_;
        int bi = -1;
        int bj = -1;
        long seen = 0;
        for (long step = 0; step < total; ++step) {
            const long idx = (next_ + step) % total;
            const int i = static_cast<int>(idx / n_);
            const int j = static_cast<int>(idx % n_);
            const double r = reduced(i, j);
            if (r < best) {
                best = r;
                bi = i;
                bj = j;
            }
            if (++seen >= block_ && bi >= 0) {
                next_ = (idx + 1) % total;
                return {bi, bj};
            }
        }
        return {bi, bj};
    }

    std::pair<int, int> price_bland() const {
        for (int i = 0; i < m_; ++i)
            for (int j = 0; j < n_; ++j)
                if (reduced(i, j) < -eps_) return {i, j};
        return {-1, -1};
    }

    double pivot(int ei, int ej, bool bland) {
        // Cycle: entering cell (+), then the tree path from column ej back to
        // row ei with alternating signs starting with (-).
        path_a_.clear();
        path_b_.clear();
        int a = m_ + ej;
        int b = ei;
        while (depth_[a] > depth_[b]) {
            path_a_.push_back(parent_cell_[a]);
            a = parent_[a];
        }
        while (depth_[b] > depth_[a]) {
            path_b_.push_back(parent_cell_[b]);
            b = parent_[b];
        }
        while (a != b) {
            path_a_.push_back(parent_cell_[a]);
            a = parent_[a];
            path_b_.push_back(parent_cell_[b]);
            b = parent_[b];
        }
        cycle_.clear();
        cycle_.insert(cycle_.end(), path_a_.begin(), path_a_.end());
        cycle_.insert(cycle_.end(), path_b_.rbegin(), path_b_.rend());

        int leave = -1;
        double theta = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < cycle_.size(); t += 2) {
            const int c = cycle_[t];
            const double f = flow_[c];
            if (f < theta) {
                theta = f;
                leave = c;
            } else if (bland && f == theta && key(c) < key(leave)) {
                leave = c;
            }
        }
        for (std::size_t t = 0; t < cycle_.size(); ++t) {
            const int c = cycle_[t];
            if (t % 2 == 0)
                flow_[c] -= theta;
            else
                flow_[c] += theta;
        }
        const int li = cell_row_[leave];
        const int lj = cell_col_[leave];
        erase(row_cells_[li], leave);
        erase(col_cells_[lj], leave);
        cell_row_[leave] = ei;
        cell_col_[leave] = ej;
        flow_[leave] = theta;
        row_cells_[ei].push_back(leave);
        col_cells_[ej].push_back(leave);
        return theta;
    }

    long key(int cell) const { return static_cast<long>(cell_row_[cell]) * n_ + cell_col_[cell]; }

    static void erase(std::vector<int>& v, int id) {
        auto it = std::find(v.begin(), v.end(), id);
        *it = v.back();
        v.pop_back();
    }

    int m_;
    int n_;
    Eigen::MatrixXd cost_;
    double eps_ = 0.0;
    int block_ = 16;
    long next_ = 0;

    std::vector<int> cell_row_;
    std::vector<int> cell_col_;
    std::vector<double> flow_;
    std::vector<std::vector<int>> row_cells_;
    std::vector<std::vector<int>> col_cells_;

    std::vector<double> potential_;
    std::vector<int> parent_;
    std::vector<int> parent_cell_;
    std::vector<int> depth_;
    std::vector<int> stack_;
    std::vector<int> path_a_;
    std::vector<int> path_b_;
    std::vector<int> cycle_;
};

Eigen::MatrixXd restrict_cost(const Eigen::MatrixXd& cost, const Reduced& r) {
    Eigen::MatrixXd c(r.rows.size(), r.cols.size());
    for (std::size_t i = 0; i < r.rows.size(); ++i)
        for (std::size_t j = 0; j < r.cols.size(); ++j) c(i, j) = cost(r.rows[i], r.cols[j]);
    return c;
}

void check_shapes(std::span<const double> supply, std::span<const double> demand, const Eigen::MatrixXd& cost,
                  const TransportOptions& options) {
    if (cost.rows() != static_cast<Eigen::Index>(supply.size()) ||
        cost.cols() != static_cast<Eigen::Index>(demand.size()))
        throw TransportError("transport: cost matrix shape does not match the weights");
    if (supply.size() + demand.size() > options.max_atoms)
        throw TransportError("transport: " + std::to_string(supply.size() + demand.size()) +
                             " atoms exceed the configured cap of " + std::to_string(options.max_atoms));
}

} // namespace

TransportResult solve_transport(std::span<const double> supply, std::span<const double> demand,
                                const Eigen::MatrixXd& cost, const TransportOptions& options) {
    check_shapes(supply, demand, cost, options);
    if (options.method == TransportOptions::Method::sinkhorn) return sinkhorn_transport(supply, demand, cost, options);
    Reduced r = reduce_problem(supply, demand);
    if (r.supply.empty() || r.demand.empty()) return {};
    // absorb rounding-level total mismatch into the demand side
    const double s_total = std::accumulate(r.supply.begin(), r.supply.end(), 0.0);
    const double d_total = std::accumulate(r.demand.begin(), r.demand.end(), 0.0);
    for (double& d : r.demand) d *= s_total / d_total;
    NetworkSimplex ns(r.supply, r.demand, restrict_cost(cost, r));
    return ns.run(options.max_pivots);
}

TransportResult sinkhorn_transport(std::span<const double> supply, std::span<const double> demand,
                                   const Eigen::MatrixXd& cost, const TransportOptions& options) {
    check_shapes(supply, demand, cost, options);
    Reduced r = reduce_problem(supply, demand);
    if (r.supply.empty() || r.demand.empty()) return {};
    const Eigen::MatrixXd c = restrict_cost(cost, r);
    const int m = static_cast<int>(r.supply.size());
    const int n = static_cast<int>(r.demand.size());
    const double eps = options.sinkhorn_epsilon;
    const double s_total = std::accumulate(r.supply.begin(), r.supply.end(), 0.0);
    const double d_total = std::accumulate(r.demand.begin(), r.demand.end(), 0.0);
    std::vector<double> log_a(m);
    std::vector<double> log_b(n);
    for (int i = 0; i < m; ++i) log_a[i] = std::log(r.supply[i] / s_total);
    for (int j = 0; j < n; ++j) log_b[j] = std::log(r.demand[j] / d_total);
    std::vector<double> f(m, 0.0);
    std::vector<double> g(n, 0.0);
    auto logsumexp = [](const std::vector<double>& v) {
        const double mx = *std::max_element(v.begin(), v.end());
        double s = 0.0;
        for (double x : v) s += std::exp(x - mx);
        return mx + std::log(s);
    };
    std::vector<double> tmp_n(n);
    std::vector<double> tmp_m(m);
    TransportResult res;
    for (int it = 0; it < options.sinkhorn_max_iterations; ++it) {
        double change = 0.0;
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) tmp_n[j] = (g[j] - c(i, j)) / eps + log_b[j];
            const double fi = -eps * logsumexp(tmp_n);
            change = std::max(change, std::fabs(fi - f[i]));
            f[i] = fi;
        }
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < m; ++i) tmp_m[i] = (f[i] - c(i, j)) / eps + log_a[i];
            const double gj = -eps * logsumexp(tmp_m);
            change = std::max(change, std::fabs(gj - g[j]));
            g[j] = gj;
        }
        res.pivots = static_cast<std::size_t>(it + 1);
        if (change < options.sinkhorn_tolerance) break;
    }
    double total = 0.0;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            total += std::exp((f[i] + g[j] - c(i, j)) / eps + log_a[i] + log_b[j]) * c(i, j);
    res.cost = total * s_total;
    return res;
}

} // namespace qsmfg
