#include "qsmfg/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace qsmfg {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

} // namespace

// ---------------------------------------------------------------------------
// Memory kernels and aggregation

MemoryKernel MemoryKernel::zero() { return {}; }

MemoryKernel MemoryKernel::constant(double k0) {
    if (k0 < 0.0) throw std::invalid_argument("memory kernel: must be nonnegative");
    return {"constant", [k0](double) { return k0; }};
}

MemoryKernel MemoryKernel::linear(double k0) {
    if (k0 < 0.0) throw std::invalid_argument("memory kernel: must be nonnegative");
    return {"linear", [k0](double tau) { return k0 * tau; }};
}

MemoryKernel MemoryKernel::exponential(double k0, double decay_time) {
    if (k0 < 0.0 || !(decay_time > 0.0)) throw std::invalid_argument("memory kernel: need k0 >= 0 and decay time > 0");
    return {"exponential", [k0, decay_time](double tau) { return k0 * std::exp(-tau / decay_time); }};
}

JointMeasure memory_aggregate(const MeasureTrajectory& trajectory, const MemoryKernel& kernel, double t) {
    const auto& times = trajectory.times;
    if (times.empty() || times.size() != trajectory.measures.size())
        throw std::invalid_argument("memory_aggregate: malformed trajectory");
    const double tol = 1e-9 * std::max(1.0, std::fabs(t));
    if (t > times.back() + tol)
        throw std::invalid_argument("memory_aggregate: trajectory ends at " + std::to_string(times.back()) +
                                    ", before t = " + std::to_string(t));
    std::size_t last = 0;
    while (last < times.size() && times[last] < t - tol) ++last;
    if (last == times.size() || std::fabs(times[last] - t) > tol)
        throw std::invalid_argument("memory_aggregate: t is not a node of the trajectory time grid");

    std::vector<double> coef(last + 1, 0.0);
    for (std::size_t i = 0; i < last; ++i) {
        const double half = 0.5 * (times[i + 1] - times[i]);
        coef[i] += half * kernel(times[i]);
        coef[i + 1] += half * kernel(times[i + 1]);
    }
    std::vector<Atom> atoms;
    for (std::size_t i = 0; i <= last; ++i) {
        if (coef[i] < 0.0) throw std::invalid_argument("memory_aggregate: kernel must be nonnegative");
        if (coef[i] == 0.0) continue;
        for (const auto& at : trajectory.measures[i].atoms()) atoms.push_back(Atom{at.x, at.a, at.w * coef[i]});
    }
    return JointMeasure(std::move(atoms));
}

// ---------------------------------------------------------------------------
// Contexts

MuContext MuContext::instant(JointMeasure mu) {
    MuContext c;
    c.data_ = std::move(mu);
    return c;
}

MuContext MuContext::history(double t, std::shared_ptr<const MeasureTrajectory> trajectory) {
    if (!trajectory) throw std::invalid_argument("history context: null trajectory");
    MuContext c;
    c.data_ = History{t, std::move(trajectory)};
    return c;
}

const JointMeasure& MuContext::measure() const {
    if (!is_instant()) throw std::invalid_argument("context holds a history, not an instantaneous measure");
    return std::get<JointMeasure>(data_);
}

const MuContext::History& MuContext::past() const {
    if (is_instant()) throw std::invalid_argument("context holds an instantaneous measure, not a history");
    return std::get<History>(data_);
}

// ---------------------------------------------------------------------------
// Hamiltonian and optimal control

Vec FrozenModel::control(const Vec& x, const Vec& p) const {
    if (auto a = closed_form_control(x, p)) return *a;
    return brute_force_argmax(*this, x, p, mesh_).control;
}

BruteForceResult brute_force_argmax(const FrozenModel& frozen, const Vec& x, const Vec& p, int mesh) {
    const auto pts = frozen.controls().mesh(mesh);
    const double spacing = frozen.controls().mesh_spacing(mesh);
    std::vector<double> vals(pts.size());
    std::size_t best = 0;
    for (std::size_t k = 0; k < pts.size(); ++k) {
        vals[k] = frozen.objective(x, p, pts[k]);
        if (vals[k] > vals[best]) best = k;
    }
    BruteForceResult r{pts[best], vals[best], false, false};

    const double tie_tol = 1e-12 * (1.0 + std::fabs(r.value));
    double steepest = 0.0;
    for (std::size_t k = 0; k < pts.size(); ++k) {
        const double dist = (pts[k] - pts[best]).norm();
        if (vals[k] >= r.value - tie_tol && dist > 1.0001 * spacing) r.non_unique = true;
        if (dist > 0.0 && dist <= 1.5 * spacing) steepest = std::max(steepest, r.value - vals[k]);
    }
    if (frozen.controls().on_boundary(r.control, 1e-12) && steepest > 1e-3 * (1.0 + std::fabs(r.value)))
        r.coarse_mesh_warning = true;
    return r;
}

BruteForceResult brute_force_argmax(const Model& model, const Vec& x, const Vec& p, const MuContext& ctx, int mesh) {
    return brute_force_argmax(*model.freeze(ctx), x, p, mesh);
}

double hamiltonian_value(const Model& model, const Vec& x, const Vec& p, const MuContext& ctx) {
    return model.freeze(ctx)->hamiltonian(x, p);
}

Vec optimal_control(const Model& model, const Vec& x, const Vec& p, const MuContext& ctx) {
    return model.freeze(ctx)->control(x, p);
}

Vec hamiltonian_gradient_p(const Model& model, const Vec& x, const Vec& p, const MuContext& ctx) {
    return model.freeze(ctx)->hamiltonian_gradient(x, p);
}

// ---------------------------------------------------------------------------
// Example 1

namespace {

/// Saturated quadratic control: l0 p inside |p| <= R / l0, R p / |p| outside.
Vec saturated_linear_control(const Vec& p, double l0, double radius) {
    const double np = p.norm();
    if (np * l0 <= radius) return l0 * p;
    return radius * p / np;
}

double potential_term(const Vec& x, double v0) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < x.size(); ++k) s += std::cos(two_pi * x[k]);
    return v0 * s;
}

Vec background_drift(const Vec& x, double beta) {
    Vec b(x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) b[k] = beta * std::sin(two_pi * x[k]);
    return b;
}

class Example1Frozen final : public FrozenModel {
public:
    struct Site {
        Vec y;
        Vec wa;  // sum of w * a over atoms at y
    };

    Example1Frozen(const Example1Params& prm, const ControlSet& controls, int mesh, double l0, std::vector<Site> sites)
        : FrozenModel(controls, mesh), prm_(prm), l0_(l0), sites_(std::move(sites)) {}

    Vec b0(const Vec& x) const {
        Vec b = background_drift(x, prm_.beta);
        if (prm_.kappa == 0.0) return b;
        const double inv = 1.0 / (2.0 * prm_.sigma * prm_.sigma);
        for (const auto& s : sites_) {
            const double r = torus_distance(x, s.y);
            b += (prm_.kappa * std::exp(-r * r * inv)) * s.wa;
        }
        return b;
    }

    Vec drift(const Vec& x, const Vec& a) const override { return b0(x) - a; }
    double cost(const Vec& x, const Vec& a) const override {
        return a.squaredNorm() / (2.0 * l0_) + potential_term(x, prm_.potential);
    }
    std::optional<Vec> closed_form_control(const Vec&, const Vec& p) const override {
        return saturated_linear_control(p, l0_, prm_.radius);
    }

    double l0() const { return l0_; }

private:
    Example1Params prm_;
    double l0_;
    std::vector<Site> sites_;
};

std::vector<Example1Frozen::Site> collapse_sites(const JointMeasure& nu, double scale) {
    std::vector<const Atom*> order;
    for (const auto& at : nu.atoms())
        if (at.w > 0.0) order.push_back(&at);
    auto less = [](const Atom* u, const Atom* v) {
        for (Eigen::Index k = 0; k < u->x.size(); ++k)
            if (u->x[k] != v->x[k]) return u->x[k] < v->x[k];
        return false;
    };
    std::stable_sort(order.begin(), order.end(), less);
    std::vector<Example1Frozen::Site> sites;
    for (const Atom* at : order) {
        if (sites.empty() || sites.back().y != at->x)
            sites.push_back({at->x, Vec::Zero(at->a.size())});
        sites.back().wa += (at->w * scale) * at->a;
    }
    return sites;
}

void check_example1(const Example1Params& p) {
    if (p.dim != 1 && p.dim != 2) throw std::invalid_argument("example1: dim must be 1 or 2");
    if (!(p.delta > 0.0)) throw std::invalid_argument("example1: delta must be positive");
    if (p.epsilon < 0.0) throw std::invalid_argument("example1: epsilon must be nonnegative");
    if (!(p.sigma > 0.0)) throw std::invalid_argument("example1: sigma must be positive");
    if (!(p.radius > 0.0)) throw std::invalid_argument("example1: radius must be positive");
}

} // namespace

Example1Model::Example1Model(Example1Params params)
    : params_(params), controls_((check_example1(params), ControlSet::ball(params.dim, params.radius))) {}

ModelConstants Example1Model::constants() const {
    const auto& p = params_;
    const double d = p.dim;
    const double lip_phi = 1.0 / (p.sigma * std::sqrt(std::numbers::e));
    ModelConstants c;
    c.K = std::max(std::fabs(p.beta) * std::sqrt(d) + std::fabs(p.kappa) * p.radius + p.radius,
                   p.radius * p.radius / (2.0 * p.delta) + std::fabs(p.potential) * d);
    c.L = std::max(two_pi * std::fabs(p.beta) * std::sqrt(d) + std::fabs(p.kappa) * p.radius * lip_phi,
                   two_pi * std::fabs(p.potential));
    // l0 is epsilon-Lipschitz in W1 because a -> a_k is 1-Lipschitz for the
    // joint metric; l = |a|^2 / (2 l0) then moves by at most R^2 eps / (2 delta^2).
    c.L_mu = std::max(p.radius * p.radius * p.epsilon / (2.0 * p.delta * p.delta),
                      std::fabs(p.kappa) * std::max(1.0, p.radius * lip_phi));
    c.lambda0 = p.radius * p.epsilon / p.delta;
    c.lambda1 = p.delta + p.epsilon * p.radius;
    c.Lambda0 = 1.0;
    return c;
}

std::unique_ptr<FrozenModel> Example1Model::freeze_on(const JointMeasure& nu) const {
    const double mass = nu.mass();
    const auto& p = params_;
    if (!(mass > 0.0))
        return std::make_unique<Example1Frozen>(p, controls_, control_mesh(), p.delta,
                                                std::vector<Example1Frozen::Site>{});
    const Vec mean = nu.mean_control() / mass;
    const double l0 = std::clamp(p.delta + p.epsilon * mean.norm(), p.delta, p.delta + p.epsilon * p.radius);
    return std::make_unique<Example1Frozen>(p, controls_, control_mesh(), l0,
                                            p.kappa == 0.0 ? std::vector<Example1Frozen::Site>{}
                                                           : collapse_sites(nu, 1.0 / mass));
}

std::unique_ptr<FrozenModel> Example1Model::freeze(const MuContext& ctx) const {
    if (!ctx.is_instant()) throw std::invalid_argument("example1: expects an instantaneous measure context");
    return freeze_on(ctx.measure());
}

Example2Model::Example2Model(Example1Params params, MemoryKernel kernel)
    : base_(params), kernel_(std::move(kernel)) {}

ModelConstants Example2Model::constants() const { return base_.constants(); }

std::unique_ptr<FrozenModel> Example2Model::freeze(const MuContext& ctx) const {
    if (ctx.is_instant()) throw std::invalid_argument("example2: expects a history context");
    const auto& h = ctx.past();
    return base_.freeze_on(memory_aggregate(*h.trajectory, kernel_, h.t));
}

// ---------------------------------------------------------------------------
// Separated model

namespace {

class SeparatedFrozen final : public FrozenModel {
public:
    SeparatedFrozen(const SeparatedParams& prm, const ControlSet& controls, int mesh, double l1)
        : FrozenModel(controls, mesh), prm_(prm), l1_(l1) {}

    Vec drift(const Vec& x, const Vec& a) const override { return background_drift(x, prm_.beta) - a; }
    double cost(const Vec& x, const Vec& a) const override {
        return a.squaredNorm() / (2.0 * prm_.control_scale) + potential_term(x, prm_.potential) + l1_;
    }
    std::optional<Vec> closed_form_control(const Vec&, const Vec& p) const override {
        return saturated_linear_control(p, prm_.control_scale, prm_.radius);
    }

private:
    SeparatedParams prm_;
    double l1_;
};

} // namespace

SeparatedModel::SeparatedModel(SeparatedParams params) : params_(params) {
    if (params.dim != 1 && params.dim != 2) throw std::invalid_argument("separated: dim must be 1 or 2");
    if (!(params.control_scale > 0.0)) throw std::invalid_argument("separated: control_scale must be positive");
    controls_ = ControlSet::ball(params.dim, params.radius);
}

double SeparatedModel::coupling_cost(const JointMeasure& nu) const {
    double mean_a = 0.0;
    double mean_cos = 0.0;
    for (const auto& at : nu.atoms()) {
        mean_a += at.w * at.a[0];
        mean_cos += at.w * std::cos(two_pi * at.x[0]);
    }
    return params_.gamma * mean_a + params_.eta * mean_cos;
}

SeparatedModel SeparatedModel::without_coupling() const {
    SeparatedParams p = params_;
    p.gamma = 0.0;
    p.eta = 0.0;
    return SeparatedModel(p);
}

ModelConstants SeparatedModel::constants() const {
    const auto& p = params_;
    const double d = p.dim;
    const double l1_bound = std::fabs(p.gamma) * p.radius + std::fabs(p.eta);
    ModelConstants c;
    c.K = std::max(std::fabs(p.beta) * std::sqrt(d) + p.radius,
                   p.radius * p.radius / (2.0 * p.control_scale) + std::fabs(p.potential) * d + l1_bound);
    c.L = std::max(two_pi * std::fabs(p.beta) * std::sqrt(d), two_pi * std::fabs(p.potential));
    c.L_mu = std::fabs(p.gamma) + two_pi * std::fabs(p.eta);
    c.lambda0 = 0.0;
    c.lambda1 = p.control_scale;
    c.Lambda0 = 1.0;
    return c;
}

std::unique_ptr<FrozenModel> SeparatedModel::freeze(const MuContext& ctx) const {
    if (!ctx.is_instant()) throw std::invalid_argument("separated: expects an instantaneous measure context");
    return std::make_unique<SeparatedFrozen>(params_, controls_, control_mesh(), coupling_cost(ctx.measure()));
}

// ---------------------------------------------------------------------------
// Constant cost

namespace {

class ConstantFrozen final : public FrozenModel {
public:
    ConstantFrozen(const ControlSet& controls, int mesh, double c) : FrozenModel(controls, mesh), c_(c) {}

    Vec drift(const Vec& x, const Vec&) const override { return Vec::Zero(x.size()); }
    double cost(const Vec&, const Vec&) const override { return c_; }
    std::optional<Vec> closed_form_control(const Vec&, const Vec&) const override {
        return controls().closest_to_origin();
    }

private:
    double c_;
};

} // namespace

ConstantCostModel::ConstantCostModel(int dim, double cost, double radius)
    : dim_(dim), cost_(cost), controls_(ControlSet::ball(dim, radius)) {}

ModelConstants ConstantCostModel::constants() const {
    ModelConstants c;
    c.K = std::fabs(cost_);
    c.Lambda0 = 0.0;
    return c;
}

std::unique_ptr<FrozenModel> ConstantCostModel::freeze(const MuContext&) const {
    return std::make_unique<ConstantFrozen>(controls_, control_mesh(), cost_);
}

// ---------------------------------------------------------------------------
// Validation

bool ValidationReport::passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const ValidationCheck& c) { return c.passed; });
}

JointMeasure random_graph_measure(const Grid& grid, const ControlSet& controls, unsigned long long seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.05, 1.0);
    const auto mesh = controls.mesh(41);
    std::uniform_int_distribution<std::size_t> pick(0, mesh.size() - 1);
    GridField f(grid);
    for (std::size_t k = 0; k < grid.size(); ++k) f[k] = unit(rng);
    const DensityField m = DensityField::normalized(std::move(f));
    std::vector<Vec> a(grid.size());
    for (auto& v : a) v = mesh[pick(rng)];
    return pushforward(m, ControlField(grid, controls, std::move(a)));
}

namespace {

MuContext sample_context(const Model& model, const Grid& grid, unsigned long long seed) {
    if (!model.uses_history()) return MuContext::instant(random_graph_measure(grid, model.controls(), seed));
    auto traj = std::make_shared<MeasureTrajectory>();
    for (int j = 0; j < 3; ++j) {
        traj->times.push_back(0.1 * j);
        traj->measures.push_back(random_graph_measure(grid, model.controls(), seed * 7 + j));
    }
    return MuContext::history(0.2, traj);
}

void note(ValidationCheck& c, double observed, double bound, const std::string& where) {
    const double margin = observed - bound;
    if (margin > c.margin) {
        c.margin = margin;
        c.worst = observed;
        c.tolerance = bound;
        c.detail = where;
    }
    if (margin > 0.0) c.passed = false;
}

} // namespace

ValidationReport validate_model(const Model& model, const Grid& grid, unsigned long long seed, int samples) {
    if (grid.dim() != model.dim()) throw std::invalid_argument("validate_model: grid and model dimensions differ");
    const ModelConstants k = model.constants();
    const int d = model.dim();
    const int mesh = model.control_mesh();
    const double spacing = model.controls().mesh_spacing(mesh);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> mom(-3.0, 3.0);
    auto rand_vec = [&](auto& dist) {
        Vec v(d);
        for (int i = 0; i < d; ++i) v[i] = dist(rng);
        return v;
    };

    ValidationCheck bounds{"coefficient bound K", true, 0.0, 0.0, ""};
    ValidationCheck control_bf{"closed-form control vs brute force", true, 0.0, 0.0, ""};
    ValidationCheck ham_bf{"closed-form hamiltonian vs brute force", true, 0.0, 0.0, ""};
    ValidationCheck grad_fd{"H_p vs finite differences", true, 0.0, 0.0, ""};
    ValidationCheck lipschitz{"x-Lipschitz bound of H", true, 0.0, 0.0, ""};
    ValidationCheck convex{"convexity of H in p", true, 0.0, 0.0, ""};
    ValidationCheck contraction{"alpha* Lipschitz in the measure", true, 0.0, 0.0, ""};
    const auto sample_controls = model.controls().mesh(21);

    for (int s = 0; s < samples; ++s) {
        const MuContext ctx = sample_context(model, grid, seed + 1000 + s);
        const auto frozen = model.freeze(ctx);
        const Vec x = rand_vec(unit);
        const Vec p = rand_vec(mom);
        const std::string where = "sample " + std::to_string(s);

        for (const Vec& a : sample_controls) {
            note(bounds, frozen->drift(x, a).norm(), k.K + 1e-12, where);
            note(bounds, std::fabs(frozen->cost(x, a)), k.K + 1e-12, where);
        }

        const auto bf = brute_force_argmax(*frozen, x, p, mesh);
        if (auto cf = frozen->closed_form_control(x, p)) {
            // a flat objective has no well-defined maximiser to compare
            if (!bf.non_unique) note(control_bf, (*cf - bf.control).norm(), spacing * (1.0 + 1e-9), where);
            const double h_cf = frozen->objective(x, p, *cf);
            note(ham_bf, std::fabs(h_cf - bf.value), (k.K + p.norm() * k.K) * spacing + 1e-12, where);
        }

        // finite differences away from the saturation switch
        const double step = 1e-5;
        bool smooth = true;
        for (int i = 0; i < d && smooth; ++i) {
            Vec lo = p;
            Vec hi = p;
            lo[i] -= 2 * step;
            hi[i] += 2 * step;
            const bool b_lo = frozen->controls().on_boundary(frozen->control(x, lo), 1e-12);
            const bool b_hi = frozen->controls().on_boundary(frozen->control(x, hi), 1e-12);
            smooth = b_lo == b_hi;
        }
        if (smooth && frozen->closed_form_control(x, p)) {
            const Vec hp = frozen->hamiltonian_gradient(x, p);
            for (int i = 0; i < d; ++i) {
                Vec lo = p;
                Vec hi = p;
                lo[i] -= step;
                hi[i] += step;
                const double fd = (frozen->hamiltonian(x, hi) - frozen->hamiltonian(x, lo)) / (2 * step);
                note(grad_fd, std::fabs(fd - hp[i]), 1e-6, where);
            }
        }

        Vec x2 = x;
        for (int i = 0; i < d; ++i) x2[i] += 0.1 * (unit(rng) - 0.5);
        x2 = wrap_point(x2);
        note(lipschitz, std::fabs(frozen->hamiltonian(x, p) - frozen->hamiltonian(x2, p)),
             k.L * (1.0 + p.norm()) * torus_distance(x, x2) + 1e-9, where);

        const Vec p2 = rand_vec(mom);
        note(convex, frozen->hamiltonian(x, 0.5 * (p + p2)),
             0.5 * (frozen->hamiltonian(x, p) + frozen->hamiltonian(x, p2)) + 1e-9, where);

        if (!model.uses_history() && s < std::max(1, samples / 4)) {
            const MuContext ctx2 = sample_context(model, grid, seed + 50000 + s);
            const auto frozen2 = model.freeze(ctx2);
            const double w1 = wasserstein1_joint(ctx.measure(), ctx2.measure());
            note(contraction, (frozen->control(x, p) - frozen2->control(x, p)).norm(), k.lambda0 * w1 + 1e-9, where);
        }
    }
    ValidationReport r;
    r.checks = {bounds, control_bf, ham_bf, grad_fd, lipschitz, convex, contraction};
    return r;
}

} // namespace qsmfg
