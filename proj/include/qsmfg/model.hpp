#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "qsmfg/control_set.hpp"
#include "qsmfg/grid.hpp"
#include "qsmfg/measure.hpp"

namespace qsmfg {

/// Time-indexed joint measures on the solver's time grid.
struct MeasureTrajectory {
    std::vector<double> times;
    std::vector<JointMeasure> measures;
};

/// Nonnegative continuous memory kernel K(tau).
struct MemoryKernel {
    std::string name = "zero";
    std::function<double(double)> eval = [](double) { return 0.0; };

    double operator()(double tau) const { return eval(tau); }

    static MemoryKernel zero();
    static MemoryKernel constant(double k0);
    static MemoryKernel linear(double k0);
    static MemoryKernel exponential(double k0, double decay_time);
};

/// Trapezoid quadrature of int_0^t K(tau) nu(tau) dtau on the trajectory's
/// time grid. `t` must be a node of that grid; a trajectory that stops
/// before `t` is rejected with std::invalid_argument.
JointMeasure memory_aggregate(const MeasureTrajectory& trajectory, const MemoryKernel& kernel, double t);

/// The measure argument of the coefficients: either mu(t) itself, or the
/// pair (t, {mu(r)}_{r <= t}) for models with memory.
class MuContext {
public:
    struct History {
        double t = 0.0;
        std::shared_ptr<const MeasureTrajectory> trajectory;
    };

    static MuContext instant(JointMeasure mu);
    static MuContext history(double t, std::shared_ptr<const MeasureTrajectory> trajectory);

    bool is_instant() const { return std::holds_alternative<JointMeasure>(data_); }
    const JointMeasure& measure() const;
    const History& past() const;

private:
    std::variant<JointMeasure, History> data_;
};

/// Coefficients b(x, a), l(x, a) with the measure argument already fixed.
///
/// `control` and `hamiltonian` use the closed forms when a model provides
/// them and otherwise fall back to brute force over the control mesh.
class FrozenModel {
public:
    FrozenModel(ControlSet controls, int mesh) : controls_(std::move(controls)), mesh_(mesh) {}
    virtual ~FrozenModel() = default;

    virtual Vec drift(const Vec& x, const Vec& a) const = 0;
    virtual double cost(const Vec& x, const Vec& a) const = 0;
    virtual std::optional<Vec> closed_form_control(const Vec& /*x*/, const Vec& /*p*/) const { return std::nullopt; }

    const ControlSet& controls() const { return controls_; }
    int mesh() const { return mesh_; }

    /// -p . b(x, a) - l(x, a)
    double objective(const Vec& x, const Vec& p, const Vec& a) const { return -p.dot(drift(x, a)) - cost(x, a); }
    Vec control(const Vec& x, const Vec& p) const;
    double hamiltonian(const Vec& x, const Vec& p) const { return objective(x, p, control(x, p)); }
    /// H_p = -b(x, alpha*).
    Vec hamiltonian_gradient(const Vec& x, const Vec& p) const { return -drift(x, control(x, p)); }

private:
    ControlSet controls_;
    int mesh_;
};

/// Constants declared by a model for the structural hypotheses.
struct ModelConstants {
    double K = 0.0;        ///< bound on |b| and |l|
    double L = 0.0;        ///< Lipschitz constant of b, l in x
    double L_mu = 0.0;     ///< Lipschitz constant of b, l in the measure (W1)
    double lambda0 = 0.0;  ///< Lipschitz constant of alpha* in the measure
    double lambda1 = 0.0;  ///< Lipschitz constant of alpha* in (x, p)
    std::optional<double> Lambda0;  ///< Lipschitz constant of b in a
};

class Model {
public:
    virtual ~Model() = default;

    virtual std::string name() const = 0;
    virtual int dim() const = 0;
    virtual const ControlSet& controls() const = 0;
    virtual ModelConstants constants() const = 0;
    /// True when the coefficients read the past trajectory of mu.
    virtual bool uses_history() const { return false; }
    /// False when alpha* ignores the measure argument.
    virtual bool control_depends_on_measure() const { return true; }
    /// Brute-force mesh points per control axis.
    virtual int control_mesh() const { return dim() == 1 ? 1001 : 101; }

    /// Throws std::invalid_argument when the context kind does not match.
    virtual std::unique_ptr<FrozenModel> freeze(const MuContext& ctx) const = 0;
};

struct BruteForceResult {
    Vec control;
    double value = 0.0;
    /// Maximiser sits on the boundary of A with a steep objective across the
    /// adjacent mesh cell; the sup may be unreliable.
    bool coarse_mesh_warning = false;
    /// Another near-maximiser lies more than one mesh spacing away.
    bool non_unique = false;
};

/// Exhaustive maximisation of -p.b - l over the control mesh; ties keep the
/// first mesh point.
BruteForceResult brute_force_argmax(const FrozenModel& frozen, const Vec& x, const Vec& p, int mesh);
BruteForceResult brute_force_argmax(const Model& model, const Vec& x, const Vec& p, const MuContext& ctx, int mesh);

double hamiltonian_value(const Model& model, const Vec& x, const Vec& p, const MuContext& ctx);
Vec optimal_control(const Model& model, const Vec& x, const Vec& p, const MuContext& ctx);
Vec hamiltonian_gradient_p(const Model& model, const Vec& x, const Vec& p, const MuContext& ctx);

// ---------------------------------------------------------------------------
// Built-in models

/// b = b0(x; nu) - a, l = |a|^2 / (2 l0(nu)) + V(x) on the ball of radius R.
///
///   l0(nu) = clamp(delta + epsilon |int a dnu|, delta, delta + epsilon R)
///   b0(x; nu) = beta sin(2 pi x) + kappa int a phi_sigma(x, y) dnu(y, a)
///   V(x) = v0 sum_i cos(2 pi x_i)
///
/// with phi_sigma(x, y) = exp(-dist(x, y)^2 / (2 sigma^2)) on the torus.
/// alpha* moves in the measure with Lipschitz constant R epsilon / delta.
struct Example1Params {
    int dim = 1;
    double delta = 1.0;
    double epsilon = 0.0;
    double kappa = 0.0;
    double sigma = 0.1;
    double radius = 1.0;
    double beta = 0.0;
    double potential = 0.0;
};

class Example1Model : public Model {
public:
    explicit Example1Model(Example1Params params);

    std::string name() const override { return "example1"; }
    int dim() const override { return params_.dim; }
    const ControlSet& controls() const override { return controls_; }
    ModelConstants constants() const override;
    bool control_depends_on_measure() const override { return params_.epsilon != 0.0; }
    std::unique_ptr<FrozenModel> freeze(const MuContext& ctx) const override;

    const Example1Params& params() const { return params_; }
    /// Coefficients evaluated on an arbitrary nonnegative measure, normalised
    /// when its mass is positive; zero mass switches the coupling off.
    std::unique_ptr<FrozenModel> freeze_on(const JointMeasure& nu) const;

private:
    Example1Params params_;
    ControlSet controls_;
};

/// Example 1 coefficients evaluated on the memory aggregate
/// [nu](t) = int_0^t K(tau) nu(tau) dtau.
class Example2Model : public Model {
public:
    Example2Model(Example1Params params, MemoryKernel kernel);

    std::string name() const override { return "example2"; }
    int dim() const override { return base_.dim(); }
    const ControlSet& controls() const override { return base_.controls(); }
    ModelConstants constants() const override;
    bool uses_history() const override { return true; }
    bool control_depends_on_measure() const override { return base_.control_depends_on_measure(); }
    std::unique_ptr<FrozenModel> freeze(const MuContext& ctx) const override;

    const MemoryKernel& kernel() const { return kernel_; }

private:
    Example1Model base_;
    MemoryKernel kernel_;
};

/// Separated dependence on the measure: b = beta sin(2 pi x) - a and
/// l = |a|^2 / (2 c) + V(x) + l1(mu), l1(mu) = gamma int a_0 dmu + eta int cos(2 pi x_0) dmu.
/// Here l1 enters the running cost with a plus sign, so H = H0 - l1.
struct SeparatedParams {
    int dim = 1;
    double control_scale = 1.0;
    double radius = 1.0;
    double beta = 0.0;
    double potential = 0.5;
    double gamma = 0.5;
    double eta = 0.0;
};

class SeparatedModel : public Model {
public:
    explicit SeparatedModel(SeparatedParams params);

    std::string name() const override { return "separated"; }
    int dim() const override { return params_.dim; }
    const ControlSet& controls() const override { return controls_; }
    ModelConstants constants() const override;
    bool control_depends_on_measure() const override { return false; }
    std::unique_ptr<FrozenModel> freeze(const MuContext& ctx) const override;

    /// The measure-dependent part l1(nu).
    double coupling_cost(const JointMeasure& nu) const;
    /// The model with l1 switched off (the H0 part alone).
    SeparatedModel without_coupling() const;

private:
    SeparatedParams params_;
    ControlSet controls_;
};

/// b = 0, l = c. Every control is optimal; alpha* reports the point of A
/// closest to the origin.
class ConstantCostModel : public Model {
public:
    ConstantCostModel(int dim, double cost, double radius = 1.0);

    std::string name() const override { return "constant"; }
    int dim() const override { return dim_; }
    const ControlSet& controls() const override { return controls_; }
    ModelConstants constants() const override;
    bool control_depends_on_measure() const override { return false; }
    std::unique_ptr<FrozenModel> freeze(const MuContext& ctx) const override;

    double cost() const { return cost_; }

private:
    int dim_;
    double cost_;
    ControlSet controls_;
};

// ---------------------------------------------------------------------------
// Spot checks

struct ValidationCheck {
    std::string name;
    bool passed = true;
    double worst = 0.0;      ///< worst observed value of the checked quantity
    double tolerance = 0.0;  ///< bound it was compared against
    std::string detail;
    /// worst - tolerance; positive means the check failed
    double margin = -std::numeric_limits<double>::infinity();
};

struct ValidationReport {
    std::vector<ValidationCheck> checks;
    bool passed() const;
};

/// Samples (x, p, nu) triples and checks the declared bounds, closed forms
/// against brute force, H_p against finite differences, x-Lipschitz bounds
/// and convexity of H in p. Never throws on a failed check.
ValidationReport validate_model(const Model& model, const Grid& grid, unsigned long long seed, int samples = 200);

/// A random graph measure on `grid`: random positive node weights and
/// controls drawn uniformly from the control mesh.
JointMeasure random_graph_measure(const Grid& grid, const ControlSet& controls, unsigned long long seed);

} // namespace qsmfg
