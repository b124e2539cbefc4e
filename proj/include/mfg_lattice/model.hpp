#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mfg_lattice/grid.hpp"

namespace mfgl {

/// Running cost L(x, a) together with the full Hamiltonian H(x, p) and its
/// split into constrained Legendre transforms over nonnegative jump
/// intensities:
///
///   H_up(x, p)   = -inf_{a >= 0} { L(x, a) + a p }
///   H_down(x, p) = -inf_{a >= 0} { L(x, -a) - a p } + L(x, 0)
///
/// so that H_up + H_down = H and -dpH_up, dpH_down >= 0 are the right and
/// left control rates. Only first derivatives are exposed; the split
/// transforms are C^1 but generally not C^2.
class HamiltonianModel {
public:
    virtual ~HamiltonianModel() = default;

    virtual std::string name() const = 0;
    virtual double lagrangian(double x, double a) const = 0;
    virtual double hamiltonian(double x, double p) const = 0;
    virtual double dp_hamiltonian(double x, double p) const = 0;
    virtual double h_up(double x, double p) const = 0;
    virtual double h_down(double x, double p) const = 0;
    virtual double dp_h_up(double x, double p) const = 0;
    virtual double dp_h_down(double x, double p) const = 0;

    struct SplitEval {
        double h_up, dp_h_up, h_down, dp_h_down;
    };
    /// H_up and its derivative at p_up together with H_down and its derivative
    /// at p_down; the pair the upwind scheme needs at every lattice point.
    virtual SplitEval split(double x, double p_up, double p_down) const {
        return {h_up(x, p_up), dp_h_up(x, p_up), h_down(x, p_down), dp_h_down(x, p_down)};
    }

    /// sup_x |inf_a L(x, a)|.
    virtual double inf_lagrangian_bound() const { return 0.0; }
    /// Lipschitz constant in x of L(., a) for |a| <= a_bound.
    virtual double lagrangian_lip_x(double /*a_bound*/) const { return 0.0; }
    /// Largest control magnitude over which the model is defined.
    virtual double control_bound() const { return 50.0; }
};

using HamiltonianPtr = std::shared_ptr<const HamiltonianModel>;

/// L(a) = a^2 / (2 scale), H(p) = scale p^2 / 2, H_up = scale (p_-)^2 / 2,
/// H_down = scale (p_+)^2 / 2.
HamiltonianPtr quadratic_model(double scale = 1.0);

/// H(x, p) = (1 + 0.5 cos(2 pi x)) p^2 / 2.
HamiltonianPtr xweighted_model();

/// Smooth convex Lagrangian with optional analytic derivatives in a.
/// Missing derivatives fall back to central finite differences.
struct Lagrangian {
    std::string name = "custom";
    std::function<double(double x, double a)> value;
    std::function<double(double x, double a)> da;
    std::function<double(double x, double a)> daa;
    double lip_x_at_unit = 0.0;  // Lipschitz in x scale, multiplied by (1 + a_bound^2)
};

struct MinimizerConfig {
    double a_max = 50.0;
    double tol = 1e-10;
    int max_iter = 200;
};

/// Result of a one-dimensional convex minimization.
struct ScalarMinimum {
    double argmin = 0.0;
    double value = 0.0;
};

/// Minimizes a convex function on [lo, hi]: golden-section bracketing then
/// Newton polish on the derivative. `d1`/`d2` may be empty.
ScalarMinimum minimize_convex(const std::function<double(double)>& f, const std::function<double(double)>& d1,
                              const std::function<double(double)>& d2, double lo, double hi, double tol,
                              int max_iter);

/// Numerically realizes the split transforms of a Lagrangian; derivatives via
/// the envelope theorem (dpH_up = -argmin). Throws ContractError when the
/// minimizer reaches a_max (non-coercive cost).
HamiltonianPtr split_from_lagrangian(Lagrangian L, MinimizerConfig cfg = {});

/// L(a) = cosh(a) - 1 through the numeric split.
HamiltonianPtr cosh_model(MinimizerConfig cfg = {});

/// Closed-form reference for cosh_model: H(p) = p asinh(p) - sqrt(1 + p^2) + 1.
double cosh_hamiltonian_exact(double p);

/// Builds a model by name: quadratic | cosh | xweighted.
HamiltonianPtr make_hamiltonian(const std::string& name, double a_max = 50.0);

struct FeedbackControls {
    GridFunction alpha_plus;
    GridFunction alpha_minus;
};

/// alpha_+ = -dpH_up(x, D+u), alpha_- = dpH_down(x, -D-u).
FeedbackControls feedback_controls(const HamiltonianModel& hm, const GridFunction& u, const GridSpec& g);

/// Evaluation kernel of a coupling bound to one lattice size.
using MeasureFn = std::function<void(std::span<const double> m, std::span<double> out)>;

/// A map from probability vectors to lattice functions with n-dependent
/// bounds: sup norm, Lipschitz constant in x and in W1.
class MeasureMap {
public:
    using Binder = std::function<MeasureFn(const GridSpec&)>;
    using Bound = std::function<double(std::size_t n)>;

    MeasureMap() = default;
    MeasureMap(std::string name, Binder binder, Bound sup, Bound lip_x, Bound lip_w1, bool measure_independent);

    const std::string& name() const noexcept { return name_; }
    MeasureFn bind(const GridSpec& g) const { return binder_(g); }
    GridFunction operator()(const DiscreteMeasure& m) const;

    double sup_bound(std::size_t n) const { return sup_(n); }
    double lip_x(std::size_t n) const { return lip_x_(n); }
    double lip_w1(std::size_t n) const { return lip_w1_(n); }
    bool measure_independent() const noexcept { return independent_; }

    /// c * this.
    MeasureMap scaled(double c) const;

private:
    std::string name_;
    Binder binder_;
    Bound sup_, lip_x_, lip_w1_;
    bool independent_ = false;
};

/// Coefficients of the convolution coupling
///   f(m)(x_i) = a_0 + sum_k a_k sum_j cos(2 pi k (x_i - x_j)) m_j
///             + w * (S n m)_i + sum_k b_k cos(2 pi k x_i)
/// where S is the (1/4, 1/2, 1/4) smoother.
struct ConvolutionSpec {
    std::vector<double> fourier;    // a_0, a_1, ...; all >= 0
    double local_weight = 0.0;      // w >= 0
    std::vector<double> potential;  // b_1, b_2, ...; measure-independent part
};

MeasureMap convolution_map(const ConvolutionSpec& spec);
MeasureMap zero_map();
MeasureMap constant_map(double c);
/// Measure-independent map x -> fn(x).
MeasureMap potential_map(std::string name, std::function<double(double)> fn, double sup, double lip_x);
/// m -> -n m: strictly anti-monotone.
MeasureMap anti_monotone_map();

struct CouplingModel {
    MeasureMap f;  // running
    MeasureMap g;  // terminal
    bool measure_independent() const { return f.measure_independent() && g.measure_independent(); }
};

/// Convolution coupling used for both f and g when `terminal` is absent.
CouplingModel coupling_convolution(const std::vector<double>& fourier_coeffs, double local_weight);
CouplingModel coupling_convolution(const ConvolutionSpec& running, const ConvolutionSpec& terminal);

struct MonotonicityProbe {
    double f_min = 0.0;
    double g_min = 0.0;
};

/// Minimum of <c(m) - c(m'), m - m'> over Dirichlet(1, ..., 1) pairs.
MonotonicityProbe monotonicity_probe(const CouplingModel& c, std::size_t trials, const GridSpec& g,
                                     std::uint64_t seed);

/// Common-noise kernel K(x, y) >= 0 with unit x-integral, and jump intensity.
struct CommonNoiseKernel {
    std::string name;
    std::function<double(double x, double y)> K;
    double lambda = 0.0;
};

CommonNoiseKernel uniform_kernel(double lambda = 0.0);
CommonNoiseKernel vonmises_kernel(double kappa, double lambda = 0.0);
/// max_y |int K(x, y) dx - 1| over a y-sample, by adaptive quadrature.
double kernel_normalization_defect(const CommonNoiseKernel& k, std::size_t samples = 32);

}  // namespace mfgl
