#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mfg_lattice/grid.hpp"
#include "mfg_lattice/model.hpp"

namespace mfgl {

/// Upwind: split Hamiltonian with two nonnegative controls.
/// Centered: single control alpha = -dpH(x, centered difference), with jump
/// rates sigma n^2 +- alpha n / 2; stored as alpha_plus = alpha / 2 and
/// alpha_minus = -alpha / 2 so both schemes share the rate formula
/// sigma n^2 + alpha_pm n.
enum class Scheme { upwind, centered };

struct Damping {
    enum class Kind { fictitious_play, fixed, adaptive };
    Kind kind = Kind::adaptive;
    /// Step for `fixed`; starting step for `adaptive`.
    double theta = 1.0;

    static Damping fictitious_play() { return {Kind::fictitious_play, 1.0}; }
    static Damping fixed(double theta) { return {Kind::fixed, theta}; }
    static Damping adaptive() { return {Kind::adaptive, 1.0}; }
};

struct SolverConfig {
    Scheme scheme = Scheme::upwind;
    double sigma = 0.2;
    double T = 0.5;
    double tol = 1e-8;
    std::size_t max_iter = 200;
    Damping damping;
    /// Multiplies the CFL-limited step.
    double dt_safety = 1.0;
    /// Upper cap on dt; 0 disables.
    double max_dt = 0.0;
    /// Override of the a-priori bound on |D+- u|; 0 derives it from the data.
    double gradient_bound = 0.0;
};

Scheme parse_scheme(const std::string& s);
std::string to_string(Scheme s);
Damping parse_damping(const std::string& s);
std::string to_string(const Damping& d);

/// Uniform time levels t0 + k dt, k = 0..steps, with t0 + steps dt = T.
class TimeGrid {
public:
    TimeGrid() = default;
    TimeGrid(double t0, double T, std::size_t steps);
    /// Smallest number of equal steps with dt <= dt_max.
    static TimeGrid with_max_step(double t0, double T, double dt_max);

    double t0() const noexcept { return t0_; }
    double T() const noexcept { return T_; }
    double dt() const noexcept { return dt_; }
    std::size_t steps() const noexcept { return steps_; }
    std::size_t levels() const noexcept { return steps_ + 1; }
    double time(std::size_t k) const noexcept {
        return k == steps_ ? T_ : t0_ + static_cast<double>(k) * dt_;
    }
    /// Interval index containing t (clamped), for piecewise-constant lookups.
    std::size_t interval(double t) const noexcept;

private:
    double t0_ = 0.0, T_ = 0.0, dt_ = 0.0;
    std::size_t steps_ = 0;
};

/// Starting bound on |D+- u| from the x-Lipschitz constants of f and g over
/// the remaining horizon, with 50% headroom. Cost terms that depend on x can
/// push gradients past it; the solver then retries with a doubled bound.
double a_priori_gradient_bound(const GridSpec& g, const HamiltonianModel& hm, const CouplingModel& cm,
                               const SolverConfig& cfg, double t0);

/// Bound on alpha_+ + alpha_- over |p| <= gradient_bound.
double control_rate_bound(const GridSpec& g, const HamiltonianModel& hm, Scheme scheme, double gradient_bound);

/// Time grid with dt (2 sigma n^2 + 2 R_max n) <= 0.9 dt_safety.
TimeGrid make_time_grid(const GridSpec& g, const HamiltonianModel& hm, const CouplingModel& cm,
                        const SolverConfig& cfg, double t0, double gradient_scale = 1.0);

/// Controls on each time interval [t_k, t_{k+1}); row k holds the feedback
/// computed from u(t_{k+1}).
struct ControlFlow {
    double sigma = 0.0;
    Scheme scheme = Scheme::upwind;
    TimeGrid tg;
    Flow alpha_plus;
    Flow alpha_minus;

    std::size_t n() const noexcept { return alpha_plus.n(); }
    double rate_right(std::size_t k, std::size_t i) const noexcept {
        const double nd = static_cast<double>(n());
        return sigma * nd * nd + alpha_plus(k, i) * nd;
    }
    double rate_left(std::size_t k, std::size_t i) const noexcept {
        const double nd = static_cast<double>(n());
        return sigma * nd * nd + alpha_minus(k, i) * nd;
    }
    /// Largest total jump rate over the table.
    double max_total_rate() const;

    /// Same control pair on every interval.
    static ControlFlow constant(const TimeGrid& tg, double sigma, const GridFunction& alpha_plus,
                                const GridFunction& alpha_minus);
};

struct HJBSolution {
    Flow u;  // levels x n
    ControlFlow controls;
};

struct FPSolution {
    TimeGrid tg;
    Flow mu;  // levels x n
    /// Largest |mass - 1| and most negative entry seen before clamping.
    double max_mass_drift = 0.0;
    double min_entry = 0.0;

    DiscreteMeasure at_level(std::size_t k) const;
    /// Linear interpolation between levels.
    DiscreteMeasure at_time(double t) const;
};

struct MFGEquilibrium {
    GridSpec grid{2};
    TimeGrid tg;
    SolverConfig config;
    HJBSolution hjb;
    FPSolution fp;
    std::size_t iterations = 0;
    std::vector<double> residual_history;
    bool converged = false;

    double residual() const { return residual_history.empty() ? 0.0 : residual_history.back(); }
};

/// Running-cost source for the backward sweep: fills f at time level k.
using RunningCost = std::function<void(std::size_t level, std::span<double> out)>;

/// Explicit backward sweep of the discrete HJB equation with terminal values
/// `terminal` and running cost `running`. Throws CflError when a step stops
/// being monotone and NumericalError on non-finite values.
HJBSolution solve_hjb(const RunningCost& running, std::span<const double> terminal, const HamiltonianModel& hm,
                      const SolverConfig& cfg, const TimeGrid& tg);

/// HJB given a measure flow: running cost f(mu_t), terminal g(mu_T).
HJBSolution solve_hjb(const Flow& mu_flow, const HamiltonianModel& hm, const CouplingModel& cm,
                      const SolverConfig& cfg, const TimeGrid& tg);

/// Forward explicit Fokker-Planck sweep; every step is a stochastic matrix.
FPSolution solve_fp(const ControlFlow& controls, const DiscreteMeasure& m0);

/// Equilibrium of the discrete MFG system started from m0 at t0, by damped
/// fixed point over measure flows.
MFGEquilibrium solve_mfg(const DiscreteMeasure& m0, double t0, const HamiltonianModel& hm,
                         const CouplingModel& cm, const SolverConfig& cfg);

/// Same, starting the fixed point from a caller-provided flow instead of the
/// zero-control flow of m0.
MFGEquilibrium solve_mfg(const DiscreteMeasure& m0, double t0, const HamiltonianModel& hm,
                         const CouplingModel& cm, const SolverConfig& cfg, const Flow& initial_guess,
                         const TimeGrid& tg);

/// Master field U(t, ., m) = u(t, .) of the equilibrium started at (t, m).
GridFunction eval_master(double t, const DiscreteMeasure& m, const HamiltonianModel& hm, const CouplingModel& cm,
                         const SolverConfig& cfg);

/// Value bound (T - t)(||f|| + sup|inf L|) + ||g||.
double value_bound(const GridSpec& g, const HamiltonianModel& hm, const CouplingModel& cm, double horizon);

// Generator of the controlled chain and its transpose, for rate vectors
// q_right, q_left (total jump intensities).
void generator_apply(std::span<const double> q_right, std::span<const double> q_left, std::span<const double> u,
                     std::span<double> out);
void generator_adjoint_apply(std::span<const double> q_right, std::span<const double> q_left,
                             std::span<const double> mu, std::span<double> out);
/// Dense generator matrix, row-major.
std::vector<double> generator_dense(std::span<const double> q_right, std::span<const double> q_left);

/// Relative defect |<L u, mu> - <u, L* mu>| / (sum |(Lu)_i mu_i| + sum |u_i (L* mu)_i|).
double duality_check(const GridFunction& u, const GridFunction& mu, const FeedbackControls& controls,
                     const GridSpec& g, double sigma);

/// Smooth test densities with seeded random Fourier content, shared across
/// lattice sizes so samples are comparable between grids.
Density random_smooth_density(std::uint64_t seed, std::size_t index);

struct LipschitzRow {
    std::size_t n = 0;
    double time_ratio = 0.0;          // max |dU| / |t - t'|^(1/4)
    double x_ratio = 0.0;             // max |U(x) - U(x')| / d(x, x')
    double measure_ratio = 0.0;       // max |dU| / sqrt(W1(m, m'))
    double gradient_measure_ratio = 0.0;  // same for D+ U
    double lemma_constant = 0.0;      // M from the model data
    std::size_t samples = 0;
    std::size_t skipped = 0;
};

/// Empirical Hoelder/Lipschitz ratios of the master field per lattice size.
std::vector<LipschitzRow> lipschitz_probe(const std::vector<std::size_t>& n_list, std::size_t sample_count,
                                          const HamiltonianModel& hm, const CouplingModel& cm,
                                          const SolverConfig& cfg, std::uint64_t seed, std::size_t jobs = 1);

/// x-Lipschitz constant of u from the coupling argument: (T - t)(Lip f + Lip L) + Lip g.
double lemma_lipschitz_constant(const GridSpec& g, const HamiltonianModel& hm, const CouplingModel& cm,
                                double horizon, double control_bound);

/// CSV `t,i,x,u,mu,alpha_plus,alpha_minus` (controls of the interval that
/// starts at t; the last level repeats the last interval).
std::string equilibrium_csv(const MFGEquilibrium& eq, std::size_t level_stride = 1);
/// CSV `iter,sup_w1`.
std::string residuals_csv(const MFGEquilibrium& eq);

}  // namespace mfgl
