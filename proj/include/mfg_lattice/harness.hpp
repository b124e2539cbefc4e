#pragma once

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mfg_lattice/common_noise.hpp"
#include "mfg_lattice/config.hpp"
#include "mfg_lattice/mfg_solver.hpp"

namespace mfgl {

/// Least-squares line through (log n, log e); slope = -d log e / d log n.
struct RateFit {
    std::vector<std::pair<double, double>> pairs;  // points used in the fit
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    std::vector<std::string> warnings;
};

/// Drops nonpositive errors with a warning; needs three remaining points.
RateFit fit_rate(const std::vector<std::pair<double, double>>& pairs);

/// One asserted quantity.
struct Check {
    std::string name;
    double value = 0.0;
    std::string relation;  // "<=" or ">="
    double threshold = 0.0;
    bool pass = false;
};
Check check_le(std::string name, double value, double threshold);
Check check_ge(std::string name, double value, double threshold);
std::string format_check(const Check& c);

/// Error table of a convergence study and its fit.
struct RateStudy {
    std::string name;
    std::vector<std::size_t> n;
    std::vector<double> error;
    RateFit fit;
    bool strictly_decreasing = false;
    std::vector<std::string> notes;

    /// CSV `n,error`.
    std::string csv() const;
};
RateStudy make_rate_study(std::string name, std::vector<std::size_t> n, std::vector<double> error);

/// Master field U^n vs the n_ref field on smooth projected measures, at the
/// points of each coarse grid.
RateStudy run_master_rate(ExperimentConfig cfg, std::size_t jobs = 1);

struct TrajectoryRateResult {
    RateStudy exact;        // W1 of equilibrium FP laws
    RateStudy monte_carlo;  // W1 of empirical laws, noise floor removed
    std::vector<double> mc_raw;
    std::vector<double> mc_noise;
    /// |W1 embedded - W1 against the reference aggregated onto grid n|.
    std::vector<double> projection_gap;
    bool inconclusive = false;

    std::string csv() const;
};
TrajectoryRateResult run_trajectory_rate(ExperimentConfig cfg, std::size_t jobs = 1);

/// Chain laws with rates from the positive and negative parts of a fixed
/// drift, against the n_ref chain.
RateStudy run_diffusion_rate(ExperimentConfig cfg, std::size_t jobs = 1);

/// Fills alpha(t, x_i) for every lattice index i.
using DriftRow = std::function<void(double t, std::span<double> alpha)>;

/// Forward Kolmogorov laws at the sample times for the chain with rates
/// sigma n^2 + alpha_pm(t, x) n, alpha_+ = max(alpha, 0), alpha_- = max(-alpha, 0).
/// Rates are computed per step, so no rate table is stored. |alpha| must not
/// exceed `drift_bound`.
std::vector<DiscreteMeasure> kolmogorov_laws(const DiscreteMeasure& m0, double sigma, const DriftRow& drift,
                                             double drift_bound, const std::vector<double>& times,
                                             double dt_safety = 1.0);

/// Drift named in the config: "default" = sin(2 pi x)(1 + t), "zero". Sets
/// `bound` to sup |alpha| over [0, T].
DriftRow make_drift(const std::string& name, const GridSpec& g, double T, double& bound);

struct HeatCheckResult {
    std::vector<std::size_t> n;
    std::vector<double> sup_lambda_u;
    double ratio = 0.0;
    std::string csv() const;
};
/// Heat equation forced by sum_{k <= n/2} k^-(alpha + 1/2) cos(2 pi k x), alpha = 0.75.
HeatCheckResult run_heat_check(ExperimentConfig cfg);

struct CommonNoiseResult {
    std::size_t n = 0;
    std::size_t M = 0;
    double lambda = 0.0;
    std::size_t steps = 0;
    double monotonicity_min = 0.0;
    bool consistency_checked = false;
    double error = 0.0;          // vs characteristics at resolution M
    double error_refined = 0.0;  // at 2M (dt halves with the CFL bound)
    double halving_ratio = 0.0;
    std::size_t test_nodes = 0;
    double mean_jumps = 0.0;     // population simulations, lambda > 0
    MasterFieldNC field;
};
CommonNoiseResult run_common_noise(ExperimentConfig cfg, std::size_t jobs = 1);

struct ProbeResult {
    std::vector<LipschitzRow> rows;
    MonotonicityProbe coupling;
    double cross_monotonicity = 0.0;
    double value_sup = 0.0;
    double value_bound = 0.0;
    std::string csv() const;
};
ProbeResult run_probes(ExperimentConfig cfg, std::size_t jobs = 1);

std::vector<Check> master_rate_checks(const RateStudy& s);
std::vector<Check> trajectory_rate_checks(const TrajectoryRateResult& r);
std::vector<Check> diffusion_rate_checks(const RateStudy& s);
std::vector<Check> heat_checks(const HeatCheckResult& r);
std::vector<Check> common_noise_checks(const CommonNoiseResult& r);
std::vector<Check> probe_checks(const ProbeResult& r);

/// Command-line entry: `mfg-lattice <subcommand> [--config PATH] [--out DIR]
/// [--seed U64] [--jobs N] [--assert|--no-assert]`. Returns 0 iff every
/// enabled assertion passes.
int cli_main(int argc, char** argv);

}  // namespace mfgl
