#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mfg_lattice/grid.hpp"
#include "mfg_lattice/mfg_solver.hpp"
#include "mfg_lattice/model.hpp"
#include "mfg_lattice/rng.hpp"

namespace mfgl {

/// One chain trajectory as a right-continuous step function: states[j] holds
/// on [times[j], times[j+1]); times[0] is the start time.
struct Path {
    std::vector<double> times;
    std::vector<std::uint32_t> states;

    std::uint32_t state_at(double t) const;
};

/// Empirical laws at sample times.
struct EmpiricalFlow {
    std::vector<double> times;
    std::vector<DiscreteMeasure> laws;
};

/// Seeded ensemble of chain trajectories. States at the sample times are
/// always kept; full jump records only when requested.
struct TrajectoryBatch {
    std::size_t n = 0;
    std::uint64_t seed = 0;
    double t0 = 0.0, T = 0.0;
    double rate_bound = 0.0;
    std::vector<double> sample_times;
    /// paths x sample_times, row-major.
    std::vector<std::uint32_t> samples;
    std::vector<std::uint64_t> jump_counts;
    std::vector<Path> paths;  // empty unless recorded

    std::size_t size() const noexcept { return jump_counts.size(); }
    std::uint32_t sample(std::size_t path, std::size_t time_index) const {
        return samples[path * sample_times.size() + time_index];
    }
    /// Law at sample time j over the given path range [begin, end).
    DiscreteMeasure law(std::size_t j, std::size_t begin = 0, std::size_t end = SIZE_MAX) const;
    EmpiricalFlow empirical() const;
};

struct SimulationOptions {
    /// Sample times in [t0, T]; empty selects {t0, T}.
    std::vector<double> sample_times;
    bool record_paths = false;
    std::size_t jobs = 1;
};

/// Jump intensities (q_right, q_left) at time t in state i.
using FeedbackRates = std::function<void(double t, std::size_t state, double& q_right, double& q_left)>;

/// Exact simulation by thinning under a control table. The majorant is the
/// largest total rate in the table. Initial states are drawn from m0.
TrajectoryBatch simulate_ctmc(const ControlFlow& controls, const DiscreteMeasure& m0, std::size_t n_paths,
                              std::uint64_t seed, const SimulationOptions& opt = {});

/// Same with given initial states, one per path.
TrajectoryBatch simulate_ctmc(const ControlFlow& controls, const std::vector<std::uint32_t>& initial_states,
                              std::uint64_t seed, const SimulationOptions& opt = {});

/// Thinning under a feedback closure with majorant `rate_bound`; a proposal
/// whose total rate exceeds the majorant raises ContractError.
TrajectoryBatch simulate_ctmc(const FeedbackRates& rates, double rate_bound, std::size_t n,
                              const DiscreteMeasure& m0, std::size_t n_paths, double t0, double T,
                              std::uint64_t seed, const SimulationOptions& opt = {});

struct BinnedInitial {
    std::vector<std::uint32_t> indices;
    DiscreteMeasure law;
};

/// Maps positions in [0, 1) to the lattice point whose cell
/// [x_i - 1/(2n), x_i + 1/(2n)) contains them.
BinnedInitial bin_initial(const std::vector<double>& xi, const GridSpec& g);

/// Storage index of the cell containing position x.
std::uint32_t bin_index(double x, const GridSpec& g);

/// Euler-Maruyama positions at sample times.
struct DiffusionBatch {
    double dt_sim = 0.0;
    std::uint64_t seed = 0;
    std::vector<double> sample_times;
    /// paths x sample_times, row-major, in [0, 1).
    std::vector<double> positions;

    std::size_t size() const noexcept {
        return sample_times.empty() ? 0 : positions.size() / sample_times.size();
    }
    double position(std::size_t path, std::size_t j) const { return positions[path * sample_times.size() + j]; }
    /// Binned law on grid g at sample time j.
    DiscreteMeasure law(std::size_t j, const GridSpec& g) const;
};

using Drift = std::function<double(double t, double x)>;
using PositionSampler = std::function<double(Rng&)>;

/// dX = alpha(t, X) dt + sqrt(2 sigma) dW on the circle, from t = 0 to T.
DiffusionBatch simulate_sde(const Drift& alpha, const PositionSampler& m0, std::size_t n_paths, double T,
                            double dt_sim, double sigma, std::uint64_t seed, std::vector<double> sample_times = {},
                            std::size_t jobs = 1);

/// Sampler for a density bounded by `pdf_max`, by rejection.
PositionSampler density_sampler(const Density& d, double pdf_max);

struct CostEstimate {
    double mean = 0.0;
    double standard_error = 0.0;
    std::size_t paths = 0;
};

/// Cost of each recorded path: integral of
/// L(x, a+) + L(x, -a-) - L(x, 0) + f(mu)(x) (upwind) or L(x, a) + f(mu)(x)
/// (centered) plus g(mu_T)(X_T). The integrand is constant on each time
/// interval between jumps, so the integral is exact.
CostEstimate monte_carlo_cost(const TrajectoryBatch& batch, const ControlFlow& controls, const HamiltonianModel& hm,
                              const CouplingModel& cm, const Flow& mu_flow);

/// CSV `path_id,jump_time,state_index` (at most max_paths paths; sample
/// times stand in for jumps when paths were not recorded).
std::string paths_csv(const TrajectoryBatch& batch, std::size_t max_paths = SIZE_MAX);
/// CSV `t,i,frequency`.
std::string empirical_csv(const EmpiricalFlow& flow);

}  // namespace mfgl
