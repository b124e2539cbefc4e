#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mfg_lattice/grid.hpp"
#include "mfg_lattice/mfg_solver.hpp"
#include "mfg_lattice/model.hpp"

namespace mfgl {

/// Sampled kernel with every column rescaled to sum to n, so that
/// (A m)_i = (1/n) sum_j K_ij m_j maps probability vectors to probability
/// vectors.
struct KernelMatrix {
    std::size_t n = 0;
    std::vector<double> K;              // row-major n x n
    std::vector<double> column_scales;  // factor applied to each sampled column

    double operator()(std::size_t i, std::size_t j) const noexcept { return K[i * n + j]; }
};

KernelMatrix build_kernel_matrix(const CommonNoiseKernel& k, const GridSpec& g);
DiscreteMeasure apply_A(const KernelMatrix& km, const DiscreteMeasure& m);
void apply_A(const KernelMatrix& km, std::span<const double> m, std::span<double> out);
GridFunction apply_A_star(const KernelMatrix& km, const GridFunction& phi);

/// Measures on n in {2, 3} states whose weights are multiples of 1/M, indexed
/// by integer counts c with sum c = M.
class SimplexGrid {
public:
    SimplexGrid(std::size_t n, std::size_t M);

    std::size_t n() const noexcept { return n_; }
    std::size_t resolution() const noexcept { return M_; }
    std::size_t size() const noexcept { return size_; }

    std::array<std::size_t, 3> counts(std::size_t node) const;
    std::size_t index(const std::array<std::size_t, 3>& c) const;
    std::vector<double> weights(std::size_t node) const;
    DiscreteMeasure measure(std::size_t node) const;

    /// Barycentric interpolation stencil of a probability vector: nodes of
    /// the enclosing cell of the Freudenthal triangulation and their weights.
    struct Stencil {
        std::array<std::size_t, 3> node{};
        std::array<double, 3> weight{};
        std::size_t count = 0;
    };
    /// Entries down to -1e-12 are clipped; larger negativity is an error.
    Stencil locate(std::span<const double> m) const;

private:
    std::size_t n_, M_, size_;
    std::vector<std::size_t> row_offset_;  // n = 3: first index of each c0
};

/// (G, F) at measure m and lattice function p:
/// G_i = f(m)_i - H_up(x_i, D+ p) - H_down(x_i, -D- p) + sigma D2 p,
/// F = -(FP right-hand side at m under the feedback of p); sum F = 0.
struct FGPair {
    GridFunction G;
    std::vector<double> F;
};
FGPair assemble_FG(const DiscreteMeasure& m, const GridFunction& p, const HamiltonianModel& hm,
                   const CouplingModel& cm, double sigma, const GridSpec& g);

/// U(t, x, m) tabulated on a simplex grid at every `level_stride`-th time
/// level and the last one.
struct MasterFieldNC {
    SimplexGrid sg{2, 1};
    TimeGrid tg;
    double sigma = 0.0;
    double lambda = 0.0;
    std::string hamiltonian;
    std::string kernel;
    std::size_t level_stride = 1;
    std::vector<double> U;  // stored levels x nodes x n

    std::size_t n() const noexcept { return sg.n(); }
    bool stored(std::size_t level) const noexcept { return level % level_stride == 0 || level == tg.steps(); }
    std::size_t slot(std::size_t level) const noexcept {
        return level == tg.steps() ? (tg.steps() + level_stride - 1) / level_stride : level / level_stride;
    }
    /// Stored levels in increasing order.
    std::vector<std::size_t> stored_levels() const;
    /// Requires stored(level).
    double operator()(std::size_t level, std::size_t node, std::size_t x) const noexcept {
        return U[(slot(level) * sg.size() + node) * sg.n() + x];
    }
    /// Interpolated U(t_level, ., m); requires stored(level).
    GridFunction value(std::size_t level, std::span<const double> m) const;
};

/// Time grid satisfying dt (2 sigma n^2 + 2 R n + M q_max + lambda) <= 0.9 dt_safety,
/// with q_max the largest single-site total jump rate.
TimeGrid master_nc_time_grid(const HamiltonianModel& hm, const CouplingModel& cm, const SimplexGrid& sg,
                             double lambda, const SolverConfig& cfg);

/// Backward explicit solve of the common-noise master equation on the simplex
/// grid. Transport in m is discretized as the generator of the empirical
/// measure of M particles (each site's flux goes along its own edges, so the
/// scheme is upwind and monotone); A_n m is located by barycentric
/// interpolation. Only every `level_stride`-th level is kept.
MasterFieldNC solve_master_nc(const HamiltonianModel& hm, const CouplingModel& cm, const KernelMatrix& km,
                              double lambda, const SolverConfig& cfg, const SimplexGrid& sg, const TimeGrid& tg,
                              std::size_t level_stride = 1);

/// Population flow under the master-field feedback with common jumps at
/// Poisson(lambda) times. Needs a field stored at every level.
struct PopulationFlow {
    std::vector<double> times;
    Flow laws;
    std::vector<double> jump_times;
};

PopulationFlow simulate_population_nc(const MasterFieldNC& field, const HamiltonianModel& hm,
                                      const DiscreteMeasure& m0, double lambda, const KernelMatrix& km, double T,
                                      std::uint64_t seed);

/// Minimum of <U(t, ., m) - U(t, ., m'), m - m'> over sampled node pairs and levels.
double monotonicity_in_m_probe(const MasterFieldNC& field, std::size_t trials, std::uint64_t seed);

/// CSV `t,x_index,w0,...,w{n-1},U` every `level_stride`-th stored level (plus the last).
std::string master_nc_csv(const MasterFieldNC& field, std::size_t level_stride = 1);

}  // namespace mfgl
