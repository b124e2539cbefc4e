#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mfg_lattice/errors.hpp"

namespace mfgl {

/// The n-point periodic lattice {1/n, 2/n, ..., 1 = 0} with spacing 1/n.
///
/// Storage index k = 0..n-1 holds the point x = (k+1)/n; the last index is
/// the point 1, identified with 0 on the torus. Neighbour indexing is cyclic.
class GridSpec {
public:
    explicit GridSpec(std::size_t n);

    std::size_t n() const noexcept { return n_; }
    double dx() const noexcept { return 1.0 / static_cast<double>(n_); }
    double nd() const noexcept { return static_cast<double>(n_); }

    /// Lattice label x_{k+1} = (k+1)/n, in (0, 1].
    double point(std::size_t k) const noexcept {
        return static_cast<double>(k + 1) / static_cast<double>(n_);
    }
    /// Torus position of index k, in [0, 1).
    double position(std::size_t k) const noexcept {
        return k + 1 == n_ ? 0.0 : point(k);
    }
    std::size_t next(std::size_t k) const noexcept { return k + 1 == n_ ? 0 : k + 1; }
    std::size_t prev(std::size_t k) const noexcept { return k == 0 ? n_ - 1 : k - 1; }

    bool operator==(const GridSpec&) const = default;

private:
    std::size_t n_;
};

/// Real-valued function on the lattice.
class GridFunction {
public:
    GridFunction() = default;
    explicit GridFunction(std::size_t n, double fill = 0.0) : values_(n, fill) {}
    explicit GridFunction(std::vector<double> values);

    std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t k) const noexcept { return values_[k]; }
    double& operator[](std::size_t k) noexcept { return values_[k]; }
    std::span<const double> span() const noexcept { return values_; }
    std::span<double> span() noexcept { return values_; }
    const std::vector<double>& values() const noexcept { return values_; }

    static GridFunction from(const GridSpec& g, const std::function<double(double)>& fn);

private:
    std::vector<double> values_;
};

/// Probability vector on the lattice: nonnegative weights summing to one.
class DiscreteMeasure {
public:
    DiscreteMeasure() = default;
    /// Validates nonnegativity and unit mass within `tol`.
    explicit DiscreteMeasure(std::vector<double> weights, double tol = 1e-10);

    static DiscreteMeasure uniform(std::size_t n);
    static DiscreteMeasure dirac(std::size_t n, std::size_t k);
    /// Clamps entries above -clamp_tol to zero and renormalizes; throws on
    /// larger negativity.
    static DiscreteMeasure normalized(std::vector<double> weights, double clamp_tol = 1e-12);

    std::size_t size() const noexcept { return weights_.size(); }
    double operator[](std::size_t k) const noexcept { return weights_[k]; }
    std::span<const double> span() const noexcept { return weights_; }
    const std::vector<double>& weights() const noexcept { return weights_; }

private:
    std::vector<double> weights_;
};

/// Row-major (levels x n) table of lattice vectors indexed by time level.
class Flow {
public:
    Flow() = default;
    Flow(std::size_t levels, std::size_t n, double fill = 0.0)
        : levels_(levels), n_(n), data_(levels * n, fill) {}

    std::size_t levels() const noexcept { return levels_; }
    std::size_t n() const noexcept { return n_; }
    std::span<double> row(std::size_t level) noexcept { return {data_.data() + level * n_, n_}; }
    std::span<const double> row(std::size_t level) const noexcept {
        return {data_.data() + level * n_, n_};
    }
    double operator()(std::size_t level, std::size_t k) const noexcept { return data_[level * n_ + k]; }
    double& operator()(std::size_t level, std::size_t k) noexcept { return data_[level * n_ + k]; }

private:
    std::size_t levels_ = 0;
    std::size_t n_ = 0;
    std::vector<double> data_;
};

double inner(std::span<const double> a, std::span<const double> b);
double sup_norm(std::span<const double> a);

// Finite differences with cyclic indexing. The span overloads write into
// `out` (same length as `u`).
void diff_plus(std::span<const double> u, std::span<double> out);
void diff_minus(std::span<const double> u, std::span<double> out);
void diff_second(std::span<const double> u, std::span<double> out);
void diff_centered(std::span<const double> u, std::span<double> out);

/// n (u_{i+1} - u_i)
GridFunction diff_plus(const GridFunction& u, const GridSpec& g);
/// n (u_{i-1} - u_i)
GridFunction diff_minus(const GridFunction& u, const GridSpec& g);
/// n^2 (u_{i+1} - 2 u_i + u_{i-1})
GridFunction diff_second(const GridFunction& u, const GridSpec& g);
/// n (u_{i+1} - u_{i-1}) / 2
GridFunction diff_centered(const GridFunction& u, const GridSpec& g);

/// Circle W1 between two weight vectors on a common lattice. Computes
/// min_c sum_k |F_k - c| / n where F is the cumulative difference; the
/// optimal shift is a median of F.
double w1_circle(std::span<const double> m1, std::span<const double> m2);
double w1_circle(const DiscreteMeasure& m1, const DiscreteMeasure& m2);

/// Circle W1 between a measure on an n-grid and one on a finer grid whose
/// size is a multiple of n; the coarse points embed in the fine lattice.
double w1_circle_embedded(std::span<const double> coarse, std::span<const double> fine);

/// Exact optimal-transport value with geodesic circle cost, solved as a
/// min-cost flow. Test oracle for w1_circle; n <= 64.
double w1_lp_oracle(const DiscreteMeasure& m1, const DiscreteMeasure& m2);

/// Geodesic distance on the unit circle.
double torus_distance(double x, double y);

/// A density on the torus, evaluated at points of [0, 1).
struct Density {
    std::string name;
    std::function<double(double)> pdf;
};

Density uniform_density();
/// 1 + amplitude * cos(2 pi (x - shift)); requires |amplitude| <= 1.
Density cosine_density(double amplitude, double shift = 0.0);
/// Normalized exp(kappa cos(2 pi (x - center))).
Density vonmises_density(double kappa, double center);

/// Masses of the cells [x_i - 1/(2n), x_i + 1/(2n)) by adaptive quadrature,
/// renormalized to sum to one.
DiscreteMeasure project_measure(const Density& density, const GridSpec& g);

/// Semi-discrete heat operator Lambda = n^2 * circulant(1, -2, 1).
class HeatOperator {
public:
    explicit HeatOperator(std::size_t n) : grid_(n) {}
    std::size_t n() const noexcept { return grid_.n(); }
    void apply(std::span<const double> u, std::span<double> out) const { diff_second(u, out); }
    GridFunction apply(const GridFunction& u) const { return diff_second(u, grid_); }
    /// Eigenvalue of -Lambda for Fourier mode k: 2 n^2 (1 - cos(2 pi k / n)).
    double eigenvalue(std::size_t k) const;
    /// Dense matrix, row-major; for oracles and small n.
    std::vector<double> dense() const;

private:
    GridSpec grid_;
};

using Forcing = std::function<void(double t, std::span<double> out)>;

struct HeatSolution {
    std::vector<double> times;
    Flow u;
    double dt = 0.0;
};

/// Explicit Euler for du/dt = Lambda u + f(t), u(0) = g0. `dt <= 0` selects
/// the default 0.45 / n^2. Requires dt * 2 n^2 < 1. `record_every` thins the
/// stored levels; the final level is always stored.
HeatSolution heat_solve(const GridFunction& g0, const Forcing& forcing, double T, double dt = 0.0,
                        std::size_t record_every = 1);

/// Exact semi-discrete solution exp(t Lambda) g0 by real Fourier
/// decomposition; test oracle for heat_solve with zero forcing.
GridFunction heat_eigen_solution(const GridFunction& g0, double t, double diffusivity = 1.0);

/// CSV rows `index,x,value` with a header, 17 significant digits.
std::string to_csv(std::span<const double> values);

}  // namespace mfgl
