#include "mfg_lattice/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace mfgl {

namespace {

void check_same_length(std::span<const double> a, std::span<const double> b, const char* op) {
    if (a.size() != b.size()) {
        throw ContractError(std::string(op) + ": length mismatch (" + std::to_string(a.size()) +
                            " vs " + std::to_string(b.size()) + ")");
    }
}

void check_grid(const GridFunction& u, const GridSpec& g, const char* op) {
    if (u.size() != g.n()) {
        throw ContractError(std::string(op) + ": function has length " + std::to_string(u.size()) +
                            " but grid has n = " + std::to_string(g.n()));
    }
}

}  // namespace

GridSpec::GridSpec(std::size_t n) : n_(n) {
    require(n >= 2, "GridSpec: n must be at least 2");
}

GridFunction::GridFunction(std::vector<double> values) : values_(std::move(values)) {
    for (double v : values_) require(std::isfinite(v), "GridFunction: non-finite entry");
}

GridFunction GridFunction::from(const GridSpec& g, const std::function<double(double)>& fn) {
    std::vector<double> v(g.n());
    for (std::size_t k = 0; k < g.n(); ++k) v[k] = fn(g.position(k));
    return GridFunction(std::move(v));
}

DiscreteMeasure::DiscreteMeasure(std::vector<double> weights, double tol) : weights_(std::move(weights)) {
    require(!weights_.empty(), "DiscreteMeasure: empty weight vector");
    double total = 0.0;
    for (double w : weights_) {
        require(std::isfinite(w) && w >= 0.0, "DiscreteMeasure: negative or non-finite weight");
        total += w;
    }
    require(std::abs(total - 1.0) <= tol,
            "DiscreteMeasure: weights sum to " + std::to_string(total) + ", expected 1");
}

DiscreteMeasure DiscreteMeasure::uniform(std::size_t n) {
    return DiscreteMeasure(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

DiscreteMeasure DiscreteMeasure::dirac(std::size_t n, std::size_t k) {
    require(k < n, "DiscreteMeasure::dirac: index out of range");
    std::vector<double> w(n, 0.0);
    w[k] = 1.0;
    return DiscreteMeasure(std::move(w));
}

DiscreteMeasure DiscreteMeasure::normalized(std::vector<double> weights, double clamp_tol) {
    double total = 0.0;
    for (double& w : weights) {
        require(std::isfinite(w), "DiscreteMeasure::normalized: non-finite weight");
        if (w < 0.0) {
            if (w < -clamp_tol) {
                throw NumericalError("negative mass " + std::to_string(w) + " below clamp threshold");
            }
            w = 0.0;
        }
        total += w;
    }
    require(total > 0.0, "DiscreteMeasure::normalized: zero total mass");
    for (double& w : weights) w /= total;
    return DiscreteMeasure(std::move(weights), 1e-9);
}

double inner(std::span<const double> a, std::span<const double> b) {
    check_same_length(a, b, "inner");
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double sup_norm(std::span<const double> a) {
    double s = 0.0;
    for (double v : a) s = std::max(s, std::abs(v));
    return s;
}

void diff_plus(std::span<const double> u, std::span<double> out) {
    check_same_length(u, out, "diff_plus");
    const std::size_t n = u.size();
    const double nd = static_cast<double>(n);
    for (std::size_t k = 0; k + 1 < n; ++k) out[k] = nd * (u[k + 1] - u[k]);
    out[n - 1] = nd * (u[0] - u[n - 1]);
}

void diff_minus(std::span<const double> u, std::span<double> out) {
    check_same_length(u, out, "diff_minus");
    const std::size_t n = u.size();
    const double nd = static_cast<double>(n);
    out[0] = nd * (u[n - 1] - u[0]);
    for (std::size_t k = 1; k < n; ++k) out[k] = nd * (u[k - 1] - u[k]);
}

void diff_second(std::span<const double> u, std::span<double> out) {
    check_same_length(u, out, "diff_second");
    const std::size_t n = u.size();
    const double n2 = static_cast<double>(n) * static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double up = u[k + 1 == n ? 0 : k + 1];
        const double um = u[k == 0 ? n - 1 : k - 1];
        out[k] = n2 * (up - 2.0 * u[k] + um);
    }
}

void diff_centered(std::span<const double> u, std::span<double> out) {
    check_same_length(u, out, "diff_centered");
    const std::size_t n = u.size();
    const double half_n = 0.5 * static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) {
        out[k] = half_n * (u[k + 1 == n ? 0 : k + 1] - u[k == 0 ? n - 1 : k - 1]);
    }
}

GridFunction diff_plus(const GridFunction& u, const GridSpec& g) {
    check_grid(u, g, "diff_plus");
    GridFunction out(g.n());
    diff_plus(u.span(), out.span());
    return out;
}

GridFunction diff_minus(const GridFunction& u, const GridSpec& g) {
    check_grid(u, g, "diff_minus");
    GridFunction out(g.n());
    diff_minus(u.span(), out.span());
    return out;
}

GridFunction diff_second(const GridFunction& u, const GridSpec& g) {
    check_grid(u, g, "diff_second");
    GridFunction out(g.n());
    diff_second(u.span(), out.span());
    return out;
}

GridFunction diff_centered(const GridFunction& u, const GridSpec& g) {
    check_grid(u, g, "diff_centered");
    GridFunction out(g.n());
    diff_centered(u.span(), out.span());
    return out;
}

double w1_circle(std::span<const double> m1, std::span<const double> m2) {
    check_same_length(m1, m2, "w1_circle");
    const std::size_t n = m1.size();
    std::vector<double> cdf(n);
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        acc += m1[k] - m2[k];
        cdf[k] = acc;
    }
    std::vector<double> sorted = cdf;
    auto mid = sorted.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(sorted.begin(), mid, sorted.end());
    const double shift = *mid;
    double total = 0.0;
    for (double f : cdf) total += std::abs(f - shift);
    return total / static_cast<double>(n);
}

double w1_circle(const DiscreteMeasure& m1, const DiscreteMeasure& m2) {
    return w1_circle(m1.span(), m2.span());
}

double w1_circle_embedded(std::span<const double> coarse, std::span<const double> fine) {
    const std::size_t nc = coarse.size();
    const std::size_t nf = fine.size();
    require(nc > 0 && nf % nc == 0, "w1_circle_embedded: fine size must be a multiple of coarse size");
    const std::size_t ratio = nf / nc;
    std::vector<double> lifted(nf, 0.0);
    for (std::size_t k = 0; k < nc; ++k) lifted[(k + 1) * ratio - 1] = coarse[k];
    return w1_circle(lifted, fine);
}

double torus_distance(double x, double y) {
    double d = std::fmod(std::abs(x - y), 1.0);
    return std::min(d, 1.0 - d);
}

Density uniform_density() {
    return {"uniform", [](double) { return 1.0; }};
}

Density cosine_density(double amplitude, double shift) {
    require(std::abs(amplitude) <= 1.0, "cosine_density: |amplitude| must be <= 1");
    return {"cosine", [amplitude, shift](double x) {
                return 1.0 + amplitude * std::cos(2.0 * std::numbers::pi * (x - shift));
            }};
}

Density vonmises_density(double kappa, double center) {
    require(kappa >= 0.0, "vonmises_density: kappa must be nonnegative");
    const double z = std::cyl_bessel_i(0.0, kappa);
    return {"vonmises", [kappa, center, z](double x) {
                return std::exp(kappa * std::cos(2.0 * std::numbers::pi * (x - center))) / z;
            }};
}

DiscreteMeasure project_measure(const Density& density, const GridSpec& g) {
    const double h = 0.5 * g.dx();
    bool negative = false;
    auto integrand = [&](double x) {
        double y = x - std::floor(x);
        const double v = density.pdf(y);
        if (v < 0.0) negative = true;
        return v;
    };
    std::vector<double> w(g.n());
    for (std::size_t k = 0; k < g.n(); ++k) {
        const double c = g.point(k);
        w[k] = boost::math::quadrature::gauss_kronrod<double, 21>::integrate(integrand, c - h, c + h, 10,
                                                                            1e-10);
        if (negative) throw ContractError("project_measure: density '" + density.name + "' is negative");
    }
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    require(std::abs(total - 1.0) < 1e-6,
            "project_measure: density integrates to " + std::to_string(total) + ", expected 1");
    for (double& v : w) v /= total;
    return DiscreteMeasure(std::move(w));
}

double HeatOperator::eigenvalue(std::size_t k) const {
    const double n = grid_.nd();
    return 2.0 * n * n * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(k) / n));
}

std::vector<double> HeatOperator::dense() const {
    const std::size_t n = grid_.n();
    const double n2 = grid_.nd() * grid_.nd();
    std::vector<double> a(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        a[i * n + i] += -2.0 * n2;
        a[i * n + grid_.next(i)] += n2;
        a[i * n + grid_.prev(i)] += n2;
    }
    return a;
}

HeatSolution heat_solve(const GridFunction& g0, const Forcing& forcing, double T, double dt,
                        std::size_t record_every) {
    const std::size_t n = g0.size();
    require(n >= 2, "heat_solve: need at least 2 grid points");
    require(T > 0.0, "heat_solve: horizon must be positive");
    require(record_every >= 1, "heat_solve: record_every must be >= 1");
    const double n2 = static_cast<double>(n) * static_cast<double>(n);
    if (dt <= 0.0) dt = 0.45 / n2;
    if (dt * 2.0 * n2 >= 1.0) {
        throw CflError("heat_solve: dt * 2 n^2 = " + std::to_string(dt * 2.0 * n2) +
                       " violates the explicit bound dt * 2 n^2 < 1");
    }
    const auto steps = static_cast<std::size_t>(std::ceil(T / dt - 1e-9));
    dt = T / static_cast<double>(steps);

    const std::size_t stored = steps / record_every + 1 + (steps % record_every != 0 ? 1 : 0);
    HeatSolution sol{{}, Flow(stored, n), dt};
    sol.times.reserve(stored);

    std::vector<double> u(g0.values()), lap(n), f(n, 0.0);
    std::size_t level = 0;
    auto record = [&](double t) {
        std::copy(u.begin(), u.end(), sol.u.row(level).begin());
        sol.times.push_back(t);
        ++level;
    };
    record(0.0);
    for (std::size_t s = 0; s < steps; ++s) {
        const double t = static_cast<double>(s) * dt;
        diff_second(u, lap);
        if (forcing) {
            forcing(t, f);
        }
        for (std::size_t k = 0; k < n; ++k) u[k] += dt * (lap[k] + f[k]);
        if ((s + 1) % record_every == 0 || s + 1 == steps) record(static_cast<double>(s + 1) * dt);
    }
    return sol;
}

GridFunction heat_eigen_solution(const GridFunction& g0, double t, double diffusivity) {
    const std::size_t n = g0.size();
    HeatOperator op(n);
    const double two_pi_over_n = 2.0 * std::numbers::pi / static_cast<double>(n);
    std::vector<double> out(n, 0.0);
    for (std::size_t m = 0; m < n; ++m) {
        double re = 0.0, im = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double phase = two_pi_over_n * static_cast<double>(m * k % n);
            re += g0[k] * std::cos(phase);
            im -= g0[k] * std::sin(phase);
        }
        const double decay = std::exp(-diffusivity * op.eigenvalue(m) * t);
        for (std::size_t k = 0; k < n; ++k) {
            const double phase = two_pi_over_n * static_cast<double>(m * k % n);
            out[k] += decay * (re * std::cos(phase) - im * std::sin(phase));
        }
    }
    for (double& v : out) v /= static_cast<double>(n);
    return GridFunction(std::move(out));
}

std::string to_csv(std::span<const double> values) {
    std::ostringstream os;
    os << "index,x,value\n";
    const std::size_t n = values.size();
    char buf[96];
    for (std::size_t k = 0; k < n; ++k) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", k + 1,
                      static_cast<double>(k + 1) / static_cast<double>(n), values[k]);
        os << buf;
    }
    return os.str();
}

}  // namespace mfgl
