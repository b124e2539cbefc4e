#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "mfg_lattice/errors.hpp"
#include "mfg_lattice/mfg_solver.hpp"
#include "mfg_lattice/rng.hpp"

using namespace mfgl;

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

CouplingModel study_coupling() {
    return coupling_convolution(ConvolutionSpec{{0.0, 1.0, 0.5}, 0.0, {0.5}}, ConvolutionSpec{{0.0, 1.0}, 0.0, {}});
}

RunningCost constant_cost(std::size_t n, double c) {
    return [n, c](std::size_t, std::span<double> out) {
        for (std::size_t i = 0; i < n; ++i) out[i] = c;
    };
}

double sup_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST_CASE("time grid") {
    const TimeGrid tg(0.1, 0.5, 4);
    CHECK(tg.dt() == doctest::Approx(0.1));
    CHECK(tg.levels() == 5);
    CHECK(tg.time(4) == 0.5);
    CHECK(tg.interval(0.25) == 1);
    CHECK(tg.interval(0.5) == 3);
    const auto w = TimeGrid::with_max_step(0.0, 1.0, 0.3);
    CHECK(w.steps() == 4);
    CHECK(w.dt() <= 0.3);
}

TEST_CASE("time grid respects the CFL bound") {
    const GridSpec g(32);
    const auto hm = quadratic_model();
    const SolverConfig cfg;
    const auto tg = make_time_grid(g, *hm, study_coupling(), cfg, 0.0);
    const double P = a_priori_gradient_bound(g, *hm, study_coupling(), cfg, 0.0);
    const double R = control_rate_bound(g, *hm, cfg.scheme, P);
    CHECK(tg.dt() * (2.0 * cfg.sigma * 32 * 32 + 2.0 * R * 32) <= 0.9 + 1e-12);
}

TEST_CASE("HJB with zero data stays zero") {
    const std::size_t n = 16;
    const auto hm = quadratic_model();
    const SolverConfig cfg;
    const TimeGrid tg(0.0, 0.5, 400);
    const std::vector<double> zero(n, 0.0);
    const auto sol = solve_hjb(constant_cost(n, 0.0), zero, *hm, cfg, tg);
    for (std::size_t k = 0; k < tg.levels(); ++k) {
        for (std::size_t i = 0; i < n; ++i) CHECK(sol.u(k, i) == 0.0);
    }
    for (std::size_t k = 0; k < tg.steps(); ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(sol.controls.alpha_plus(k, i) == 0.0);
            CHECK(sol.controls.alpha_minus(k, i) == 0.0);
        }
    }
}

TEST_CASE("HJB with constant data is affine in time") {
    const std::size_t n = 16;
    const auto hm = quadratic_model();
    const SolverConfig cfg;
    const TimeGrid tg(0.0, 0.5, 400);
    const std::vector<double> g(n, 0.7);
    const auto sol = solve_hjb(constant_cost(n, 1.3), g, *hm, cfg, tg);
    for (std::size_t k = 0; k < tg.levels(); ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(sol.u(k, i) == doctest::Approx(0.7 + 1.3 * (0.5 - tg.time(k))).epsilon(1e-12));
        }
    }
}

TEST_CASE("HJB comparison principle") {
    const std::size_t n = 32;
    const GridSpec g(n);
    const SolverConfig cfg;
    const TimeGrid tg(0.0, 0.5, 2000);
    Rng rng(31, {1});
    for (const auto& hm : {quadratic_model(), xweighted_model()}) {
        for (int trial = 0; trial < 5; ++trial) {
            std::vector<double> g1(n), g2(n);
            for (std::size_t i = 0; i < n; ++i) {
                g1[i] = 0.3 * std::cos(two_pi * g.point(i)) + 0.1 * (rng.uniform() - 0.5);
                g2[i] = g1[i] + 0.05 * rng.uniform();
            }
            const auto u1 = solve_hjb(constant_cost(n, 0.0), g1, *hm, cfg, tg);
            const auto u2 = solve_hjb(constant_cost(n, 0.0), g2, *hm, cfg, tg);
            double worst = INFINITY;
            for (std::size_t k = 0; k < tg.levels(); ++k) {
                for (std::size_t i = 0; i < n; ++i) worst = std::min(worst, u2.u(k, i) - u1.u(k, i));
            }
            CHECK(worst >= -1e-14);
        }
    }
}

TEST_CASE("HJB reduces to the heat flow for small data") {
    const std::size_t n = 32;
    const GridSpec g(n);
    const auto hm = quadratic_model();
    SolverConfig cfg;
    const double eps = 1e-6;
    const auto g0 = GridFunction::from(g, [&](double x) { return eps * std::cos(two_pi * x); });
    const TimeGrid tg(0.0, cfg.T, 4000);
    const auto sol = solve_hjb(constant_cost(n, 0.0), g0.values(), *hm, cfg, tg);
    const auto exact = heat_eigen_solution(g0, cfg.T, cfg.sigma);
    CHECK(sup_diff(sol.u.row(0), exact.span()) / eps <= 5e-3);
}

TEST_CASE("FP preserves the uniform law and mass") {
    const std::size_t n = 16;
    const TimeGrid tg(0.0, 0.5, 500);
    const auto cf = ControlFlow::constant(tg, 0.2, GridFunction(n, 0.0), GridFunction(n, 0.0));
    const auto fp = solve_fp(cf, DiscreteMeasure::uniform(n));
    for (std::size_t k = 0; k < tg.levels(); ++k) {
        for (std::size_t i = 0; i < n; ++i) CHECK(fp.mu(k, i) == doctest::Approx(1.0 / n).epsilon(1e-13));
    }
    CHECK(fp.max_mass_drift <= 1e-14);
}

TEST_CASE("FP single step from a spike") {
    const std::size_t n = 16;
    const double sigma = 0.2, dt = 1e-3;
    const TimeGrid tg(0.0, dt, 1);
    GridFunction ap(n, 0.0), am(n, 0.0);
    ap[5] = 2.0;
    const auto cf = ControlFlow::constant(tg, sigma, ap, am);
    const auto fp = solve_fp(cf, DiscreteMeasure::dirac(n, 5));
    const double qr = sigma * n * n + 2.0 * n, ql = sigma * n * n;
    CHECK(fp.mu(1, 6) == doctest::Approx(dt * qr));
    CHECK(fp.mu(1, 4) == doctest::Approx(dt * ql));
    CHECK(fp.mu(1, 5) == doctest::Approx(1.0 - dt * (qr + ql)));
    CHECK(fp.mu(1, 0) == 0.0);
}

TEST_CASE("FP rejects steps beyond the CFL limit") {
    const std::size_t n = 16;
    const TimeGrid tg(0.0, 1.0, 1);
    const auto cf = ControlFlow::constant(tg, 0.2, GridFunction(n, 0.0), GridFunction(n, 0.0));
    CHECK_THROWS_AS(solve_fp(cf, DiscreteMeasure::uniform(n)), CflError);
}

TEST_CASE("FP with drift moves the mean") {
    // Constant rightward control: the circular mean angle advances by about a T.
    const std::size_t n = 64;
    const GridSpec g(n);
    const double a = 1.0, T = 0.2;
    const auto tg = TimeGrid::with_max_step(0.0, T, 0.4 / (2.0 * 0.01 * n * n + 2.0 * a * n));
    const auto cf = ControlFlow::constant(tg, 0.01, GridFunction(n, a), GridFunction(n, 0.0));
    const auto m0 = project_measure(vonmises_density(20.0, 0.3), g);
    const auto fp = solve_fp(cf, m0);
    auto mean_angle = [&](std::span<const double> m) {
        double c = 0.0, s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            c += m[i] * std::cos(two_pi * g.point(i));
            s += m[i] * std::sin(two_pi * g.point(i));
        }
        return std::atan2(s, c) / two_pi;
    };
    const double shift = mean_angle(fp.mu.row(tg.steps())) - mean_angle(fp.mu.row(0));
    CHECK(shift == doctest::Approx(a * T).epsilon(0.02));
}

TEST_CASE("measure-independent couplings need one iteration") {
    const GridSpec g(16);
    const auto hm = quadratic_model();
    const CouplingModel cm{potential_map("cos", [](double x) { return std::cos(two_pi * x); }, 1.0, two_pi),
                           zero_map()};
    const auto eq = solve_mfg(project_measure(cosine_density(0.5), g), 0.0, *hm, cm, SolverConfig{});
    CHECK(eq.converged);
    CHECK(eq.iterations == 1);
    CHECK(eq.residual() == 0.0);
}

TEST_CASE("equilibrium converges and conserves mass") {
    const GridSpec g(32);
    const auto hm = quadratic_model();
    const SolverConfig cfg;
    const auto eq = solve_mfg(project_measure(cosine_density(0.5), g), 0.0, *hm, study_coupling(), cfg);
    CHECK(eq.converged);
    CHECK(eq.residual() <= cfg.tol);
    CHECK(eq.fp.max_mass_drift <= 1e-10);
    CHECK(eq.fp.min_entry >= -1e-12);
    for (std::size_t k = 0; k < eq.tg.levels(); ++k) {
        double s = 0.0;
        for (double v : eq.fp.mu.row(k)) s += v;
        CHECK(std::abs(s - 1.0) <= 1e-10);
    }
    double sup_u = 0.0;
    for (std::size_t k = 0; k < eq.tg.levels(); ++k) sup_u = std::max(sup_u, sup_norm(eq.hjb.u.row(k)));
    CHECK(sup_u <= value_bound(g, *hm, study_coupling(), cfg.T) + 10.0 * eq.tg.dt());
}

TEST_CASE("equilibrium does not depend on the starting flow") {
    const GridSpec g(32);
    const auto hm = quadratic_model();
    const SolverConfig cfg;
    const auto m0 = project_measure(vonmises_density(3.0, 0.2), g);
    const auto eq = solve_mfg(m0, 0.0, *hm, study_coupling(), cfg);
    const Flow flat(eq.tg.levels(), 32, 1.0 / 32);
    const auto other = solve_mfg(m0, 0.0, *hm, study_coupling(), cfg, flat, eq.tg);
    CHECK(other.converged);
    CHECK(sup_diff(eq.hjb.u.row(0), other.hjb.u.row(0)) <= 1e-6);
}

TEST_CASE("damping variants reach the same equilibrium") {
    const GridSpec g(16);
    const auto hm = quadratic_model();
    const auto m0 = project_measure(cosine_density(0.8), g);
    SolverConfig cfg;
    const auto a = solve_mfg(m0, 0.0, *hm, study_coupling(), cfg);
    cfg.damping = Damping::fixed(0.5);
    const auto b = solve_mfg(m0, 0.0, *hm, study_coupling(), cfg);
    CHECK(a.converged);
    CHECK(b.converged);
    CHECK(sup_diff(a.hjb.u.row(0), b.hjb.u.row(0)) <= 1e-6);
}

TEST_CASE("master field at the terminal time is the terminal cost") {
    const GridSpec g(16);
    const auto hm = quadratic_model();
    const SolverConfig cfg;
    const auto cm = study_coupling();
    const auto m = project_measure(cosine_density(0.5, 0.1), g);
    const auto U = eval_master(cfg.T, m, *hm, cm, cfg);
    CHECK(sup_diff(U.span(), cm.g(m).span()) <= 1e-14);
}

TEST_CASE("master field is monotone across initial measures") {
    const GridSpec g(16);
    const auto hm = quadratic_model();
    const SolverConfig cfg;
    const auto cm = study_coupling();
    for (std::size_t d = 0; d < 4; ++d) {
        const auto m1 = project_measure(random_smooth_density(5, 2 * d), g);
        const auto m2 = project_measure(random_smooth_density(5, 2 * d + 1), g);
        const auto u1 = eval_master(0.0, m1, *hm, cm, cfg), u2 = eval_master(0.0, m2, *hm, cm, cfg);
        double pairing = 0.0;
        for (std::size_t i = 0; i < 16; ++i) pairing += (u1[i] - u2[i]) * (m1[i] - m2[i]);
        CHECK(pairing >= -1e-8);
    }
}

TEST_CASE("generator and its adjoint") {
    const std::size_t n = 8;
    const GridSpec g(n);
    Rng rng(32, {2});
    std::vector<double> qr(n), ql(n), u(n), mu(n), lu(n), lmu(n);
    for (std::size_t i = 0; i < n; ++i) {
        qr[i] = 1.0 + rng.uniform();
        ql[i] = 1.0 + rng.uniform();
        u[i] = rng.uniform();
        mu[i] = rng.uniform();
    }
    const auto dense = generator_dense(qr, ql);
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            row += dense[i * n + j];
            if (i != j) CHECK(dense[i * n + j] >= 0.0);
        }
        CHECK(std::abs(row) <= 1e-14);
    }
    generator_apply(qr, ql, u, lu);
    generator_adjoint_apply(qr, ql, mu, lmu);
    for (std::size_t i = 0; i < n; ++i) {
        double a = 0.0, b = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            a += dense[i * n + j] * u[j];
            b += dense[j * n + i] * mu[j];
        }
        CHECK(lu[i] == doctest::Approx(a).epsilon(1e-13));
        CHECK(lmu[i] == doctest::Approx(b).epsilon(1e-13));
    }

    GridFunction uu(u), mm(mu);
    const auto fc = feedback_controls(*quadratic_model(), uu, g);
    CHECK(duality_check(uu, mm, fc, g, 0.2) <= 1e-12);
}

TEST_CASE("upwind and centered schemes agree as the grid refines") {
    // sup_t W1 between the two equilibrium flows; both schemes are first
    // order, so the gap at n = 128 stays below 4 x (gap at n = 32) / 4.
    const auto hm = quadratic_model();
    const auto cm = study_coupling();
    auto gap = [&](std::size_t n) {
        const GridSpec g(n);
        const auto m0 = project_measure(cosine_density(0.5), g);
        SolverConfig up;
        SolverConfig ce;
        ce.scheme = Scheme::centered;
        const auto a = solve_mfg(m0, 0.0, *hm, cm, up);
        const auto b = solve_mfg(m0, 0.0, *hm, cm, ce);
        REQUIRE(a.converged);
        REQUIRE(b.converged);
        double w = 0.0;
        for (int j = 0; j <= 20; ++j) {
            const double t = up.T * j / 20.0;
            w = std::max(w, w1_circle(a.fp.at_time(t), b.fp.at_time(t)));
        }
        return w;
    };
    const double g32 = gap(32), g128 = gap(128);
    CHECK(g32 > 0.0);
    CHECK(g128 <= 4.0 * g32 / 4.0);
}

TEST_CASE("centered scheme rejects large controls") {
    const std::size_t n = 8;
    const GridSpec g(n);
    SolverConfig cfg;
    cfg.scheme = Scheme::centered;
    cfg.sigma = 0.01;
    const auto g0 = GridFunction::from(g, [](double x) { return 5.0 * std::cos(two_pi * x); });
    const TimeGrid tg(0.0, 0.01, 100);
    CHECK_THROWS_AS(solve_hjb(constant_cost(n, 0.0), g0.values(), *quadratic_model(), cfg, tg), ContractError);
}

TEST_CASE("CSV outputs") {
    const GridSpec g(8);
    const auto eq = solve_mfg(DiscreteMeasure::uniform(8), 0.0, *quadratic_model(), study_coupling(), SolverConfig{});
    const auto csv = equilibrium_csv(eq);
    CHECK(csv.rfind("t,i,x,u,mu,alpha_plus,alpha_minus\n", 0) == 0);
    std::size_t lines = 0;
    for (char c : csv) lines += c == '\n';
    CHECK(lines == 1 + eq.tg.levels() * 8);
    CHECK(residuals_csv(eq).rfind("iter,sup_w1\n", 0) == 0);
}

TEST_CASE("parsing") {
    CHECK(parse_scheme("centered") == Scheme::centered);
    CHECK_THROWS_AS(parse_scheme("lax"), ConfigError);
    CHECK(parse_damping("fictitious-play").kind == Damping::Kind::fictitious_play);
    CHECK(to_string(Scheme::upwind) == "upwind");
}
