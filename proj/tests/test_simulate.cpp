#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "mfg_lattice/errors.hpp"
#include "mfg_lattice/simulate.hpp"

using namespace mfgl;

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double std_error(const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

}  // namespace

TEST_CASE("jump counts of the free chain are Poisson") {
    const std::size_t n = 8;
    const double sigma = 0.2, T = 0.5;
    const TimeGrid tg(0.0, T, 50);
    const auto cf = ControlFlow::constant(tg, sigma, GridFunction(n, 0.0), GridFunction(n, 0.0));
    const auto batch = simulate_ctmc(cf, DiscreteMeasure::uniform(n), 20000, 11);
    std::vector<double> counts(batch.jump_counts.begin(), batch.jump_counts.end());
    const double rate = 2.0 * sigma * n * n * T;
    CHECK(std::abs(mean(counts) - rate) <= 4.0 * std::sqrt(rate / 20000.0));
}

TEST_CASE("simulation is reproducible and independent of the worker count") {
    const std::size_t n = 16;
    const TimeGrid tg(0.0, 0.3, 30);
    const auto cf = ControlFlow::constant(tg, 0.1, GridFunction(n, 1.0), GridFunction(n, 0.5));
    SimulationOptions one, four;
    one.sample_times = four.sample_times = {0.1, 0.2, 0.3};
    four.jobs = 4;
    const auto a = simulate_ctmc(cf, DiscreteMeasure::uniform(n), 2000, 5, one);
    const auto b = simulate_ctmc(cf, DiscreteMeasure::uniform(n), 2000, 5, four);
    const auto c = simulate_ctmc(cf, DiscreteMeasure::uniform(n), 2000, 6, one);
    CHECK(a.samples == b.samples);
    CHECK(a.jump_counts == b.jump_counts);
    CHECK(a.samples != c.samples);
}

TEST_CASE("two-state chain matches the matrix exponential") {
    // On the two-site torus both jumps lead to the other site, so the frozen
    // chain has total rates a (from 0) and b (from 1) and
    // exp(Q dt) = [[b + a e, a (1 - e)], [b (1 - e), a + b e]] / (a + b), e = exp(-(a + b) dt).
    const std::size_t n = 2;
    const double sigma = 0.1, dt = 0.05;
    const TimeGrid tg(0.0, dt, 1);
    GridFunction ap(n, 0.0), am(n, 0.0);
    ap[0] = 3.0;
    am[1] = 1.0;
    const auto cf = ControlFlow::constant(tg, sigma, ap, am);
    const double a = 2 * sigma * 4 + 3.0 * 2, b = 2 * sigma * 4 + 1.0 * 2;
    const double e = std::exp(-(a + b) * dt);
    const double stay[2] = {(b + a * e) / (a + b), (a + b * e) / (a + b)};
    const std::size_t paths = 100000;
    for (std::uint32_t start : {0u, 1u}) {
        const auto batch = simulate_ctmc(cf, std::vector<std::uint32_t>(paths, start), 17 + start);
        const double p = stay[start];
        const double se = std::sqrt(p * (1 - p) / paths);
        CHECK(std::abs(batch.law(1)[start] - p) <= 3.0 * se);
    }
}

TEST_CASE("recorded paths agree with the sampled states") {
    const std::size_t n = 16;
    const TimeGrid tg(0.0, 0.3, 30);
    const auto cf = ControlFlow::constant(tg, 0.1, GridFunction(n, 2.0), GridFunction(n, 0.0));
    SimulationOptions opt;
    opt.sample_times = {0.0, 0.15, 0.3};
    opt.record_paths = true;
    const auto batch = simulate_ctmc(cf, DiscreteMeasure::uniform(n), 200, 3, opt);
    REQUIRE(batch.paths.size() == 200);
    for (std::size_t p = 0; p < 200; ++p) {
        const auto& path = batch.paths[p];
        CHECK(path.states.size() == batch.jump_counts[p] + 1);
        for (std::size_t j = 0; j < 3; ++j) CHECK(path.state_at(opt.sample_times[j]) == batch.sample(p, j));
        for (std::size_t k = 1; k < path.states.size(); ++k) {
            const auto d = (path.states[k] + n - path.states[k - 1]) % n;
            CHECK((d == 1 || d == n - 1));
            CHECK(path.times[k] >= path.times[k - 1]);
        }
    }
    CHECK(paths_csv(batch, 3).rfind("path_id,jump_time,state_index\n", 0) == 0);
    CHECK(empirical_csv(batch.empirical()).rfind("t,i,frequency\n", 0) == 0);
}

TEST_CASE("thinning majorant is enforced") {
    const FeedbackRates rates = [](double, std::size_t, double& qr, double& ql) {
        qr = 10.0;
        ql = 10.0;
    };
    CHECK_THROWS_AS(simulate_ctmc(rates, 5.0, 8, DiscreteMeasure::uniform(8), 10, 0.0, 1.0, 1), ContractError);
    CHECK_NOTHROW(simulate_ctmc(rates, 20.0, 8, DiscreteMeasure::uniform(8), 10, 0.0, 1.0, 1));
}

TEST_CASE("binning") {
    const GridSpec g(8);
    CHECK(bin_index(0.0, g) == 7);
    CHECK(bin_index(0.125, g) == 0);
    CHECK(bin_index(0.0624, g) == 7);
    CHECK(bin_index(0.0625, g) == 0);
    CHECK(bin_index(0.99, g) == 7);
    CHECK(bin_index(0.5, g) == 3);
    const auto b = bin_initial({0.0, 0.13, 0.5, 0.51}, g);
    CHECK(b.indices == std::vector<std::uint32_t>{7, 0, 3, 3});
    CHECK(b.law[3] == 0.5);
}

TEST_CASE("density sampler reproduces the density") {
    const auto d = cosine_density(0.8);
    const auto sampler = density_sampler(d, 2.0);
    Rng rng(13, {1});
    const GridSpec g(8);
    std::vector<double> xi(40000);
    for (auto& x : xi) x = sampler(rng);
    const auto law = bin_initial(xi, g).law;
    const auto proj = project_measure(d, g);
    for (std::size_t i = 0; i < 8; ++i) CHECK(std::abs(law[i] - proj[i]) <= 4.0 * std::sqrt(proj[i] / 40000.0));
}

TEST_CASE("Brownian motion on the circle") {
    const double sigma = 0.05, T = 0.5;
    const auto batch = simulate_sde([](double, double) { return 0.0; }, [](Rng&) { return 0.3; }, 20000, T, 1e-3,
                                    sigma, 19, {T});
    std::vector<double> c(batch.size());
    for (std::size_t p = 0; p < batch.size(); ++p) c[p] = std::cos(two_pi * (batch.position(p, 0) - 0.3));
    const double expected = std::exp(-4.0 * std::numbers::pi * std::numbers::pi * sigma * T);
    CHECK(std::abs(mean(c) - expected) <= 4.0 * std_error(c));
    for (double x : batch.positions) {
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
    }
}

TEST_CASE("constant drift transports the SDE") {
    const double a = 0.6, T = 0.5;
    const auto batch = simulate_sde([&](double, double) { return a; }, [](Rng&) { return 0.1; }, 100, T, 1e-3,
                                    0.0, 19, {T});
    for (std::size_t p = 0; p < batch.size(); ++p) CHECK(batch.position(p, 0) == doctest::Approx(0.1 + a * T));
}

TEST_CASE("Monte Carlo cost of an uncontrolled chain") {
    const std::size_t n = 8;
    const TimeGrid tg(0.0, 0.5, 10);
    const auto cf = ControlFlow::constant(tg, 0.2, GridFunction(n, 0.0), GridFunction(n, 0.0));
    const CouplingModel cm{constant_map(1.5), constant_map(0.25)};
    SimulationOptions opt;
    opt.record_paths = true;
    const auto batch = simulate_ctmc(cf, DiscreteMeasure::uniform(n), 500, 2, opt);
    const Flow mu(tg.levels(), n, 1.0 / n);
    const auto cost = monte_carlo_cost(batch, cf, *quadratic_model(), cm, mu);
    CHECK(cost.mean == doctest::Approx(1.5 * 0.5 + 0.25).epsilon(1e-12));
    CHECK(cost.standard_error <= 1e-12);
    CHECK(cost.paths == 500);
}

TEST_CASE("Monte Carlo cost with a constant control") {
    // L(a) = a^2 / 2 with a+ = 1: running cost 1/2 per unit time.
    const std::size_t n = 8;
    const TimeGrid tg(0.0, 0.4, 10);
    const auto cf = ControlFlow::constant(tg, 0.2, GridFunction(n, 1.0), GridFunction(n, 0.0));
    const CouplingModel cm{zero_map(), zero_map()};
    SimulationOptions opt;
    opt.record_paths = true;
    const auto batch = simulate_ctmc(cf, DiscreteMeasure::uniform(n), 100, 2, opt);
    const auto cost = monte_carlo_cost(batch, cf, *quadratic_model(), cm, Flow(tg.levels(), n, 1.0 / n));
    CHECK(cost.mean == doctest::Approx(0.5 * 0.4).epsilon(1e-12));
}
