#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "mfg_lattice/model.hpp"
#include "mfg_lattice/rng.hpp"

using namespace mfgl;

namespace {

// -inf_{a in [0, 10]} {L(a) + a p} by exhaustive search.
double brute_h_up(const std::function<double(double)>& L, double p, double* argmin = nullptr) {
    double best = INFINITY, best_a = 0.0;
    for (int k = 0; k <= 200000; ++k) {
        const double a = 10.0 * k / 200000.0;
        const double v = L(a) + a * p;
        if (v < best) {
            best = v;
            best_a = a;
        }
    }
    if (argmin) *argmin = best_a;
    return -best;
}

// -inf_a {L(a) + a p} over a wide symmetric range.
double brute_h(const std::function<double(double)>& L, double p) {
    double best = INFINITY;
    for (int k = -400000; k <= 400000; ++k) {
        const double a = 20.0 * k / 400000.0;
        best = std::min(best, L(a) + a * p);
    }
    return -best;
}

std::vector<HamiltonianPtr> shipped_models() {
    return {quadratic_model(), xweighted_model(), cosh_model()};
}

DiscreteMeasure dirichlet(Rng& rng, std::size_t n) {
    std::vector<double> w(n);
    for (auto& x : w) x = rng.exponential(1.0);
    return DiscreteMeasure::normalized(w);
}

}  // namespace

TEST_CASE("quadratic split values") {
    const auto q = quadratic_model();
    CHECK(q->h_up(0.3, -2.0) == 2.0);
    CHECK(q->h_down(0.3, -2.0) == 0.0);
    CHECK(q->hamiltonian(0.3, -2.0) == 2.0);
    CHECK(q->h_up(0.0, 0.0) == 0.0);
    CHECK(q->h_down(0.0, 0.0) == 0.0);
    CHECK(q->dp_h_up(0.0, 0.0) == 0.0);
    CHECK(q->dp_h_down(0.0, 0.0) == 0.0);
    CHECK(q->h_down(0.1, 3.0) == 4.5);
    CHECK(q->dp_h_down(0.1, 3.0) == 3.0);
    CHECK(q->dp_h_up(0.1, 3.0) == 0.0);
}

TEST_CASE("quadratic split matches brute-force infima") {
    const auto L = [](double a) { return 0.5 * a * a; };
    const auto q = quadratic_model();
    for (double p : {-3.0, -1.2, 0.0, 0.7, 3.0}) {
        double a_up = 0.0;
        const double up = brute_h_up(L, p, &a_up);
        CHECK(q->h_up(0.0, p) == doctest::Approx(up).epsilon(1e-8));
        CHECK(-q->dp_h_up(0.0, p) == doctest::Approx(a_up).epsilon(1e-4));
        // H_down(p) = -inf_{a >= 0} {L(-a) - a p} + L(0).
        double a_down = 0.0;
        const double down = brute_h_up(L, -p, &a_down);
        CHECK(q->h_down(0.0, p) == doctest::Approx(down).epsilon(1e-8));
        CHECK(q->dp_h_down(0.0, p) == doctest::Approx(a_down).epsilon(1e-4));
    }
    // p = 3: the feedback rates are alpha_+ = 0, alpha_- = 3.
    CHECK(-q->dp_h_up(0.0, 3.0) == 0.0);
    CHECK(q->dp_h_down(0.0, 3.0) == 3.0);
}

TEST_CASE("split identity and rate signs on every shipped model") {
    Rng rng(21, {1});
    for (const auto& hm : shipped_models()) {
        double worst = 0.0;
        for (int k = 0; k < 1000; ++k) {
            const double x = rng.uniform(), p = -5.0 + 10.0 * rng.uniform();
            worst = std::max(worst, std::abs(hm->h_up(x, p) + hm->h_down(x, p) - hm->hamiltonian(x, p)));
            CHECK(-hm->dp_h_up(x, p) >= 0.0);
            CHECK(hm->dp_h_down(x, p) >= 0.0);
        }
        CHECK_MESSAGE(worst <= 1e-8, hm->name());
    }
}

TEST_CASE("numeric Hamiltonian matches the unconstrained Legendre transform") {
    const auto c = cosh_model();
    const auto L = [](double a) { return std::cosh(a) - 1.0; };
    for (double p : {-4.0, -1.0, -0.2, 0.0, 0.5, 2.5}) {
        CHECK(c->hamiltonian(0.0, p) == doctest::Approx(cosh_hamiltonian_exact(p)).epsilon(1e-8));
        CHECK(c->hamiltonian(0.0, p) == doctest::Approx(brute_h(L, p)).epsilon(1e-6));
    }
    CHECK(c->h_up(0.0, 0.0) == doctest::Approx(0.0));
    CHECK(c->h_down(0.0, 0.0) == doctest::Approx(0.0));
}

TEST_CASE("split_from_lagrangian reproduces the quadratic closed form") {
    Lagrangian L;
    L.name = "quadratic-numeric";
    L.value = [](double, double a) { return 0.5 * a * a; };
    const auto numeric = split_from_lagrangian(L);
    const auto q = quadratic_model();
    Rng rng(22, {2});
    for (int k = 0; k < 1000; ++k) {
        const double x = rng.uniform(), p = -5.0 + 10.0 * rng.uniform();
        CHECK(std::abs(numeric->h_up(x, p) - q->h_up(x, p)) <= 1e-8);
        CHECK(std::abs(numeric->h_down(x, p) - q->h_down(x, p)) <= 1e-8);
        CHECK(std::abs(numeric->dp_h_up(x, p) - q->dp_h_up(x, p)) <= 1e-6);
    }
}

TEST_CASE("non-coercive cost is reported") {
    Lagrangian L;
    L.value = [](double, double a) { return 1e-3 * a * a; };
    const auto weak = split_from_lagrangian(L, MinimizerConfig{5.0, 1e-10, 200});
    CHECK_THROWS_AS(weak->h_up(0.0, -1.0), ContractError);
}

TEST_CASE("envelope derivatives match finite differences") {
    Rng rng(23, {3});
    for (const auto& hm : shipped_models()) {
        for (int k = 0; k < 100; ++k) {
            const double x = rng.uniform(), p = -4.0 + 8.0 * rng.uniform();
            if (std::abs(p) < 0.01) continue;  // split transforms kink at 0
            const double h = 1e-3;
            const double fd_up = (hm->h_up(x, p + h) - hm->h_up(x, p - h)) / (2 * h);
            const double fd_down = (hm->h_down(x, p + h) - hm->h_down(x, p - h)) / (2 * h);
            CHECK(std::abs(fd_up - hm->dp_h_up(x, p)) <= 1e-5);
            CHECK(std::abs(fd_down - hm->dp_h_down(x, p)) <= 1e-5);
        }
    }
}

TEST_CASE("Fenchel inequality with equality at the argmin") {
    Rng rng(24, {4});
    for (const auto& hm : shipped_models()) {
        for (int k = 0; k < 200; ++k) {
            const double x = rng.uniform(), p = -4.0 + 8.0 * rng.uniform(), a = 6.0 * rng.uniform();
            CHECK(hm->h_up(x, p) >= -hm->lagrangian(x, a) - a * p - 1e-12);
            const double astar = -hm->dp_h_up(x, p);
            CHECK(std::abs(hm->h_up(x, p) + hm->lagrangian(x, astar) + astar * p) <= 1e-8);
        }
    }
}

TEST_CASE("feedback controls") {
    const GridSpec g(16);
    const auto q = quadratic_model();
    const auto flat = feedback_controls(*q, GridFunction(16, 2.0), g);
    for (std::size_t i = 0; i < 16; ++i) {
        CHECK(flat.alpha_plus[i] == 0.0);
        CHECK(flat.alpha_minus[i] == 0.0);
    }
    // Slope -1.5 between x_1 and x_2: D+u(x_1) = -1.5.
    GridFunction u(16, 0.0);
    u[1] = -1.5 / 16.0;
    const auto fc = feedback_controls(*q, u, g);
    CHECK(fc.alpha_plus[0] == doctest::Approx(1.5));
    Rng rng(25, {5});
    for (int t = 0; t < 20; ++t) {
        GridFunction r(16);
        for (std::size_t i = 0; i < 16; ++i) r[i] = rng.uniform() - 0.5;
        for (const auto& hm : shipped_models()) {
            const auto c = feedback_controls(*hm, r, g);
            for (std::size_t i = 0; i < 16; ++i) {
                CHECK(c.alpha_plus[i] >= 0.0);
                CHECK(c.alpha_minus[i] >= 0.0);
            }
        }
    }
}

TEST_CASE("convolution coupling") {
    const std::size_t n = 16;
    const GridSpec g(n);
    Rng rng(26, {6});
    const auto zero = coupling_convolution(std::vector<double>{0.0}, 0.0);
    const auto m = dirichlet(rng, n);
    const auto fz = zero.f(m);
    for (double v : fz.values()) CHECK(v == 0.0);

    // a = (0, 1): the pairing is |sum_j d_j e^{2 pi i x_j}|^2.
    const auto c1 = coupling_convolution(std::vector<double>{0.0, 1.0}, 0.0);
    for (int t = 0; t < 100; ++t) {
        const auto a = dirichlet(rng, n), b = dirichlet(rng, n);
        const auto fa = c1.f(a), fb = c1.f(b);
        double pairing = 0.0;
        std::complex<double> hat = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = a[j] - b[j];
            pairing += (fa[j] - fb[j]) * d;
            hat += d * std::polar(1.0, 2.0 * std::numbers::pi * g.point(j));
        }
        CHECK(pairing == doctest::Approx(std::norm(hat)).epsilon(1e-10));
        CHECK(pairing >= -1e-14);
    }
    CHECK_THROWS_AS(coupling_convolution(std::vector<double>{0.0, -1.0}, 0.0), ContractError);
    CHECK_THROWS_AS(coupling_convolution(std::vector<double>{0.0, 1.0}, -0.5), ContractError);
}

TEST_CASE("monotonicity probe") {
    const GridSpec g(32);
    const auto mono = coupling_convolution(ConvolutionSpec{{0.0, 1.0, 0.5}, 0.3, {0.5}},
                                           ConvolutionSpec{{0.0, 1.0}, 0.1, {}});
    const auto p = monotonicity_probe(mono, 1000, g, 7);
    CHECK(p.f_min >= -1e-12);
    CHECK(p.g_min >= -1e-12);

    const CouplingModel flat{constant_map(2.0), potential_map("cos", [](double x) { return std::cos(x); }, 1.0, 1.0)};
    const auto z = monotonicity_probe(flat, 100, g, 7);
    CHECK(z.f_min == 0.0);
    CHECK(z.g_min == 0.0);

    const CouplingModel anti{anti_monotone_map(), zero_map()};
    CHECK(monotonicity_probe(anti, 100, g, 7).f_min < 0.0);
}

TEST_CASE("coupling metadata") {
    const auto cm = coupling_convolution(ConvolutionSpec{{0.0, 1.0, 0.5}, 0.0, {0.5}}, ConvolutionSpec{{0.0, 1.0}, 0.0, {}});
    CHECK_FALSE(cm.measure_independent());
    CHECK(cm.f.sup_bound(32) >= 1.5);
    const CouplingModel flat{zero_map(), constant_map(1.0)};
    CHECK(flat.measure_independent());
    // sup bound is a bound.
    Rng rng(27, {7});
    for (int t = 0; t < 50; ++t) {
        const auto m = dirichlet(rng, 32);
        const auto fm = cm.f(m);
        for (double v : fm.values()) CHECK(std::abs(v) <= cm.f.sup_bound(32) + 1e-12);
    }
}

TEST_CASE("common-noise kernels integrate to one") {
    CHECK(kernel_normalization_defect(uniform_kernel()) <= 1e-8);
    CHECK(kernel_normalization_defect(vonmises_kernel(2.0)) <= 1e-8);
    CHECK(kernel_normalization_defect(vonmises_kernel(8.0)) <= 1e-8);
}

TEST_CASE("models by name") {
    CHECK(make_hamiltonian("quadratic")->name() == "quadratic");
    CHECK(make_hamiltonian("cosh")->name() == "cosh");
    CHECK(make_hamiltonian("xweighted")->name() == "xweighted");
    CHECK_THROWS(make_hamiltonian("quartic"));
}
