#include "mfg_lattice/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "mfg_lattice/rng.hpp"

namespace mfgl {

namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

double pos(double p) { return p > 0.0 ? p : 0.0; }
double neg(double p) { return p < 0.0 ? -p : 0.0; }

class QuadraticModel final : public HamiltonianModel {
public:
    explicit QuadraticModel(double scale) : s_(scale) {
        require(scale > 0.0, "quadratic_model: scale must be positive");
    }
    std::string name() const override { return s_ == 1.0 ? "quadratic" : "quadratic(" + std::to_string(s_) + ")"; }
    double lagrangian(double, double a) const override { return 0.5 * a * a / s_; }
    double hamiltonian(double, double p) const override { return 0.5 * s_ * p * p; }
    double dp_hamiltonian(double, double p) const override { return s_ * p; }
    double h_up(double, double p) const override { return 0.5 * s_ * neg(p) * neg(p); }
    double h_down(double, double p) const override { return 0.5 * s_ * pos(p) * pos(p); }
    double dp_h_up(double, double p) const override { return -s_ * neg(p); }
    double dp_h_down(double, double p) const override { return s_ * pos(p); }

private:
    double s_;
};

class XWeightedModel final : public HamiltonianModel {
public:
    static double weight(double x) { return 1.0 + 0.5 * std::cos(two_pi * x); }
    std::string name() const override { return "xweighted"; }
    double lagrangian(double x, double a) const override { return 0.5 * a * a / weight(x); }
    double hamiltonian(double x, double p) const override { return 0.5 * weight(x) * p * p; }
    double dp_hamiltonian(double x, double p) const override { return weight(x) * p; }
    double h_up(double x, double p) const override { return 0.5 * weight(x) * neg(p) * neg(p); }
    double h_down(double x, double p) const override { return 0.5 * weight(x) * pos(p) * pos(p); }
    double dp_h_up(double x, double p) const override { return -weight(x) * neg(p); }
    double dp_h_down(double x, double p) const override { return weight(x) * pos(p); }
    // |d/dx a^2 / (2 c(x))| <= a^2 * pi / (2 * 0.25)
    double lagrangian_lip_x(double a_bound) const override { return 2.0 * std::numbers::pi * a_bound * a_bound; }
};

double fd_first(const std::function<double(double)>& f, double x) {
    const double h = 1e-5 * std::max(1.0, std::abs(x));
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

double fd_second(const std::function<double(double)>& f, double x) {
    const double h = 1e-4 * std::max(1.0, std::abs(x));
    return (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
}

class NumericSplitModel final : public HamiltonianModel {
public:
    NumericSplitModel(Lagrangian L, MinimizerConfig cfg) : L_(std::move(L)), cfg_(cfg) {
        require(static_cast<bool>(L_.value), "split_from_lagrangian: Lagrangian value callback is empty");
        require(cfg_.a_max > 0.0, "split_from_lagrangian: a_max must be positive");
    }

    std::string name() const override { return L_.name; }
    double lagrangian(double x, double a) const override { return L_.value(x, a); }

    double hamiltonian(double x, double p) const override { return -full(x, p).value; }
    double dp_hamiltonian(double x, double p) const override { return -full(x, p).argmin; }
    double h_up(double x, double p) const override { return -up(x, p).value; }
    double dp_h_up(double x, double p) const override { return -up(x, p).argmin; }
    double h_down(double x, double p) const override { return -down(x, p).value + L_.value(x, 0.0); }
    double dp_h_down(double x, double p) const override { return down(x, p).argmin; }
    SplitEval split(double x, double p_up, double p_down) const override {
        const ScalarMinimum u = up(x, p_up);
        const ScalarMinimum d = down(x, p_down);
        return {-u.value, -u.argmin, -d.value + L_.value(x, 0.0), d.argmin};
    }
    double control_bound() const override { return cfg_.a_max; }
    double lagrangian_lip_x(double a_bound) const override { return L_.lip_x_at_unit * (1.0 + a_bound * a_bound); }

private:
    double la(double x, double a) const {
        if (L_.da) return L_.da(x, a);
        return fd_first([&](double b) { return L_.value(x, b); }, a);
    }
    double laa(double x, double a) const {
        if (L_.daa) return L_.daa(x, a);
        return fd_second([&](double b) { return L_.value(x, b); }, a);
    }

    ScalarMinimum checked(ScalarMinimum r, double hi, const char* which) const {
        if (r.argmin >= hi - 1e-6 * hi) {
            throw ContractError(std::string("split_from_lagrangian: ") + which +
                                " minimizer reached a_max = " + std::to_string(cfg_.a_max) +
                                "; the Lagrangian is not coercive on this range, increase a_max");
        }
        return r;
    }

    // min_{a >= 0} L(x, a) + a p
    ScalarMinimum up(double x, double p) const {
        if (la(x, 0.0) + p >= 0.0) return {0.0, L_.value(x, 0.0)};
        std::function<double(double)> f = [&](double a) { return L_.value(x, a) + a * p; };
        std::function<double(double)> d1 = [&](double a) { return la(x, a) + p; };
        std::function<double(double)> d2 = [&](double a) { return laa(x, a); };
        return checked(minimize_convex(f, d1, d2, 0.0, cfg_.a_max, cfg_.tol, cfg_.max_iter), cfg_.a_max, "H_up");
    }

    // min_{a >= 0} L(x, -a) - a p
    ScalarMinimum down(double x, double p) const {
        if (-la(x, 0.0) - p >= 0.0) return {0.0, L_.value(x, 0.0)};
        std::function<double(double)> f = [&](double a) { return L_.value(x, -a) - a * p; };
        std::function<double(double)> d1 = [&](double a) { return -la(x, -a) - p; };
        std::function<double(double)> d2 = [&](double a) { return laa(x, -a); };
        return checked(minimize_convex(f, d1, d2, 0.0, cfg_.a_max, cfg_.tol, cfg_.max_iter), cfg_.a_max,
                       "H_down");
    }

    // min_a L(x, a) + a p over [-a_max, a_max]
    ScalarMinimum full(double x, double p) const {
        std::function<double(double)> f = [&](double a) { return L_.value(x, a) + a * p; };
        std::function<double(double)> d1 = [&](double a) { return la(x, a) + p; };
        std::function<double(double)> d2 = [&](double a) { return laa(x, a); };
        ScalarMinimum r = minimize_convex(f, d1, d2, -cfg_.a_max, cfg_.a_max, cfg_.tol, cfg_.max_iter);
        if (std::abs(r.argmin) >= cfg_.a_max * (1.0 - 1e-6)) {
            throw ContractError("split_from_lagrangian: H minimizer reached +-a_max; increase a_max");
        }
        return r;
    }

    Lagrangian L_;
    MinimizerConfig cfg_;
};

}  // namespace

ScalarMinimum minimize_convex(const std::function<double(double)>& f, const std::function<double(double)>& d1,
                              const std::function<double(double)>& d2, double lo, double hi, double tol,
                              int max_iter) {
    require(hi > lo, "minimize_convex: empty interval");
    constexpr double inv_phi = 0.6180339887498949;
    double a = lo, b = hi;
    double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
    double fc = f(c), fd = f(d);
    const double bracket_width = 1e-4 * (hi - lo);
    int it = 0;
    while (b - a > bracket_width && it++ < max_iter) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    double x = 0.5 * (a + b);
    for (int k = 0; k < 60; ++k) {
        const double g = d1 ? d1(x) : fd_first(f, x);
        const double h = d2 ? d2(x) : fd_second(f, x);
        if (!(h > 0.0)) break;
        const double next = std::clamp(x - g / h, lo, hi);
        const double step = next - x;
        x = next;
        if (std::abs(step) <= tol) break;
    }
    // Endpoints can beat an interior Newton iterate when the minimum is on the boundary.
    ScalarMinimum best{x, f(x)};
    for (double e : {lo, hi}) {
        const double fe = f(e);
        if (fe < best.value) best = {e, fe};
    }
    return best;
}

HamiltonianPtr quadratic_model(double scale) { return std::make_shared<QuadraticModel>(scale); }

HamiltonianPtr xweighted_model() { return std::make_shared<XWeightedModel>(); }

HamiltonianPtr split_from_lagrangian(Lagrangian L, MinimizerConfig cfg) {
    return std::make_shared<NumericSplitModel>(std::move(L), cfg);
}

HamiltonianPtr cosh_model(MinimizerConfig cfg) {
    Lagrangian L;
    L.name = "cosh";
    L.value = [](double, double a) { return std::cosh(a) - 1.0; };
    L.da = [](double, double a) { return std::sinh(a); };
    L.daa = [](double, double a) { return std::cosh(a); };
    return split_from_lagrangian(std::move(L), cfg);
}

double cosh_hamiltonian_exact(double p) { return p * std::asinh(p) - std::sqrt(1.0 + p * p) + 1.0; }

HamiltonianPtr make_hamiltonian(const std::string& name, double a_max) {
    if (name == "quadratic") return quadratic_model();
    if (name == "xweighted") return xweighted_model();
    if (name == "cosh") return cosh_model(MinimizerConfig{a_max, 1e-10, 200});
    throw ConfigError("unknown hamiltonian '" + name + "' (expected quadratic | cosh | xweighted)");
}

FeedbackControls feedback_controls(const HamiltonianModel& hm, const GridFunction& u, const GridSpec& g) {
    const GridFunction dp = diff_plus(u, g);
    const GridFunction dm = diff_minus(u, g);
    FeedbackControls c{GridFunction(g.n()), GridFunction(g.n())};
    for (std::size_t k = 0; k < g.n(); ++k) {
        const double x = g.position(k);
        c.alpha_plus[k] = -hm.dp_h_up(x, dp[k]);
        c.alpha_minus[k] = hm.dp_h_down(x, -dm[k]);
    }
    return c;
}

MeasureMap::MeasureMap(std::string name, Binder binder, Bound sup, Bound lip_x, Bound lip_w1,
                       bool measure_independent)
    : name_(std::move(name)),
      binder_(std::move(binder)),
      sup_(std::move(sup)),
      lip_x_(std::move(lip_x)),
      lip_w1_(std::move(lip_w1)),
      independent_(measure_independent) {}

GridFunction MeasureMap::operator()(const DiscreteMeasure& m) const {
    GridFunction out(m.size());
    binder_(GridSpec(m.size()))(m.span(), out.span());
    return out;
}

MeasureMap MeasureMap::scaled(double c) const {
    Binder inner = binder_;
    auto absc = std::abs(c);
    return MeasureMap(
        std::to_string(c) + "*" + name_,
        [inner, c](const GridSpec& g) -> MeasureFn {
            MeasureFn fn = inner(g);
            return [fn, c](std::span<const double> m, std::span<double> out) {
                fn(m, out);
                for (double& v : out) v *= c;
            };
        },
        [s = sup_, absc](std::size_t n) { return absc * s(n); },
        [s = lip_x_, absc](std::size_t n) { return absc * s(n); },
        [s = lip_w1_, absc](std::size_t n) { return absc * s(n); }, independent_);
}

MeasureMap convolution_map(const ConvolutionSpec& spec) {
    for (double a : spec.fourier) {
        require(a >= 0.0, "coupling_convolution: Fourier coefficients must be nonnegative (monotonicity)");
    }
    require(spec.local_weight >= 0.0, "coupling_convolution: local weight must be nonnegative");

    double a0 = spec.fourier.empty() ? 0.0 : spec.fourier[0];
    double sum_a = 0.0, lip_a = 0.0, sum_b = 0.0, lip_b = 0.0;
    bool independent = spec.local_weight == 0.0;
    for (std::size_t k = 1; k < spec.fourier.size(); ++k) {
        sum_a += spec.fourier[k];
        lip_a += spec.fourier[k] * two_pi * static_cast<double>(k);
        if (spec.fourier[k] != 0.0) independent = false;
    }
    for (std::size_t k = 0; k < spec.potential.size(); ++k) {
        sum_b += std::abs(spec.potential[k]);
        lip_b += std::abs(spec.potential[k]) * two_pi * static_cast<double>(k + 1);
    }
    const double w = spec.local_weight;

    auto binder = [spec, a0, w](const GridSpec& g) -> MeasureFn {
        const std::size_t n = g.n();
        const std::size_t modes = spec.fourier.size() > 1 ? spec.fourier.size() - 1 : 0;
        std::vector<double> cos_t(modes * n), sin_t(modes * n), coef(modes), pot(n, 0.0);
        for (std::size_t k = 0; k < modes; ++k) {
            coef[k] = spec.fourier[k + 1];
            for (std::size_t i = 0; i < n; ++i) {
                const double ph = two_pi * static_cast<double>(k + 1) * g.position(i);
                cos_t[k * n + i] = std::cos(ph);
                sin_t[k * n + i] = std::sin(ph);
            }
        }
        for (std::size_t k = 0; k < spec.potential.size(); ++k) {
            for (std::size_t i = 0; i < n; ++i) {
                pot[i] += spec.potential[k] * std::cos(two_pi * static_cast<double>(k + 1) * g.position(i));
            }
        }
        const double nd = g.nd();
        return [=](std::span<const double> m, std::span<double> out) {
            require(m.size() == n && out.size() == n, "coupling: measure length does not match bound grid");
            for (std::size_t i = 0; i < n; ++i) out[i] = a0 + pot[i];
            for (std::size_t k = 0; k < modes; ++k) {
                if (coef[k] == 0.0) continue;
                const double* c = cos_t.data() + k * n;
                const double* s = sin_t.data() + k * n;
                double cm = 0.0, sm = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    cm += c[j] * m[j];
                    sm += s[j] * m[j];
                }
                cm *= coef[k];
                sm *= coef[k];
                for (std::size_t i = 0; i < n; ++i) out[i] += cm * c[i] + sm * s[i];
            }
            if (w != 0.0) {
                for (std::size_t i = 0; i < n; ++i) {
                    const double smooth =
                        0.25 * m[i == 0 ? n - 1 : i - 1] + 0.5 * m[i] + 0.25 * m[i + 1 == n ? 0 : i + 1];
                    out[i] += w * nd * smooth;
                }
            }
        };
    };
    return MeasureMap(
        "convolution", binder,
        [=](std::size_t n) { return std::abs(a0) + sum_a + sum_b + w * static_cast<double>(n); },
        [=](std::size_t n) { return lip_a + lip_b + w * static_cast<double>(n) * static_cast<double>(n); },
        [=](std::size_t n) { return lip_a + w * static_cast<double>(n) * static_cast<double>(n); }, independent);
}

MeasureMap zero_map() { return constant_map(0.0); }

MeasureMap constant_map(double c) {
    return MeasureMap(
        "constant",
        [c](const GridSpec&) -> MeasureFn {
            return [c](std::span<const double>, std::span<double> out) { std::fill(out.begin(), out.end(), c); };
        },
        [c](std::size_t) { return std::abs(c); }, [](std::size_t) { return 0.0; }, [](std::size_t) { return 0.0; },
        true);
}

MeasureMap potential_map(std::string name, std::function<double(double)> fn, double sup, double lip_x) {
    return MeasureMap(
        std::move(name),
        [fn](const GridSpec& g) -> MeasureFn {
            std::vector<double> values(g.n());
            for (std::size_t k = 0; k < g.n(); ++k) values[k] = fn(g.position(k));
            return [values](std::span<const double>, std::span<double> out) {
                std::copy(values.begin(), values.end(), out.begin());
            };
        },
        [sup](std::size_t) { return sup; }, [lip_x](std::size_t) { return lip_x; }, [](std::size_t) { return 0.0; },
        true);
}

MeasureMap anti_monotone_map() {
    return MeasureMap(
        "anti-monotone",
        [](const GridSpec& g) -> MeasureFn {
            const double nd = g.nd();
            return [nd](std::span<const double> m, std::span<double> out) {
                for (std::size_t k = 0; k < m.size(); ++k) out[k] = -nd * m[k];
            };
        },
        [](std::size_t n) { return static_cast<double>(n); },
        [](std::size_t n) { return static_cast<double>(n * n); },
        [](std::size_t n) { return static_cast<double>(n * n); }, false);
}

CouplingModel coupling_convolution(const std::vector<double>& fourier_coeffs, double local_weight) {
    MeasureMap m = convolution_map(ConvolutionSpec{fourier_coeffs, local_weight, {}});
    return CouplingModel{m, m};
}

CouplingModel coupling_convolution(const ConvolutionSpec& running, const ConvolutionSpec& terminal) {
    return CouplingModel{convolution_map(running), convolution_map(terminal)};
}

MonotonicityProbe monotonicity_probe(const CouplingModel& c, std::size_t trials, const GridSpec& g,
                                     std::uint64_t seed) {
    require(trials >= 1, "monotonicity_probe: trials must be >= 1");
    const std::size_t n = g.n();
    const MeasureFn f = c.f.bind(g);
    const MeasureFn gg = c.g.bind(g);
    Rng rng(seed, {0x6d6f6e6fULL});
    auto dirichlet = [&] {
        std::vector<double> w(n);
        double s = 0.0;
        for (double& v : w) {
            v = rng.exponential(1.0);
            s += v;
        }
        for (double& v : w) v /= s;
        return w;
    };
    MonotonicityProbe out{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    std::vector<double> fa(n), fb(n), diff(n), dm(n);
    for (std::size_t t = 0; t < trials; ++t) {
        const auto m1 = dirichlet();
        const auto m2 = dirichlet();
        for (std::size_t k = 0; k < n; ++k) dm[k] = m1[k] - m2[k];
        for (auto [fn, slot] : {std::pair{&f, &out.f_min}, std::pair{&gg, &out.g_min}}) {
            (*fn)(m1, fa);
            (*fn)(m2, fb);
            for (std::size_t k = 0; k < n; ++k) diff[k] = fa[k] - fb[k];
            *slot = std::min(*slot, inner(diff, dm));
        }
    }
    return out;
}

CommonNoiseKernel uniform_kernel(double lambda) {
    return {"uniform", [](double, double) { return 1.0; }, lambda};
}

CommonNoiseKernel vonmises_kernel(double kappa, double lambda) {
    require(kappa >= 0.0, "vonmises_kernel: kappa must be nonnegative");
    const double z = std::cyl_bessel_i(0.0, kappa);
    return {"vonmises(" + std::to_string(kappa) + ")",
            [kappa, z](double x, double y) { return std::exp(kappa * std::cos(two_pi * (x - y))) / z; }, lambda};
}

double kernel_normalization_defect(const CommonNoiseKernel& k, std::size_t samples) {
    double worst = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        const double y = static_cast<double>(s) / static_cast<double>(samples);
        const double mass = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
            [&](double x) { return k.K(x, y); }, 0.0, 1.0, 15, 1e-13);
        worst = std::max(worst, std::abs(mass - 1.0));
    }
    return worst;
}

}  // namespace mfgl
