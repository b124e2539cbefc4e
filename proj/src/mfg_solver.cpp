#include "mfg_lattice/mfg_solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace mfgl {

Scheme parse_scheme(const std::string& s) {
    if (s == "upwind") return Scheme::upwind;
    if (s == "centered") return Scheme::centered;
    throw ConfigError("unknown scheme '" + s + "' (valid: upwind, centered)");
}

std::string to_string(Scheme s) { return s == Scheme::upwind ? "upwind" : "centered"; }

Damping parse_damping(const std::string& s) {
    if (s == "fictitious-play" || s == "fictitious_play") return Damping::fictitious_play();
    if (s == "adaptive") return Damping::adaptive();
    if (s.rfind("fixed", 0) == 0) {
        const auto open = s.find_first_of("(:");
        if (open == std::string::npos) throw ConfigError("damping 'fixed' needs a step, e.g. fixed(0.5)");
        std::string num = s.substr(open + 1);
        if (!num.empty() && num.back() == ')') num.pop_back();
        double theta = 0.0;
        try {
            theta = std::stod(num);
        } catch (const std::exception&) {
            throw ConfigError("damping: cannot parse step in '" + s + "'");
        }
        if (!(theta > 0.0 && theta <= 1.0)) throw ConfigError("damping: fixed step must lie in (0, 1]");
        return Damping::fixed(theta);
    }
    throw ConfigError("unknown damping '" + s + "' (valid: fictitious-play, adaptive, fixed(theta))");
}

std::string to_string(const Damping& d) {
    switch (d.kind) {
        case Damping::Kind::fictitious_play: return "fictitious-play";
        case Damping::Kind::adaptive: return "adaptive";
        case Damping::Kind::fixed: {
            char buf[64];
            std::snprintf(buf, sizeof buf, "fixed(%.17g)", d.theta);
            return buf;
        }
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Time grid

TimeGrid::TimeGrid(double t0, double T, std::size_t steps) : t0_(t0), T_(T), steps_(steps) {
    require(T >= t0, "TimeGrid: T must not precede t0");
    require(steps > 0 || T == t0, "TimeGrid: a nonempty horizon needs at least one step");
    dt_ = steps == 0 ? 0.0 : (T - t0) / static_cast<double>(steps);
}

TimeGrid TimeGrid::with_max_step(double t0, double T, double dt_max) {
    require(dt_max > 0.0, "TimeGrid: dt_max must be positive");
    if (T == t0) return TimeGrid(t0, T, 0);
    const double ratio = (T - t0) / dt_max;
    const auto steps = static_cast<std::size_t>(std::max(1.0, std::ceil(ratio * (1.0 - 1e-12))));
    return TimeGrid(t0, T, steps);
}

std::size_t TimeGrid::interval(double t) const noexcept {
    if (steps_ == 0 || t <= t0_) return 0;
    const auto k = static_cast<std::size_t>(std::floor((t - t0_) / dt_));
    return std::min(k, steps_ - 1);
}

double lemma_lipschitz_constant(const GridSpec& g, const HamiltonianModel& hm, const CouplingModel& cm,
                                double horizon, double control_bound) {
    return horizon * (cm.f.lip_x(g.n()) + hm.lagrangian_lip_x(control_bound)) + cm.g.lip_x(g.n());
}

double a_priori_gradient_bound(const GridSpec& g, const HamiltonianModel&, const CouplingModel& cm,
                               const SolverConfig& cfg, double t0) {
    if (cfg.gradient_bound > 0.0) return cfg.gradient_bound;
    // Data part of the Lipschitz bound only: the x-Lipschitz term of L grows
    // like the squared control bound and would shrink dt by orders of
    // magnitude. Underestimates surface as CflError and are retried.
    const double horizon = cfg.T - t0;
    return 1.5 * (horizon * cm.f.lip_x(g.n()) + cm.g.lip_x(g.n()));
}

double control_rate_bound(const GridSpec& g, const HamiltonianModel& hm, Scheme scheme, double gradient_bound) {
    const double P = gradient_bound;
    if (scheme == Scheme::centered) {
        double r = 0.0;
        for (std::size_t k = 0; k < g.n(); ++k) {
            const double x = g.position(k);
            r = std::max({r, std::abs(hm.dp_hamiltonian(x, P)), std::abs(hm.dp_hamiltonian(x, -P))});
        }
        return r;
    }
    double up = 0.0, down = 0.0;
    for (std::size_t k = 0; k < g.n(); ++k) {
        const double x = g.position(k);
        up = std::max(up, -hm.dp_h_up(x, -P));
        down = std::max(down, hm.dp_h_down(x, P));
    }
    return up + down;
}

TimeGrid make_time_grid(const GridSpec& g, const HamiltonianModel& hm, const CouplingModel& cm,
                        const SolverConfig& cfg, double t0, double gradient_scale) {
    require(cfg.sigma > 0.0, "solver: sigma must be positive");
    require(cfg.dt_safety > 0.0 && cfg.dt_safety <= 1.0, "solver: dt_safety must lie in (0, 1]");
    require(t0 <= cfg.T, "solver: t0 must not exceed T");
    const double P = a_priori_gradient_bound(g, hm, cm, cfg, t0) * gradient_scale;
    const double R = control_rate_bound(g, hm, cfg.scheme, P);
    const double n = g.nd();
    double dt_max = 0.9 * cfg.dt_safety / (2.0 * cfg.sigma * n * n + 2.0 * R * n);
    if (cfg.max_dt > 0.0) dt_max = std::min(dt_max, cfg.max_dt);
    return TimeGrid::with_max_step(t0, cfg.T, dt_max);
}

// ---------------------------------------------------------------------------
// Controls and measure flows

double ControlFlow::max_total_rate() const {
    double best = 0.0;
    for (std::size_t k = 0; k < alpha_plus.levels(); ++k) {
        for (std::size_t i = 0; i < n(); ++i) best = std::max(best, rate_right(k, i) + rate_left(k, i));
    }
    return best;
}

ControlFlow ControlFlow::constant(const TimeGrid& tg, double sigma, const GridFunction& alpha_plus,
                                  const GridFunction& alpha_minus) {
    require(alpha_plus.size() == alpha_minus.size(), "ControlFlow: control sizes differ");
    ControlFlow c;
    c.sigma = sigma;
    c.tg = tg;
    c.alpha_plus = Flow(tg.steps(), alpha_plus.size());
    c.alpha_minus = Flow(tg.steps(), alpha_plus.size());
    for (std::size_t k = 0; k < tg.steps(); ++k) {
        std::copy(alpha_plus.values().begin(), alpha_plus.values().end(), c.alpha_plus.row(k).begin());
        std::copy(alpha_minus.values().begin(), alpha_minus.values().end(), c.alpha_minus.row(k).begin());
    }
    return c;
}

DiscreteMeasure FPSolution::at_level(std::size_t k) const {
    require(k < mu.levels(), "FPSolution: level out of range");
    auto r = mu.row(k);
    return DiscreteMeasure::normalized(std::vector<double>(r.begin(), r.end()));
}

DiscreteMeasure FPSolution::at_time(double t) const {
    if (tg.steps() == 0 || t <= tg.t0()) return at_level(0);
    if (t >= tg.T()) return at_level(tg.steps());
    const std::size_t k = tg.interval(t);
    const double w = std::clamp((t - tg.time(k)) / tg.dt(), 0.0, 1.0);
    std::vector<double> v(mu.n());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (1.0 - w) * mu(k, i) + w * mu(k + 1, i);
    return DiscreteMeasure::normalized(std::move(v));
}

namespace {

// One explicit FP step with the controls of interval k; returns the smallest
// entry before clamping.
double fp_step(const ControlFlow& c, std::size_t k, std::span<const double> cur, std::span<double> next) {
    const std::size_t n = cur.size();
    const double dt = c.tg.dt();
    double min_entry = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t ip = i + 1 == n ? 0 : i + 1;
        const std::size_t im = i == 0 ? n - 1 : i - 1;
        const double qr = c.rate_right(k, i), ql = c.rate_left(k, i);
        if (qr < 0.0 || ql < 0.0) {
            throw ContractError("solve_fp: negative jump rate at step " + std::to_string(k) + ", site " +
                                std::to_string(i));
        }
        const double out = dt * (qr + ql);
        if (out > 1.0 + 1e-12) {
            throw CflError("solve_fp: CFL violated at step " + std::to_string(k) + " (dt * rate = " +
                           std::to_string(out) + ")");
        }
        next[i] = (1.0 - out) * cur[i] + dt * (c.rate_right(k, im) * cur[im] + c.rate_left(k, ip) * cur[ip]);
        min_entry = std::min(min_entry, next[i]);
    }
    if (min_entry < 0.0) {
        if (min_entry < -1e-12) {
            throw NumericalError("solve_fp: negative mass " + std::to_string(min_entry) + " at step " +
                                 std::to_string(k));
        }
        double total = 0.0;
        for (double& v : next) {
            v = std::max(v, 0.0);
            total += v;
        }
        for (double& v : next) v /= total;
    }
    return min_entry;
}

void check_flow_shape(const Flow& f, const TimeGrid& tg, std::size_t n, const char* who) {
    require(f.levels() == tg.levels() && f.n() == n, std::string(who) + ": flow does not match the time grid");
}

}  // namespace

// ---------------------------------------------------------------------------
// HJB

HJBSolution solve_hjb(const RunningCost& running, std::span<const double> terminal, const HamiltonianModel& hm,
                      const SolverConfig& cfg, const TimeGrid& tg) {
    const std::size_t n = terminal.size();
    const GridSpec g(n);
    require(cfg.sigma > 0.0, "solve_hjb: sigma must be positive");
    const double nd = g.nd(), sigma = cfg.sigma, dt = tg.dt();
    const double diffusion = 2.0 * sigma * nd * nd;

    HJBSolution out;
    out.u = Flow(tg.levels(), n);
    out.controls.sigma = sigma;
    out.controls.scheme = cfg.scheme;
    out.controls.tg = tg;
    out.controls.alpha_plus = Flow(tg.steps(), n);
    out.controls.alpha_minus = Flow(tg.steps(), n);
    std::copy(terminal.begin(), terminal.end(), out.u.row(tg.steps()).begin());

    std::vector<double> dp(n), dm(n), lap(n), f(n), xs(n);
    for (std::size_t i = 0; i < n; ++i) xs[i] = g.position(i);

    for (std::size_t k = tg.steps(); k-- > 0;) {
        auto next = out.u.row(k + 1);
        auto cur = out.u.row(k);
        auto ap_row = out.controls.alpha_plus.row(k);
        auto am_row = out.controls.alpha_minus.row(k);
        running(k + 1, f);
        diff_plus(next, dp);
        diff_minus(next, dm);
        diff_second(next, lap);
        for (std::size_t i = 0; i < n; ++i) {
            double ap, am, h;
            if (cfg.scheme == Scheme::upwind) {
                const auto s = hm.split(xs[i], dp[i], -dm[i]);
                ap = -s.dp_h_up;
                am = s.dp_h_down;
                if (ap < 0.0 || am < 0.0) {
                    if (std::min(ap, am) < -1e-12) {
                        throw NumericalError("solve_hjb: model returned a negative rate at step " +
                                             std::to_string(k));
                    }
                    ap = std::max(ap, 0.0);
                    am = std::max(am, 0.0);
                }
                h = s.h_up + s.h_down;
            } else {
                const double c = 0.5 * (dp[i] - dm[i]);
                const double a = -hm.dp_hamiltonian(xs[i], c);
                if (std::abs(a) > 2.0 * sigma * nd * (1.0 + 1e-12)) {
                    throw ContractError("solve_hjb: centered scheme needs |alpha| <= 2 sigma n; got |alpha| = " +
                                        std::to_string(std::abs(a)) + " at n = " + std::to_string(n) +
                                        " (refine the grid or use the upwind scheme)");
                }
                ap = 0.5 * a;
                am = -0.5 * a;
                h = hm.hamiltonian(xs[i], c);
            }
            if (dt * (diffusion + (ap + am) * nd) > 1.0 + 1e-12) {
                throw CflError("solve_hjb: CFL violated at step " + std::to_string(k) +
                               " (control rate " + std::to_string(ap + am) + ")");
            }
            ap_row[i] = ap;
            am_row[i] = am;
            cur[i] = next[i] + dt * (sigma * lap[i] - h + f[i]);
            if (!std::isfinite(cur[i])) {
                throw NumericalError("solve_hjb: non-finite value at step " + std::to_string(k) + ", site " +
                                     std::to_string(i));
            }
        }
    }
    return out;
}

HJBSolution solve_hjb(const Flow& mu_flow, const HamiltonianModel& hm, const CouplingModel& cm,
                      const SolverConfig& cfg, const TimeGrid& tg) {
    const std::size_t n = mu_flow.n();
    check_flow_shape(mu_flow, tg, n, "solve_hjb");
    const GridSpec g(n);
    const MeasureFn f = cm.f.bind(g);
    const MeasureFn gt = cm.g.bind(g);
    std::vector<double> terminal(n);
    gt(mu_flow.row(tg.steps()), terminal);
    return solve_hjb([&](std::size_t level, std::span<double> out) { f(mu_flow.row(level), out); }, terminal, hm,
                     cfg, tg);
}

// ---------------------------------------------------------------------------
// Fokker-Planck

FPSolution solve_fp(const ControlFlow& controls, const DiscreteMeasure& m0) {
    const std::size_t n = m0.size();
    require(controls.n() == n, "solve_fp: controls and initial measure live on different grids");
    require(controls.alpha_plus.levels() == controls.tg.steps(), "solve_fp: control table does not match time grid");
    FPSolution out;
    out.tg = controls.tg;
    out.mu = Flow(controls.tg.levels(), n);
    std::copy(m0.weights().begin(), m0.weights().end(), out.mu.row(0).begin());
    for (std::size_t k = 0; k < controls.tg.steps(); ++k) {
        out.min_entry = std::min(out.min_entry, fp_step(controls, k, out.mu.row(k), out.mu.row(k + 1)));
        const auto r = out.mu.row(k + 1);
        out.max_mass_drift = std::max(out.max_mass_drift, std::abs(std::accumulate(r.begin(), r.end(), 0.0) - 1.0));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Fixed point

MFGEquilibrium solve_mfg(const DiscreteMeasure& m0, double t0, const HamiltonianModel& hm,
                         const CouplingModel& cm, const SolverConfig& cfg, const Flow& initial_guess,
                         const TimeGrid& tg) {
    const std::size_t n = m0.size();
    const GridSpec g(n);
    check_flow_shape(initial_guess, tg, n, "solve_mfg");
    require(cfg.max_iter >= 1, "solve_mfg: max_iter must be at least 1");
    require(cfg.tol > 0.0, "solve_mfg: tol must be positive");
    require(std::abs(tg.t0() - t0) < 1e-14 && std::abs(tg.T() - cfg.T) < 1e-14,
            "solve_mfg: time grid does not span [t0, T]");

    MFGEquilibrium eq;
    eq.grid = g;
    eq.tg = tg;
    eq.config = cfg;

    if (cm.measure_independent()) {
        eq.hjb = solve_hjb(initial_guess, hm, cm, cfg, tg);
        eq.fp = solve_fp(eq.hjb.controls, m0);
        eq.iterations = 1;
        eq.residual_history = {0.0};
        eq.converged = true;
        return eq;
    }

    Flow mu = initial_guess;
    std::copy(m0.weights().begin(), m0.weights().end(), mu.row(0).begin());
    double theta = cfg.damping.kind == Damping::Kind::fictitious_play ? 1.0 : cfg.damping.theta;
    require(theta > 0.0 && theta <= 1.0, "solve_mfg: damping step must lie in (0, 1]");
    std::vector<double> cur(n), next(n), blended(n);
    // Residual flow Phi(mu) - mu on a subsample of levels, for the adaptive
    // step: successive residuals give the dominant eigenvalue of the map.
    const std::size_t probe_stride = std::max<std::size_t>(tg.steps() / 256, 1);
    std::vector<double> r_prev, r_cur;
    double spread = 0.0;  // running bound L of the spectrum [-L, 0]
    double theta_used = theta;

    for (std::size_t it = 1; it <= cfg.max_iter; ++it) {
        eq.hjb = solve_hjb(mu, hm, cm, cfg, tg);
        if (cfg.damping.kind == Damping::Kind::fictitious_play) theta = 1.0 / static_cast<double>(it + 1);

        // Forward sweep of the new best response, blended into mu level by level.
        std::copy(m0.weights().begin(), m0.weights().end(), cur.begin());
        double residual = 0.0;
        r_cur.clear();
        for (std::size_t k = 0; k < tg.steps(); ++k) {
            fp_step(eq.hjb.controls, k, cur, next);
            auto old = mu.row(k + 1);
            const bool probe = (k + 1) % probe_stride == 0;
            for (std::size_t i = 0; i < n; ++i) {
                blended[i] = (1.0 - theta) * old[i] + theta * next[i];
                if (probe) r_cur.push_back(next[i] - old[i]);
            }
            residual = std::max(residual, w1_circle(blended, old));
            std::copy(blended.begin(), blended.end(), old.begin());
            std::swap(cur, next);
        }
        eq.residual_history.push_back(residual);
        eq.iterations = it;
        if (!std::isfinite(residual)) throw NumericalError("solve_mfg: non-finite residual at iteration " +
                                                           std::to_string(it));
        if (residual <= cfg.tol) {
            eq.converged = true;
            break;
        }
        if (cfg.damping.kind == Damping::Kind::adaptive) {
            if (!r_prev.empty()) {
                // r_k ~ (1 - theta (1 - lambda)) r_{k-1} along the dominant mode.
                double rr = 0.0, pp = 0.0;
                for (std::size_t j = 0; j < r_cur.size(); ++j) {
                    rr += r_cur[j] * r_prev[j];
                    pp += r_prev[j] * r_prev[j];
                }
                if (pp > 0.0) {
                    const double lambda = 1.0 - (1.0 - rr / pp) / theta_used;
                    if (lambda < 0.0) spread = std::max(spread, -lambda);
                }
            }
            theta_used = theta;
            theta = std::clamp(2.0 / (2.0 + spread), 1.0 / 64.0, cfg.damping.theta);
            r_prev.swap(r_cur);
        }
    }
    eq.fp = solve_fp(eq.hjb.controls, m0);
    return eq;
}

MFGEquilibrium solve_mfg(const DiscreteMeasure& m0, double t0, const HamiltonianModel& hm,
                         const CouplingModel& cm, const SolverConfig& cfg) {
    const GridSpec g(m0.size());
    double scale = 1.0;
    for (int attempt = 0;; ++attempt) {
        const TimeGrid tg = make_time_grid(g, hm, cm, cfg, t0, scale);
        try {
            ControlFlow zero = ControlFlow::constant(tg, cfg.sigma, GridFunction(g.n()), GridFunction(g.n()));
            const FPSolution start = solve_fp(zero, m0);
            return solve_mfg(m0, t0, hm, cm, cfg, start.mu, tg);
        } catch (const CflError&) {
            if (attempt >= 5) throw;
            scale *= 2.0;
        }
    }
}

GridFunction eval_master(double t, const DiscreteMeasure& m, const HamiltonianModel& hm, const CouplingModel& cm,
                         const SolverConfig& cfg) {
    require(t >= 0.0 && t <= cfg.T, "eval_master: t must lie in [0, T]");
    if (t == cfg.T) return cm.g(m);
    const MFGEquilibrium eq = solve_mfg(m, t, hm, cm, cfg);
    if (!eq.converged) {
        throw NumericalError("eval_master: fixed point did not converge in " + std::to_string(eq.iterations) +
                             " iterations (residual " + std::to_string(eq.residual()) + ")");
    }
    auto r = eq.hjb.u.row(0);
    return GridFunction(std::vector<double>(r.begin(), r.end()));
}

double value_bound(const GridSpec& g, const HamiltonianModel& hm, const CouplingModel& cm, double horizon) {
    return horizon * (cm.f.sup_bound(g.n()) + hm.inf_lagrangian_bound()) + cm.g.sup_bound(g.n());
}

// ---------------------------------------------------------------------------
// Generator

void generator_apply(std::span<const double> q_right, std::span<const double> q_left, std::span<const double> u,
                     std::span<double> out) {
    const std::size_t n = u.size();
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t ip = i + 1 == n ? 0 : i + 1;
        const std::size_t im = i == 0 ? n - 1 : i - 1;
        out[i] = q_right[i] * (u[ip] - u[i]) + q_left[i] * (u[im] - u[i]);
    }
}

void generator_adjoint_apply(std::span<const double> q_right, std::span<const double> q_left,
                             std::span<const double> mu, std::span<double> out) {
    const std::size_t n = mu.size();
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t ip = i + 1 == n ? 0 : i + 1;
        const std::size_t im = i == 0 ? n - 1 : i - 1;
        out[i] = q_right[im] * mu[im] + q_left[ip] * mu[ip] - (q_right[i] + q_left[i]) * mu[i];
    }
}

std::vector<double> generator_dense(std::span<const double> q_right, std::span<const double> q_left) {
    const std::size_t n = q_right.size();
    std::vector<double> a(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t ip = i + 1 == n ? 0 : i + 1;
        const std::size_t im = i == 0 ? n - 1 : i - 1;
        a[i * n + ip] += q_right[i];
        a[i * n + im] += q_left[i];
        a[i * n + i] -= q_right[i] + q_left[i];
    }
    return a;
}

double duality_check(const GridFunction& u, const GridFunction& mu, const FeedbackControls& controls,
                     const GridSpec& g, double sigma) {
    const std::size_t n = g.n();
    require(u.size() == n && mu.size() == n && controls.alpha_plus.size() == n && controls.alpha_minus.size() == n,
            "duality_check: shapes differ");
    std::vector<double> qr(n), ql(n), lu(n), lmu(n);
    for (std::size_t i = 0; i < n; ++i) {
        qr[i] = sigma * g.nd() * g.nd() + controls.alpha_plus[i] * g.nd();
        ql[i] = sigma * g.nd() * g.nd() + controls.alpha_minus[i] * g.nd();
    }
    generator_apply(qr, ql, u.span(), lu);
    generator_adjoint_apply(qr, ql, mu.span(), lmu);
    double lhs = 0.0, rhs = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        lhs += lu[i] * mu[i];
        rhs += u[i] * lmu[i];
        scale += std::abs(lu[i] * mu[i]) + std::abs(u[i] * lmu[i]);
    }
    return scale == 0.0 ? 0.0 : std::abs(lhs - rhs) / scale;
}

// ---------------------------------------------------------------------------
// CSV

std::string equilibrium_csv(const MFGEquilibrium& eq, std::size_t level_stride) {
    require(level_stride >= 1, "equilibrium_csv: stride must be positive");
    const std::size_t n = eq.grid.n();
    const std::size_t steps = eq.tg.steps();
    std::ostringstream os;
    os << "t,i,x,u,mu,alpha_plus,alpha_minus\n";
    char buf[256];
    auto emit = [&](std::size_t k) {
        const std::size_t c = steps == 0 ? 0 : std::min(k, steps - 1);
        for (std::size_t i = 0; i < n; ++i) {
            const double ap = steps == 0 ? 0.0 : eq.hjb.controls.alpha_plus(c, i);
            const double am = steps == 0 ? 0.0 : eq.hjb.controls.alpha_minus(c, i);
            std::snprintf(buf, sizeof buf, "%.17g,%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", eq.tg.time(k), i,
                          eq.grid.point(i), eq.hjb.u(k, i), eq.fp.mu(k, i), ap, am);
            os << buf;
        }
    };
    for (std::size_t k = 0; k < steps; k += level_stride) emit(k);
    emit(steps);
    return os.str();
}

std::string residuals_csv(const MFGEquilibrium& eq) {
    std::ostringstream os;
    os << "iter,sup_w1\n";
    char buf[64];
    for (std::size_t k = 0; k < eq.residual_history.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g\n", k + 1, eq.residual_history[k]);
        os << buf;
    }
    return os.str();
}

}  // namespace mfgl
