#include "mfg_lattice/common_noise.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "mfg_lattice/rng.hpp"

namespace mfgl {

KernelMatrix build_kernel_matrix(const CommonNoiseKernel& k, const GridSpec& g) {
    require(static_cast<bool>(k.K), "build_kernel_matrix: kernel has no density");
    const std::size_t n = g.n();
    KernelMatrix km;
    km.n = n;
    km.K.assign(n * n, 0.0);
    km.column_scales.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double v = k.K(g.position(i), g.position(j));
            require(v >= 0.0 && std::isfinite(v), "build_kernel_matrix: kernel must be finite and nonnegative");
            km.K[i * n + j] = v;
        }
    }
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += km.K[i * n + j];
        if (!(s > 0.0)) {
            throw ContractError("build_kernel_matrix: kernel vanishes on the fiber y = " +
                                std::to_string(g.position(j)));
        }
        km.column_scales[j] = g.nd() / s;
        for (std::size_t i = 0; i < n; ++i) km.K[i * n + j] *= km.column_scales[j];
    }
    return km;
}

void apply_A(const KernelMatrix& km, std::span<const double> m, std::span<double> out) {
    const std::size_t n = km.n;
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += km(i, j) * m[j];
        out[i] = s / static_cast<double>(n);
    }
}

DiscreteMeasure apply_A(const KernelMatrix& km, const DiscreteMeasure& m) {
    require(m.size() == km.n, "apply_A: shapes differ");
    std::vector<double> out(km.n);
    apply_A(km, m.span(), out);
    return DiscreteMeasure(std::move(out), 1e-12);
}

GridFunction apply_A_star(const KernelMatrix& km, const GridFunction& phi) {
    require(phi.size() == km.n, "apply_A_star: shapes differ");
    const std::size_t n = km.n;
    GridFunction out(n);
    for (std::size_t j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += km(i, j) * phi[i];
        out[j] = s / static_cast<double>(n);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Simplex grid

SimplexGrid::SimplexGrid(std::size_t n, std::size_t M) : n_(n), M_(M) {
    require(n == 2 || n == 3, "SimplexGrid: only n in {2, 3} is supported");
    require(M >= 1, "SimplexGrid: resolution must be positive");
    if (n == 2) {
        size_ = M + 1;
    } else {
        row_offset_.resize(M + 2);
        row_offset_[0] = 0;
        for (std::size_t a = 0; a <= M; ++a) row_offset_[a + 1] = row_offset_[a] + (M - a + 1);
        size_ = row_offset_[M + 1];
    }
}

std::array<std::size_t, 3> SimplexGrid::counts(std::size_t node) const {
    if (n_ == 2) return {node, M_ - node, 0};
    const auto it = std::upper_bound(row_offset_.begin(), row_offset_.end(), node);
    const std::size_t a = static_cast<std::size_t>(it - row_offset_.begin()) - 1;
    const std::size_t b = node - row_offset_[a];
    return {a, b, M_ - a - b};
}

std::size_t SimplexGrid::index(const std::array<std::size_t, 3>& c) const {
    if (n_ == 2) return c[0];
    return row_offset_[c[0]] + c[1];
}

std::vector<double> SimplexGrid::weights(std::size_t node) const {
    const auto c = counts(node);
    std::vector<double> w(n_);
    double rest = 1.0;
    for (std::size_t i = 0; i + 1 < n_; ++i) {
        w[i] = static_cast<double>(c[i]) / static_cast<double>(M_);
        rest -= w[i];
    }
    w[n_ - 1] = std::max(rest, 0.0);
    return w;
}

DiscreteMeasure SimplexGrid::measure(std::size_t node) const { return DiscreteMeasure(weights(node)); }

SimplexGrid::Stencil SimplexGrid::locate(std::span<const double> m) const {
    require(m.size() == n_, "SimplexGrid::locate: measure has the wrong size");
    for (double v : m) {
        if (v < -1e-12) throw ContractError("SimplexGrid::locate: point outside the simplex");
    }
    const double M = static_cast<double>(M_);
    Stencil s;
    if (n_ == 2) {
        const double y = std::clamp(m[0] * M, 0.0, M);
        const auto a = std::min(static_cast<std::size_t>(std::floor(y)), M_);
        const double f = y - static_cast<double>(a);
        if (a == M_ || f <= 0.0) {
            s.node[0] = a;
            s.weight[0] = 1.0;
            s.count = 1;
        } else {
            s.node = {a, a + 1, 0};
            s.weight = {1.0 - f, f, 0.0};
            s.count = 2;
        }
        return s;
    }
    const double y0 = std::clamp(m[0] * M, 0.0, M);
    const double y1 = std::clamp(m[1] * M, 0.0, M - y0);
    std::size_t a = std::min(static_cast<std::size_t>(std::floor(y0)), M_);
    std::size_t b = std::min(static_cast<std::size_t>(std::floor(y1)), M_ - a);
    double fa = std::clamp(y0 - static_cast<double>(a), 0.0, 1.0);
    double fb = std::clamp(y1 - static_cast<double>(b), 0.0, 1.0);
    if (a + b == M_) {
        s.node[0] = index({a, b, 0});
        s.weight[0] = 1.0;
        s.count = 1;
        return s;
    }
    if (fa + fb > 1.0 && a + b + 2 > M_) {
        // Rounding pushed the point past the outer face; project onto it.
        const double t = fa + fb;
        fa /= t;
        fb /= t;
    }
    if (fa + fb <= 1.0) {
        s.node = {index({a, b, 0}), index({a + 1, b, 0}), index({a, b + 1, 0})};
        s.weight = {1.0 - fa - fb, fa, fb};
    } else {
        s.node = {index({a + 1, b + 1, 0}), index({a + 1, b, 0}), index({a, b + 1, 0})};
        s.weight = {fa + fb - 1.0, 1.0 - fb, 1.0 - fa};
    }
    s.count = 3;
    return s;
}

// ---------------------------------------------------------------------------
// F, G

FGPair assemble_FG(const DiscreteMeasure& m, const GridFunction& p, const HamiltonianModel& hm,
                   const CouplingModel& cm, double sigma, const GridSpec& g) {
    const std::size_t n = g.n();
    require(m.size() == n && p.size() == n, "assemble_FG: shapes differ");
    const GridFunction dp = diff_plus(p, g), dm = diff_minus(p, g), lap = diff_second(p, g);
    const GridFunction f = cm.f(m);
    FGPair out;
    out.G = GridFunction(n);
    std::vector<double> qr(n), ql(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto s = hm.split(g.position(i), dp[i], -dm[i]);
        out.G[i] = f[i] - s.h_up - s.h_down + sigma * lap[i];
        qr[i] = sigma * g.nd() * g.nd() - s.dp_h_up * g.nd();
        ql[i] = sigma * g.nd() * g.nd() + s.dp_h_down * g.nd();
    }
    std::vector<double> rhs(n);
    generator_adjoint_apply(qr, ql, m.span(), rhs);
    out.F.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.F[i] = -rhs[i];
    return out;
}

// ---------------------------------------------------------------------------
// Master solver

std::vector<std::size_t> MasterFieldNC::stored_levels() const {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < tg.steps(); k += level_stride) out.push_back(k);
    out.push_back(tg.steps());
    return out;
}

GridFunction MasterFieldNC::value(std::size_t level, std::span<const double> m) const {
    const auto s = sg.locate(m);
    GridFunction out(n());
    for (std::size_t k = 0; k < s.count; ++k) {
        for (std::size_t x = 0; x < n(); ++x) out[x] += s.weight[k] * (*this)(level, s.node[k], x);
    }
    return out;
}

TimeGrid master_nc_time_grid(const HamiltonianModel& hm, const CouplingModel& cm, const SimplexGrid& sg,
                             double lambda, const SolverConfig& cfg) {
    require(cfg.sigma > 0.0, "master_nc_time_grid: sigma must be positive");
    require(lambda >= 0.0, "master_nc_time_grid: lambda must be nonnegative");
    const GridSpec g(sg.n());
    const double P = a_priori_gradient_bound(g, hm, cm, cfg, 0.0);
    const double R = control_rate_bound(g, hm, Scheme::upwind, P);
    const double n = g.nd();
    const double q_max = 2.0 * cfg.sigma * n * n + R * n;
    const double M = static_cast<double>(sg.resolution());
    double dt_max = 0.9 * cfg.dt_safety / (2.0 * cfg.sigma * n * n + 2.0 * R * n + M * q_max + lambda);
    if (cfg.max_dt > 0.0) dt_max = std::min(dt_max, cfg.max_dt);
    return TimeGrid::with_max_step(0.0, cfg.T, dt_max);
}

MasterFieldNC solve_master_nc(const HamiltonianModel& hm, const CouplingModel& cm, const KernelMatrix& km,
                              double lambda, const SolverConfig& cfg, const SimplexGrid& sg, const TimeGrid& tg,
                              std::size_t level_stride) {
    const std::size_t n = sg.n();
    require(level_stride >= 1, "solve_master_nc: level stride must be positive");
    require(km.n == n, "solve_master_nc: kernel matrix lives on a different grid");
    require(cfg.sigma > 0.0 && lambda >= 0.0, "solve_master_nc: need sigma > 0 and lambda >= 0");
    require(cfg.scheme == Scheme::upwind, "solve_master_nc: only the upwind scheme is implemented");
    const GridSpec g(n);
    const std::size_t nodes = sg.size();
    const double nd = g.nd(), sigma = cfg.sigma, dt = tg.dt();
    constexpr std::size_t none = static_cast<std::size_t>(-1);

    MasterFieldNC field;
    field.sg = sg;
    field.tg = tg;
    field.sigma = sigma;
    field.lambda = lambda;
    field.hamiltonian = hm.name();
    field.level_stride = level_stride;
    field.U.assign((field.slot(tg.steps()) + 1) * nodes * n, 0.0);
    // Rolling pair of levels; `nxt` holds level k + 1 while level k is built.
    std::vector<double> nxt(nodes * n), cur(nodes * n);
    auto V = [&](std::size_t node, std::size_t x) { return nxt[node * n + x]; };

    const MeasureFn f = cm.f.bind(g);
    const MeasureFn gt = cm.g.bind(g);
    std::vector<double> fval(nodes * n), counts(nodes * n);
    std::vector<std::size_t> neighbour(nodes * n * 2, none);  // [node][site][right/left]
    std::vector<SimplexGrid::Stencil> jump_target(nodes);
    std::vector<double> am(n);
    for (std::size_t a = 0; a < nodes; ++a) {
        const auto w = sg.weights(a);
        const auto c = sg.counts(a);
        f(w, std::span<double>(fval.data() + a * n, n));
        gt(w, std::span<double>(nxt.data() + a * n, n));
        for (std::size_t i = 0; i < n; ++i) {
            counts[a * n + i] = static_cast<double>(c[i]);
            if (c[i] == 0) continue;
            for (int dir = 0; dir < 2; ++dir) {
                auto moved = c;
                moved[i] -= 1;
                moved[dir == 0 ? g.next(i) : g.prev(i)] += 1;
                neighbour[(a * n + i) * 2 + dir] = sg.index(moved);
            }
        }
        if (lambda > 0.0) {
            apply_A(km, w, am);
            jump_target[a] = sg.locate(am);
        }
    }

    auto store = [&](std::size_t level, const std::vector<double>& values) {
        std::copy(values.begin(), values.end(), field.U.begin() + static_cast<std::ptrdiff_t>(field.slot(level) * nodes * n));
    };
    store(tg.steps(), nxt);

    std::vector<double> p(n), dp(n), dm(n), lap(n), qr(n), ql(n), h(n), shifted(n);
    for (std::size_t k = tg.steps(); k-- > 0;) {
        for (std::size_t a = 0; a < nodes; ++a) {
            for (std::size_t x = 0; x < n; ++x) p[x] = V(a, x);
            diff_plus(p, dp);
            diff_minus(p, dm);
            diff_second(p, lap);
            double hjb_rate = 0.0, population_rate = lambda;
            for (std::size_t i = 0; i < n; ++i) {
                const auto s = hm.split(g.position(i), dp[i], -dm[i]);
                const double ap = std::max(-s.dp_h_up, 0.0), amn = std::max(s.dp_h_down, 0.0);
                h[i] = s.h_up + s.h_down;
                qr[i] = sigma * nd * nd + ap * nd;
                ql[i] = sigma * nd * nd + amn * nd;
                hjb_rate = std::max(hjb_rate, qr[i] + ql[i]);
                population_rate += counts[a * n + i] * (qr[i] + ql[i]);
            }
            if (dt * (hjb_rate + population_rate) > 1.0 + 1e-12) {
                throw CflError("solve_master_nc: CFL violated at step " + std::to_string(k) + ", node " +
                               std::to_string(a));
            }
            if (lambda > 0.0) {
                const auto& st = jump_target[a];
                std::fill(shifted.begin(), shifted.end(), 0.0);
                for (std::size_t s = 0; s < st.count; ++s) {
                    for (std::size_t x = 0; x < n; ++x) shifted[x] += st.weight[s] * V(st.node[s], x);
                }
            }
            for (std::size_t x = 0; x < n; ++x) {
                double transport = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double c = counts[a * n + i];
                    if (c == 0.0) continue;
                    const std::size_t r = neighbour[(a * n + i) * 2], l = neighbour[(a * n + i) * 2 + 1];
                    transport += c * (qr[i] * (V(r, x) - p[x]) + ql[i] * (V(l, x) - p[x]));
                }
                double jump = 0.0;
                if (lambda > 0.0) {
                    double astar = 0.0;
                    for (std::size_t i = 0; i < n; ++i) astar += km(i, x) * shifted[i];
                    jump = -lambda * (p[x] - astar / nd);
                }
                const double G = fval[a * n + x] - h[x] + sigma * lap[x];
                const double v = p[x] + dt * (G + transport + jump);
                if (!std::isfinite(v)) {
                    throw NumericalError("solve_master_nc: non-finite value at step " + std::to_string(k));
                }
                cur[a * n + x] = v;
            }
        }
        nxt.swap(cur);
        if (field.stored(k)) store(k, nxt);
    }
    return field;
}

PopulationFlow simulate_population_nc(const MasterFieldNC& field, const HamiltonianModel& hm,
                                      const DiscreteMeasure& m0, double lambda, const KernelMatrix& km, double T,
                                      std::uint64_t seed) {
    const std::size_t n = field.n();
    require(m0.size() == n && km.n == n, "simulate_population_nc: shapes differ");
    require(T > field.tg.t0() && T <= field.tg.T() + 1e-12, "simulate_population_nc: T outside the field horizon");
    require(lambda >= 0.0, "simulate_population_nc: lambda must be nonnegative");
    require(field.level_stride == 1, "simulate_population_nc: the field must keep every level");
    const GridSpec g(n);
    const TimeGrid& tg = field.tg;
    const double nd = g.nd(), sigma = field.sigma;

    PopulationFlow out;
    Rng rng(seed, {0x6e6f697365ULL});
    if (lambda > 0.0) {
        for (double t = tg.t0() + rng.exponential(lambda); t < T; t += rng.exponential(lambda)) {
            out.jump_times.push_back(t);
        }
    }
    std::size_t last = tg.steps();
    while (last > 0 && tg.time(last) > T + 1e-12) --last;
    out.laws = Flow(last + 1, n);
    std::vector<double> m(m0.weights()), next(n), qr(n), ql(n), flux(n), tmp(n);
    std::copy(m.begin(), m.end(), out.laws.row(0).begin());
    out.times.push_back(tg.time(0));
    std::size_t jump = 0;
    for (std::size_t k = 0; k < last; ++k) {
        const GridFunction p = field.value(k + 1, m);
        const GridFunction dp = diff_plus(p, g), dmn = diff_minus(p, g);
        for (std::size_t i = 0; i < n; ++i) {
            qr[i] = sigma * nd * nd - hm.dp_h_up(g.position(i), dp[i]) * nd;
            ql[i] = sigma * nd * nd + hm.dp_h_down(g.position(i), -dmn[i]) * nd;
        }
        double t = tg.time(k);
        const double t_end = tg.time(k + 1);
        while (t < t_end) {
            const bool jumps_here = jump < out.jump_times.size() && out.jump_times[jump] < t_end;
            const double stop = jumps_here ? out.jump_times[jump] : t_end;
            const double h = stop - t;
            generator_adjoint_apply(qr, ql, m, flux);
            for (std::size_t i = 0; i < n; ++i) next[i] = m[i] + h * flux[i];
            m.swap(next);
            t = stop;
            if (jumps_here) {
                apply_A(km, m, tmp);
                m.swap(tmp);
                ++jump;
            }
        }
        const DiscreteMeasure clean = DiscreteMeasure::normalized(m);
        m = clean.weights();
        std::copy(m.begin(), m.end(), out.laws.row(k + 1).begin());
        out.times.push_back(t_end);
    }
    return out;
}

double monotonicity_in_m_probe(const MasterFieldNC& field, std::size_t trials, std::uint64_t seed) {
    require(trials >= 1, "monotonicity_in_m_probe: need at least one trial");
    Rng rng(seed, {0x6d6f6e6f6d31ULL});
    const std::size_t n = field.n(), nodes = field.sg.size();
    const auto levels_kept = field.stored_levels();
    const std::size_t levels = levels_kept.size();
    double best = 0.0;
    bool first = true;
    for (std::size_t t = 0; t < trials; ++t) {
        const auto level =
            levels_kept[std::min(static_cast<std::size_t>(rng.uniform() * static_cast<double>(levels)), levels - 1)];
        const auto a = std::min(static_cast<std::size_t>(rng.uniform() * static_cast<double>(nodes)), nodes - 1);
        const auto b = std::min(static_cast<std::size_t>(rng.uniform() * static_cast<double>(nodes)), nodes - 1);
        const auto wa = field.sg.weights(a), wb = field.sg.weights(b);
        double pairing = 0.0;
        for (std::size_t x = 0; x < n; ++x) pairing += (field(level, a, x) - field(level, b, x)) * (wa[x] - wb[x]);
        best = first ? pairing : std::min(best, pairing);
        first = false;
    }
    return best;
}

std::string master_nc_csv(const MasterFieldNC& field, std::size_t level_stride) {
    require(level_stride >= 1, "master_nc_csv: stride must be positive");
    const std::size_t n = field.n();
    std::ostringstream os;
    os << "t,x_index";
    for (std::size_t i = 0; i < n; ++i) os << ",w" << i;
    os << ",U\n";
    char buf[64];
    auto emit = [&](std::size_t k) {
        for (std::size_t a = 0; a < field.sg.size(); ++a) {
            const auto w = field.sg.weights(a);
            for (std::size_t x = 0; x < n; ++x) {
                std::snprintf(buf, sizeof buf, "%.17g,%zu", field.tg.time(k), x);
                os << buf;
                for (double v : w) {
                    std::snprintf(buf, sizeof buf, ",%.17g", v);
                    os << buf;
                }
                std::snprintf(buf, sizeof buf, ",%.17g\n", field(k, a, x));
                os << buf;
            }
        }
    };
    const auto kept = field.stored_levels();
    for (std::size_t j = 0; j + 1 < kept.size(); j += level_stride) emit(kept[j]);
    emit(kept.back());
    return os.str();
}

}  // namespace mfgl
