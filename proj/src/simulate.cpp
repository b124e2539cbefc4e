#include "mfg_lattice/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "mfg_lattice/parallel.hpp"

namespace mfgl {

std::uint32_t Path::state_at(double t) const {
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    const std::size_t j = it == times.begin() ? 0 : static_cast<std::size_t>(it - times.begin()) - 1;
    return states[j];
}

DiscreteMeasure TrajectoryBatch::law(std::size_t j, std::size_t begin, std::size_t end) const {
    require(j < sample_times.size(), "TrajectoryBatch::law: sample index out of range");
    end = std::min(end, size());
    require(begin < end, "TrajectoryBatch::law: empty path range");
    std::vector<double> w(n, 0.0);
    for (std::size_t p = begin; p < end; ++p) w[sample(p, j)] += 1.0;
    for (double& v : w) v /= static_cast<double>(end - begin);
    return DiscreteMeasure::normalized(std::move(w));
}

EmpiricalFlow TrajectoryBatch::empirical() const {
    EmpiricalFlow f;
    f.times = sample_times;
    for (std::size_t j = 0; j < sample_times.size(); ++j) f.laws.push_back(law(j));
    return f;
}

namespace {

template <class RateFn, class InitFn>
TrajectoryBatch thinning(std::size_t n, double t0, double T, double bound, std::size_t n_paths, std::uint64_t seed,
                         const SimulationOptions& opt, RateFn&& rates, InitFn&& initial, bool check_bound) {
    require(n >= 2, "simulate_ctmc: grid needs at least two states");
    require(T >= t0, "simulate_ctmc: T must not precede t0");
    require(bound >= 0.0 && std::isfinite(bound), "simulate_ctmc: invalid rate majorant");
    TrajectoryBatch b;
    b.n = n;
    b.seed = seed;
    b.t0 = t0;
    b.T = T;
    b.rate_bound = bound;
    b.sample_times = opt.sample_times.empty() ? std::vector<double>{t0, T} : opt.sample_times;
    for (std::size_t j = 0; j < b.sample_times.size(); ++j) {
        require(b.sample_times[j] >= t0 && b.sample_times[j] <= T, "simulate_ctmc: sample time outside [t0, T]");
        require(j == 0 || b.sample_times[j] >= b.sample_times[j - 1], "simulate_ctmc: sample times must be sorted");
    }
    const std::size_t ns = b.sample_times.size();
    b.samples.assign(n_paths * ns, 0);
    b.jump_counts.assign(n_paths, 0);
    if (opt.record_paths) b.paths.resize(n_paths);

    parallel_for(n_paths, resolve_jobs(opt.jobs), [&](std::size_t p) {
        Rng rng(seed, {p});
        std::size_t state = initial(p, rng);
        require(state < n, "simulate_ctmc: initial state out of range");
        Path* path = opt.record_paths ? &b.paths[p] : nullptr;
        if (path) {
            path->times.push_back(t0);
            path->states.push_back(static_cast<std::uint32_t>(state));
        }
        std::uint32_t* out = b.samples.data() + p * ns;
        std::size_t next_sample = 0;
        std::uint64_t jumps = 0;
        double t = t0;
        if (bound > 0.0) {
            for (;;) {
                t += rng.exponential(bound);
                if (t >= T) break;
                while (next_sample < ns && b.sample_times[next_sample] < t) {
                    out[next_sample++] = static_cast<std::uint32_t>(state);
                }
                double qr = 0.0, ql = 0.0;
                rates(t, state, qr, ql);
                if (check_bound && qr + ql > bound * (1.0 + 1e-12)) {
                    throw ContractError("simulate_ctmc: total rate " + std::to_string(qr + ql) +
                                        " exceeds the thinning majorant " + std::to_string(bound));
                }
                const double u = rng.uniform() * bound;
                if (u < qr) {
                    state = state + 1 == n ? 0 : state + 1;
                } else if (u < qr + ql) {
                    state = state == 0 ? n - 1 : state - 1;
                } else {
                    continue;
                }
                ++jumps;
                if (path) {
                    path->times.push_back(t);
                    path->states.push_back(static_cast<std::uint32_t>(state));
                }
            }
        }
        while (next_sample < ns) out[next_sample++] = static_cast<std::uint32_t>(state);
        b.jump_counts[p] = jumps;
    });
    return b;
}

TrajectoryBatch simulate_table(const ControlFlow& controls, std::size_t n_paths, std::uint64_t seed,
                               const SimulationOptions& opt,
                               const std::function<std::size_t(std::size_t, Rng&)>& initial) {
    const TimeGrid& tg = controls.tg;
    for (std::size_t k = 0; k < controls.alpha_plus.levels(); ++k) {
        for (std::size_t i = 0; i < controls.n(); ++i) {
            if (controls.rate_right(k, i) < 0.0 || controls.rate_left(k, i) < 0.0) {
                throw ContractError("simulate_ctmc: negative jump rate in the control table");
            }
        }
    }
    const double bound = controls.max_total_rate();
    return thinning(
        controls.n(), tg.t0(), tg.T(), bound, n_paths, seed, opt,
        [&](double t, std::size_t i, double& qr, double& ql) {
            const std::size_t k = tg.interval(t);
            qr = controls.rate_right(k, i);
            ql = controls.rate_left(k, i);
        },
        initial, false);
}

}  // namespace

TrajectoryBatch simulate_ctmc(const ControlFlow& controls, const DiscreteMeasure& m0, std::size_t n_paths,
                              std::uint64_t seed, const SimulationOptions& opt) {
    require(m0.size() == controls.n(), "simulate_ctmc: initial law and controls live on different grids");
    return simulate_table(controls, n_paths, seed, opt,
                          [&](std::size_t, Rng& rng) { return rng.categorical(m0.weights()); });
}

TrajectoryBatch simulate_ctmc(const ControlFlow& controls, const std::vector<std::uint32_t>& initial_states,
                              std::uint64_t seed, const SimulationOptions& opt) {
    return simulate_table(controls, initial_states.size(), seed, opt,
                          [&](std::size_t p, Rng&) { return static_cast<std::size_t>(initial_states[p]); });
}

TrajectoryBatch simulate_ctmc(const FeedbackRates& rates, double rate_bound, std::size_t n,
                              const DiscreteMeasure& m0, std::size_t n_paths, double t0, double T,
                              std::uint64_t seed, const SimulationOptions& opt) {
    require(m0.size() == n, "simulate_ctmc: initial law lives on a different grid");
    return thinning(
        n, t0, T, rate_bound, n_paths, seed, opt,
        [&](double t, std::size_t i, double& qr, double& ql) {
            rates(t, i, qr, ql);
            if (qr < 0.0 || ql < 0.0) throw ContractError("simulate_ctmc: feedback returned a negative rate");
        },
        [&](std::size_t, Rng& rng) { return rng.categorical(m0.weights()); }, true);
}

std::uint32_t bin_index(double x, const GridSpec& g) {
    const auto j = static_cast<std::size_t>(std::floor(x * g.nd() + 0.5)) % g.n();
    return static_cast<std::uint32_t>(j == 0 ? g.n() - 1 : j - 1);
}

BinnedInitial bin_initial(const std::vector<double>& xi, const GridSpec& g) {
    require(!xi.empty(), "bin_initial: no samples");
    BinnedInitial out;
    out.indices.reserve(xi.size());
    std::vector<double> w(g.n(), 0.0);
    for (double x : xi) {
        require(x >= 0.0 && x < 1.0, "bin_initial: positions must lie in [0, 1)");
        const std::uint32_t k = bin_index(x, g);
        out.indices.push_back(k);
        w[k] += 1.0;
    }
    for (double& v : w) v /= static_cast<double>(xi.size());
    out.law = DiscreteMeasure::normalized(std::move(w));
    return out;
}

DiscreteMeasure DiffusionBatch::law(std::size_t j, const GridSpec& g) const {
    require(j < sample_times.size(), "DiffusionBatch::law: sample index out of range");
    std::vector<double> w(g.n(), 0.0);
    const std::size_t paths = size();
    for (std::size_t p = 0; p < paths; ++p) w[bin_index(position(p, j), g)] += 1.0;
    for (double& v : w) v /= static_cast<double>(paths);
    return DiscreteMeasure::normalized(std::move(w));
}

DiffusionBatch simulate_sde(const Drift& alpha, const PositionSampler& m0, std::size_t n_paths, double T,
                            double dt_sim, double sigma, std::uint64_t seed, std::vector<double> sample_times,
                            std::size_t jobs) {
    require(T >= 0.0 && dt_sim > 0.0 && sigma >= 0.0, "simulate_sde: need T >= 0, dt_sim > 0, sigma >= 0");
    DiffusionBatch b;
    const std::size_t steps = T == 0.0 ? 0 : static_cast<std::size_t>(std::ceil(T / dt_sim - 1e-9));
    const double dt = steps == 0 ? 0.0 : T / static_cast<double>(steps);
    b.dt_sim = dt;
    b.seed = seed;
    b.sample_times = sample_times.empty() ? std::vector<double>{0.0, T} : std::move(sample_times);
    const std::size_t ns = b.sample_times.size();
    std::vector<std::size_t> at_step(ns);
    for (std::size_t j = 0; j < ns; ++j) {
        require(b.sample_times[j] >= 0.0 && b.sample_times[j] <= T, "simulate_sde: sample time outside [0, T]");
        at_step[j] = dt == 0.0 ? 0 : static_cast<std::size_t>(std::llround(b.sample_times[j] / dt));
    }
    b.positions.assign(n_paths * ns, 0.0);
    const double noise = std::sqrt(2.0 * sigma * dt);
    parallel_for(n_paths, resolve_jobs(jobs), [&](std::size_t p) {
        Rng rng(seed, {p});
        double x = m0(rng);
        double* out = b.positions.data() + p * ns;
        std::size_t j = 0;
        for (std::size_t s = 0;; ++s) {
            while (j < ns && at_step[j] == s) out[j++] = x;
            if (s == steps) break;
            x += alpha(static_cast<double>(s) * dt, x) * dt + (noise > 0.0 ? noise * rng.normal() : 0.0);
            x -= std::floor(x);
            if (x >= 1.0) x = 0.0;
        }
        while (j < ns) out[j++] = x;
    });
    return b;
}

PositionSampler density_sampler(const Density& d, double pdf_max) {
    require(pdf_max > 0.0, "density_sampler: pdf_max must be positive");
    return [d, pdf_max](Rng& rng) {
        for (;;) {
            const double x = rng.uniform();
            if (rng.uniform() * pdf_max <= d.pdf(x)) return x;
        }
    };
}

CostEstimate monte_carlo_cost(const TrajectoryBatch& batch, const ControlFlow& controls, const HamiltonianModel& hm,
                              const CouplingModel& cm, const Flow& mu_flow) {
    const std::size_t n = controls.n();
    const TimeGrid& tg = controls.tg;
    require(batch.n == n && mu_flow.n() == n, "monte_carlo_cost: flow/batch grid mismatch");
    require(mu_flow.levels() == tg.levels(), "monte_carlo_cost: measure flow does not match the time grid");
    require(batch.paths.size() == batch.size() && !batch.paths.empty(),
            "monte_carlo_cost: batch must be simulated with record_paths");
    require(std::abs(batch.t0 - tg.t0()) < 1e-12 && std::abs(batch.T - tg.T()) < 1e-12,
            "monte_carlo_cost: batch horizon differs from the control horizon");
    const GridSpec g(n);
    const MeasureFn f = cm.f.bind(g);
    const MeasureFn gt = cm.g.bind(g);

    // prefix(k, i) = integral of the running cost in state i over [t0, t_k].
    const std::size_t steps = tg.steps();
    Flow rate(steps, n), prefix(steps + 1, n);
    std::vector<double> fv(n), l0(n);
    for (std::size_t i = 0; i < n; ++i) l0[i] = hm.lagrangian(g.position(i), 0.0);
    for (std::size_t k = 0; k < steps; ++k) {
        f(mu_flow.row(k + 1), fv);
        for (std::size_t i = 0; i < n; ++i) {
            const double x = g.position(i);
            const double ap = controls.alpha_plus(k, i), am = controls.alpha_minus(k, i);
            const double l = controls.scheme == Scheme::upwind
                                 ? hm.lagrangian(x, ap) + hm.lagrangian(x, -am) - l0[i]
                                 : hm.lagrangian(x, ap - am);
            rate(k, i) = l + fv[i];
            prefix(k + 1, i) = prefix(k, i) + tg.dt() * rate(k, i);
        }
    }
    auto integral_to = [&](double t, std::size_t i) {
        if (steps == 0) return 0.0;
        const std::size_t k = tg.interval(t);
        return prefix(k, i) + (t - tg.time(k)) * rate(k, i);
    };
    std::vector<double> terminal(n);
    gt(mu_flow.row(steps), terminal);

    double sum = 0.0, sum_sq = 0.0;
    for (const Path& path : batch.paths) {
        double c = 0.0;
        for (std::size_t j = 0; j < path.states.size(); ++j) {
            const double a = path.times[j];
            const double b = j + 1 < path.times.size() ? path.times[j + 1] : tg.T();
            c += integral_to(b, path.states[j]) - integral_to(a, path.states[j]);
        }
        c += terminal[path.states.back()];
        sum += c;
        sum_sq += c * c;
    }
    const double N = static_cast<double>(batch.paths.size());
    CostEstimate e;
    e.paths = batch.paths.size();
    e.mean = sum / N;
    const double var = N > 1 ? std::max(0.0, (sum_sq - N * e.mean * e.mean) / (N - 1.0)) : 0.0;
    e.standard_error = std::sqrt(var / N);
    return e;
}

std::string paths_csv(const TrajectoryBatch& batch, std::size_t max_paths) {
    std::ostringstream os;
    os << "path_id,jump_time,state_index\n";
    char buf[96];
    const std::size_t count = std::min(max_paths, batch.size());
    for (std::size_t p = 0; p < count; ++p) {
        if (!batch.paths.empty()) {
            const Path& path = batch.paths[p];
            for (std::size_t j = 0; j < path.times.size(); ++j) {
                std::snprintf(buf, sizeof buf, "%zu,%.17g,%u\n", p, path.times[j], path.states[j]);
                os << buf;
            }
        } else {
            for (std::size_t j = 0; j < batch.sample_times.size(); ++j) {
                std::snprintf(buf, sizeof buf, "%zu,%.17g,%u\n", p, batch.sample_times[j], batch.sample(p, j));
                os << buf;
            }
        }
    }
    return os.str();
}

std::string empirical_csv(const EmpiricalFlow& flow) {
    std::ostringstream os;
    os << "t,i,frequency\n";
    char buf[96];
    for (std::size_t j = 0; j < flow.times.size(); ++j) {
        for (std::size_t i = 0; i < flow.laws[j].size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g,%zu,%.17g\n", flow.times[j], i, flow.laws[j][i]);
            os << buf;
        }
    }
    return os.str();
}

}  // namespace mfgl
