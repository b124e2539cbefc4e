#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "mfg_lattice/harness.hpp"
#include "mfg_lattice/parallel.hpp"
#include "mfg_lattice/rng.hpp"
#include "mfg_lattice/simulate.hpp"

namespace mfgl {

namespace {

constexpr std::uint64_t kTagXi = 0x7869;        // initial positions shared across grids
constexpr std::uint64_t kTagTraj = 0x7472616a;  // chain simulation per grid
constexpr std::uint64_t kTagPop = 0x706f70;     // common-noise population runs

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::size_t> with_reference(const ExperimentConfig& cfg) {
    std::vector<std::size_t> all = cfg.n_list;
    all.push_back(cfg.n_ref);
    return all;
}

/// Job order with the reference (last) grid first; it dominates the cost.
std::vector<std::size_t> reference_first(std::size_t grids, std::size_t per_grid) {
    std::vector<std::size_t> order;
    for (std::size_t j = 0; j < per_grid; ++j) order.push_back((grids - 1) * per_grid + j);
    for (std::size_t j = 0; j < (grids - 1) * per_grid; ++j) order.push_back(j);
    return order;
}

/// Fine weights summed into the cells of the coarse grid.
std::vector<double> aggregate(std::span<const double> fine, std::size_t n) {
    const GridSpec gf(fine.size()), gc(n);
    std::vector<double> out(n, 0.0);
    for (std::size_t f = 0; f < fine.size(); ++f) out[bin_index(gf.position(f), gc)] += fine[f];
    return out;
}

double pdf_max(const Density& d) {
    double m = 0.0;
    for (std::size_t k = 0; k < 4096; ++k) m = std::max(m, d.pdf(static_cast<double>(k) / 4096.0));
    return 1.1 * m;
}

double sup_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace

RateStudy run_master_rate(ExperimentConfig cfg, std::size_t jobs) {
    cfg.kind = "master-rate";
    apply_study_defaults(cfg);
    validate_embedding(cfg);
    const auto hm = make_model(cfg);
    const auto cm = make_coupling(cfg);
    const auto grids = with_reference(cfg);
    const std::size_t nt = cfg.eval_times.size();
    const std::size_t per_grid = cfg.densities * nt;
    const auto order = reference_first(grids.size(), per_grid);

    std::vector<GridFunction> fields(order.size());
    parallel_for(order.size(), resolve_jobs(jobs), [&](std::size_t job) {
        const std::size_t slot = order[job];
        const std::size_t gi = slot / per_grid, d = (slot % per_grid) / nt, ti = slot % nt;
        const GridSpec g(grids[gi]);
        const auto m = project_measure(random_smooth_density(cfg.seed, d), g);
        try {
            fields[slot] = eval_master(cfg.eval_times[ti], m, *hm, cm, cfg.solver);
        } catch (const NumericalError& e) {
            throw NumericalError("master-rate: n = " + std::to_string(grids[gi]) + ", density " + std::to_string(d) +
                                 ", t = " + fmt(cfg.eval_times[ti]) + ": " + e.what());
        }
    });

    const std::size_t ref = grids.size() - 1;
    std::vector<double> err;
    for (std::size_t gi = 0; gi < ref; ++gi) {
        const std::size_t n = grids[gi], r = cfg.n_ref / n;
        double e = 0.0;
        for (std::size_t j = 0; j < per_grid; ++j) {
            const auto& coarse = fields[gi * per_grid + j];
            const auto& fine = fields[ref * per_grid + j];
            for (std::size_t k = 0; k < n; ++k) e = std::max(e, std::abs(coarse[k] - fine[(k + 1) * r - 1]));
        }
        err.push_back(e);
    }
    auto study = make_rate_study("master-rate", cfg.n_list, err);
    study.notes.push_back("reference: same scheme on n_ref = " + std::to_string(cfg.n_ref) + " (self-convergence)");
    study.notes.push_back("test set: " + std::to_string(cfg.densities) + " smooth densities x " + std::to_string(nt) +
                          " times, all coarse lattice points");
    return study;
}

std::string TrajectoryRateResult::csv() const {
    std::string s = "n,exact_error,mc_raw,mc_noise,mc_error,projection_gap\n";
    for (std::size_t i = 0; i < exact.n.size(); ++i) {
        s += std::to_string(exact.n[i]) + "," + fmt(exact.error[i]) + ",";
        if (i < mc_raw.size()) {
            s += fmt(mc_raw[i]) + "," + fmt(mc_noise[i]) + "," + fmt(monte_carlo.error[i]);
        } else {
            s += ",,";
        }
        s += "," + fmt(projection_gap[i]) + "\n";
    }
    return s;
}

TrajectoryRateResult run_trajectory_rate(ExperimentConfig cfg, std::size_t jobs) {
    cfg.kind = "trajectory-rate";
    apply_study_defaults(cfg);
    validate_embedding(cfg);
    const auto hm = make_model(cfg);
    const auto cm = make_coupling(cfg);
    const auto grids = with_reference(cfg);
    const auto& times = cfg.sample_times;
    const std::size_t nt = times.size();
    const std::size_t workers = resolve_jobs(jobs);

    // Initial positions drawn once from the continuum density and binned to
    // every grid, so the chains share their randomness at time zero.
    const Density init = parse_density(cfg.initial);
    std::vector<double> xi;
    if (cfg.monte_carlo) {
        const auto sampler = density_sampler(init, pdf_max(init));
        xi.resize(cfg.n_paths);
        for (std::size_t p = 0; p < cfg.n_paths; ++p) {
            Rng rng(cfg.seed, {kTagXi, p});
            xi[p] = sampler(rng);
        }
    }

    struct GridResult {
        std::vector<DiscreteMeasure> exact;
        std::vector<DiscreteMeasure> empirical, first_half, second_half;
    };
    std::vector<GridResult> res(grids.size());
    const auto order = reference_first(grids.size(), 1);
    // One equilibrium at a time keeps the peak memory at a single fine solve.
    const std::size_t solve_jobs = cfg.n_ref >= 256 ? 1 : workers;
    parallel_for(order.size(), solve_jobs, [&](std::size_t job) {
        const std::size_t gi = order[job];
        const GridSpec g(grids[gi]);
        const auto eq = solve_mfg(project_measure(init, g), 0.0, *hm, cm, cfg.solver);
        if (!eq.converged) {
            throw NumericalError("trajectory-rate: equilibrium at n = " + std::to_string(g.n()) +
                                 " did not converge (residual " + fmt(eq.residual()) + ")");
        }
        auto& r = res[gi];
        for (double t : times) r.exact.push_back(eq.fp.at_time(t));
        if (!cfg.monte_carlo) return;
        const auto binned = bin_initial(xi, g);
        SimulationOptions opt;
        opt.sample_times = times;
        opt.jobs = solve_jobs == 1 ? workers : 1;
        const auto batch = simulate_ctmc(eq.hjb.controls, binned.indices, stream_key(cfg.seed, {kTagTraj, g.n()}), opt);
        const std::size_t half = batch.size() / 2;
        for (std::size_t j = 0; j < nt; ++j) {
            r.empirical.push_back(batch.law(j));
            r.first_half.push_back(batch.law(j, 0, half));
            r.second_half.push_back(batch.law(j, half, batch.size()));
        }
    });

    const std::size_t ref = grids.size() - 1;
    TrajectoryRateResult out;
    std::vector<double> exact_err, mc_err;
    for (std::size_t gi = 0; gi < ref; ++gi) {
        const std::size_t n = grids[gi];
        double e = 0.0, gap = 0.0;
        for (std::size_t j = 0; j < nt; ++j) {
            const auto& coarse = res[gi].exact[j];
            const auto& fine = res[ref].exact[j];
            const double w_emb = w1_circle_embedded(coarse.span(), fine.span());
            const auto agg = aggregate(fine.span(), n);
            e = std::max(e, w_emb);
            gap = std::max(gap, std::abs(w_emb - w1_circle(coarse.span(), agg)));
        }
        exact_err.push_back(e);
        out.projection_gap.push_back(gap);

        if (!cfg.monte_carlo) continue;
        double raw = 0.0, floor = 0.0, corrected = 0.0;
        for (std::size_t j = 0; j < nt; ++j) {
            const double w = w1_circle_embedded(res[gi].empirical[j].span(), res[ref].empirical[j].span());
            // Two independent halves sit about twice the full-sample W1 apart.
            const double noise_n = 0.5 * w1_circle(res[gi].first_half[j], res[gi].second_half[j]);
            const double noise_ref = 0.5 * w1_circle(res[ref].first_half[j], res[ref].second_half[j]);
            const double fl = std::hypot(noise_n, noise_ref);
            raw = std::max(raw, w);
            floor = std::max(floor, fl);
            corrected = std::max(corrected, std::sqrt(std::max(w * w - fl * fl, 0.0)));
        }
        out.mc_raw.push_back(raw);
        out.mc_noise.push_back(floor);
        mc_err.push_back(corrected);
        if (floor >= raw) out.inconclusive = true;
    }
    out.exact = make_rate_study("trajectory-rate (exact laws)", cfg.n_list, exact_err);
    out.exact.notes.push_back("reference: equilibrium chain on n_ref = " + std::to_string(cfg.n_ref));
    if (cfg.monte_carlo) {
        out.monte_carlo = make_rate_study("trajectory-rate (Monte Carlo)", cfg.n_list, mc_err);
        out.monte_carlo.notes.push_back(std::to_string(cfg.n_paths) +
                                        " paths per grid; split-half noise floor subtracted in quadrature");
        if (out.inconclusive) out.monte_carlo.notes.push_back("inconclusive: noise floor exceeds the signal");
    }
    return out;
}

DriftRow make_drift(const std::string& name, const GridSpec& g, double T, double& bound) {
    if (name == "zero") {
        bound = 0.0;
        return [](double, std::span<double> a) { std::fill(a.begin(), a.end(), 0.0); };
    }
    if (name != "default") throw ConfigError("unknown drift '" + name + "' (expected default | zero)");
    std::vector<double> s(g.n());
    for (std::size_t k = 0; k < g.n(); ++k) s[k] = std::sin(2.0 * std::numbers::pi * g.position(k));
    bound = 1.0 + std::max(T, 0.0);
    return [s = std::move(s)](double t, std::span<double> a) {
        for (std::size_t k = 0; k < a.size(); ++k) a[k] = s[k] * (1.0 + t);
    };
}

std::vector<DiscreteMeasure> kolmogorov_laws(const DiscreteMeasure& m0, double sigma, const DriftRow& drift,
                                             double drift_bound, const std::vector<double>& times,
                                             double dt_safety) {
    const std::size_t n = m0.size();
    const double nd = static_cast<double>(n);
    const double dt_max = 0.9 * dt_safety / (2.0 * sigma * nd * nd + 2.0 * drift_bound * nd);
    std::vector<double> cur(m0.weights()), next(n), alpha(n), qr(n), ql(n);
    std::vector<DiscreteMeasure> out;
    double t = 0.0;
    for (double tau : times) {
        if (tau < t - 1e-14) throw ContractError("kolmogorov_laws: sample times must be increasing and >= 0");
        const double seg = tau - t;
        const auto steps = seg > 0.0 ? static_cast<std::size_t>(std::ceil(seg / dt_max - 1e-9)) : 0;
        const double dt = steps ? seg / static_cast<double>(steps) : 0.0;
        for (std::size_t s = 0; s < steps; ++s) {
            drift(t + static_cast<double>(s) * dt, alpha);
            for (std::size_t i = 0; i < n; ++i) {
                if (std::abs(alpha[i]) > drift_bound * (1.0 + 1e-12)) {
                    throw ContractError("kolmogorov_laws: drift exceeds its bound");
                }
                qr[i] = sigma * nd * nd + std::max(alpha[i], 0.0) * nd;
                ql[i] = sigma * nd * nd + std::max(-alpha[i], 0.0) * nd;
            }
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t l = i == 0 ? n - 1 : i - 1, r = i + 1 == n ? 0 : i + 1;
                next[i] = cur[i] * (1.0 - dt * (qr[i] + ql[i])) + dt * (qr[l] * cur[l] + ql[r] * cur[r]);
            }
            cur.swap(next);
        }
        t = tau;
        out.push_back(DiscreteMeasure::normalized(cur));
    }
    return out;
}

RateStudy run_diffusion_rate(ExperimentConfig cfg, std::size_t jobs) {
    cfg.kind = "diffusion-rate";
    apply_study_defaults(cfg);
    validate_embedding(cfg);
    const auto grids = with_reference(cfg);
    const Density init = parse_density(cfg.initial);
    const auto order = reference_first(grids.size(), 1);
    std::vector<std::vector<DiscreteMeasure>> laws(grids.size());
    parallel_for(order.size(), resolve_jobs(jobs), [&](std::size_t job) {
        const std::size_t gi = order[job];
        const GridSpec g(grids[gi]);
        double bound = 0.0;
        const auto drift = make_drift(cfg.drift, g, cfg.sample_times.back(), bound);
        laws[gi] = kolmogorov_laws(project_measure(init, g), cfg.solver.sigma, drift, bound, cfg.sample_times,
                                   cfg.solver.dt_safety);
    });
    const std::size_t ref = grids.size() - 1;
    std::vector<double> err;
    for (std::size_t gi = 0; gi < ref; ++gi) {
        double e = 0.0;
        for (std::size_t j = 0; j < cfg.sample_times.size(); ++j) {
            e = std::max(e, w1_circle_embedded(laws[gi][j].span(), laws[ref][j].span()));
        }
        err.push_back(e);
    }
    auto study = make_rate_study("diffusion-rate", cfg.n_list, err);
    study.notes.push_back("drift: " + cfg.drift + "; reference chain on n_ref = " + std::to_string(cfg.n_ref));
    return study;
}

std::string HeatCheckResult::csv() const {
    std::string s = "n,sup_lambda_u\n";
    for (std::size_t i = 0; i < n.size(); ++i) s += std::to_string(n[i]) + "," + fmt(sup_lambda_u[i]) + "\n";
    return s;
}

HeatCheckResult run_heat_check(ExperimentConfig cfg) {
    cfg.kind = "heat-check";
    apply_study_defaults(cfg);
    constexpr double holder = 0.75;
    HeatCheckResult out;
    for (std::size_t n : cfg.n_list) {
        const GridSpec g(n);
        std::vector<double> f(n, 0.0);
        for (std::size_t k = 1; k <= n / 2; ++k) {
            const double c = std::pow(static_cast<double>(k), -(holder + 0.5));
            for (std::size_t i = 0; i < n; ++i) {
                f[i] += c * std::cos(2.0 * std::numbers::pi * static_cast<double>(k) * g.position(i));
            }
        }
        const auto sol = heat_solve(
            GridFunction(n), [&f](double, std::span<double> out_row) { std::copy(f.begin(), f.end(), out_row.begin()); },
            cfg.solver.T, 0.0, std::size_t{1} << 40);
        const auto last = sol.u.row(sol.u.levels() - 1);
        std::vector<double> lu(n);
        diff_second(last, lu);
        out.n.push_back(n);
        out.sup_lambda_u.push_back(sup_abs(lu));
    }
    const auto [lo, hi] = std::minmax_element(out.sup_lambda_u.begin(), out.sup_lambda_u.end());
    out.ratio = *lo > 0.0 ? *hi / *lo : std::numeric_limits<double>::infinity();
    return out;
}

CommonNoiseResult run_common_noise(ExperimentConfig cfg, std::size_t jobs) {
    cfg.kind = "common-noise";
    const auto hm = make_model(cfg);
    const auto cm = make_coupling(cfg);
    const std::size_t n = cfg.noise_n;
    const GridSpec g(n);
    const auto km = build_kernel_matrix(parse_kernel(cfg.kernel, cfg.lambda), g);

    CommonNoiseResult out;
    out.n = n;
    out.M = cfg.simplex_resolution;
    out.lambda = cfg.lambda;
    const SimplexGrid sg(n, out.M);
    const auto tg = master_nc_time_grid(*hm, cm, sg, cfg.lambda, cfg.solver);
    // Population runs need every level; otherwise about 200 levels are kept.
    const std::size_t keep = cfg.lambda > 0.0 ? 1 : std::max<std::size_t>(tg.steps() / 200, 1);
    out.field = solve_master_nc(*hm, cm, km, cfg.lambda, cfg.solver, sg, tg, keep);
    out.steps = tg.steps();
    out.monotonicity_min = monotonicity_in_m_probe(out.field, 100, cfg.seed);

    if (cfg.lambda == 0.0 && out.M % 10 == 0) {
        // Without common noise the field at a node is the equilibrium value of
        // the lattice MFG started there; compare on a fine time grid.
        const SimplexGrid sg2(n, 2 * out.M);
        const TimeGrid tg2(tg.t0(), tg.T(), 2 * tg.steps());
        const auto refined = solve_master_nc(*hm, cm, km, 0.0, cfg.solver, sg2, tg2, tg2.steps());
        std::vector<std::array<std::size_t, 3>> nodes;  // counts in units of M / 10
        if (n == 2) {
            for (std::size_t a = 1; a <= 9; ++a) nodes.push_back({a, 10 - a, 0});
        } else {
            for (std::size_t a = 1; a <= 8; ++a) {
                for (std::size_t b = 1; a + b <= 9; ++b) nodes.push_back({a, b, 10 - a - b});
            }
        }
        SolverConfig fine = cfg.solver;
        fine.max_dt = 1e-5;
        std::vector<GridFunction> reference(nodes.size());
        parallel_for(nodes.size(), resolve_jobs(jobs), [&](std::size_t i) {
            const std::size_t node = sg.index({nodes[i][0] * out.M / 10, nodes[i][1] * out.M / 10,
                                               nodes[i][2] * out.M / 10});
            reference[i] = eval_master(tg.t0(), sg.measure(node), *hm, cm, fine);
        });
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            const std::size_t c = out.M / 10;
            const std::size_t node = sg.index({nodes[i][0] * c, nodes[i][1] * c, nodes[i][2] * c});
            const std::size_t node2 = sg2.index({nodes[i][0] * 2 * c, nodes[i][1] * 2 * c, nodes[i][2] * 2 * c});
            for (std::size_t x = 0; x < n; ++x) {
                out.error = std::max(out.error, std::abs(out.field(0, node, x) - reference[i][x]));
                out.error_refined = std::max(out.error_refined, std::abs(refined(0, node2, x) - reference[i][x]));
            }
        }
        out.consistency_checked = true;
        out.test_nodes = nodes.size();
        out.halving_ratio = out.error > 0.0 ? out.error_refined / out.error : 0.0;
    }

    if (cfg.lambda > 0.0) {
        const auto m0 = DiscreteMeasure::uniform(n);
        constexpr std::size_t runs = 20;
        double jumps = 0.0;
        for (std::size_t r = 0; r < runs; ++r) {
            const auto flow = simulate_population_nc(out.field, *hm, m0, cfg.lambda, km, tg.T(),
                                                     stream_key(cfg.seed, {kTagPop, r}));
            jumps += static_cast<double>(flow.jump_times.size());
        }
        out.mean_jumps = jumps / runs;
    }
    return out;
}

std::string ProbeResult::csv() const {
    std::string s = "n,time_ratio,x_ratio,measure_ratio,gradient_measure_ratio,lemma_constant,samples,skipped\n";
    for (const auto& r : rows) {
        s += std::to_string(r.n) + "," + fmt(r.time_ratio) + "," + fmt(r.x_ratio) + "," + fmt(r.measure_ratio) + "," +
             fmt(r.gradient_measure_ratio) + "," + fmt(r.lemma_constant) + "," + std::to_string(r.samples) + "," +
             std::to_string(r.skipped) + "\n";
    }
    return s;
}

ProbeResult run_probes(ExperimentConfig cfg, std::size_t jobs) {
    cfg.kind = "probes";
    apply_study_defaults(cfg);
    const auto hm = make_model(cfg);
    const auto cm = make_coupling(cfg);
    ProbeResult out;
    out.rows = lipschitz_probe(cfg.n_list, cfg.probe_samples, *hm, cm, cfg.solver, cfg.seed, resolve_jobs(jobs));

    const GridSpec g(cfg.n);
    out.coupling = monotonicity_probe(cm, 1000, g, cfg.seed);
    const auto m1 = project_measure(random_smooth_density(cfg.seed, 1000), g);
    const auto m2 = project_measure(random_smooth_density(cfg.seed, 1001), g);
    const auto u1 = eval_master(0.0, m1, *hm, cm, cfg.solver);
    const auto u2 = eval_master(0.0, m2, *hm, cm, cfg.solver);
    for (std::size_t k = 0; k < g.n(); ++k) out.cross_monotonicity += (u1[k] - u2[k]) * (m1[k] - m2[k]);

    const auto eq = solve_mfg(project_measure(parse_density(cfg.initial), g), 0.0, *hm, cm, cfg.solver);
    for (std::size_t l = 0; l < eq.hjb.u.levels(); ++l) out.value_sup = std::max(out.value_sup, sup_abs(eq.hjb.u.row(l)));
    out.value_bound = value_bound(g, *hm, cm, cfg.solver.T) + 10.0 * eq.tg.dt();
    return out;
}

}  // namespace mfgl
