#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mfg_lattice/harness.hpp"
#include "mfg_lattice/parallel.hpp"
#include "mfg_lattice/rng.hpp"
#include "mfg_lattice/simulate.hpp"

namespace mfgl {

namespace {

constexpr std::uint64_t kTagSimulate = 0x73696d;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string short_fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

RateFit fit_rate(const std::vector<std::pair<double, double>>& pairs) {
    RateFit fit;
    for (const auto& [n, e] : pairs) {
        if (!(e > 0.0) || !std::isfinite(e) || !(n > 0.0)) {
            fit.warnings.push_back("dropped nonpositive point (n = " + short_fmt(n) + ", e = " + short_fmt(e) + ")");
            continue;
        }
        fit.pairs.emplace_back(n, e);
    }
    if (fit.pairs.size() < 3) {
        throw ContractError("fit_rate: need at least 3 positive points, have " + std::to_string(fit.pairs.size()));
    }
    const double k = static_cast<double>(fit.pairs.size());
    double sx = 0.0, sy = 0.0;
    for (const auto& [n, e] : fit.pairs) {
        sx += std::log(n);
        sy += std::log(e);
    }
    const double mx = sx / k, my = sy / k;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (const auto& [n, e] : fit.pairs) {
        const double dx = std::log(n) - mx, dy = std::log(e) - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (sxx == 0.0) throw ContractError("fit_rate: all n are equal");
    const double b = sxy / sxx;
    fit.slope = -b;
    fit.intercept = my - b * mx;
    double ss_res = 0.0;
    for (const auto& [n, e] : fit.pairs) {
        const double r = std::log(e) - (fit.intercept + b * std::log(n));
        ss_res += r * r;
    }
    fit.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
    return fit;
}

Check check_le(std::string name, double value, double threshold) {
    return {std::move(name), value, "<=", threshold, value <= threshold};
}

Check check_ge(std::string name, double value, double threshold) {
    return {std::move(name), value, ">=", threshold, value >= threshold};
}

std::string format_check(const Check& c) {
    return std::string(c.pass ? "PASS " : "FAIL ") + c.name + ": " + short_fmt(c.value) + " " + c.relation + " " +
           short_fmt(c.threshold);
}

std::string RateStudy::csv() const {
    std::string s = "n,error\n";
    for (std::size_t i = 0; i < n.size(); ++i) s += std::to_string(n[i]) + "," + fmt(error[i]) + "\n";
    return s;
}

RateStudy make_rate_study(std::string name, std::vector<std::size_t> n, std::vector<double> error) {
    RateStudy s;
    s.name = std::move(name);
    s.n = std::move(n);
    s.error = std::move(error);
    s.strictly_decreasing = s.error.size() >= 2;
    for (std::size_t i = 1; i < s.error.size(); ++i) {
        if (!(s.error[i] < s.error[i - 1])) s.strictly_decreasing = false;
    }
    std::vector<std::pair<double, double>> pairs;
    for (std::size_t i = 0; i < s.n.size(); ++i) pairs.emplace_back(static_cast<double>(s.n[i]), s.error[i]);
    try {
        s.fit = fit_rate(pairs);
    } catch (const ContractError& e) {
        s.fit.slope = kNaN;
        s.fit.intercept = kNaN;
        s.fit.r2 = kNaN;
        s.fit.warnings.push_back(e.what());
    }
    return s;
}

std::vector<Check> master_rate_checks(const RateStudy& s) {
    return {check_ge("master-rate strictly decreasing", s.strictly_decreasing ? 1.0 : 0.0, 1.0),
            check_ge("master-rate slope", s.fit.slope, 0.15)};
}

std::vector<Check> trajectory_rate_checks(const TrajectoryRateResult& r) {
    std::vector<Check> out{check_ge("trajectory-rate exact-law slope", r.exact.fit.slope, 0.3)};
    if (!r.mc_raw.empty()) {
        out.push_back(check_ge("trajectory-rate Monte Carlo slope", r.monte_carlo.fit.slope, 0.15));
    }
    for (std::size_t i = 0; i < r.exact.n.size(); ++i) {
        out.push_back(check_le("trajectory-rate projection gap n=" + std::to_string(r.exact.n[i]),
                               r.projection_gap[i], r.exact.error[i]));
    }
    return out;
}

std::vector<Check> diffusion_rate_checks(const RateStudy& s) {
    return {check_ge("diffusion-rate slope", s.fit.slope, 0.3), check_ge("diffusion-rate R^2", s.fit.r2, 0.9)};
}

std::vector<Check> heat_checks(const HeatCheckResult& r) {
    return {check_le("heat-check max|Lambda u(T)| ratio", r.ratio, 2.0)};
}

std::vector<Check> common_noise_checks(const CommonNoiseResult& r) {
    std::vector<Check> out{check_ge("common-noise monotonicity in m", r.monotonicity_min, -1e-6)};
    if (r.consistency_checked) {
        out.push_back(check_le("common-noise max|U - characteristics|", r.error, 1e-2));
        out.push_back(check_le("common-noise error ratio under refinement", r.halving_ratio, 0.6));
    }
    return out;
}

std::vector<Check> probe_checks(const ProbeResult& r) {
    std::vector<Check> out;
    if (!r.rows.empty()) {
        const auto& first = r.rows.front();
        const auto& last = r.rows.back();
        out.push_back(check_le("probes sqrt-W1 ratio n=" + std::to_string(last.n) + " vs n=" + std::to_string(first.n),
                               last.measure_ratio, 2.0 * first.measure_ratio));
        for (const auto& row : r.rows) {
            out.push_back(check_le("probes time ratio n=" + std::to_string(row.n), row.time_ratio,
                                   1.2 * first.time_ratio));
            out.push_back(check_le("probes x ratio n=" + std::to_string(row.n), row.x_ratio,
                                   1.2 * first.x_ratio));
            out.push_back(check_le("probes x ratio vs lemma constant n=" + std::to_string(row.n), row.x_ratio,
                                   row.lemma_constant));
        }
    }
    out.push_back(check_ge("probes running coupling monotone", r.coupling.f_min, -1e-12));
    out.push_back(check_ge("probes terminal coupling monotone", r.coupling.g_min, -1e-12));
    out.push_back(check_ge("probes master field monotone", r.cross_monotonicity, -1e-8));
    out.push_back(check_le("probes value bound", r.value_sup, r.value_bound));
    return out;
}

namespace {

struct Report {
    std::vector<std::string> lines;
    std::vector<Check> checks;
};

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
}

void describe(Report& rep, const RateStudy& s) {
    rep.lines.push_back(s.name + ":");
    for (std::size_t i = 0; i < s.n.size(); ++i) {
        rep.lines.push_back("  n = " + std::to_string(s.n[i]) + "  e_n = " + fmt(s.error[i]));
    }
    rep.lines.push_back("  slope = " + short_fmt(s.fit.slope) + "  intercept = " + short_fmt(s.fit.intercept) +
                        "  R^2 = " + short_fmt(s.fit.r2) +
                        "  strictly decreasing = " + (s.strictly_decreasing ? "yes" : "no"));
    for (const auto& w : s.fit.warnings) rep.lines.push_back("  warning: " + w);
    for (const auto& note : s.notes) rep.lines.push_back("  " + note);
}

Report run_solve(const ExperimentConfig& cfg, const std::filesystem::path& out) {
    const auto hm = make_model(cfg);
    const auto cm = make_coupling(cfg);
    const GridSpec g(cfg.n);
    const auto eq = solve_mfg(project_measure(parse_density(cfg.initial), g), 0.0, *hm, cm, cfg.solver);
    write_file(out / "equilibrium.csv", equilibrium_csv(eq, std::max<std::size_t>(cfg.csv_stride, 1)));
    write_file(out / "residuals.csv", residuals_csv(eq));
    Report rep;
    rep.lines.push_back("n = " + std::to_string(cfg.n) + "  steps = " + std::to_string(eq.tg.steps()) +
                        "  dt = " + short_fmt(eq.tg.dt()));
    rep.lines.push_back("iterations = " + std::to_string(eq.iterations) + "  residual = " + short_fmt(eq.residual()) +
                        "  damping = " + to_string(cfg.solver.damping));
    double sup_u = 0.0;
    for (std::size_t l = 0; l < eq.hjb.u.levels(); ++l) {
        for (double v : eq.hjb.u.row(l)) sup_u = std::max(sup_u, std::abs(v));
    }
    rep.checks.push_back(check_le("solve-mfg residual", eq.residual(), cfg.solver.tol));
    rep.checks.push_back(check_le("solve-mfg mass drift", eq.fp.max_mass_drift, 1e-10));
    rep.checks.push_back(check_ge("solve-mfg min entry", eq.fp.min_entry, -1e-12));
    rep.checks.push_back(
        check_le("solve-mfg value bound", sup_u, value_bound(g, *hm, cm, cfg.solver.T) + 10.0 * eq.tg.dt()));
    return rep;
}

Report run_eval_master(const ExperimentConfig& cfg, const std::filesystem::path& out) {
    const auto hm = make_model(cfg);
    const auto cm = make_coupling(cfg);
    const GridSpec g(cfg.n);
    const auto U = eval_master(cfg.t, project_measure(parse_density(cfg.initial), g), *hm, cm, cfg.solver);
    write_file(out / "master.csv", to_csv(U.span()));
    Report rep;
    rep.lines.push_back("U(t = " + short_fmt(cfg.t) + ", ., m) at n = " + std::to_string(cfg.n) +
                        ", m = " + cfg.initial);
    return rep;
}

Report run_simulate(ExperimentConfig cfg, const std::filesystem::path& out, std::size_t jobs) {
    const auto hm = make_model(cfg);
    const auto cm = make_coupling(cfg);
    const GridSpec g(cfg.n);
    if (cfg.sample_times.empty()) apply_study_defaults(cfg);
    const auto m0 = project_measure(parse_density(cfg.initial), g);
    const auto eq = solve_mfg(m0, 0.0, *hm, cm, cfg.solver);
    SimulationOptions opt;
    opt.sample_times = cfg.sample_times;
    opt.record_paths = cfg.record_paths;
    opt.jobs = jobs;
    const auto batch =
        simulate_ctmc(eq.hjb.controls, m0, cfg.n_paths, stream_key(cfg.seed, {kTagSimulate, cfg.n}), opt);
    write_file(out / "paths.csv", paths_csv(batch, 1000));
    write_file(out / "empirical.csv", empirical_csv(batch.empirical()));

    Report rep;
    rep.lines.push_back(std::to_string(batch.size()) + " paths at n = " + std::to_string(cfg.n) +
                        ", thinning majorant " + short_fmt(batch.rate_bound));
    const std::size_t half = batch.size() / 2;
    for (std::size_t j = 0; j < batch.sample_times.size(); ++j) {
        const double t = batch.sample_times[j];
        const double w = w1_circle(batch.law(j), eq.fp.at_time(t));
        const double noise = 0.5 * w1_circle(batch.law(j, 0, half), batch.law(j, half, batch.size()));
        rep.lines.push_back("  t = " + short_fmt(t) + "  W1(empirical, FP) = " + short_fmt(w) +
                            "  split-half noise = " + short_fmt(noise));
        rep.checks.push_back(check_le("simulate W1 vs FP at t=" + short_fmt(t), w, 3.0 * noise + 1e-12));
    }
    if (cfg.record_paths) {
        const auto cost = monte_carlo_cost(batch, eq.hjb.controls, *hm, cm, eq.fp.mu);
        const double expected = inner(m0.span(), eq.hjb.u.row(0));
        rep.lines.push_back("cost mean = " + short_fmt(cost.mean) + "  SE = " + short_fmt(cost.standard_error) +
                            "  E u(0, xi) = " + short_fmt(expected));
        rep.checks.push_back(check_le("simulate |cost - E u(0, xi)|", std::abs(cost.mean - expected),
                                      3.0 * cost.standard_error + 0.02));
    }
    return rep;
}

Report run_subcommand(const std::string& name, ExperimentConfig cfg, const std::filesystem::path& out,
                      std::size_t jobs) {
    if (name == "solve-mfg") return run_solve(cfg, out);
    if (name == "eval-master") return run_eval_master(cfg, out);
    if (name == "simulate") return run_simulate(cfg, out, jobs);
    Report rep;
    if (name == "master-rate") {
        const auto s = run_master_rate(cfg, jobs);
        write_file(out / "master_rate.csv", s.csv());
        describe(rep, s);
        rep.checks = master_rate_checks(s);
    } else if (name == "trajectory-rate") {
        const auto r = run_trajectory_rate(cfg, jobs);
        write_file(out / "trajectory_rate.csv", r.csv());
        describe(rep, r.exact);
        if (!r.mc_raw.empty()) {
            describe(rep, r.monte_carlo);
            for (std::size_t i = 0; i < r.mc_raw.size(); ++i) {
                rep.lines.push_back("  n = " + std::to_string(r.exact.n[i]) + "  raw = " + short_fmt(r.mc_raw[i]) +
                                    "  noise floor = " + short_fmt(r.mc_noise[i]));
            }
            rep.lines.push_back(std::string("  inconclusive = ") + (r.inconclusive ? "yes" : "no"));
        }
        rep.checks = trajectory_rate_checks(r);
    } else if (name == "diffusion-rate") {
        const auto s = run_diffusion_rate(cfg, jobs);
        write_file(out / "diffusion_rate.csv", s.csv());
        describe(rep, s);
        rep.checks = diffusion_rate_checks(s);
    } else if (name == "heat-check") {
        const auto r = run_heat_check(cfg);
        write_file(out / "heat_check.csv", r.csv());
        for (std::size_t i = 0; i < r.n.size(); ++i) {
            rep.lines.push_back("n = " + std::to_string(r.n[i]) + "  max|Lambda u(T)| = " + fmt(r.sup_lambda_u[i]));
        }
        rep.lines.push_back("ratio = " + short_fmt(r.ratio));
        rep.checks = heat_checks(r);
    } else if (name == "common-noise") {
        const auto r = run_common_noise(cfg, jobs);
        const std::size_t kept = r.field.stored_levels().size();
        const std::size_t stride = cfg.csv_stride > 0 ? cfg.csv_stride : std::max<std::size_t>(kept / 100, 1);
        write_file(out / "master_nc.csv", master_nc_csv(r.field, stride));
        rep.lines.push_back("n = " + std::to_string(r.n) + "  M = " + std::to_string(r.M) + "  lambda = " +
                            short_fmt(r.lambda) + "  steps = " + std::to_string(r.steps));
        rep.lines.push_back("min <U(m) - U(m'), m - m'> = " + short_fmt(r.monotonicity_min));
        if (r.consistency_checked) {
            rep.lines.push_back("vs characteristics at " + std::to_string(r.test_nodes) + " nodes: error(M) = " +
                                short_fmt(r.error) + "  error(2M) = " + short_fmt(r.error_refined) +
                                "  ratio = " + short_fmt(r.halving_ratio));
        }
        if (r.lambda > 0.0) rep.lines.push_back("mean common jumps per population run = " + short_fmt(r.mean_jumps));
        rep.lines.push_back("the rate for common noise is not measured: the simplex solver covers n in {2, 3} only");
        rep.checks = common_noise_checks(r);
    } else if (name == "probes") {
        const auto r = run_probes(cfg, jobs);
        write_file(out / "probes.csv", r.csv());
        for (const auto& row : r.rows) {
            rep.lines.push_back("n = " + std::to_string(row.n) + "  time = " + short_fmt(row.time_ratio) +
                                "  x = " + short_fmt(row.x_ratio) + "  sqrt-W1 = " + short_fmt(row.measure_ratio) +
                                "  lemma M = " + short_fmt(row.lemma_constant) +
                                "  skipped = " + std::to_string(row.skipped));
        }
        rep.checks = probe_checks(r);
    } else {
        throw ConfigError("unknown subcommand '" + name + "'");
    }
    return rep;
}

}  // namespace

int cli_main(int argc, char** argv) {
    CLI::App app{"Finite-state mean field games on the periodic lattice", "mfg-lattice"};
    std::string config_path, out_dir;
    std::optional<std::uint64_t> seed;
    std::size_t jobs = 0;
    bool assert_enabled = true;
    app.add_option("--config", config_path, "Config file (section.key = value lines)");
    app.add_option("--out", out_dir, "Output directory (default: output.dir of the config)");
    app.add_option("--seed", seed, "Base seed");
    app.add_option("--jobs", jobs, "Worker threads (default: MFG_LATTICE_JOBS or 1)");
    app.add_flag("--assert,!--no-assert", assert_enabled, "Exit nonzero when a check fails (default on)");
    const std::vector<std::pair<std::string, std::string>> commands = {
        {"solve-mfg", "Equilibrium of the lattice MFG system"},
        {"eval-master", "Master field U(t, ., m)"},
        {"simulate", "Chain trajectories under equilibrium controls"},
        {"master-rate", "Self-convergence of the master field"},
        {"trajectory-rate", "Convergence of equilibrium trajectory laws"},
        {"diffusion-rate", "Chain laws vs a fine chain for a fixed drift"},
        {"common-noise", "Master equation with common noise on the simplex"},
        {"heat-check", "Discrete parabolic estimate with Hoelder forcing"},
        {"probes", "Hoelder, Lipschitz and monotonicity probes"},
    };
    for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();
    app.require_subcommand(1);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    const std::string name = app.get_subcommands().front()->get_name();

    try {
        ExperimentConfig cfg;
        cfg.kind = name;
        if (!config_path.empty()) cfg = load_config(config_path, cfg);
        cfg.kind = name;
        if (seed) cfg.seed = *seed;
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        const std::size_t workers = resolve_jobs(jobs);
        const std::filesystem::path out(cfg.out_dir);
        std::filesystem::create_directories(out);

        const Report rep = run_subcommand(name, cfg, out, workers);
        std::string summary = "mfg-lattice " + name + "\n";
        if (!config_path.empty()) summary += "config: " + config_path + "\n";
        summary += "seed: " + std::to_string(cfg.seed) + "\n";
        for (const auto& line : rep.lines) summary += line + "\n";
        bool ok = true;
        for (const auto& c : rep.checks) {
            summary += format_check(c) + "\n";
            ok = ok && c.pass;
        }
        summary += std::string("assertions: ") + (assert_enabled ? "enabled" : "disabled") + "\n";
        write_file(out / "summary.txt", summary);
        std::cout << summary;
        return assert_enabled && !ok ? 1 : 0;
    } catch (const ConfigError& e) {
        std::cerr << "mfg-lattice: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "mfg-lattice " << name << ": " << e.what() << "\n";
        return 3;
    }
}

}  // namespace mfgl
