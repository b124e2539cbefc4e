#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <string>

#include "mfg_lattice/mfg_solver.hpp"
#include "mfg_lattice/parallel.hpp"
#include "mfg_lattice/rng.hpp"

namespace mfgl {

std::size_t resolve_jobs(std::size_t requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("MFG_LATTICE_JOBS")) {
        char* end = nullptr;
        const unsigned long v = std::strtoul(env, &end, 10);
        if (end != env && *end == '\0' && v > 0) return v;
    }
    return 1;
}

Density random_smooth_density(std::uint64_t seed, std::size_t index) {
    Rng rng(seed, {0x736d6f6f7468ULL, index});
    constexpr int modes = 3;
    std::array<double, modes> amp{}, shift{};
    double budget = 0.8;
    for (int k = 0; k < modes; ++k) {
        amp[k] = budget * rng.uniform() / static_cast<double>(k + 1);
        budget -= amp[k];
        shift[k] = rng.uniform();
    }
    return {"smooth#" + std::to_string(index), [amp, shift](double x) {
                double v = 1.0;
                for (int k = 0; k < modes; ++k) {
                    v += amp[k] * std::cos(2.0 * std::numbers::pi * (k + 1) * (x - shift[k]));
                }
                return v;
            }};
}

std::vector<LipschitzRow> lipschitz_probe(const std::vector<std::size_t>& n_list, std::size_t sample_count,
                                          const HamiltonianModel& hm, const CouplingModel& cm,
                                          const SolverConfig& cfg, std::uint64_t seed, std::size_t jobs) {
    require(sample_count >= 1, "lipschitz_probe: need at least one sample");
    std::vector<LipschitzRow> rows;
    for (std::size_t n : n_list) {
        const GridSpec g(n);
        struct Sample {
            double time = 0, x = 0, measure = 0, gradient = 0;
            bool skipped_time = false, skipped_measure = false;
        };
        const auto samples = parallel_map<Sample>(sample_count, resolve_jobs(jobs), [&](std::size_t s) {
            Rng rng(seed, {0x4c6970ULL, s});
            const double t = 0.9 * cfg.T * rng.uniform();
            const double t2 = 0.9 * cfg.T * rng.uniform();
            const DiscreteMeasure m = project_measure(random_smooth_density(seed, 2 * s), g);
            const DiscreteMeasure m2 = project_measure(random_smooth_density(seed, 2 * s + 1), g);
            const GridFunction ua = eval_master(t, m, hm, cm, cfg);
            Sample out;
            for (std::size_t i = 0; i < n; ++i) {
                out.x = std::max(out.x, std::abs(ua[g.next(i)] - ua[i]) * g.nd());
            }
            if (std::abs(t - t2) > 1e-12) {
                const GridFunction ub = eval_master(t2, m, hm, cm, cfg);
                double d = 0.0;
                for (std::size_t i = 0; i < n; ++i) d = std::max(d, std::abs(ua[i] - ub[i]));
                out.time = d / std::pow(std::abs(t - t2), 0.25);
            } else {
                out.skipped_time = true;
            }
            const double w = w1_circle(m, m2);
            if (w > 1e-14) {
                const GridFunction uc = eval_master(t, m2, hm, cm, cfg);
                const GridFunction da = diff_plus(ua, g), dc = diff_plus(uc, g);
                double d = 0.0, dg = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    d = std::max(d, std::abs(ua[i] - uc[i]));
                    dg = std::max(dg, std::abs(da[i] - dc[i]));
                }
                out.measure = d / std::sqrt(w);
                out.gradient = dg / std::sqrt(w);
            } else {
                out.skipped_measure = true;
            }
            return out;
        });
        LipschitzRow row;
        row.n = n;
        row.samples = sample_count;
        for (const auto& s : samples) {
            row.time_ratio = std::max(row.time_ratio, s.time);
            row.x_ratio = std::max(row.x_ratio, s.x);
            row.measure_ratio = std::max(row.measure_ratio, s.measure);
            row.gradient_measure_ratio = std::max(row.gradient_measure_ratio, s.gradient);
            row.skipped += (s.skipped_time ? 1 : 0) + (s.skipped_measure ? 1 : 0);
        }
        row.lemma_constant = lemma_lipschitz_constant(g, hm, cm, cfg.T, hm.control_bound());
        rows.push_back(row);
    }
    return rows;
}

}  // namespace mfgl
