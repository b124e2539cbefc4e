#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfg_lattice/common_noise.hpp"
#include "mfg_lattice/mfg_solver.hpp"
#include "mfg_lattice/model.hpp"

namespace mfgl {

/// Everything a run needs. Text form: one `section.key = value` per line,
/// `#` starts a comment, arrays are written `[a, b, c]`.
struct ExperimentConfig {
    std::string kind = "solve-mfg";

    // grid
    std::size_t n = 32;
    std::vector<std::size_t> n_list;  // empty: default of the study kind
    std::size_t n_ref = 0;            // 0: default of the study kind

    // model
    std::string hamiltonian = "quadratic";
    double a_max = 50.0;
    ConvolutionSpec running{{0.0, 1.0, 0.5}, 0.0, {0.5}};
    ConvolutionSpec terminal{{0.0, 1.0, 0.5}, 0.0, {0.5}};
    bool terminal_set = false;

    SolverConfig solver;

    // initial law and master-field evaluation
    std::string initial = "vonmises(2, 0.3)";
    double t = 0.0;

    // simulation
    std::size_t n_paths = 10000;
    std::uint64_t seed = 1;
    std::vector<double> sample_times;
    bool record_paths = false;

    // common noise
    double lambda = 0.0;
    std::string kernel = "uniform";
    std::size_t noise_n = 2;
    std::size_t simplex_resolution = 400;

    // studies
    std::size_t densities = 5;
    std::vector<double> eval_times;  // empty: {0, T/2}
    std::size_t probe_samples = 8;
    std::string drift = "default";
    bool monte_carlo = true;

    // output
    std::string out_dir = "out";
    std::size_t csv_stride = 0;  // time-level stride of CSVs; 0: 1 for lattice flows, ~100 rows for simplex fields
};

/// Parses config text; `origin` names the source in error messages.
/// Throws ConfigError naming the line for malformed lines and unknown keys
/// (the latter also lists the valid keys).
ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<config>",
                              ExperimentConfig base = {});
ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {});
/// Canonical keys accepted by the parser.
std::vector<std::string> config_keys();

/// Fills study-dependent defaults (n_list, n_ref, sample times) for `kind`.
void apply_study_defaults(ExperimentConfig& cfg);
/// Checks n_ref >= 4 max(n_list) and that every n divides n_ref.
void validate_embedding(const ExperimentConfig& cfg);

HamiltonianPtr make_model(const ExperimentConfig& cfg);
CouplingModel make_coupling(const ExperimentConfig& cfg);

/// uniform | cosine(a[, shift]) | vonmises(kappa[, center]) | smooth(index[, seed])
Density parse_density(const std::string& spec);
/// uniform | vonmises(kappa)
CommonNoiseKernel parse_kernel(const std::string& spec, double lambda);

}  // namespace mfgl
