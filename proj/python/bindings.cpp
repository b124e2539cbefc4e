#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "mfg_lattice/config.hpp"
#include "mfg_lattice/harness.hpp"
#include "mfg_lattice/simulate.hpp"

namespace py = pybind11;
using namespace mfgl;

namespace {

py::array_t<double> to_array(std::span<const double> v) {
    py::array_t<double> out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

py::array_t<double> to_array(const Flow& f) {
    py::array_t<double> out({static_cast<py::ssize_t>(f.levels()), static_cast<py::ssize_t>(f.n())});
    auto* p = out.mutable_data();
    for (std::size_t k = 0; k < f.levels(); ++k) {
        const auto row = f.row(k);
        std::copy(row.begin(), row.end(), p + k * f.n());
    }
    return out;
}

std::vector<double> to_vector(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 1) throw py::value_error("expected a one-dimensional array");
    return {a.data(), a.data() + a.size()};
}

DiscreteMeasure initial_measure(const ExperimentConfig& cfg) {
    return project_measure(parse_density(cfg.initial), GridSpec(cfg.n));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Finite-state mean field games on the periodic lattice";

    py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<CflError>(m, "CflError", PyExc_RuntimeError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_RuntimeError);

    py::class_<ExperimentConfig>(m, "Config")
        .def(py::init<>())
        .def_readwrite("kind", &ExperimentConfig::kind)
        .def_readwrite("n", &ExperimentConfig::n)
        .def_readwrite("n_list", &ExperimentConfig::n_list)
        .def_readwrite("n_ref", &ExperimentConfig::n_ref)
        .def_readwrite("hamiltonian", &ExperimentConfig::hamiltonian)
        .def_readwrite("initial", &ExperimentConfig::initial)
        .def_readwrite("t", &ExperimentConfig::t)
        .def_readwrite("n_paths", &ExperimentConfig::n_paths)
        .def_readwrite("seed", &ExperimentConfig::seed)
        .def_readwrite("sample_times", &ExperimentConfig::sample_times)
        .def_readwrite("lam", &ExperimentConfig::lambda)
        .def_readwrite("kernel", &ExperimentConfig::kernel)
        .def_property(
            "sigma", [](const ExperimentConfig& c) { return c.solver.sigma; },
            [](ExperimentConfig& c, double v) { c.solver.sigma = v; })
        .def_property(
            "T", [](const ExperimentConfig& c) { return c.solver.T; }, [](ExperimentConfig& c, double v) { c.solver.T = v; })
        .def_property(
            "tol", [](const ExperimentConfig& c) { return c.solver.tol; },
            [](ExperimentConfig& c, double v) { c.solver.tol = v; })
        .def_property(
            "scheme", [](const ExperimentConfig& c) { return to_string(c.solver.scheme); },
            [](ExperimentConfig& c, const std::string& v) { c.solver.scheme = parse_scheme(v); })
        .def_property(
            "damping", [](const ExperimentConfig& c) { return to_string(c.solver.damping); },
            [](ExperimentConfig& c, const std::string& v) { c.solver.damping = parse_damping(v); });

    m.def("parse_config", [](const std::string& text) { return parse_config(text, "<python>"); }, py::arg("text"));
    m.def("load_config", [](const std::string& path) { return load_config(path); }, py::arg("path"));

    py::class_<MFGEquilibrium>(m, "Equilibrium")
        .def_property_readonly("n", [](const MFGEquilibrium& e) { return e.grid.n(); })
        .def_property_readonly("times",
                               [](const MFGEquilibrium& e) {
                                   std::vector<double> t(e.tg.levels());
                                   for (std::size_t k = 0; k < t.size(); ++k) t[k] = e.tg.time(k);
                                   return to_array(t);
                               })
        .def_property_readonly("u", [](const MFGEquilibrium& e) { return to_array(e.hjb.u); })
        .def_property_readonly("mu", [](const MFGEquilibrium& e) { return to_array(e.fp.mu); })
        .def_property_readonly("alpha_plus", [](const MFGEquilibrium& e) { return to_array(e.hjb.controls.alpha_plus); })
        .def_property_readonly("alpha_minus",
                               [](const MFGEquilibrium& e) { return to_array(e.hjb.controls.alpha_minus); })
        .def_readonly("iterations", &MFGEquilibrium::iterations)
        .def_readonly("residuals", &MFGEquilibrium::residual_history)
        .def_readonly("converged", &MFGEquilibrium::converged)
        .def_property_readonly("mass_drift", [](const MFGEquilibrium& e) { return e.fp.max_mass_drift; });

    m.def(
        "solve_mfg",
        [](const ExperimentConfig& cfg) {
            py::gil_scoped_release release;
            return solve_mfg(initial_measure(cfg), 0.0, *make_model(cfg), make_coupling(cfg), cfg.solver);
        },
        py::arg("config"), "Equilibrium of the lattice MFG system started from the configured initial law.");

    m.def(
        "eval_master",
        [](const ExperimentConfig& cfg, double t, const py::array_t<double, py::array::c_style | py::array::forcecast>& m) {
            const DiscreteMeasure law(to_vector(m));
            GridFunction U;
            {
                py::gil_scoped_release release;
                U = eval_master(t, law, *make_model(cfg), make_coupling(cfg), cfg.solver);
            }
            return to_array(U.span());
        },
        py::arg("config"), py::arg("t"), py::arg("m"), "Master field U(t, ., m).");

    m.def(
        "simulate",
        [](const MFGEquilibrium& eq, std::size_t n_paths, std::uint64_t seed, std::vector<double> sample_times) {
            SimulationOptions opt;
            opt.sample_times = std::move(sample_times);
            TrajectoryBatch batch;
            {
                py::gil_scoped_release release;
                batch = simulate_ctmc(eq.hjb.controls, eq.fp.at_level(0), n_paths, seed, opt);
            }
            const auto nt = static_cast<py::ssize_t>(batch.sample_times.size());
            py::array_t<std::uint32_t> states({static_cast<py::ssize_t>(batch.size()), nt});
            std::copy(batch.samples.begin(), batch.samples.end(), states.mutable_data());
            py::array_t<std::uint64_t> jumps(static_cast<py::ssize_t>(batch.size()));
            std::copy(batch.jump_counts.begin(), batch.jump_counts.end(), jumps.mutable_data());
            return py::make_tuple(to_array(batch.sample_times), states, jumps);
        },
        py::arg("equilibrium"), py::arg("n_paths"), py::arg("seed"), py::arg("sample_times") = std::vector<double>{},
        "Chain paths under the equilibrium controls: (sample_times, states[path, time], jump_counts).");

    m.def(
        "project_density",
        [](const std::string& spec, std::size_t n) { return to_array(project_measure(parse_density(spec), GridSpec(n)).span()); },
        py::arg("spec"), py::arg("n"));
    m.def(
        "w1_circle",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& b) {
            const auto x = to_vector(a), y = to_vector(b);
            return w1_circle(std::span<const double>(x), std::span<const double>(y));
        },
        py::arg("a"), py::arg("b"));
    m.def(
        "w1_circle_embedded",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& coarse,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& fine) {
            const auto x = to_vector(coarse), y = to_vector(fine);
            return w1_circle_embedded(x, y);
        },
        py::arg("coarse"), py::arg("fine"));
    m.def(
        "fit_rate",
        [](const std::vector<double>& n, const std::vector<double>& e) {
            if (n.size() != e.size()) throw py::value_error("n and e differ in length");
            std::vector<std::pair<double, double>> pairs;
            for (std::size_t i = 0; i < n.size(); ++i) pairs.emplace_back(n[i], e[i]);
            const auto fit = fit_rate(pairs);
            return py::make_tuple(fit.slope, fit.intercept, fit.r2);
        },
        py::arg("n"), py::arg("error"), "Least-squares rate of e ~ C n^-slope: (slope, intercept, r2).");
    m.def(
        "run",
        [](std::vector<std::string> args) {
            args.insert(args.begin(), "mfg-lattice");
            std::vector<char*> argv;
            for (auto& a : args) argv.push_back(a.data());
            py::gil_scoped_release release;
            return cli_main(static_cast<int>(argv.size()), argv.data());
        },
        py::arg("args"), "Runs the command-line interface; returns its exit code.");
}
