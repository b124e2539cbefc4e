#include "mfg_lattice/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace mfgl {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string unquote(const std::string& s) {
    if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
        return s.substr(1, s.size() - 2);
    }
    return s;
}

struct Ctx {
    std::string origin;
    int line;
    std::string key;

    [[noreturn]] void fail(const std::string& what) const {
        throw ConfigError(origin + ":" + std::to_string(line) + ": " + key + ": " + what);
    }
};

double to_double(const std::string& v, const Ctx& c) {
    std::size_t used = 0;
    double x = 0.0;
    try {
        x = std::stod(v, &used);
    } catch (const std::exception&) {
        c.fail("expected a number, got '" + v + "'");
    }
    if (used != v.size() || !std::isfinite(x)) c.fail("expected a number, got '" + v + "'");
    return x;
}

std::uint64_t to_uint(const std::string& v, const Ctx& c) {
    if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
        c.fail("expected a nonnegative integer, got '" + v + "'");
    }
    try {
        return std::stoull(v);
    } catch (const std::exception&) {
        c.fail("integer out of range: '" + v + "'");
    }
}

bool to_bool(const std::string& v, const Ctx& c) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    c.fail("expected true or false, got '" + v + "'");
}

std::vector<std::string> to_items(const std::string& v, const Ctx& c) {
    if (v.size() < 2 || v.front() != '[' || v.back() != ']') c.fail("expected an array like [a, b], got '" + v + "'");
    std::vector<std::string> items;
    const std::string body = trim(v.substr(1, v.size() - 2));
    if (body.empty()) return items;
    std::stringstream ss(body);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) c.fail("empty array element");
        items.push_back(item);
    }
    return items;
}

std::vector<double> to_doubles(const std::string& v, const Ctx& c) {
    std::vector<double> out;
    for (const auto& s : to_items(v, c)) out.push_back(to_double(s, c));
    return out;
}

std::vector<std::size_t> to_sizes(const std::string& v, const Ctx& c) {
    std::vector<std::size_t> out;
    for (const auto& s : to_items(v, c)) out.push_back(to_uint(s, c));
    return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const Ctx&)>;

struct Key {
    std::string name;
    std::string alias;
    Setter set;
};

void set_running(ExperimentConfig& cfg, const std::function<void(ConvolutionSpec&)>& fn) {
    fn(cfg.running);
    if (!cfg.terminal_set) fn(cfg.terminal);
}

void set_terminal(ExperimentConfig& cfg, const std::function<void(ConvolutionSpec&)>& fn) {
    if (!cfg.terminal_set) {
        cfg.terminal = cfg.running;
        cfg.terminal_set = true;
    }
    fn(cfg.terminal);
}

const std::vector<Key>& keys() {
    static const std::vector<Key> table = {
        {"experiment.kind", "kind", [](auto& c, auto& v, auto&) { c.kind = v; }},
        {"grid.n", "n", [](auto& c, auto& v, auto& x) { c.n = to_uint(v, x); }},
        {"grid.n_list", "n_list", [](auto& c, auto& v, auto& x) { c.n_list = to_sizes(v, x); }},
        {"grid.n_ref", "n_ref", [](auto& c, auto& v, auto& x) { c.n_ref = to_uint(v, x); }},
        {"model.hamiltonian", "hamiltonian", [](auto& c, auto& v, auto&) { c.hamiltonian = v; }},
        {"model.a_max", "a_max", [](auto& c, auto& v, auto& x) { c.a_max = to_double(v, x); }},
        {"coupling.fourier", "",
         [](auto& c, auto& v, auto& x) {
             const auto a = to_doubles(v, x);
             set_running(c, [&](ConvolutionSpec& s) { s.fourier = a; });
         }},
        {"coupling.local_weight", "",
         [](auto& c, auto& v, auto& x) {
             const double w = to_double(v, x);
             set_running(c, [&](ConvolutionSpec& s) { s.local_weight = w; });
         }},
        {"coupling.potential", "",
         [](auto& c, auto& v, auto& x) {
             const auto b = to_doubles(v, x);
             set_running(c, [&](ConvolutionSpec& s) { s.potential = b; });
         }},
        {"terminal.fourier", "",
         [](auto& c, auto& v, auto& x) {
             const auto a = to_doubles(v, x);
             set_terminal(c, [&](ConvolutionSpec& s) { s.fourier = a; });
         }},
        {"terminal.local_weight", "",
         [](auto& c, auto& v, auto& x) {
             const double w = to_double(v, x);
             set_terminal(c, [&](ConvolutionSpec& s) { s.local_weight = w; });
         }},
        {"terminal.potential", "",
         [](auto& c, auto& v, auto& x) {
             const auto b = to_doubles(v, x);
             set_terminal(c, [&](ConvolutionSpec& s) { s.potential = b; });
         }},
        {"solver.sigma", "sigma", [](auto& c, auto& v, auto& x) { c.solver.sigma = to_double(v, x); }},
        {"solver.T", "T", [](auto& c, auto& v, auto& x) { c.solver.T = to_double(v, x); }},
        {"solver.dt_safety", "dt_safety", [](auto& c, auto& v, auto& x) { c.solver.dt_safety = to_double(v, x); }},
        {"solver.max_dt", "max_dt", [](auto& c, auto& v, auto& x) { c.solver.max_dt = to_double(v, x); }},
        {"solver.gradient_bound", "gradient_bound",
         [](auto& c, auto& v, auto& x) { c.solver.gradient_bound = to_double(v, x); }},
        {"solver.scheme", "scheme",
         [](auto& c, auto& v, auto& x) {
             try {
                 c.solver.scheme = parse_scheme(v);
             } catch (const ConfigError& e) {
                 x.fail(e.what());
             }
         }},
        {"solver.tol", "tol", [](auto& c, auto& v, auto& x) { c.solver.tol = to_double(v, x); }},
        {"solver.max_iter", "max_iter", [](auto& c, auto& v, auto& x) { c.solver.max_iter = to_uint(v, x); }},
        {"solver.damping", "damping",
         [](auto& c, auto& v, auto& x) {
             try {
                 c.solver.damping = parse_damping(v);
             } catch (const ConfigError& e) {
                 x.fail(e.what());
             }
         }},
        {"initial.density", "initial", [](auto& c, auto& v, auto&) { c.initial = v; }},
        {"master.t", "t", [](auto& c, auto& v, auto& x) { c.t = to_double(v, x); }},
        {"simulate.n_paths", "n_paths", [](auto& c, auto& v, auto& x) { c.n_paths = to_uint(v, x); }},
        {"simulate.seed", "seed", [](auto& c, auto& v, auto& x) { c.seed = to_uint(v, x); }},
        {"simulate.sample_times", "sample_times",
         [](auto& c, auto& v, auto& x) { c.sample_times = to_doubles(v, x); }},
        {"simulate.record_paths", "record_paths",
         [](auto& c, auto& v, auto& x) { c.record_paths = to_bool(v, x); }},
        {"noise.lambda", "lambda", [](auto& c, auto& v, auto& x) { c.lambda = to_double(v, x); }},
        {"noise.kernel", "kernel", [](auto& c, auto& v, auto&) { c.kernel = v; }},
        {"noise.n", "", [](auto& c, auto& v, auto& x) { c.noise_n = to_uint(v, x); }},
        {"noise.simplex_resolution", "simplex_resolution",
         [](auto& c, auto& v, auto& x) { c.simplex_resolution = to_uint(v, x); }},
        {"study.densities", "", [](auto& c, auto& v, auto& x) { c.densities = to_uint(v, x); }},
        {"study.eval_times", "", [](auto& c, auto& v, auto& x) { c.eval_times = to_doubles(v, x); }},
        {"study.probe_samples", "", [](auto& c, auto& v, auto& x) { c.probe_samples = to_uint(v, x); }},
        {"study.drift", "", [](auto& c, auto& v, auto&) { c.drift = v; }},
        {"study.monte_carlo", "", [](auto& c, auto& v, auto& x) { c.monte_carlo = to_bool(v, x); }},
        {"output.dir", "", [](auto& c, auto& v, auto&) { c.out_dir = v; }},
        {"output.stride", "", [](auto& c, auto& v, auto& x) { c.csv_stride = to_uint(v, x); }},
    };
    return table;
}

std::string key_list() {
    std::string s;
    for (const auto& k : keys()) {
        if (!s.empty()) s += ", ";
        s += k.name;
    }
    return s;
}

// Splits "name(a, b)" into name and trimmed arguments.
std::pair<std::string, std::vector<double>> call_form(const std::string& spec, const std::string& what) {
    const std::string s = trim(spec);
    const auto open = s.find('(');
    if (open == std::string::npos) return {s, {}};
    if (s.back() != ')') throw ConfigError(what + ": malformed '" + spec + "'");
    std::vector<double> args;
    std::stringstream ss(s.substr(open + 1, s.size() - open - 2));
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            args.push_back(std::stod(trim(item)));
        } catch (const std::exception&) {
            throw ConfigError(what + ": cannot parse argument '" + trim(item) + "' in '" + spec + "'");
        }
    }
    return {trim(s.substr(0, open)), args};
}

}  // namespace

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto& k : keys()) out.push_back(k.name);
    return out;
}

ExperimentConfig parse_config(const std::string& text, const std::string& origin, ExperimentConfig cfg) {
    std::istringstream in(text);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const auto hash = raw.find('#');
        const std::string content = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (content.empty()) continue;
        const auto eq = content.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(line) + ": expected 'section.key = value', got '" +
                              content + "'");
        }
        const std::string key = trim(content.substr(0, eq));
        const std::string value = unquote(trim(content.substr(eq + 1)));
        if (key.empty()) throw ConfigError(origin + ":" + std::to_string(line) + ": missing key before '='");
        if (value.empty()) throw ConfigError(origin + ":" + std::to_string(line) + ": " + key + ": missing value");
        const auto& table = keys();
        const auto it = std::find_if(table.begin(), table.end(),
                                     [&](const Key& k) { return k.name == key || (!k.alias.empty() && k.alias == key); });
        if (it == table.end()) {
            throw ConfigError(origin + ":" + std::to_string(line) + ": unknown key '" + key +
                              "'; valid keys: " + key_list());
        }
        it->set(cfg, value, Ctx{origin, line, it->name});
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path, ExperimentConfig base) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path, std::move(base));
}

void apply_study_defaults(ExperimentConfig& cfg) {
    const double T = cfg.solver.T;
    if (cfg.kind == "diffusion-rate") {
        if (cfg.n_list.empty()) cfg.n_list = {32, 64, 128, 256};
        if (cfg.n_ref == 0) cfg.n_ref = 1024;
    } else if (cfg.kind == "heat-check") {
        if (cfg.n_list.empty()) cfg.n_list = {64, 256, 1024};
    } else if (cfg.kind == "probes") {
        if (cfg.n_list.empty()) cfg.n_list = {16, 32, 64};
    } else {
        if (cfg.n_list.empty()) cfg.n_list = {16, 32, 64, 128};
        if (cfg.n_ref == 0) cfg.n_ref = 512;
    }
    if (cfg.eval_times.empty()) cfg.eval_times = {0.0, 0.5 * T};
    if (cfg.sample_times.empty()) {
        const std::size_t count = cfg.kind == "trajectory-rate" ? 5 : 10;
        for (std::size_t j = 1; j <= count; ++j) {
            cfg.sample_times.push_back(T * static_cast<double>(j) / static_cast<double>(count));
        }
    }
}

void validate_embedding(const ExperimentConfig& cfg) {
    require(!cfg.n_list.empty(), "config: n_list is empty");
    const std::size_t largest = *std::max_element(cfg.n_list.begin(), cfg.n_list.end());
    if (cfg.n_ref < 4 * largest) {
        throw ConfigError("config: n_ref = " + std::to_string(cfg.n_ref) + " must be at least 4 * max(n_list) = " +
                          std::to_string(4 * largest));
    }
    for (std::size_t n : cfg.n_list) {
        if (n < 2 || cfg.n_ref % n != 0) {
            throw ConfigError("config: n = " + std::to_string(n) + " does not divide n_ref = " +
                              std::to_string(cfg.n_ref));
        }
    }
}

HamiltonianPtr make_model(const ExperimentConfig& cfg) { return make_hamiltonian(cfg.hamiltonian, cfg.a_max); }

CouplingModel make_coupling(const ExperimentConfig& cfg) {
    return coupling_convolution(cfg.running, cfg.terminal_set ? cfg.terminal : cfg.running);
}

Density parse_density(const std::string& spec) {
    const auto [name, args] = call_form(spec, "initial density");
    if (name == "uniform" && args.empty()) return uniform_density();
    if (name == "cosine" && (args.size() == 1 || args.size() == 2)) {
        return cosine_density(args[0], args.size() == 2 ? args[1] : 0.0);
    }
    if (name == "vonmises" && (args.size() == 1 || args.size() == 2)) {
        return vonmises_density(args[0], args.size() == 2 ? args[1] : 0.0);
    }
    if (name == "smooth" && (args.size() == 1 || args.size() == 2)) {
        return random_smooth_density(args.size() == 2 ? static_cast<std::uint64_t>(args[1]) : 1,
                                     static_cast<std::size_t>(args[0]));
    }
    throw ConfigError("unknown density '" + spec +
                      "' (valid: uniform, cosine(a[, shift]), vonmises(kappa[, center]), smooth(index[, seed]))");
}

CommonNoiseKernel parse_kernel(const std::string& spec, double lambda) {
    const auto [name, args] = call_form(spec, "kernel");
    if (name == "uniform" && args.empty()) return uniform_kernel(lambda);
    if (name == "vonmises" && args.size() == 1) return vonmises_kernel(args[0], lambda);
    throw ConfigError("unknown kernel '" + spec + "' (valid: uniform, vonmises(kappa))");
}

}  // namespace mfgl
