#include "nmqsd/config.hpp"

#include "nmqsd/errors.hpp"
#include "nmqsd/kernel_field.hpp"
#include "nmqsd/oracles.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace nmqsd {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

// JSON-pointer-like path ("/sim/dt", "/initial/vector/2") -> 1-based line of
// the key or element. nlohmann does not keep source positions, so the raw
// text is scanned once alongside the real parse.
class LineIndex {
public:
    explicit LineIndex(const std::string& text) { scan(text); }

    int line(const std::string& path) const {
        // fall back to the closest recorded ancestor
        std::string p = path;
        while (true) {
            auto it = lines_.find(p);
            if (it != lines_.end()) return it->second;
            const auto cut = p.rfind('/');
            if (cut == std::string::npos || p.empty()) return 0;
            p.resize(cut);
        }
    }

private:
    struct Frame {
        bool is_array;
        int index;
        std::string path;
    };

    void scan(const std::string& s) {
        std::vector<Frame> stack;
        std::string pending_key;
        bool have_key = false;
        int line = 1;
        auto value_path = [&]() -> std::string {
            if (stack.empty()) return "";
            Frame& f = stack.back();
            if (f.is_array) return f.path + "/" + std::to_string(f.index);
            return f.path + "/" + pending_key;
        };
        auto mark_value = [&]() {
            if (!stack.empty() && stack.back().is_array) lines_.emplace(value_path(), line);
        };
        for (std::size_t i = 0; i < s.size(); ++i) {
            const char c = s[i];
            if (c == '\n') {
                ++line;
            } else if (c == '"') {
                std::string str;
                const int start_line = line;
                for (++i; i < s.size() && s[i] != '"'; ++i) {
                    if (s[i] == '\\' && i + 1 < s.size()) ++i;
                    if (s[i] == '\n') ++line;
                    str.push_back(s[i]);
                }
                // a key is a string directly followed by ':'
                std::size_t j = i + 1;
                while (j < s.size() && std::isspace(static_cast<unsigned char>(s[j]))) ++j;
                if (j < s.size() && s[j] == ':' && !stack.empty() && !stack.back().is_array) {
                    pending_key = str;
                    have_key = true;
                    lines_.emplace(stack.back().path + "/" + str, start_line);
                } else {
                    mark_value();
                }
            } else if (c == '{' || c == '[') {
                mark_value();
                std::string path = value_path();
                stack.push_back({c == '[', 0, path});
                have_key = false;
            } else if (c == '}' || c == ']') {
                if (!stack.empty()) stack.pop_back();
            } else if (c == ',') {
                if (!stack.empty() && stack.back().is_array) ++stack.back().index;
                have_key = false;
            } else if (!std::isspace(static_cast<unsigned char>(c)) && c != ':') {
                // scalar literal: record once at its first character
                const bool first = i == 0 || std::isspace(static_cast<unsigned char>(s[i - 1])) ||
                                   s[i - 1] == '[' || s[i - 1] == ',' || s[i - 1] == ':';
                if (first) mark_value();
            }
        }
        (void)have_key;
    }

    std::map<std::string, int> lines_;
};

// Strict reader for one JSON object.
class Section {
public:
    Section(const json& j, std::string path, const LineIndex& lines)
        : j_(j), path_(std::move(path)), lines_(lines) {
        if (!j_.is_object()) fail(path_, "expected an object");
    }

    [[noreturn]] void fail(const std::string& path, const std::string& what) const {
        throw ConfigError((path.empty() ? std::string("/") : path) + ": " + what, lines_.line(path));
    }

    bool has(const char* key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    const json& at(const char* key) {
        if (!has(key)) fail(path_ + "/" + key, "missing required key");
        return j_.at(key);
    }

    std::string key_path(const char* key) const { return path_ + "/" + key; }

    template <class T>
    T get(const char* key, T fallback) {
        if (!has(key)) return fallback;
        return convert<T>(j_.at(key), key_path(key));
    }

    template <class T>
    T require(const char* key) {
        return convert<T>(at(key), key_path(key));
    }

    template <class T>
    T convert(const json& v, const std::string& path) const {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) fail(path, "expected a boolean");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) fail(path, "expected an integer");
            if constexpr (std::is_unsigned_v<T>) {
                if (v.is_number_integer() && !v.is_number_unsigned()) fail(path, "expected a non-negative integer");
            }
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) fail(path, "expected a number");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) fail(path, "expected a string");
        }
        return v.get<T>();
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) fail(path_ + "/" + it.key(), "unknown key '" + it.key() + "'");
        }
    }

    const std::string& path() const { return path_; }
    const LineIndex& lines() const { return lines_; }

private:
    const json& j_;
    std::string path_;
    const LineIndex& lines_;
    std::set<std::string> seen_;
};

void check_choice(const Section& sec, const char* key, const std::string& value,
                  std::initializer_list<const char*> choices) {
    for (const char* c : choices) {
        if (value == c) return;
    }
    std::string list;
    for (const char* c : choices) list += std::string(list.empty() ? "" : ", ") + c;
    sec.fail(sec.key_path(key), "'" + value + "' is not one of " + list);
}

void check_positive(const Section& sec, const char* key, double v) {
    if (!(v > 0.0)) sec.fail(sec.key_path(key), "must be positive");
}

cplx parse_complex(const json& v, const std::string& path, const LineIndex& lines) {
    if (v.is_number()) return {v.get<double>(), 0.0};
    if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number()) {
        return {v[0].get<double>(), v[1].get<double>()};
    }
    throw ConfigError(path + ": expected a number or [re, im]", lines.line(path));
}

ojson complex_json(cplx c) {
    if (c.imag() == 0.0) return c.real();
    return ojson::array({c.real(), c.imag()});
}

std::vector<double> parse_reals(const Section& sec, const json& v, const std::string& path) {
    if (!v.is_array()) sec.fail(path, "expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number()) sec.fail(path + "/" + std::to_string(i), "expected a number");
        out.push_back(v[i].get<double>());
    }
    return out;
}

ModelConfig parse_model(const json& j, const LineIndex& lines) {
    Section sec(j, "/model", lines);
    ModelConfig m;
    m.family = sec.require<std::string>("family");
    check_choice(sec, "family", m.family, {"angular", "nqubit", "ncavity"});
    if (m.family == "angular") {
        m.l = sec.get<double>("l", 0.5);
        m.omega = sec.get<double>("omega", 1.0);
        const double two_l = 2.0 * m.l;
        if (!(m.l > 0.0) || std::abs(two_l - std::round(two_l)) > 1e-12) {
            sec.fail(sec.key_path("l"), "must be a positive half-integer");
        }
    } else if (m.family == "nqubit") {
        m.n_qubits = sec.get<int>("n_qubits", 1);
        m.omega = sec.get<double>("omega", 1.0);
        m.basis = sec.get<std::string>("basis", "collective");
        check_choice(sec, "basis", m.basis, {"collective", "site_resolved"});
        if (m.n_qubits < 1 || m.n_qubits > 7) sec.fail(sec.key_path("n_qubits"), "must be in 1..7");
    } else {
        m.n_modes = sec.get<int>("n_modes", 1);
        if (m.n_modes < 1) sec.fail(sec.key_path("n_modes"), "must be positive");
        if (sec.has("omegas")) {
            m.omegas = parse_reals(sec, j.at("omegas"), sec.key_path("omegas"));
        } else {
            m.omegas.assign(m.n_modes, 1.0);
        }
        if (static_cast<int>(m.omegas.size()) != m.n_modes) {
            sec.fail(sec.key_path("omegas"), "needs one entry per mode");
        }
        if (sec.has("lambdas")) m.lambdas = parse_reals(sec, j.at("lambdas"), sec.key_path("lambdas"));
        m.n_max = sec.get<int>("n_max", 2);
        if (m.n_max < 1) sec.fail(sec.key_path("n_max"), "must be positive");
        m.coupling = sec.get<std::string>("coupling", "ring");
        check_choice(sec, "coupling", m.coupling, {"ring", "open_chain"});
    }
    sec.finish();
    return m;
}

BathConfig parse_bath(const json& j, const LineIndex& lines) {
    Section sec(j, "/bath", lines);
    BathConfig b;
    b.kind = sec.require<std::string>("kind");
    check_choice(sec, "kind", b.kind, {"ou", "discrete_modes"});
    if (b.kind == "ou") {
        b.gamma = sec.require<double>("gamma");
        check_positive(sec, "gamma", b.gamma);
    } else {
        const json& modes = sec.at("modes");
        const std::string mpath = sec.key_path("modes");
        if (!modes.is_array() || modes.empty()) sec.fail(mpath, "expected a non-empty array");
        for (std::size_t i = 0; i < modes.size(); ++i) {
            Section ms(modes[i], mpath + "/" + std::to_string(i), lines);
            BathMode bm;
            bm.g = parse_complex(ms.at("g"), ms.key_path("g"), lines);
            bm.omega = ms.get<double>("omega", 0.0);
            ms.finish();
            b.modes.push_back(bm);
        }
    }
    sec.finish();
    return b;
}

SimConfig parse_sim(const json& j, const LineIndex& lines) {
    Section sec(j, "/sim", lines);
    SimConfig s;
    s.dt = sec.require<double>("dt");
    check_positive(sec, "dt", s.dt);
    s.t_end = sec.require<double>("t_end");
    check_positive(sec, "t_end", s.t_end);
    const double steps = s.t_end / s.dt;
    if (std::abs(steps - std::round(steps)) > 1e-9 * std::max(1.0, steps)) {
        sec.fail(sec.key_path("t_end"), "must be a multiple of dt");
    }
    s.n_traj = sec.get<int>("n_traj", 1000);
    if (s.n_traj < 1) sec.fail(sec.key_path("n_traj"), "must be positive");
    s.seed = sec.get<std::uint64_t>("seed", 1);
    s.mode = sec.get<std::string>("mode", "nonlinear");
    check_choice(sec, "mode", s.mode, {"linear", "nonlinear"});
    s.k_trunc = sec.get<int>("k_trunc", -1);
    if (s.k_trunc < -1) sec.fail(sec.key_path("k_trunc"), "must be -1 or non-negative");
    s.generator = sec.get<std::string>("generator", "default");
    check_choice(sec, "generator", s.generator, {"default", "ou", "discrete_modes", "cholesky"});
    s.groups = sec.get<int>("groups", 20);
    if (s.groups < 2) sec.fail(sec.key_path("groups"), "must be at least 2");
    s.obar_on_shifted_noise = sec.get<bool>("obar_on_shifted_noise", true);
    sec.finish();
    return s;
}

InitialConfig parse_initial(const json& j, const LineIndex& lines) {
    Section sec(j, "/initial", lines);
    InitialConfig c;
    c.state = sec.get<std::string>("state", "uniform");
    check_choice(sec, "state", c.state, {"uniform", "ground", "excited", "werner", "vector", "matrix"});
    c.werner_f = sec.get<double>("werner_f", 0.0);
    if (c.werner_f < 0.0 || c.werner_f > 1.0) sec.fail(sec.key_path("werner_f"), "must lie in [0, 1]");
    if (sec.has("vector")) {
        const json& v = j.at("vector");
        const std::string p = sec.key_path("vector");
        if (!v.is_array()) sec.fail(p, "expected an array");
        for (std::size_t i = 0; i < v.size(); ++i) c.vector.push_back(parse_complex(v[i], p + "/" + std::to_string(i), lines));
    }
    if (sec.has("matrix")) {
        const json& m = j.at("matrix");
        const std::string p = sec.key_path("matrix");
        if (!m.is_array()) sec.fail(p, "expected an array of rows");
        for (std::size_t r = 0; r < m.size(); ++r) {
            const std::string rp = p + "/" + std::to_string(r);
            if (!m[r].is_array()) sec.fail(rp, "expected a row array");
            std::vector<cplx> row;
            for (std::size_t k = 0; k < m[r].size(); ++k) {
                row.push_back(parse_complex(m[r][k], rp + "/" + std::to_string(k), lines));
            }
            c.matrix.push_back(std::move(row));
        }
    }
    if (c.state == "vector" && c.vector.empty()) sec.fail(sec.key_path("vector"), "required for state 'vector'");
    if (c.state == "matrix" && c.matrix.empty()) sec.fail(sec.key_path("matrix"), "required for state 'matrix'");
    sec.finish();
    return c;
}

OutputConfig parse_output(const json& j, const LineIndex& lines) {
    Section sec(j, "/output", lines);
    OutputConfig o;
    o.directory = sec.get<std::string>("directory", "out");
    if (sec.has("observables")) {
        const json& v = j.at("observables");
        const std::string p = sec.key_path("observables");
        if (!v.is_array()) sec.fail(p, "expected an array of strings");
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_string()) sec.fail(p + "/" + std::to_string(i), "expected a string");
            o.observables.push_back(v[i].get<std::string>());
        }
    }
    o.dump_rho = sec.get<bool>("dump_rho", false);
    o.with_errors = sec.get<bool>("with_errors", true);
    sec.finish();
    return o;
}

OracleConfig parse_oracle(const json& j, const LineIndex& lines) {
    Section sec(j, "/oracle", lines);
    OracleConfig o;
    o.kind = sec.require<std::string>("kind");
    check_choice(sec, "kind", o.kind, {"pseudomode", "discrete_modes", "lindblad"});
    o.tolerance = sec.get<double>("tolerance", 0.02);
    check_positive(sec, "tolerance", o.tolerance);
    if (sec.has("gamma")) {
        o.gamma = sec.require<double>("gamma");
        check_positive(sec, "gamma", *o.gamma);
    }
    o.n_ph_max = sec.get<int>("n_ph_max", -1);
    o.check_truncation = sec.get<bool>("check_truncation", true);
    sec.finish();
    return o;
}

bool parse_observable(const std::string& name, int& i, int& j) {
    char tail = 0;
    if (std::sscanf(name.c_str(), "coh(%d,%d)%c", &i, &j, &tail) == 2) return true;
    if (std::sscanf(name.c_str(), "pop(%d)%c", &i, &tail) == 1) {
        j = 0;
        return true;
    }
    return false;
}

} // namespace

RunConfig RunConfig::parse(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        int line = 1;
        for (std::size_t k = 0; k < std::min<std::size_t>(e.byte, text.size()); ++k) line += text[k] == '\n';
        throw ConfigError(std::string("malformed JSON: ") + e.what(), line);
    }
    const LineIndex lines(text);
    Section top(j, "", lines);
    RunConfig cfg;
    cfg.model = parse_model(top.at("model"), lines);
    cfg.bath = parse_bath(top.at("bath"), lines);
    cfg.sim = parse_sim(top.at("sim"), lines);
    if (top.has("initial")) cfg.initial = parse_initial(j.at("initial"), lines);
    if (top.has("output")) cfg.output = parse_output(j.at("output"), lines);
    if (top.has("oracle")) cfg.oracle = parse_oracle(j.at("oracle"), lines);
    top.finish();

    if (cfg.model.family == "ncavity" && !cfg.model.lambdas.empty()) {
        const int bonds = cfg.model.coupling == "ring" ? cfg.model.n_modes : cfg.model.n_modes - 1;
        if (static_cast<int>(cfg.model.lambdas.size()) != bonds) {
            throw ConfigError("/model/lambdas: needs one entry per bond (" + std::to_string(bonds) + ")",
                              lines.line("/model/lambdas"));
        }
    }
    if (cfg.initial.state == "werner" && !(cfg.model.family == "nqubit" && cfg.model.n_qubits == 3)) {
        throw ConfigError("/initial/state: 'werner' needs a three-qubit model", lines.line("/initial/state"));
    }
    for (std::size_t k = 0; k < cfg.output.observables.size(); ++k) {
        int a = 0, b = 0;
        const std::string& name = cfg.output.observables[k];
        if (name != "fidelity" && !parse_observable(name, a, b)) {
            const std::string p = "/output/observables/" + std::to_string(k);
            throw ConfigError(p + ": unknown observable '" + name + "'", lines.line(p));
        }
    }
    return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

ojson RunConfig::to_json() const {
    ojson j;
    ojson m;
    m["family"] = model.family;
    if (model.family == "angular") {
        m["l"] = model.l;
        m["omega"] = model.omega;
    } else if (model.family == "nqubit") {
        m["n_qubits"] = model.n_qubits;
        m["omega"] = model.omega;
        m["basis"] = model.basis;
    } else {
        m["n_modes"] = model.n_modes;
        m["omegas"] = model.omegas;
        m["lambdas"] = model.lambdas;
        m["n_max"] = model.n_max;
        m["coupling"] = model.coupling;
    }
    j["model"] = m;

    ojson b;
    b["kind"] = bath.kind;
    if (bath.kind == "ou") {
        b["gamma"] = bath.gamma;
    } else {
        ojson modes = ojson::array();
        for (const auto& bm : bath.modes) modes.push_back({{"g", complex_json(bm.g)}, {"omega", bm.omega}});
        b["modes"] = modes;
    }
    j["bath"] = b;

    j["sim"] = {{"dt", sim.dt},
                {"t_end", sim.t_end},
                {"n_traj", sim.n_traj},
                {"seed", sim.seed},
                {"mode", sim.mode},
                {"k_trunc", sim.k_trunc},
                {"generator", sim.generator},
                {"groups", sim.groups},
                {"obar_on_shifted_noise", sim.obar_on_shifted_noise}};

    ojson ini;
    ini["state"] = initial.state;
    ini["werner_f"] = initial.werner_f;
    if (!initial.vector.empty()) {
        ojson v = ojson::array();
        for (cplx c : initial.vector) v.push_back(complex_json(c));
        ini["vector"] = v;
    }
    if (!initial.matrix.empty()) {
        ojson mat = ojson::array();
        for (const auto& row : initial.matrix) {
            ojson r = ojson::array();
            for (cplx c : row) r.push_back(complex_json(c));
            mat.push_back(r);
        }
        ini["matrix"] = mat;
    }
    j["initial"] = ini;

    j["output"] = {{"directory", output.directory},
                   {"observables", output.observables},
                   {"dump_rho", output.dump_rho},
                   {"with_errors", output.with_errors}};
    if (oracle) {
        ojson o{{"kind", oracle->kind}, {"tolerance", oracle->tolerance}};
        if (oracle->gamma) o["gamma"] = *oracle->gamma;
        o["n_ph_max"] = oracle->n_ph_max;
        o["check_truncation"] = oracle->check_truncation;
        j["oracle"] = o;
    }
    return j;
}

// ------------------------------------------------------------------ builders

ModelSpec build_model(const ModelConfig& cfg) {
    if (cfg.family == "angular") return build_angular_model(cfg.l, cfg.omega);
    if (cfg.family == "nqubit") return build_nqubit_model(cfg.n_qubits, cfg.omega);
    return build_ncavity_model(cfg.n_modes, cfg.omegas, cfg.lambdas, cfg.n_max,
                               cfg.coupling == "ring" ? CavityCoupling::Ring : CavityCoupling::OpenChain);
}

OBasis build_basis(const ModelSpec& model, const ModelConfig& cfg) {
    if (model.family == ModelFamily::NQubit && cfg.basis == "site_resolved") {
        return basis_nqubit(model, QubitBasisVariant::SiteResolved);
    }
    return basis_for(model);
}

CorrelationFunction build_correlation(const BathConfig& cfg) {
    if (cfg.kind == "ou") return CorrelationFunction::ornstein_uhlenbeck(cfg.gamma);
    return CorrelationFunction::discrete_modes(cfg.modes);
}

TimeGrid build_grid(const SimConfig& cfg) { return TimeGrid::covering(cfg.dt, cfg.t_end); }

Mat build_initial_state(const InitialConfig& cfg, const ModelSpec& model) {
    const int d = model.dim();
    if (cfg.state == "werner") return werner_state(cfg.werner_f);
    if (cfg.state == "matrix") {
        if (static_cast<int>(cfg.matrix.size()) != d) throw InvalidState("initial matrix has the wrong size");
        Mat rho(d, d);
        for (int r = 0; r < d; ++r) {
            if (static_cast<int>(cfg.matrix[r].size()) != d) throw InvalidState("initial matrix has the wrong size");
            for (int c = 0; c < d; ++c) rho(r, c) = cfg.matrix[r][c];
        }
        if ((rho - rho.adjoint()).norm() > 1e-10) throw InvalidState("initial matrix is not Hermitian");
        if (std::abs(rho.trace() - 1.0) > 1e-10) throw InvalidState("initial matrix does not have unit trace");
        Eigen::SelfAdjointEigenSolver<Mat> es(rho);
        if (es.eigenvalues().minCoeff() < -1e-10) throw InvalidState("initial matrix is not positive");
        return rho;
    }
    Vec psi = Vec::Zero(d);
    if (cfg.state == "uniform") {
        psi.setConstant(1.0 / std::sqrt(static_cast<double>(d)));
    } else if (cfg.state == "vector") {
        if (static_cast<int>(cfg.vector.size()) != d) throw InvalidState("initial vector has the wrong size");
        for (int k = 0; k < d; ++k) psi(k) = cfg.vector[k];
        const double n = psi.norm();
        if (!(n > 0.0)) throw InvalidState("initial vector is zero");
        psi /= n;
    } else {
        // ground: no excitation; excited: the most excited state
        const auto& ex = model.excitation;
        auto it = cfg.state == "ground" ? std::min_element(ex.begin(), ex.end())
                                        : std::max_element(ex.begin(), ex.end());
        psi(it - ex.begin()) = 1.0;
    }
    return psi * psi.adjoint();
}

SimulationRun simulate(const RunConfig& cfg, int threads, bool literal_paper_ode) {
    SimulationRun run{build_model(cfg.model), {}, {}};
    const CorrelationFunction corr = build_correlation(cfg.bath);
    const TimeGrid grid = build_grid(cfg.sim);
    run.rho0 = build_initial_state(cfg.initial, run.model);

    KernelField kernels = [&] {
        if (run.model.family == ModelFamily::NCavity) {
            return propagate_ncavity_kernels(run.model, corr, grid, literal_paper_ode);
        }
        KernelOptions ko;
        ko.k_trunc = cfg.sim.k_trunc;
        return propagate_kernels(build_basis(run.model, cfg.model), corr, grid, ko);
    }();
    const QsdIntegrator integrator(run.model, kernels);

    EnsembleConfig ec;
    ec.mode = cfg.sim.mode == "linear" ? QsdMode::Linear : QsdMode::Nonlinear;
    ec.n_traj = cfg.sim.n_traj;
    ec.seed = cfg.sim.seed;
    ec.threads = threads;
    ec.groups = cfg.sim.groups;
    ec.obar_on_shifted_noise = cfg.sim.obar_on_shifted_noise;
    if (cfg.sim.generator == "ou") ec.generator = NoiseGenerator::OrnsteinUhlenbeck;
    if (cfg.sim.generator == "discrete_modes") ec.generator = NoiseGenerator::DiscreteModes;
    if (cfg.sim.generator == "cholesky") ec.generator = NoiseGenerator::Cholesky;
    run.series = run_ensemble(integrator, run.rho0, ec);
    return run;
}

DensityMatrixSeries run_oracle(const RunConfig& cfg, const ModelSpec& model) {
    if (!cfg.oracle) throw ConfigError("/oracle: missing oracle section");
    const OracleConfig& o = *cfg.oracle;
    const TimeGrid grid = build_grid(cfg.sim);
    const Mat rho0 = build_initial_state(cfg.initial, model);
    if (o.kind == "pseudomode") {
        if (cfg.bath.kind != "ou") throw ConfigError("/oracle/kind: pseudomode oracle needs an OU bath");
        return solve_pseudomode_ou(model, o.gamma.value_or(cfg.bath.gamma), o.n_ph_max, rho0, grid,
                                   o.check_truncation);
    }
    if (o.kind == "discrete_modes") {
        if (cfg.bath.kind != "discrete_modes") {
            throw ConfigError("/oracle/kind: discrete-mode oracle needs a discrete_modes bath");
        }
        return solve_discrete_modes(model, BathModes{cfg.bath.modes, -1}, rho0, grid);
    }
    if (cfg.bath.kind != "ou") throw ConfigError("/oracle/kind: lindblad oracle needs an OU bath");
    LindbladSpec spec{model.h_sys, model.l_op, markov_rate_ou(o.gamma.value_or(cfg.bath.gamma))};
    return solve_lindblad(spec, rho0, grid);
}

std::vector<ObservableSeries> evaluate_observables(const DensityMatrixSeries& series,
                                                   const std::vector<std::string>& names,
                                                   const Mat& fidelity_ref) {
    std::vector<ObservableSeries> out;
    for (const auto& name : names) {
        int i = 0, j = 0;
        if (name == "fidelity") {
            out.push_back(fidelity_series(series, fidelity_ref));
        } else if (parse_observable(name, i, j)) {
            const int d = series.dim();
            if (i < 1 || i > d || j < 0 || j > d) throw InvalidParameter("observable '" + name + "' out of range");
            out.push_back(j == 0 ? population(series, i) : coherence(series, i, j));
        } else {
            throw InvalidParameter("unknown observable '" + name + "'");
        }
    }
    return out;
}

} // namespace nmqsd
