// nmqsd — command-line driver.
//
//   nmqsd simulate        --config run.json [--out DIR] [--threads N] [--seed-override S]
//                         [--fidelity-ref rho0|pure|FILE] [--literal-paper-ode]
//   nmqsd oracle-compare  --config run.json [--out DIR] [--threads N] [--seed-override S]
//   nmqsd basis-info      (--qubits N | --spin L | --cavities N) [--csv FILE]
//   nmqsd noise-test      [--config run.json] [--paths N] [--seed S]
//
// Exit codes: 0 success, 2 configuration/input error, 3 numerical failure,
// 4 failed comparison.
#include "nmqsd/config.hpp"
#include "nmqsd/csv.hpp"
#include "nmqsd/errors.hpp"
#include "nmqsd/oracles.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#ifndef NMQSD_VERSION
#define NMQSD_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using namespace nmqsd;

namespace {

constexpr int kOk = 0;
constexpr int kConfig = 2;
constexpr int kNumerical = 3;
constexpr int kComparison = 4;

struct RunArgs {
    std::string config;
    std::string out;
    int threads{1};
    std::optional<std::uint64_t> seed_override;
    std::string fidelity_ref{"rho0"};
    bool literal_paper_ode{false};
};

RunConfig load_config(const RunArgs& a) {
    RunConfig cfg = RunConfig::load(a.config);
    if (a.seed_override) cfg.sim.seed = *a.seed_override;
    if (!a.out.empty()) cfg.output.directory = a.out;
    return cfg;
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw InputError("cannot write '" + p.string() + "'");
    return os;
}

Mat parse_matrix_file(const std::string& path, int dim) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read fidelity reference '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("fidelity reference: " + std::string(e.what()));
    }
    if (!j.is_array() || static_cast<int>(j.size()) != dim) {
        throw ConfigError("fidelity reference must be a " + std::to_string(dim) + "x" + std::to_string(dim) + " matrix");
    }
    Mat m(dim, dim);
    for (int r = 0; r < dim; ++r) {
        if (!j[r].is_array() || static_cast<int>(j[r].size()) != dim) {
            throw ConfigError("fidelity reference row " + std::to_string(r + 1) + " has the wrong length");
        }
        for (int c = 0; c < dim; ++c) {
            const auto& v = j[r][c];
            if (v.is_number()) {
                m(r, c) = v.get<double>();
            } else if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number()) {
                m(r, c) = cplx(v[0].get<double>(), v[1].get<double>());
            } else {
                throw ConfigError("fidelity reference entries must be numbers or [re, im]");
            }
        }
    }
    return m;
}

// rho0, the dominant eigenvector of rho0, or a matrix file.
Mat fidelity_reference(const std::string& spec, const Mat& rho0) {
    if (spec == "rho0") return rho0;
    if (spec == "pure") {
        Eigen::SelfAdjointEigenSolver<Mat> es(rho0);
        const Vec v = es.eigenvectors().col(rho0.rows() - 1);
        return v * v.adjoint();
    }
    return parse_matrix_file(spec, static_cast<int>(rho0.rows()));
}

void write_manifest(const fs::path& dir, const RunConfig& cfg, const std::string& command,
                    const std::vector<std::string>& files, double wall, const RunArgs& a,
                    const nlohmann::ordered_json& extra = {}) {
    nlohmann::ordered_json m;
    m["command"] = command;
    m["version"] = NMQSD_VERSION;
    m["seed"] = cfg.sim.seed;
    m["threads"] = a.threads;
    m["literal_paper_ode"] = a.literal_paper_ode;
    m["fidelity_ref"] = a.fidelity_ref;
    m["wall_time_s"] = wall;
    m["files"] = files;
    m["config"] = cfg.to_json();
    if (!extra.is_null()) m["result"] = extra;
    auto os = open_out(dir / "manifest.json");
    os << m.dump(2) << '\n';
}

std::vector<std::string> default_observables(const DensityMatrixSeries& s) {
    std::vector<std::string> names;
    for (int i = 1; i <= s.dim(); ++i) names.push_back("pop(" + std::to_string(i) + ")");
    return names;
}

int cmd_simulate(const RunArgs& a) {
    const auto t0 = std::chrono::steady_clock::now();
    const RunConfig cfg = load_config(a);
    const fs::path dir = cfg.output.directory;
    fs::create_directories(dir);

    const SimulationRun run = simulate(cfg, a.threads, a.literal_paper_ode);
    const auto names = cfg.output.observables.empty() ? default_observables(run.series) : cfg.output.observables;
    const auto columns = evaluate_observables(run.series, names, fidelity_reference(a.fidelity_ref, run.rho0));

    std::vector<std::string> files{"observables.csv"};
    {
        auto os = open_out(dir / "observables.csv");
        write_observables_csv(os, run.series.grid, columns, cfg.output.with_errors);
    }
    if (cfg.output.dump_rho) {
        auto os = open_out(dir / "rho.csv");
        write_rho_csv(os, run.series);
        files.push_back("rho.csv");
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    nlohmann::ordered_json extra{{"n_traj", run.series.n_traj},
                                 {"max_norm_drift", run.series.max_norm_drift}};
    write_manifest(dir, cfg, "simulate", files, wall, a, extra);
    std::cout << "simulate: " << run.model.describe() << ", " << run.series.n_traj << " trajectories, "
              << std::fixed << std::setprecision(2) << wall << " s -> " << dir.string() << '\n';
    return kOk;
}

int cmd_oracle_compare(const RunArgs& a) {
    const auto t0 = std::chrono::steady_clock::now();
    const RunConfig cfg = load_config(a);
    if (!cfg.oracle) throw ConfigError("oracle-compare needs an 'oracle' section");
    const fs::path dir = cfg.output.directory;
    fs::create_directories(dir);

    const SimulationRun run = simulate(cfg, a.threads, a.literal_paper_ode);
    const DensityMatrixSeries ref = run_oracle(cfg, run.model);
    std::vector<double> dist;
    const double max_d = max_trace_distance(run.series, ref, &dist);
    const std::vector<double> err = mc_error(run.series);

    std::size_t arg = 0;
    for (std::size_t i = 0; i < dist.size(); ++i) {
        if (dist[i] > dist[arg]) arg = i;
    }
    const double stderr_at_max = err[arg];
    const double bound = std::max(cfg.oracle->tolerance, 3.0 * stderr_at_max);
    const bool pass = max_d <= bound;

    {
        auto os = open_out(dir / "comparison.csv");
        csv::header(os, {"t", "trace_distance", "mc_stderr"});
        for (std::size_t i = 0; i < dist.size(); ++i) csv::row(os, run.series.grid.t(static_cast<int>(i)), dist[i], err[i]);
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    nlohmann::ordered_json extra{{"max_trace_distance", max_d},
                                 {"t_at_max", run.series.grid.t(static_cast<int>(arg))},
                                 {"stderr_at_max", stderr_at_max},
                                 {"bound", bound},
                                 {"pass", pass}};
    write_manifest(dir, cfg, "oracle-compare", {"comparison.csv"}, wall, a, extra);
    std::cout << (pass ? "PASS" : "FAIL") << " oracle-compare (" << cfg.oracle->kind << "): max trace distance "
              << std::setprecision(6) << max_d << " at t=" << run.series.grid.t(static_cast<int>(arg))
              << ", bound " << bound << " = max(tol " << cfg.oracle->tolerance << ", 3*stderr " << 3.0 * stderr_at_max
              << ")\n";
    return pass ? kOk : kComparison;
}

struct BasisArgs {
    int qubits{0};
    double spin{0.0};
    int cavities{0};
    std::string csv;
    bool site_resolved{false};
};

int cmd_basis_info(const BasisArgs& a) {
    const int chosen = (a.qubits > 0) + (a.spin > 0.0) + (a.cavities > 0);
    if (chosen != 1) throw ConfigError("basis-info needs exactly one of --qubits, --spin, --cavities");
    ModelSpec model;
    if (a.qubits > 0) {
        model = build_nqubit_model(a.qubits, 1.0);
    } else if (a.spin > 0.0) {
        model = build_angular_model(a.spin, 1.0);
    } else {
        std::vector<double> omegas;
        for (int j = 0; j < a.cavities; ++j) omegas.push_back(1.0 + 0.1 * j);
        model = build_ncavity_model(a.cavities, omegas, std::vector<double>(a.cavities, 0.5));
    }
    const OBasis basis = a.site_resolved && a.qubits > 0 ? basis_nqubit(model, QubitBasisVariant::SiteResolved)
                                                         : basis_for(model);
    std::cout << model.describe() << '\n';
    std::cout << "order  count";
    const bool reduced = !basis.reduced_counts.empty();
    if (reduced) std::cout << "  reduced";
    std::cout << '\n';
    for (int k = 0; k <= basis.k_max(); ++k) {
        std::cout << std::setw(5) << k << "  " << std::setw(5) << basis.size(k);
        if (reduced && k < static_cast<int>(basis.reduced_counts.size())) {
            std::cout << "  " << std::setw(7) << basis.reduced_counts[k];
        }
        std::cout << '\n';
    }
    std::cout << "total  " << basis.total() << '\n';

    if (a.qubits > 0) {
        bool ok = true;
        for (int n = 2; n <= 7; ++n) {
            for (int k = 1; k < n; ++k) ok &= qubit_basis_count(n, k) == qubit_basis_count(n - 1, k - 1);
            ok &= qubit_basis_count(n, 0) == (n >= 3 ? qubit_basis_count(n - 2, 0) : 0) + n;
        }
        std::cout << "recurrences m(N,k)=m(N-1,k-1), m(N,0)=m(N-2,0)+N for N<=7: " << (ok ? "hold" : "VIOLATED") << '\n';
    }

    const bool show = model.dim() <= 16;
    std::unique_ptr<std::ofstream> csv_out;
    if (!a.csv.empty()) {
        csv_out = std::make_unique<std::ofstream>(a.csv, std::ios::binary);
        if (!*csv_out) throw InputError("cannot write '" + a.csv + "'");
        csv::header(*csv_out, {"order", "index", "i", "j", "re", "im"});
    }
    for (int k = 0; k <= basis.k_max(); ++k) {
        for (int j = 0; j < basis.size(k); ++j) {
            const Mat op = basis.physical(k, j);
            if (show) {
                std::cout << "\nO^(" << k << ")_" << j + 1 << ":\n";
                for (int r = 0; r < op.rows(); ++r) {
                    for (int c = 0; c < op.cols(); ++c) {
                        const cplx v = op(r, c);
                        std::ostringstream cell;
                        cell << std::setprecision(4);
                        if (std::abs(v) < 1e-12)
                            cell << 0;
                        else if (std::abs(v.imag()) < 1e-12)
                            cell << v.real();
                        else
                            cell << v.real() << (v.imag() >= 0 ? "+" : "") << v.imag() << 'i';
                        std::cout << ' ' << std::setw(16) << cell.str();
                    }
                    std::cout << '\n';
                }
            }
            if (csv_out) {
                for (int r = 0; r < op.rows(); ++r) {
                    for (int c = 0; c < op.cols(); ++c) {
                        if (op(r, c) == cplx{}) continue;
                        *csv_out << k << ',' << j + 1 << ',' << r + 1 << ',' << c + 1 << ',' << csv::num(op(r, c).real())
                                 << ',' << csv::num(op(r, c).imag()) << '\n';
                    }
                }
            }
        }
    }
    return kOk;
}

struct NoiseArgs {
    std::string config;
    int paths{20000};
    std::uint64_t seed{2024};
};

int cmd_noise_test(const NoiseArgs& a) {
    CorrelationFunction ou = CorrelationFunction::ornstein_uhlenbeck(1.0);
    CorrelationFunction modes = CorrelationFunction::discrete_modes({{{0.6, 0.0}, 0.3}, {{0.4, 0.1}, -1.1}, {{0.3, 0.0}, 2.0}});
    TimeGrid grid{0.05, 40};
    if (!a.config.empty()) {
        const RunConfig cfg = RunConfig::load(a.config);
        grid = build_grid(cfg.sim);
        if (cfg.bath.kind == "ou") {
            ou = build_correlation(cfg.bath);
        } else {
            modes = build_correlation(cfg.bath);
        }
    }
    const int last = grid.size() - 1;
    const std::vector<std::pair<int, int>> pairs{{0, 0}, {last / 2, last / 4}, {last, 0}, {last, last}};
    struct Case {
        NoiseGenerator gen;
        const CorrelationFunction* corr;
    };
    const std::vector<Case> cases{{NoiseGenerator::OrnsteinUhlenbeck, &ou},
                                  {NoiseGenerator::Cholesky, &ou},
                                  {NoiseGenerator::DiscreteModes, &modes},
                                  {NoiseGenerator::Cholesky, &modes}};
    bool all = true;
    for (const auto& c : cases) {
        const auto checks = noise_moment_checks(c.gen, *c.corr, grid, a.paths, a.seed, pairs);
        int passed = 0;
        for (const auto& m : checks) passed += m.pass;
        const bool ok = passed == static_cast<int>(checks.size());
        all &= ok;
        std::cout << (ok ? "PASS " : "FAIL ") << to_string(c.gen) << " on " << c.corr->describe() << ": " << passed
                  << "/" << checks.size() << " moments within 3 sigma\n";
        for (const auto& m : checks) {
            if (!m.pass) {
                std::cout << "    " << m.name << " = " << m.value << ", expected " << m.expected << " +- "
                          << m.std_error << '\n';
            }
        }
    }
    return all ? kOk : kComparison;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Non-Markovian quantum state diffusion with O-operator kernels"};
    app.require_subcommand(1);
    app.set_version_flag("--version", NMQSD_VERSION);

    RunArgs run_args;
    auto add_run_flags = [&](CLI::App* sub) {
        sub->add_option("--config", run_args.config, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", run_args.out, "output directory (overrides output.directory)");
        sub->add_option("--threads", run_args.threads, "worker threads (results do not depend on it)")
            ->check(CLI::PositiveNumber);
        sub->add_option("--seed-override", run_args.seed_override, "replace sim.seed");
        sub->add_flag("--literal-paper-ode", run_args.literal_paper_ode,
                      "coupled cavities: use the hopping term exactly as printed (no factor i)");
    };
    CLI::App* sim = app.add_subcommand("simulate", "run a trajectory ensemble and write observables");
    add_run_flags(sim);
    sim->add_option("--fidelity-ref", run_args.fidelity_ref, "fidelity reference: rho0, pure, or a JSON matrix file");
    CLI::App* cmp = app.add_subcommand("oracle-compare", "compare an ensemble with a reference solver");
    add_run_flags(cmp);

    BasisArgs basis_args;
    CLI::App* bi = app.add_subcommand("basis-info", "print O-operator basis counts");
    bi->add_option("--qubits", basis_args.qubits, "collective N-qubit model")->check(CLI::Range(1, 7));
    bi->add_option("--spin", basis_args.spin, "angular momentum l");
    bi->add_option("--cavities", basis_args.cavities, "N coupled cavities")->check(CLI::Range(1, 6));
    bi->add_flag("--site-resolved", basis_args.site_resolved, "qubits: site-resolved basis");
    bi->add_option("--csv", basis_args.csv, "write operators as order,index,i,j,re,im");

    NoiseArgs noise_args;
    CLI::App* nt = app.add_subcommand("noise-test", "moment checks for every noise generator");
    nt->add_option("--config", noise_args.config, "take the bath and grid from a run configuration")
        ->check(CLI::ExistingFile);
    nt->add_option("--paths", noise_args.paths, "paths per generator")->check(CLI::Range(2, 10000000));
    nt->add_option("--seed", noise_args.seed, "master seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfig;
    }

    try {
        if (sim->parsed()) return cmd_simulate(run_args);
        if (cmp->parsed()) return cmd_oracle_compare(run_args);
        if (bi->parsed()) return cmd_basis_info(basis_args);
        if (nt->parsed()) return cmd_noise_test(noise_args);
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfig;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumerical;
    }
    return kOk;
}
