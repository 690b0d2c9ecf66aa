// config.hpp — run configuration (JSON text, strict schema) and the glue that
// turns it into models, baths, initial states, ensembles and oracle runs.
//
// Schema (every key optional unless noted; unknown keys are rejected):
//
//   model   { family: "angular" | "nqubit" | "ncavity"        (required)
//             l, omega                                          angular
//             n_qubits, omega, basis: "collective"|"site_resolved"  nqubit
//             n_modes, omegas[], lambdas[], n_max,
//             coupling: "ring"|"open_chain"                     ncavity }
//   bath    { kind: "ou" | "discrete_modes"                      (required)
//             gamma                                             ou
//             modes: [{g: number | [re, im], omega}]            discrete_modes }
//   sim     { dt, t_end (required), n_traj, seed,
//             mode: "linear"|"nonlinear", k_trunc (-1 = basis maximum),
//             generator: "default"|"ou"|"discrete_modes"|"cholesky",
//             groups, obar_on_shifted_noise }
//   initial { state: "uniform"|"ground"|"excited"|"werner"|"vector"|"matrix",
//             werner_f, vector: [c...], matrix: [[c...]...] }  c = number | [re, im]
//   output  { directory, observables: ["coh(i,j)", "pop(i)", "fidelity"],
//             dump_rho, with_errors }
//   oracle  { kind: "pseudomode"|"discrete_modes"|"lindblad", tolerance,
//             gamma (overrides the bath's), n_ph_max, check_truncation }
#pragma once

#include "nmqsd/ensemble.hpp"
#include "nmqsd/models.hpp"
#include "nmqsd/obasis.hpp"
#include "nmqsd/observables.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace nmqsd {

struct ModelConfig {
    std::string family{"nqubit"};
    double l{0.5};
    double omega{1.0};
    int n_qubits{1};
    std::string basis{"collective"};
    int n_modes{1};
    std::vector<double> omegas;
    std::vector<double> lambdas;
    int n_max{2};
    std::string coupling{"ring"};
};

struct BathConfig {
    std::string kind{"ou"};
    double gamma{1.0};
    std::vector<BathMode> modes;
};

struct SimConfig {
    double dt{0.01};
    double t_end{1.0};
    int n_traj{1000};
    std::uint64_t seed{1};
    std::string mode{"nonlinear"};
    int k_trunc{-1};
    std::string generator{"default"};
    int groups{20};
    bool obar_on_shifted_noise{true};
};

struct InitialConfig {
    std::string state{"uniform"};
    double werner_f{0.0};
    std::vector<cplx> vector;
    std::vector<std::vector<cplx>> matrix;
};

struct OutputConfig {
    std::string directory{"out"};
    std::vector<std::string> observables;
    bool dump_rho{false};
    bool with_errors{true};
};

struct OracleConfig {
    std::string kind{"pseudomode"};
    double tolerance{0.02};
    std::optional<double> gamma;
    int n_ph_max{-1};
    bool check_truncation{true};
};

struct RunConfig {
    ModelConfig model;
    BathConfig bath;
    SimConfig sim;
    InitialConfig initial;
    OutputConfig output;
    std::optional<OracleConfig> oracle;

    // Throws ConfigError (with the line of the offending key when known).
    static RunConfig parse(const std::string& text);
    static RunConfig load(const std::string& path);

    nlohmann::ordered_json to_json() const;
    std::string dump() const { return to_json().dump(2); }
};

ModelSpec build_model(const ModelConfig& cfg);
OBasis build_basis(const ModelSpec& model, const ModelConfig& cfg);
CorrelationFunction build_correlation(const BathConfig& cfg);
TimeGrid build_grid(const SimConfig& cfg);
Mat build_initial_state(const InitialConfig& cfg, const ModelSpec& model);

struct SimulationRun {
    ModelSpec model;
    Mat rho0;
    DensityMatrixSeries series;
};

// `literal_paper_ode` only affects coupled cavities (see propagate_ncavity_kernels).
SimulationRun simulate(const RunConfig& cfg, int threads, bool literal_paper_ode = false);

DensityMatrixSeries run_oracle(const RunConfig& cfg, const ModelSpec& model);

// Observable names: "coh(i,j)" -> |rho_ij|, "pop(i)" -> rho_ii, "fidelity"
// against `fidelity_ref`.
std::vector<ObservableSeries> evaluate_observables(const DensityMatrixSeries& series,
                                                   const std::vector<std::string>& names,
                                                   const Mat& fidelity_ref);

} // namespace nmqsd
