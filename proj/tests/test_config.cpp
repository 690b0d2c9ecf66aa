#include "nmqsd/config.hpp"
#include "nmqsd/errors.hpp"

#include <doctest.h>

using namespace nmqsd;

namespace {

const char* kFig2 = R"J({
  "model": {"family": "nqubit", "n_qubits": 3, "omega": 1.0},
  "bath": {"kind": "ou", "gamma": 0.3},
  "sim": {"dt": 0.01, "t_end": 2.0, "n_traj": 1000, "seed": 5, "k_trunc": 1},
  "initial": {"state": "werner", "werner_f": 0.25},
  "output": {"directory": "out/fig2", "observables": ["fidelity", "coh(5,3)"]}
})J";

int error_line(const std::string& text) {
    try {
        RunConfig::parse(text);
    } catch (const ConfigError& e) {
        return e.line();
    }
    return -1;
}

} // namespace

TEST_CASE("config parses and round-trips losslessly") {
    const RunConfig a = RunConfig::parse(kFig2);
    CHECK(a.model.n_qubits == 3);
    CHECK(a.sim.k_trunc == 1);
    CHECK(a.initial.werner_f == 0.25);
    CHECK(a.output.observables.size() == 2);
    CHECK(!a.oracle);
    const RunConfig b = RunConfig::parse(a.dump());
    CHECK(a.dump() == b.dump());

    const char* cavity = R"J({
      "model": {"family": "ncavity", "n_modes": 2, "omegas": [0.5, 0.75], "lambdas": [0.1],
                "coupling": "open_chain", "n_max": 1},
      "bath": {"kind": "discrete_modes", "modes": [{"g": [0.3, -0.1], "omega": 0.4}, {"g": 0.2}]},
      "sim": {"dt": 0.05, "t_end": 1.0, "seed": 18446744073709551615},
      "initial": {"state": "vector", "vector": [0, [0.5, 0.5], 0.5, 0.5]},
      "oracle": {"kind": "discrete_modes", "tolerance": 0.02, "gamma": 2.5}
    })J";
    const RunConfig c = RunConfig::parse(cavity);
    CHECK(c.bath.modes[0].g == cplx(0.3, -0.1));
    CHECK(c.sim.seed == 18446744073709551615ull);
    CHECK(c.initial.vector[1] == cplx(0.5, 0.5));
    CHECK(RunConfig::parse(c.dump()).dump() == c.dump());
}

TEST_CASE("unknown keys are rejected with their line") {
    const std::string text = "{\n  \"model\": {\"family\": \"nqubit\"},\n  \"bath\": {\"kind\": \"ou\", \"gamma\": 1},\n"
                             "  \"sim\": {\"dt\": 0.1, \"t_end\": 1,\n    \"n_trajectories\": 5}\n}";
    CHECK(error_line(text) == 5);
    CHECK_THROWS_WITH_AS(RunConfig::parse(text), doctest::Contains("n_trajectories"), ConfigError);
    CHECK(error_line("{\"model\": {\"family\": \"nqubit\"}, \"bath\": {\"kind\": \"ou\", \"gamma\": 1},\n"
                     "\"sim\": {\"dt\": 0.1, \"t_end\": 1}, \"extra\": 1}") == 2);
}

TEST_CASE("schema violations report the offending line") {
    // wrong type
    CHECK(error_line("{\"model\": {\"family\": \"nqubit\"},\n\"bath\": {\"kind\": \"ou\",\n \"gamma\": \"big\"},\n"
                     "\"sim\": {\"dt\": 0.1, \"t_end\": 1}}") == 3);
    // non-positive parameter
    CHECK(error_line("{\"model\": {\"family\": \"nqubit\"},\n\"bath\": {\"kind\": \"ou\", \"gamma\": 1},\n"
                     "\"sim\": {\"dt\": 0.1,\n\"t_end\": -1}}") == 4);
    // malformed JSON
    CHECK(error_line("{\"model\": {\"family\": \"nqubit\"},\n\"bath\": {\"kind\": \"ou\" \"gamma\": 1}}") == 2);
    // missing section
    CHECK_THROWS_AS(RunConfig::parse("{\"model\": {\"family\": \"nqubit\"}}"), ConfigError);
    // bad enum
    CHECK(error_line("{\"model\": {\"family\": \"qudit\"},\n\"bath\": {\"kind\": \"ou\", \"gamma\": 1},\n"
                     "\"sim\": {\"dt\": 0.1, \"t_end\": 1}}") == 1);
    // array element
    CHECK(error_line("{\"model\": {\"family\": \"nqubit\"}, \"bath\": {\"kind\": \"ou\", \"gamma\": 1},\n"
                     "\"sim\": {\"dt\": 0.1, \"t_end\": 1},\n\"output\": {\"observables\": [\"pop(1)\",\n"
                     "\"entropy\"]}}") == 4);
    // t_end not on the grid
    CHECK(error_line("{\"model\": {\"family\": \"nqubit\"}, \"bath\": {\"kind\": \"ou\", \"gamma\": 1},\n"
                     "\"sim\": {\"dt\": 0.3, \"t_end\": 1}}") == 2);
    // Werner needs three qubits
    CHECK_THROWS_AS(RunConfig::parse("{\"model\": {\"family\": \"nqubit\", \"n_qubits\": 2}, \"bath\": {\"kind\": \"ou\", "
                                     "\"gamma\": 1}, \"sim\": {\"dt\": 0.1, \"t_end\": 1}, \"initial\": {\"state\": \"werner\"}}"),
                    ConfigError);
}

TEST_CASE("builders: initial states") {
    const RunConfig a = RunConfig::parse(kFig2);
    const ModelSpec m = build_model(a.model);
    CHECK((build_initial_state(a.initial, m) - werner_state(0.25)).norm() < 1e-15);
    InitialConfig ground;
    ground.state = "ground";
    CHECK(build_initial_state(ground, m)(0, 0) == 1.0);
    InitialConfig uniform;
    const Mat u = build_initial_state(uniform, build_angular_model(1.5, 0.3));
    CHECK(std::abs(u(1, 2) - 0.25) < 1e-15);
    InitialConfig bad;
    bad.state = "vector";
    bad.vector = {1.0, 0.0};
    CHECK_THROWS_AS(build_initial_state(bad, m), InvalidState);
}

TEST_CASE("simulate: zero coupling keeps observables constant") {
    const RunConfig cfg = RunConfig::parse(R"J({
      "model": {"family": "nqubit", "n_qubits": 1, "omega": 1.0},
      "bath": {"kind": "discrete_modes", "modes": [{"g": 0.0, "omega": 1.0}]},
      "sim": {"dt": 0.05, "t_end": 1.0, "n_traj": 20, "seed": 3},
      "initial": {"state": "vector", "vector": [0.6, [0.0, 0.8]]}
    })J");
    const SimulationRun run = simulate(cfg, 2);
    const auto obs = evaluate_observables(run.series, {"pop(1)", "coh(1,2)", "fidelity"}, run.rho0);
    for (double v : obs[0].values) CHECK(std::abs(v - 0.36) < 1e-12);
    for (double v : obs[1].values) CHECK(std::abs(v - 0.48) < 1e-12);
    CHECK(std::abs(obs[2].values.front() - 1.0) < 1e-12);
    for (double e : obs[0].std_error) CHECK(e == 0.0);
}
