// End-to-end model runs: the toy chain-formation universe, the
// Wigner's-friend lab, the four-channel interferometer and the EPR/Bell
// common-cause process, each with analytic expectations attached.
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "endqt/chains.hpp"
#include "endqt/core.hpp"
#include "endqt/differentiation.hpp"
#include "endqt/qcm.hpp"

namespace endqt::scenarios {

struct InvalidConfig : Error { using Error::Error; };

enum class Scenario { ToySdc, WignersFriend, Interferometer, EprBell };
enum class Mode { Probabilistic, DeterministicChancy, DeterministicEarlyHV };

const char* to_string(Scenario s);
const char* to_string(Mode m);

struct ScenarioConfig {
  Scenario scenario = Scenario::ToySdc;
  Mode mode = Mode::Probabilistic;
  std::uint64_t seed = 1;
  int trials = 10000;

  bool lab_open = true;    // Wigner's friend / interferometer boundary
  bool d3_present = true;  // in-channel detector in the interferometer

  // Toy-chain stage amplitudes (first interaction, then the second).
  double alpha1 = 1.0 / 1.4142135623730951;
  double beta1 = 1.0 / 1.4142135623730951;
  double alpha2 = 1.0 / 1.4142135623730951;
  double beta2 = 1.0 / 1.4142135623730951;

  // Bell measurement angles (x-z plane) per wing and setting.
  double angle_a0 = 0.0;
  double angle_a1 = 1.5707963267948966;
  double angle_b0 = 0.7853981633974483;
  double angle_b1 = 2.356194490192345;
  // Sub-stream indices for setting draws and preparation labels; they
  // must differ or the independence test is vacuously broken.
  std::uint64_t settings_stream = 0;
  std::uint64_t preparation_stream = 1;

  chains::StabilityParams stability{1.0, 1};
};

struct Expectation {
  std::string name;
  double expected = 0.0;
  double actual = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct FrequencyCell {
  std::string label;
  long long count = 0;
  double frequency = 0.0;
  double analytic = 0.0;
  double radius3 = 0.0;  // 3-sigma binomial radius at the trial count
};

struct ScenarioReport {
  std::string scenario;
  std::string mode;
  std::uint64_t seed = 0;
  int trials = 0;
  nlohmann::ordered_json summary;
  std::vector<Expectation> expectations;
  std::vector<FrequencyCell> frequencies;
  std::string trials_csv;  // header + one row per trial
  // (filename, DOT text) chain snapshots, e.g. ("chain_t2.dot", ...).
  std::vector<std::pair<std::string, std::string>> chain_snapshots;

  bool all_passed() const;
  nlohmann::ordered_json to_json() const;
};

// The interferometer state right after the first splitter, on the
// (m1..m4, e) occupation space; pinned by the self-test as a regression
// tripwire for the splitter convention.
PureState interferometer_state_after_first_splitter();

ScenarioReport run_toy_sdc(const ScenarioConfig& config);
ScenarioReport run_wigners_friend(const ScenarioConfig& config);
ScenarioReport run_interferometer(const ScenarioConfig& config);
ScenarioReport run_epr_bell(const ScenarioConfig& config);
ScenarioReport run_scenario(const ScenarioConfig& config);

}  // namespace endqt::scenarios
