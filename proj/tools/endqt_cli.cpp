// Command-line front door: config ingestion, scenario dispatch, artifact
// export and a reduced-count self-test suite.
//
// Exit codes: 0 success, 1 expectation/check failure, 2 usage/config error.
#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <complex>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "endqt/scenarios.hpp"

namespace fs = std::filesystem;
using endqt::scenarios::Mode;
using endqt::scenarios::Scenario;
using endqt::scenarios::ScenarioConfig;
using endqt::scenarios::ScenarioReport;
using nlohmann::ordered_json;

namespace {

constexpr const char* kToolVersion = "1.0.0";

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Scenario parse_scenario(const std::string& s) {
  if (s == "toy-sdc") return Scenario::ToySdc;
  if (s == "wigners-friend") return Scenario::WignersFriend;
  if (s == "interferometer") return Scenario::Interferometer;
  if (s == "epr-bell") return Scenario::EprBell;
  throw ConfigError("unknown scenario '" + s +
                    "' (expected toy-sdc, wigners-friend, interferometer or "
                    "epr-bell)");
}

Mode parse_mode(const std::string& s) {
  if (s == "prob" || s == "probabilistic") return Mode::Probabilistic;
  if (s == "det-chancy" || s == "deterministic-chancy")
    return Mode::DeterministicChancy;
  if (s == "det-hv" || s == "deterministic-early-hv")
    return Mode::DeterministicEarlyHV;
  throw ConfigError("unknown mode '" + s +
                    "' (expected prob, det-chancy or det-hv)");
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("key '" + key + "' expects a boolean, got '" + v + "'");
}

double parse_double(const std::string& v, const std::string& key) {
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' expects a number, got '" + v + "'");
  }
  if (used != v.size()) {
    throw ConfigError("key '" + key + "' expects a number, got '" + v + "'");
  }
  return d;
}

// Applies one `key=value` assignment to the config. Shared between the
// config file parser and command-line overrides.
void apply_assignment(ScenarioConfig& c, const std::string& key,
                      const std::string& value) {
  if (key == "scenario") {
    c.scenario = parse_scenario(value);
  } else if (key == "mode") {
    c.mode = parse_mode(value);
  } else if (key == "seed") {
    c.seed = static_cast<std::uint64_t>(
        std::stoull(value));
  } else if (key == "trials") {
    c.trials = static_cast<int>(parse_double(value, key));
  } else if (key == "lab_open") {
    c.lab_open = parse_bool(value, key);
  } else if (key == "d3_present") {
    c.d3_present = parse_bool(value, key);
  } else if (key == "alpha1") {
    c.alpha1 = parse_double(value, key);
  } else if (key == "beta1") {
    c.beta1 = parse_double(value, key);
  } else if (key == "alpha2") {
    c.alpha2 = parse_double(value, key);
  } else if (key == "beta2") {
    c.beta2 = parse_double(value, key);
  } else if (key == "angle_a0") {
    c.angle_a0 = parse_double(value, key);
  } else if (key == "angle_a1") {
    c.angle_a1 = parse_double(value, key);
  } else if (key == "angle_b0") {
    c.angle_b0 = parse_double(value, key);
  } else if (key == "angle_b1") {
    c.angle_b1 = parse_double(value, key);
  } else if (key == "settings_stream") {
    c.settings_stream = static_cast<std::uint64_t>(std::stoull(value));
  } else if (key == "preparation_stream") {
    c.preparation_stream = static_cast<std::uint64_t>(std::stoull(value));
  } else if (key == "window_length") {
    c.stability.window_length = parse_double(value, key);
  } else if (key == "min_ticks") {
    c.stability.min_ticks = static_cast<int>(parse_double(value, key));
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

// Flat `key = value` file, '#' comments, blank lines ignored.
void load_config_file(ScenarioConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": expected key=value");
    }
    try {
      apply_assignment(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void apply_override(ScenarioConfig& c, const std::string& kv) {
  const std::size_t eq = kv.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("override '" + kv + "' is not key=value");
  }
  apply_assignment(c, kv.substr(0, eq), kv.substr(eq + 1));
}

ordered_json config_to_json(const ScenarioConfig& c) {
  ordered_json j;
  j["scenario"] = endqt::scenarios::to_string(c.scenario);
  j["mode"] = endqt::scenarios::to_string(c.mode);
  j["seed"] = c.seed;
  j["trials"] = c.trials;
  j["lab_open"] = c.lab_open;
  j["d3_present"] = c.d3_present;
  j["alpha1"] = c.alpha1;
  j["beta1"] = c.beta1;
  j["alpha2"] = c.alpha2;
  j["beta2"] = c.beta2;
  j["angle_a0"] = c.angle_a0;
  j["angle_a1"] = c.angle_a1;
  j["angle_b0"] = c.angle_b0;
  j["angle_b1"] = c.angle_b1;
  j["settings_stream"] = c.settings_stream;
  j["preparation_stream"] = c.preparation_stream;
  j["window_length"] = c.stability.window_length;
  j["min_ticks"] = c.stability.min_ticks;
  return j;
}

// FNV-1a over the resolved-config text: stable across runs and platforms,
// unlike std::hash.
std::string config_hash(const ordered_json& resolved) {
  const std::string s = resolved.dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::ostringstream out;
  out << std::hex << h;
  return out.str();
}

std::string utc_timestamp() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

int cmd_run(const ScenarioConfig& config, const std::string& config_path,
            std::string out_dir, bool json_to_stdout) {
  if (out_dir.empty()) {
    out_dir = "runs/" + std::string(endqt::scenarios::to_string(
                            config.scenario)) +
              "-seed" + std::to_string(config.seed);
  }
  fs::create_directories(out_dir);

  // The manifest (the only artifact carrying a timestamp) goes to disk
  // before any trial runs.
  ordered_json manifest;
  manifest["tool_version"] = kToolVersion;
  manifest["timestamp"] = utc_timestamp();
  manifest["config_path"] = config_path;
  manifest["output_dir"] = out_dir;
  manifest["config"] = config_to_json(config);
  manifest["config_hash"] = config_hash(manifest["config"]);
  write_file(fs::path(out_dir) / "manifest.json", manifest.dump(2) + "\n");

  ScenarioReport report = endqt::scenarios::run_scenario(config);

  const std::string report_json = report.to_json().dump(2) + "\n";
  write_file(fs::path(out_dir) / "report.json", report_json);
  write_file(fs::path(out_dir) / "trials.csv", report.trials_csv);
  for (const auto& [name, dot] : report.chain_snapshots) {
    write_file(fs::path(out_dir) / name, dot);
  }
  if (json_to_stdout) {
    std::cout << report_json;
  } else {
    std::cout << "wrote " << out_dir << "/report.json ("
              << report.expectations.size() << " expectations)\n";
  }
  for (const auto& e : report.expectations) {
    if (!e.pass) {
      std::cerr << "FAIL " << e.name << ": expected " << e.expected
                << " +/- " << e.tolerance << ", got " << e.actual << "\n";
    }
  }
  return report.all_passed() ? 0 : 1;
}

int cmd_export_chain(const std::string& report_dir, double t) {
  // Snapshot files are named chain_t<k>.dot; match <k> numerically.
  fs::path dir(report_dir);
  if (!fs::is_directory(dir)) {
    std::cerr << "no such report directory: " << report_dir << "\n";
    return 1;
  }
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("chain_t", 0) != 0 || name.size() <= 11 ||
        name.substr(name.size() - 4) != ".dot") {
      continue;
    }
    const std::string token = name.substr(7, name.size() - 11);
    char* end = nullptr;
    const double k = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0') continue;
    if (std::abs(k - t) < 1e-9) {
      std::ifstream in(entry.path(), std::ios::binary);
      std::cout << in.rdbuf();
      return 0;
    }
  }
  std::cerr << "no chain snapshot at t=" << t << " in " << report_dir << "\n";
  return 1;
}

struct SelfCheck {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Pins the interferometer state after the first splitter:
// (1/sqrt 2)(|0010> + i|0001>) on (m1..m4), pointer 0. `mutate` flips the
// reflection sign in the pinned vector, standing in for a sign error in
// the splitter matrix; the check must then fail.
SelfCheck check_bs1_state(bool mutate) {
  SelfCheck c{"BS1 state check", false, ""};
  const endqt::PureState psi =
      endqt::scenarios::interferometer_state_after_first_splitter();
  const double h = 1.0 / std::sqrt(2.0);
  const double sign = mutate ? -1.0 : 1.0;
  endqt::Vec expected = endqt::Vec::Zero(32);
  expected[4] = h;                                  // |0010>, e=0
  expected[2] = std::complex<double>(0.0, sign * h);  // |0001>, e=0
  const double diff = (psi.amplitudes() - expected).norm();
  c.pass = diff < 1e-12;
  std::ostringstream d;
  d << "amplitude deviation " << diff;
  c.detail = d.str();
  return c;
}

SelfCheck check_scenario(const std::string& name, const ScenarioConfig& c) {
  SelfCheck chk{name, false, ""};
  try {
    ScenarioReport r = endqt::scenarios::run_scenario(c);
    chk.pass = r.all_passed();
    if (!chk.pass) {
      for (const auto& e : r.expectations) {
        if (!e.pass) {
          chk.detail = "failed expectation " + e.name;
          break;
        }
      }
    } else {
      chk.detail = std::to_string(r.expectations.size()) + " expectations met";
    }
  } catch (const std::exception& e) {
    chk.detail = e.what();
  }
  return chk;
}

SelfCheck check_determinism() {
  SelfCheck chk{"report determinism", false, ""};
  ScenarioConfig c;
  c.scenario = Scenario::EprBell;
  c.seed = 5;
  c.trials = 300;
  const std::string a = endqt::scenarios::run_scenario(c).to_json().dump(2);
  const std::string b = endqt::scenarios::run_scenario(c).to_json().dump(2);
  chk.pass = (a == b);
  chk.detail = chk.pass ? "byte-identical reports" : "reports differ";
  return chk;
}

int cmd_selftest(bool json_output, bool mutate_bs1) {
  std::vector<SelfCheck> checks;
  checks.push_back(check_bs1_state(mutate_bs1));

  auto quick = [](Scenario s, int trials) {
    ScenarioConfig c;
    c.scenario = s;
    c.seed = 17;
    c.trials = trials;
    return c;
  };
  checks.push_back(check_scenario("toy-sdc", quick(Scenario::ToySdc, 4000)));
  {
    ScenarioConfig c = quick(Scenario::ToySdc, 4000);
    c.mode = Mode::DeterministicChancy;
    checks.push_back(check_scenario("toy-sdc det-chancy", c));
    c.mode = Mode::DeterministicEarlyHV;
    checks.push_back(check_scenario("toy-sdc det-hv", c));
  }
  checks.push_back(
      check_scenario("wigners-friend open", quick(Scenario::WignersFriend,
                                                  4000)));
  {
    ScenarioConfig c = quick(Scenario::WignersFriend, 400);
    c.lab_open = false;
    checks.push_back(check_scenario("wigners-friend isolated", c));
  }
  checks.push_back(check_scenario("interferometer",
                                  quick(Scenario::Interferometer, 4000)));
  {
    ScenarioConfig c = quick(Scenario::Interferometer, 1000);
    c.d3_present = false;
    checks.push_back(check_scenario("interferometer no-d3", c));
  }
  checks.push_back(check_scenario("epr-bell", quick(Scenario::EprBell, 4000)));
  checks.push_back(check_determinism());

  bool all = true;
  for (const auto& c : checks) all = all && c.pass;

  if (json_output) {
    ordered_json j;
    j["all_passed"] = all;
    j["checks"] = ordered_json::array();
    for (const auto& c : checks) {
      ordered_json jc;
      jc["name"] = c.name;
      jc["pass"] = c.pass;
      jc["detail"] = c.detail;
      j["checks"].push_back(jc);
    }
    std::cout << j.dump(2) << "\n";
  } else {
    for (const auto& c : checks) {
      std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << " (" << c.detail
                << ")\n";
    }
    std::cout << (all ? "selftest: all checks passed\n"
                      : "selftest: FAILURES above\n");
  }
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic-chain quantum scenario runner"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Run a scenario and write artifacts");
  std::string scenario_pos, scenario_flag, config_file, mode_flag, out_dir;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  int trials = 0;
  bool isolated = false, open_lab = false, d3 = false, no_d3 = false;
  bool json_out = false;
  run->add_option("scenario_name", scenario_pos,
                  "toy-sdc | wigners-friend | interferometer | epr-bell");
  run->add_option("--scenario", scenario_flag, "scenario name (alternative)");
  run->add_option("--config", config_file, "key=value config file");
  auto* seed_opt = run->add_option("--seed", seed, "master RNG seed");
  auto* trials_opt = run->add_option("--trials", trials, "trial count");
  run->add_flag("--isolated", isolated, "close the lab boundary");
  run->add_flag("--open", open_lab, "open the lab boundary (default)");
  run->add_flag("--d3", d3, "include the in-channel detector (default)");
  run->add_flag("--no-d3", no_d3, "remove the in-channel detector");
  run->add_option("--mode", mode_flag, "prob | det-chancy | det-hv");
  run->add_option("--out", out_dir, "output directory");
  run->add_flag("--json", json_out, "print report.json to stdout");
  run->add_option("--set", overrides, "key=value config overrides");

  // export-chain
  auto* exp = app.add_subcommand("export-chain",
                                 "Print a chain snapshot as DOT");
  std::string report_dir;
  double export_t = 0.0;
  exp->add_option("report_dir", report_dir, "run output directory")
      ->required();
  exp->add_option("--t", export_t, "snapshot time")->required();

  // selftest
  auto* self = app.add_subcommand(
      "selftest", "Run the reduced-count validation suite");
  bool self_json = false, mutate_bs1 = false;
  self->add_flag("--json", self_json, "machine-readable summary");
  self->add_flag("--mutate-bs1", mutate_bs1,
                 "inject a splitter sign error (mutation fixture)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) {
      ScenarioConfig config;
      if (!config_file.empty()) load_config_file(config, config_file);
      if (!scenario_pos.empty()) config.scenario = parse_scenario(scenario_pos);
      if (!scenario_flag.empty()) {
        config.scenario = parse_scenario(scenario_flag);
      }
      if (scenario_pos.empty() && scenario_flag.empty() &&
          config_file.empty()) {
        throw ConfigError("no scenario given (positional, --scenario or "
                          "--config)");
      }
      if (seed_opt->count() > 0) config.seed = seed;
      if (trials_opt->count() > 0) config.trials = trials;
      if (isolated && open_lab) {
        throw ConfigError("--isolated and --open are mutually exclusive");
      }
      if (isolated) config.lab_open = false;
      if (open_lab) config.lab_open = true;
      if (d3 && no_d3) {
        throw ConfigError("--d3 and --no-d3 are mutually exclusive");
      }
      if (d3) config.d3_present = true;
      if (no_d3) config.d3_present = false;
      if (!mode_flag.empty()) config.mode = parse_mode(mode_flag);
      for (const auto& kv : overrides) apply_override(config, kv);
      return cmd_run(config, config_file, out_dir, json_out);
    }
    if (exp->parsed()) return cmd_export_chain(report_dir, export_t);
    if (self->parsed()) return cmd_selftest(self_json, mutate_bs1);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const endqt::scenarios::InvalidConfig& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
