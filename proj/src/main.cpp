// Command-line front end: config ingestion, the bundled platoon benchmark,
// and the design / simulate / verify / report workflow. Configs are JSON; the
// schema is documented in README.md and validated before any computation.
#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "dmpc/platoon.hpp"
#include "dmpc/runtime.hpp"

using json = nlohmann::json;
using namespace dmpc;

namespace {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  PlatoonParams params;
  int rho_max = 1;
  int T_bar = 0;
  std::vector<double> state_weight{1e-9, 0.0, 0.0};  // diagonal per-car state cost
  double quiescence_margin = 0.5;
  std::string profile = "benchmark";  // benchmark | hold
  double hold_speed = 10.0;
  long horizon = 2000;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::string out = "out";
};

template <typename T>
T field(const json& j, const std::string& key, const T& fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: field '" + key + "' has the wrong type");
  }
}

RunConfig parse_config(const json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  const std::string system = field<std::string>(j, "system", "platoon");
  if (system != "platoon") throw ConfigError("config: unknown system '" + system + "'");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    static const std::set<std::string> known{"system",   "platoon", "design",
                                            "scenario", "horizon", "seeds",
                                            "seed",     "out"};
    if (!known.count(key)) throw ConfigError("config: unknown field '" + key + "'");
  }

  RunConfig cfg;
  const json p = field<json>(j, "platoon", json::object());
  cfg.params.N = field<int>(p, "N", cfg.params.N);
  cfg.params.T_s = field<double>(p, "T_s", cfg.params.T_s);
  cfg.params.headway = field<double>(p, "headway", cfg.params.headway);
  cfg.params.car_length = field<double>(p, "car_length", cfg.params.car_length);
  cfg.params.m = field<double>(p, "m", cfg.params.m);
  cfg.params.tau = field<double>(p, "tau", cfg.params.tau);
  cfg.params.sigma = field<double>(p, "sigma", cfg.params.sigma);
  if (cfg.params.N < 2) throw ConfigError("config: platoon.N must be at least 2");
  if (cfg.params.T_s <= 0) throw ConfigError("config: platoon.T_s must be positive");

  const json d = field<json>(j, "design", json::object());
  cfg.rho_max = field<int>(d, "rho_max", cfg.rho_max);
  cfg.T_bar = field<int>(d, "T_bar", cfg.T_bar);
  cfg.state_weight = field<std::vector<double>>(d, "state_weight", cfg.state_weight);
  cfg.quiescence_margin = field<double>(d, "quiescence_margin", cfg.quiescence_margin);
  if (cfg.rho_max < 1 || cfg.T_bar < 0) throw ConfigError("config: design horizons out of range");
  if (cfg.state_weight.size() != 3) throw ConfigError("config: state_weight needs 3 entries");

  const json s = field<json>(j, "scenario", json::object());
  cfg.profile = field<std::string>(s, "profile", cfg.profile);
  cfg.hold_speed = field<double>(s, "hold_speed", cfg.hold_speed);
  if (cfg.profile != "benchmark" && cfg.profile != "hold")
    throw ConfigError("config: scenario.profile must be 'benchmark' or 'hold'");

  cfg.horizon = field<long>(j, "horizon", cfg.horizon);
  if (cfg.horizon < 1) throw ConfigError("config: horizon must be positive");
  cfg.seeds = field<std::vector<std::uint64_t>>(j, "seeds", cfg.seeds);
  if (j.contains("seed")) cfg.seeds = {field<std::uint64_t>(j, "seed", 1)};
  if (cfg.seeds.empty()) throw ConfigError("config: at least one seed required");
  cfg.out = field<std::string>(j, "out", cfg.out);
  return cfg;
}

json to_json(const RunConfig& cfg) {
  json j;
  j["system"] = "platoon";
  j["platoon"] = {{"N", cfg.params.N},       {"T_s", cfg.params.T_s},
                  {"headway", cfg.params.headway}, {"car_length", cfg.params.car_length},
                  {"m", cfg.params.m},       {"tau", cfg.params.tau},
                  {"sigma", cfg.params.sigma}};
  j["design"] = {{"rho_max", cfg.rho_max},
                 {"T_bar", cfg.T_bar},
                 {"state_weight", cfg.state_weight},
                 {"quiescence_margin", cfg.quiescence_margin}};
  j["scenario"] = {{"profile", cfg.profile}, {"hold_speed", cfg.hold_speed}};
  j["horizon"] = cfg.horizon;
  j["seeds"] = cfg.seeds;
  j["out"] = cfg.out;
  return j;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: JSON parse failure: ") + e.what());
  }
  RunConfig cfg = parse_config(j);
  // round-trip identity guard: serialise and parse back
  if (to_json(parse_config(to_json(cfg))) != to_json(cfg))
    throw ConfigError("config: serialisation round trip is not the identity");
  return cfg;
}

int thread_budget() {
  if (const char* env = std::getenv("DMPC_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

struct Built {
  Platoon platoon;
  ClosedLoop cl;
  DesignArtifacts art;
};

Built run_pipeline(const RunConfig& cfg) {
  Built b;
  b.platoon = build_platoon(cfg.params);
  b.cl = assemble_closed_loop(b.platoon.model.reduced, b.platoon.layer);
  DesignOptions opt;
  opt.rho_max = cfg.rho_max;
  opt.T_bar = cfg.T_bar;
  opt.quiescence_margin = cfg.quiescence_margin;
  opt.parallel = thread_budget() > 1;
  Mat Q = Mat::Zero(3, 3);
  for (int i = 0; i < 3; ++i) Q(i, i) = cfg.state_weight[static_cast<std::size_t>(i)];
  opt.Q_x.assign(static_cast<std::size_t>(cfg.params.N), Q);
  b.art = run_design(b.cl, b.platoon.layer, b.platoon.spec, opt);
  return b;
}

Scenario make_scenario(const RunConfig& cfg, const Platoon& p) {
  Scenario sc;
  const double Ts = cfg.params.T_s;
  if (cfg.profile == "benchmark") {
    sc.x0 = platoon_equilibrium(p, scenario_v0(0));
    sc.d = [Ts](Eigen::Index k) { return Vec::Constant(1, Ts * scenario_v0(k)); };
  } else {
    const double v = cfg.hold_speed;
    sc.x0 = platoon_equilibrium(p, v);
    sc.d = [Ts, v](Eigen::Index) { return Vec::Constant(1, Ts * v); };
  }
  return sc;
}

int cmd_design(const RunConfig& cfg, const std::string& artifacts_path) {
  const auto start = std::chrono::steady_clock::now();
  Built b;
  try {
    b = run_pipeline(cfg);
  } catch (const DesignInfeasible& e) {
    std::cerr << "design infeasible: " << e.what() << '\n';
    return 1;
  }
  const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << b.art.report << "total design runtime: " << total << " s\n";
  if (!artifacts_path.empty()) {
    json a;
    a["config"] = to_json(cfg);
    a["report"] = b.art.report;
    a["total_seconds"] = total;
    for (const auto& d : b.art.areas) {
      a["areas"].push_back({{"area", d.model.area},
                            {"rho", d.rho},
                            {"T", d.T},
                            {"T_bar", d.T_bar},
                            {"tier", d.tier == CertTier::worst_case ? "worst_case"
                                     : d.tier == CertTier::nominal  ? "nominal"
                                                                    : "none"},
                            {"synth_seconds", d.synth_seconds}});
    }
    std::ofstream out(artifacts_path);
    if (!out) {
      std::cerr << "cannot write " << artifacts_path << '\n';
      return 1;
    }
    out << a.dump(2) << '\n';
  }
  return 0;
}

int cmd_simulate(const RunConfig& cfg) {
  Built b;
  try {
    b = run_pipeline(cfg);
  } catch (const DesignInfeasible& e) {
    std::cerr << "design infeasible: " << e.what() << '\n';
    return 1;
  }
  const Scenario sc = make_scenario(cfg, b.platoon);
  std::filesystem::create_directories(cfg.out);

  std::vector<SimulationTrace> traces(cfg.seeds.size());
  const int budget = thread_budget();
  std::vector<std::future<SimulationTrace>> futs(cfg.seeds.size());
  std::size_t next = 0, done = 0;
  while (done < cfg.seeds.size()) {
    std::size_t launched = 0;
    while (next < cfg.seeds.size() && launched < static_cast<std::size_t>(budget)) {
      const std::size_t idx = next++;
      futs[idx] = std::async(std::launch::async, [&, idx] {
        return simulate(b.platoon.model.reduced, b.platoon.layer, b.cl, b.art, sc,
                        cfg.seeds[idx], cfg.horizon);
      });
      ++launched;
    }
    for (std::size_t i = done; i < next; ++i) traces[i] = futs[i].get();
    done = next;
  }

  int status = 0;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const std::string path = cfg.out + "/trace_" + std::to_string(cfg.seeds[i]) + ".csv";
    std::ofstream out(path);
    write_csv(traces[i], b.cl, out);
    std::cout << "seed " << cfg.seeds[i] << ": " << traces[i].steps.size() << " steps -> " << path;
    if (traces[i].breach) {
      std::cout << "  FEASIBILITY BREACH at step " << traces[i].breach_step;
      status = 1;
    }
    std::cout << '\n';
  }
  std::ofstream summary(cfg.out + "/summary.txt");
  summary << run_summary(traces, cfg.params.N);
  std::cout << run_summary(traces, cfg.params.N);
  return status;
}

// Raw CSV trace held as named columns of text tokens.
struct Trace {
  std::vector<std::string> names;
  std::map<std::string, std::size_t> index;
  std::vector<std::vector<std::string>> rows;
};

Trace read_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace " + path);
  Trace t;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty trace " + path);
  std::stringstream hs(line);
  std::string tok;
  while (std::getline(hs, tok, ',')) {
    t.index[tok] = t.names.size();
    t.names.push_back(tok);
  }
  while (std::getline(in, line)) {
    std::vector<std::string> row;
    std::stringstream rs(line);
    while (std::getline(rs, tok, ',')) row.push_back(tok);
    if (row.size() != t.names.size())
      throw std::runtime_error("trace row width mismatch in " + path);
    t.rows.push_back(std::move(row));
  }
  return t;
}

double num(const Trace& t, std::size_t row, const std::string& col) {
  auto it = t.index.find(col);
  if (it == t.index.end()) throw std::runtime_error("trace misses column " + col);
  return std::stod(t.rows[row][it->second]);
}

// Independent oracle: recomputes every membership from the raw columns only.
int cmd_verify(const RunConfig& cfg, const std::vector<std::string>& paths) {
  Platoon p = build_platoon(cfg.params);
  NrfStateSets sets = nrf_state_sets(p.layer, p.spec);
  const int N = cfg.params.N;
  int status = 0;
  for (const std::string& path : paths) {
    Trace t = read_trace(path);
    std::size_t failures = 0;
    auto fail = [&](std::size_t k, const std::string& what, double value) {
      if (failures < 10)
        std::cerr << path << ": step " << k << ": " << what << " violated (value " << value
                  << ")\n";
      ++failures;
      status = 1;
    };
    for (std::size_t k = 0; k < t.rows.size(); ++k) {
      for (int i = 0; i < N; ++i) {
        const Box& X = p.spec.X[static_cast<std::size_t>(i)];
        const Box& U = p.spec.U[static_cast<std::size_t>(i)];
        for (int c = 0; c < 3; ++c) {
          const double v = num(t, k, "x" + std::to_string(3 * i + c));
          if (v < X.lo(c) || v > X.hi(c))
            fail(k, "state box of area " + std::to_string(i) + " coordinate " + std::to_string(c),
                 v);
        }
        const double u = num(t, k, "u" + std::to_string(i));
        if (u < U.lo(0) || u > U.hi(0)) fail(k, "actuator box of area " + std::to_string(i), u);
        const Box W = area_w_bounds(sets, p.layer, i);
        const double w = num(t, k, "w" + std::to_string(i));
        if (w < W.lo(0) - 1e-9 || w > W.hi(0) + 1e-9)
          fail(k, "controller-state bounds of area " + std::to_string(i), w);
        if (t.rows[k][t.index.at("qp_status" + std::to_string(i))] != "optimal")
          fail(k, "supervisor solve of area " + std::to_string(i), 0.0);
        // quiescence: comfortable slack must coincide with negligible commands
        if (num(t, k, "slack" + std::to_string(i)) > cfg.quiescence_margin) {
          for (int c = 0; c < 3; ++c) {
            const double us1 = num(t, k, "us1_" + std::to_string(3 * i + c));
            if (std::abs(us1) > 1e-6)
              fail(k, "quiescence of area " + std::to_string(i) + " state channel", us1);
          }
          const double us2 = num(t, k, "us2_" + std::to_string(i));
          if (std::abs(us2) > 1e-6)
            fail(k, "quiescence of area " + std::to_string(i) + " actuator channel", us2);
        }
      }
    }
    if (failures == 0)
      std::cout << path << ": " << t.rows.size() << " steps verified\n";
    else
      std::cerr << path << ": " << failures << " violations\n";
  }
  return status;
}

int cmd_report(const RunConfig& cfg, const std::vector<std::string>& paths) {
  const int N = cfg.params.N;
  std::cout << "per-area solve times (us): area min max mean median mode\n";
  for (int i = 0; i < N; ++i) {
    std::vector<double> micros;
    for (const std::string& path : paths) {
      Trace t = read_trace(path);
      for (std::size_t k = 0; k < t.rows.size(); ++k)
        micros.push_back(num(t, k, "qp_micros" + std::to_string(i)));
    }
    if (micros.empty()) continue;
    std::sort(micros.begin(), micros.end());
    double mean = 0.0;
    std::map<long, int> hist;
    for (double v : micros) {
      mean += v;
      ++hist[std::lround(v)];
    }
    mean /= static_cast<double>(micros.size());
    const double median = micros.size() % 2 == 1
                              ? micros[micros.size() / 2]
                              : 0.5 * (micros[micros.size() / 2 - 1] + micros[micros.size() / 2]);
    long mode = 0;
    int best = -1;
    for (const auto& [value, count] : hist)
      if (count > best) {
        best = count;
        mode = value;
      }
    std::cout << i << ' ' << micros.front() << ' ' << micros.back() << ' ' << mean << ' '
              << median << ' ' << mode << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-layer distributed MPC: offline certification and closed-loop simulation"};
  app.require_subcommand(1);

  std::string config_path, artifacts_path, out_dir;
  std::uint64_t seed = 0;
  std::string seed_range;
  long steps = 0;
  std::vector<std::string> traces;

  auto add_common = [&](CLI::App* sub, bool wants_traces) {
    sub->add_option("--config", config_path, "JSON run configuration")->required();
    if (wants_traces)
      sub->add_option("traces", traces, "trace CSV files")->required()->expected(-1);
    return sub;
  };
  CLI::App* design = add_common(app.add_subcommand("design", "run the offline pipeline"), false);
  design->add_option("--artifacts", artifacts_path, "write a JSON design artifact");
  CLI::App* simulate = add_common(app.add_subcommand("simulate", "run seeded closed loops"), false);
  simulate->add_option("--seed", seed, "single seed override");
  simulate->add_option("--seeds", seed_range, "seed range a..b override");
  simulate->add_option("--steps", steps, "horizon override");
  simulate->add_option("--out", out_dir, "output directory override");
  add_common(app.add_subcommand("verify", "independently re-check traces"), true);
  add_common(app.add_subcommand("report", "aggregate solve statistics"), true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    RunConfig cfg = load_config(config_path);
    if (app.got_subcommand("simulate")) {
      if (simulate->count("--seed")) cfg.seeds = {seed};
      if (!seed_range.empty()) {
        const auto dots = seed_range.find("..");
        if (dots == std::string::npos) throw ConfigError("--seeds expects the form a..b");
        const std::uint64_t a = std::stoull(seed_range.substr(0, dots));
        const std::uint64_t b = std::stoull(seed_range.substr(dots + 2));
        if (b < a) throw ConfigError("--seeds range is empty");
        cfg.seeds.clear();
        for (std::uint64_t s = a; s <= b; ++s) cfg.seeds.push_back(s);
      }
      if (steps > 0) cfg.horizon = steps;
      if (!out_dir.empty()) cfg.out = out_dir;
      return cmd_simulate(cfg);
    }
    if (app.got_subcommand("design")) return cmd_design(cfg, artifacts_path);
    if (app.got_subcommand("verify")) return cmd_verify(cfg, traces);
    if (app.got_subcommand("report")) return cmd_report(cfg, traces);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
