// SPDX-License-Identifier: Apache-2.0
// Command-line front end: msqg <subcommand> [--config PATH] [--out DIR] [--seed U64] [--workers N]
//
// Exit status: 0 when every report row passes, 1 on a failed or inconclusive
// row or a numerical error, 2 on configuration and I/O errors.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include <msqg/msqg.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitConfig = 2;

struct Options {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
};

unsigned resolve_workers(const Options& o) {
  if (o.workers) return std::max(1U, *o.workers);
  if (const char* env = std::getenv("MSQG_WORKERS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
  }
  return msqg::default_workers();
}

json read_config_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw msqg::IoError("cannot open config " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw msqg::ConfigError(path + ": " + e.what());
  }
}

/// Loads the config, or uses `fallback` when no path was given, then applies
/// the seed override and checks the experiment kind.
msqg::ExperimentConfig load_config(const Options& o, const std::set<std::string>& allowed,
                                   const json& fallback) {
  json j;
  if (o.config.empty()) {
    if (fallback.is_null()) throw msqg::ConfigError("--config is required");
    j = fallback;
  } else {
    j = read_config_json(o.config);
  }
  if (o.seed && j.is_object()) j["seed"] = *o.seed;
  msqg::ExperimentConfig c = msqg::ExperimentConfig::from_json(j);
  if (!allowed.empty() && !allowed.count(c.experiment)) {
    std::string names;
    for (const auto& a : allowed) names += (names.empty() ? "" : ", ") + a;
    throw msqg::ConfigError("experiment '" + c.experiment + "' is not valid here (expected " +
                            names + ")");
  }
  return c;
}

class Run {
 public:
  Run(std::string command, const Options& o, const msqg::ExperimentConfig& c, unsigned workers)
      : command_(std::move(command)), out_(o.out), workers_(workers),
        start_(std::chrono::steady_clock::now()) {
    fs::create_directories(out_);
    manifest_["command"] = command_;
    manifest_["config_path"] = o.config;
    manifest_["config"] = c.to_json();
    manifest_["input_hash"] = msqg::git_blob_hash(c.canonical_input);
    manifest_["seed"] = c.seed;
    manifest_["workers"] = workers_;
    manifest_["status"] = "running";
    manifest_["outputs"] = json::array();
    write_manifest();
  }

  void write(const std::string& name, const std::string& content) {
    msqg::write_file_atomic(out_ / name, content);
    manifest_["outputs"].push_back(name);
  }

  void add_output(const std::string& name) { manifest_["outputs"].push_back(name); }

  [[nodiscard]] fs::path path(const std::string& name) const { return out_ / name; }

  int finish_report(const msqg::Report& r) {
    std::ostringstream csv;
    msqg::write_report_csv(r, csv);
    write("report.csv", csv.str());
    std::ostringstream series;
    msqg::write_series_csv(r, series);
    write("series.csv", series.str());
    write("report.json", msqg::report_json(r).dump(2) + "\n");
    for (const auto& row : r.rows) {
      std::cout << msqg::to_string(row.verdict) << "  " << row.name << "  estimate="
                << msqg::format_number(row.estimate) << " target=" << msqg::format_number(row.target)
                << " tol=" << msqg::format_number(row.tolerance) << '\n';
    }
    const int code = r.passed() ? kExitPass : kExitFail;
    manifest_["verdict"] = r.passed() ? "pass" : (r.any_failed() ? "fail" : "inconclusive");
    finish("complete", code);
    return code;
  }

  void finish(const std::string& status, int code, const std::string& message = {}) {
    manifest_["status"] = status;
    manifest_["exit_code"] = code;
    if (!message.empty()) manifest_["message"] = message;
    manifest_["wall_time_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write_manifest();
  }

 private:
  void write_manifest() { msqg::write_file_atomic(out_ / "manifest.json", manifest_.dump(2) + "\n"); }

  std::string command_;
  fs::path out_;
  unsigned workers_;
  std::chrono::steady_clock::time_point start_;
  json manifest_;
};

json default_config(const std::string& experiment) {
  return {{"version", 1}, {"experiment", experiment}, {"seed", 0}, {"epsilon", 0.5}};
}

int cmd_experiment(Run& run, const msqg::ExperimentConfig& c, unsigned workers) {
  return run.finish_report(msqg::run_experiment(c, workers));
}

int cmd_simulate(Run& run, const msqg::ExperimentConfig& c) {
  std::mt19937_64 rng(msqg::derive_seed(c.seed, 0x5349, 0));
  msqg::VortexEnsemble e = msqg::sample_initial(static_cast<std::size_t>(c.N), c.epsilon, rng);
  if (c.zero_intensities) std::fill(e.xi.begin(), e.xi.end(), 0.0);
  msqg::IntegratorConfig ic;
  ic.dt = c.dt;
  ic.T = c.T;
  ic.record_every = c.record_every;
  ic.guard_distance = c.guard_distance;
  msqg::Report rep;
  rep.experiment = "simulate";
  rep.seed = c.seed;
  rep.config = c.to_json();
  rep.input_hash = msqg::git_blob_hash(c.canonical_input);
  const auto body = [&](const auto& kernel) {
    const msqg::Trajectory tr = msqg::integrate(e, ic, kernel);
    std::ostringstream os;
    msqg::write_trajectory_csv(tr, os);
    run.write("trajectory.csv", os.str());
    for (std::size_t k = 0; k < tr.min_distance_series.size() && k < tr.times.size(); ++k) {
      rep.add_series("min_distance", tr.times[k], tr.min_distance_series[k]);
    }
    if (c.delta > 0.0) {
      for (std::size_t k = 0; k < tr.snapshots.size(); ++k) {
        const msqg::VortexEnsemble s{tr.snapshots[k], e.xi, c.epsilon};
        rep.add_series("interaction_energy", tr.times[k], msqg::interaction_energy(s, kernel));
      }
    }
    rep.guard_events = tr.guard ? 1 : 0;
    rep.runs = 1;
    rep.add("guard_triggered", tr.guard ? 1.0 : 0.0, msqg::kNaN, msqg::kNaN, 0.0, 0.0,
            msqg::Relation::kAtMost);
  };
  msqg::detail::with_kernel(c, c.delta, body);
  return run.finish_report(rep);
}

int cmd_wn_sample(Run& run, const msqg::ExperimentConfig& c, unsigned workers) {
  const auto lattice = std::make_shared<const msqg::HalfLattice>(c.field_cutoff);
  const std::size_t files = std::min<std::size_t>(static_cast<std::size_t>(c.replicas), 4);
  for (std::size_t i = 0; i < files; ++i) {
    // same seed derivation as the covariance check, so these are its first samples
    std::mt19937_64 rng(msqg::derive_seed(c.seed, msqg::detail::kWhiteNoiseFamily, i));
    const msqg::SpectralField w = msqg::sample_white_noise(lattice, rng);
    char stem[32];
    std::snprintf(stem, sizeof stem, "field_%04zu", i);
    std::ostringstream csv;
    msqg::write_field_csv(w, csv);
    run.write(std::string(stem) + ".csv", csv.str());
    std::ostringstream bin(std::ios::binary);
    msqg::write_field_binary(w, bin);
    run.write(std::string(stem) + ".bin", bin.str());
  }
  return run.finish_report(msqg::exp_white_noise(c, workers));
}

int cmd_table_build(Run& run, const msqg::ExperimentConfig& c) {
  msqg::KernelConfig kc;
  kc.epsilon = c.epsilon;
  kc.spectral_cutoff = c.M;
  kc.delta = c.delta;
  msqg::TableOptions opt;
  opt.resolution = c.table_resolution;
  opt.tolerance = msqg::kInf;
  const msqg::KernelTable table(kc, opt);
  const std::string tmp = run.path("kernel_table.bin.tmp").string();
  table.save(tmp);
  fs::rename(tmp, run.path("kernel_table.bin"));
  run.add_output("kernel_table.bin");
  msqg::Report rep;
  rep.experiment = "table_build";
  rep.seed = c.seed;
  rep.config = c.to_json();
  rep.input_hash = msqg::git_blob_hash(c.canonical_input);
  rep.add("table_max_rel_error", table.check().max_error, msqg::kNaN, msqg::kNaN, 0.0,
          msqg::TableOptions{}.tolerance, msqg::Relation::kAtMost);
  return run.finish_report(rep);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Point-vortex and white-noise experiments for modified SQG on the torus"};
  app.require_subcommand(1);
  Options opt;
  std::uint64_t seed = 0;
  unsigned workers = 0;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"kernel-check", "kernel slopes, symmetries and table accuracy"},
      {"simulate", "integrate one vortex ensemble and write its trajectory"},
      {"wn-sample", "sample truncated white noise and check its covariance"},
      {"pairing-stats", "second moments of vortex and white-noise pairings"},
      {"experiment", "run any configured experiment"},
      {"table-build", "build, verify and save a kernel table"},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    CLI::App* s = app.add_subcommand(name, help);
    s->add_option("--config", opt.config, "config JSON path");
    s->add_option("--out", opt.out, "output directory")->capture_default_str();
    s->add_option("--seed", seed, "override the config seed");
    s->add_option("--workers", workers, "worker threads (default: available parallelism)");
    subs[name] = s;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  std::string command;
  for (const auto& [name, s] : subs) {
    if (s->parsed()) {
      command = name;
      if (s->count("--seed") > 0) opt.seed = seed;
      if (s->count("--workers") > 0) opt.workers = workers;
    }
  }
  const unsigned nworkers = resolve_workers(opt);

  msqg::ExperimentConfig cfg;
  try {
    if (command == "kernel-check") {
      cfg = load_config(opt, {"kernel_check"}, default_config("kernel_check"));
    } else if (command == "simulate") {
      cfg = load_config(opt, {"simulate"}, json());
    } else if (command == "wn-sample") {
      cfg = load_config(opt, {"white_noise"}, json());
    } else if (command == "pairing-stats") {
      cfg = load_config(opt, {"second_moment"}, json());
    } else if (command == "table-build") {
      cfg = load_config(opt, {"table_build"}, default_config("table_build"));
    } else {
      cfg = load_config(opt, {"stationarity", "clt", "derivative_identity", "second_moment",
                              "sobolev_moments", "volume_preservation", "collision_scaling",
                              "cutoff_convergence", "kernel_check", "white_noise"},
                        json());
    }
  } catch (const msqg::Error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  std::optional<Run> run;
  try {
    run.emplace(command, opt, cfg, nworkers);
  } catch (const std::exception& e) {
    std::cerr << "output error: " << e.what() << '\n';
    return kExitConfig;
  }
  try {
    if (command == "simulate") return cmd_simulate(*run, cfg);
    if (command == "wn-sample") return cmd_wn_sample(*run, cfg, nworkers);
    if (command == "table-build") return cmd_table_build(*run, cfg);
    return cmd_experiment(*run, cfg, nworkers);
  } catch (const msqg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    run->finish("error", kExitConfig, e.what());
    return kExitConfig;
  } catch (const msqg::IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    run->finish("error", kExitConfig, e.what());
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    run->finish("error", kExitConfig, e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    run->finish("error", kExitFail, e.what());
    return kExitFail;
  }
}
