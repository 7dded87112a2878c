// SPDX-License-Identifier: Apache-2.0
/**
 * @file experiments.hpp
 * @brief Declarative Monte Carlo experiments producing targeted reports.
 *
 * A run is a pure function of its configuration: replica i of a stream draws
 * from derive_seed(seed, stream, i) and all reductions happen in replica
 * order, so reports do not depend on the worker count.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dynamics.hpp"
#include "ensemble.hpp"
#include "errors.hpp"
#include "kernel.hpp"
#include "kernel_table.hpp"
#include "pairing.hpp"
#include "parallel.hpp"
#include "report_io.hpp"
#include "spectral.hpp"
#include "stats.hpp"

namespace msqg {

struct PhiSpec {
  std::string type = "cos";
  int k1 = 1;
  int k2 = 0;
  double amplitude = 1.0;

  [[nodiscard]] TestFunction build() const {
    if (type == "cos") return TestFunction::cosine(k1, k2, amplitude);
    if (type == "sin") return TestFunction::sine(k1, k2, amplitude);
    if (type == "const") return TestFunction::constant(amplitude);
    throw ConfigError("phi.type must be one of cos, sin, const");
  }
};

struct ExperimentConfig {
  int version = 1;
  std::string experiment;
  std::uint64_t seed = 0;
  double epsilon = 0.5;
  std::vector<double> epsilon_list;
  int N = 16;
  std::vector<int> N_list;
  /// Kernel spectral cutoff.
  int M = 256;
  /// Cutoff of white-noise samples and empirical spectra.
  int field_cutoff = 32;
  double delta = 0.0;
  std::vector<double> delta_list;
  double dt = 1e-3;
  double T = 0.5;
  int replicas = 1000;
  std::string kernel = "table";
  int table_resolution = 512;
  PhiSpec phi;
  std::vector<int> cutoff_ladder{4, 8, 16, 32, 64};
  int wn_cutoff_index = 0;
  std::vector<int> p_list{1, 2, 4};
  double sobolev_delta = 0.5;
  double fd_step = 1e-5;
  bool zero_intensities = false;
  double max_rotation = 0.2;
  double guard_distance = 1e-4;
  int probes = 100000;
  int sample_times = 5;
  int record_every = 1;
  double significance = 0.01;
  double sigma = 3.0;

  /// Canonical JSON of the input document, used for hashing.
  std::string canonical_input;

  [[nodiscard]] nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  void validate() const;
};

namespace detail {

struct Schema {
  std::vector<std::string> required;
  std::vector<std::string> optional;
};

inline const std::map<std::string, Schema>& schemas() {
  static const std::map<std::string, Schema> s = {
      {"stationarity",
       {{"N", "delta", "dt", "T", "replicas"},
        {"M", "kernel", "table_resolution", "phi", "significance", "zero_intensities",
         "guard_distance"}}},
      {"clt", {{"N_list", "replicas"}, {"phi", "significance", "sigma"}}},
      {"derivative_identity",
       {{"N", "dt", "T", "replicas"},
        {"delta", "M", "kernel", "table_resolution", "phi", "zero_intensities", "sample_times",
         "guard_distance"}}},
      {"second_moment",
       {{"N", "replicas"},
        {"delta", "dt", "T", "M", "kernel", "table_resolution", "phi", "sigma",
         "wn_cutoff_index", "field_cutoff"}}},
      {"sobolev_moments",
       {{"N_list", "replicas"},
        {"p_list", "sobolev_delta", "field_cutoff", "T", "dt", "delta", "M", "kernel",
         "table_resolution", "sigma", "significance"}}},
      {"volume_preservation",
       {{"N", "delta", "T", "dt", "replicas"},
        {"fd_step", "M", "kernel", "table_resolution", "zero_intensities"}}},
      {"collision_scaling",
       {{"N", "delta_list", "T", "dt", "replicas"},
        {"max_rotation", "M", "kernel", "table_resolution", "zero_intensities"}}},
      {"cutoff_convergence", {{}, {"epsilon_list", "cutoff_ladder", "phi", "M"}}},
      {"kernel_check", {{}, {"epsilon_list", "M", "probes", "table_resolution"}}},
      {"white_noise", {{"replicas"}, {"field_cutoff", "sigma"}}},
      {"simulate",
       {{"N", "dt", "T"},
        {"delta", "M", "kernel", "table_resolution", "record_every", "guard_distance",
         "zero_intensities"}}},
      {"table_build", {{}, {"M", "delta", "table_resolution"}}},
  };
  return s;
}

inline const nlohmann::json& field(const nlohmann::json& j, const std::string& key) {
  if (!j.contains(key)) throw ConfigError("missing required field '" + key + "'");
  return j.at(key);
}

inline double get_number(const nlohmann::json& j, const std::string& key) {
  const auto& v = field(j, key);
  if (!v.is_number()) throw ConfigError("field '" + key + "' must be a number");
  return v.get<double>();
}

inline long long get_integer(const nlohmann::json& j, const std::string& key) {
  const auto& v = field(j, key);
  if (!v.is_number_integer()) throw ConfigError("field '" + key + "' must be an integer");
  return v.get<long long>();
}

inline int get_int(const nlohmann::json& j, const std::string& key) {
  const long long v = get_integer(j, key);
  if (v < -2147483647LL || v > 2147483647LL) {
    throw ConfigError("field '" + key + "' is out of range");
  }
  return static_cast<int>(v);
}

template <class T>
std::vector<T> get_list(const nlohmann::json& j, const std::string& key) {
  const auto& v = field(j, key);
  if (!v.is_array() || v.empty()) throw ConfigError("field '" + key + "' must be a non-empty array");
  std::vector<T> out;
  for (const auto& e : v) {
    if constexpr (std::is_integral_v<T>) {
      if (!e.is_number_integer()) throw ConfigError("field '" + key + "' must hold integers");
    } else {
      if (!e.is_number()) throw ConfigError("field '" + key + "' must hold numbers");
    }
    out.push_back(e.get<T>());
  }
  return out;
}

}  // namespace detail

inline ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  using namespace detail;
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig c;
  c.version = get_int(j, "version");
  if (c.version != 1) throw ConfigError("field 'version' must be 1");
  const auto& e = field(j, "experiment");
  if (!e.is_string()) throw ConfigError("field 'experiment' must be a string");
  c.experiment = e.get<std::string>();
  const auto it = schemas().find(c.experiment);
  if (it == schemas().end()) throw ConfigError("unknown experiment '" + c.experiment + "'");
  const Schema& schema = it->second;
  // defaults that differ per experiment
  if (c.experiment == "second_moment" || c.experiment == "sobolev_moments") c.T = 0.0;
  if (c.experiment == "volume_preservation") c.kernel = "direct";
  if (c.experiment == "collision_scaling") c.T = 1.0;

  std::set<std::string> allowed = {"version", "experiment", "seed", "epsilon", "description"};
  allowed.insert(schema.required.begin(), schema.required.end());
  allowed.insert(schema.optional.begin(), schema.optional.end());
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) {
      throw ConfigError("unknown field '" + key + "' for experiment '" + c.experiment + "'");
    }
  }
  for (const auto& key : schema.required) field(j, key);

  const auto& seed = field(j, "seed");
  if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<long long>() >= 0)) {
    throw ConfigError("field 'seed' must be a non-negative integer");
  }
  c.seed = seed.get<std::uint64_t>();
  c.epsilon = get_number(j, "epsilon");

  auto has = [&](const char* k) { return j.contains(k); };
  if (has("epsilon_list")) c.epsilon_list = get_list<double>(j, "epsilon_list");
  if (has("N")) c.N = get_int(j, "N");
  if (has("N_list")) c.N_list = get_list<int>(j, "N_list");
  if (has("M")) c.M = get_int(j, "M");
  if (has("field_cutoff")) c.field_cutoff = get_int(j, "field_cutoff");
  if (has("delta")) c.delta = get_number(j, "delta");
  if (has("delta_list")) c.delta_list = get_list<double>(j, "delta_list");
  if (has("dt")) c.dt = get_number(j, "dt");
  if (has("T")) c.T = get_number(j, "T");
  if (has("replicas")) c.replicas = get_int(j, "replicas");
  if (has("kernel")) {
    const auto& k = j.at("kernel");
    if (!k.is_string()) throw ConfigError("field 'kernel' must be a string");
    c.kernel = k.get<std::string>();
  }
  if (has("table_resolution")) c.table_resolution = get_int(j, "table_resolution");
  if (has("phi")) {
    const auto& p = j.at("phi");
    if (!p.is_object()) throw ConfigError("field 'phi' must be an object");
    for (const auto& [key, value] : p.items()) {
      if (key != "type" && key != "k" && key != "amplitude") {
        throw ConfigError("unknown field 'phi." + key + "'");
      }
    }
    if (p.contains("type")) {
      if (!p.at("type").is_string()) throw ConfigError("field 'phi.type' must be a string");
      c.phi.type = p.at("type").get<std::string>();
    }
    if (p.contains("k")) {
      const auto k = get_list<int>(p, "k");
      if (k.size() != 2) throw ConfigError("field 'phi.k' must have two entries");
      c.phi.k1 = k[0];
      c.phi.k2 = k[1];
    }
    if (p.contains("amplitude")) c.phi.amplitude = get_number(p, "amplitude");
  }
  if (has("cutoff_ladder")) c.cutoff_ladder = get_list<int>(j, "cutoff_ladder");
  if (has("wn_cutoff_index")) c.wn_cutoff_index = get_int(j, "wn_cutoff_index");
  if (has("p_list")) c.p_list = get_list<int>(j, "p_list");
  if (has("sobolev_delta")) c.sobolev_delta = get_number(j, "sobolev_delta");
  if (has("fd_step")) c.fd_step = get_number(j, "fd_step");
  if (has("zero_intensities")) {
    if (!j.at("zero_intensities").is_boolean()) {
      throw ConfigError("field 'zero_intensities' must be a boolean");
    }
    c.zero_intensities = j.at("zero_intensities").get<bool>();
  }
  if (has("max_rotation")) c.max_rotation = get_number(j, "max_rotation");
  if (has("guard_distance")) c.guard_distance = get_number(j, "guard_distance");
  if (has("probes")) c.probes = get_int(j, "probes");
  if (has("sample_times")) c.sample_times = get_int(j, "sample_times");
  if (has("record_every")) c.record_every = get_int(j, "record_every");
  if (has("significance")) c.significance = get_number(j, "significance");
  if (has("sigma")) c.sigma = get_number(j, "sigma");
  if (has("description") && !j.at("description").is_string()) {
    throw ConfigError("field 'description' must be a string");
  }
  c.canonical_input = j.dump();
  c.validate();
  return c;
}

inline void ExperimentConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0)) throw ConfigError(std::string("field '") + name + "' must be positive");
  };
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("field 'epsilon' must lie in (0,1)");
  for (double e : epsilon_list) {
    if (!(e > 0.0 && e < 1.0)) throw ConfigError("field 'epsilon_list' entries must lie in (0,1)");
  }
  if (N < 1) throw ConfigError("field 'N' must be at least 1");
  for (int n : N_list) {
    if (n < 1) throw ConfigError("field 'N_list' entries must be at least 1");
  }
  if (M < 1) throw ConfigError("field 'M' must be positive");
  if (field_cutoff < 1) throw ConfigError("field 'field_cutoff' must be positive");
  if (!(delta >= 0.0 && delta < 0.25)) throw ConfigError("field 'delta' must lie in [0, 1/4)");
  for (double d : delta_list) {
    if (!(d > 0.0 && d < 0.25)) throw ConfigError("field 'delta_list' entries must lie in (0, 1/4)");
  }
  positive(dt, "dt");
  if (!(T >= 0.0)) throw ConfigError("field 'T' must be non-negative");
  if (T > 0.0 && dt > T) throw ConfigError("field 'dt' must not exceed 'T'");
  if (replicas < 1) throw ConfigError("field 'replicas' must be positive");
  if (kernel != "table" && kernel != "direct") {
    throw ConfigError("field 'kernel' must be 'table' or 'direct'");
  }
  if (table_resolution < 64 || table_resolution % 2 != 0) {
    throw ConfigError("field 'table_resolution' must be an even integer >= 64");
  }
  for (int n : cutoff_ladder) {
    if (n < 1) throw ConfigError("field 'cutoff_ladder' entries must be positive");
  }
  if (wn_cutoff_index < 0) throw ConfigError("field 'wn_cutoff_index' must be non-negative");
  for (int p : p_list) {
    if (p < 1) throw ConfigError("field 'p_list' entries must be positive");
  }
  positive(sobolev_delta, "sobolev_delta");
  positive(fd_step, "fd_step");
  if (!(max_rotation >= 0.0)) throw ConfigError("field 'max_rotation' must be non-negative");
  if (!(guard_distance >= 0.0 && guard_distance < 0.25)) {
    throw ConfigError("field 'guard_distance' must lie in [0, 1/4)");
  }
  if (probes < 1) throw ConfigError("field 'probes' must be positive");
  if (sample_times < 1) throw ConfigError("field 'sample_times' must be positive");
  if (record_every < 0) throw ConfigError("field 'record_every' must be non-negative");
  if (!(significance > 0.0 && significance < 1.0)) {
    throw ConfigError("field 'significance' must lie in (0,1)");
  }
  positive(sigma, "sigma");
  (void)phi.build();
}

inline nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["version"] = version;
  j["experiment"] = experiment;
  j["seed"] = seed;
  j["epsilon"] = epsilon;
  const auto it = detail::schemas().find(experiment);
  if (it == detail::schemas().end()) return j;
  std::set<std::string> keys(it->second.required.begin(), it->second.required.end());
  keys.insert(it->second.optional.begin(), it->second.optional.end());
  auto put = [&](const std::string& k, const nlohmann::json& v) {
    if (keys.count(k)) j[k] = v;
  };
  put("epsilon_list", epsilon_list);
  put("N", N);
  put("N_list", N_list);
  put("M", M);
  put("field_cutoff", field_cutoff);
  put("delta", delta);
  put("delta_list", delta_list);
  put("dt", dt);
  put("T", T);
  put("replicas", replicas);
  put("kernel", kernel);
  put("table_resolution", table_resolution);
  put("phi", {{"type", phi.type}, {"k", {phi.k1, phi.k2}}, {"amplitude", phi.amplitude}});
  put("cutoff_ladder", cutoff_ladder);
  put("wn_cutoff_index", wn_cutoff_index);
  put("p_list", p_list);
  put("sobolev_delta", sobolev_delta);
  put("fd_step", fd_step);
  put("zero_intensities", zero_intensities);
  put("max_rotation", max_rotation);
  put("guard_distance", guard_distance);
  put("probes", probes);
  put("sample_times", sample_times);
  put("record_every", record_every);
  put("significance", significance);
  put("sigma", sigma);
  return j;
}

namespace detail {

/// Stream identifiers keep replica seeds of different purposes apart.
enum Stream : std::uint64_t {
  kStationarity = 0x5354,
  kClt = 0x434c,
  kDerivative = 0x4445,
  kSecondMoment = 0x534d,
  kWhiteNoise = 0x574e,
  kSobolev = 0x534f,
  kVolume = 0x564f,
  kCollision = 0x434f,
  kKernelProbe = 0x4b50,
  kWhiteNoiseFamily = 0x5746,
};

/// Builds the configured kernel evaluator and calls f with it.
template <class F>
decltype(auto) with_kernel(const ExperimentConfig& c, double delta, F&& f) {
  KernelConfig kc;
  kc.epsilon = c.epsilon;
  kc.spectral_cutoff = c.M;
  kc.delta = delta;
  if (c.kernel == "direct") {
    const DirectKernel k(kc);
    return f(k);
  }
  TableOptions opt;
  opt.resolution = c.table_resolution;
  const KernelTable k(kc, opt);
  return f(k);
}

template <class Rng>
VortexEnsemble draw(const ExperimentConfig& c, std::size_t n, Rng& rng) {
  VortexEnsemble e = sample_initial(n, c.epsilon, rng);
  if (c.zero_intensities) std::fill(e.xi.begin(), e.xi.end(), 0.0);
  return e;
}

inline std::string tag(const std::string& name, const std::string& key, double v) {
  return name + "[" + key + "=" + format_number(v) + "]";
}

inline Report start_report(const ExperimentConfig& c) {
  Report r;
  r.experiment = c.experiment;
  r.seed = c.seed;
  r.config = c.to_json();
  r.input_hash = git_blob_hash(c.canonical_input.empty() ? r.config.dump() : c.canonical_input);
  return r;
}

inline void add_guard_row(Report& r, std::size_t events, std::size_t runs) {
  r.guard_events = events;
  r.runs = runs;
  const double rate = runs == 0 ? 0.0 : static_cast<double>(events) / static_cast<double>(runs);
  r.add("guard_rate", rate, kNaN, kNaN, 0.01, 0.0, Relation::kAtMost);
}

}  // namespace detail

// ---------------------------------------------------------------------------

/// Law of positions and of <theta_t, phi> is unchanged along the flow.
inline Report exp_stationarity(const ExperimentConfig& c, unsigned workers) {
  Report rep = detail::start_report(c);
  const TestFunction phi = c.phi.build();
  const auto n = static_cast<std::size_t>(c.replicas);
  const auto nv = static_cast<std::size_t>(c.N);
  std::vector<double> p0(n);
  std::vector<double> ph(n);
  std::vector<double> pt(n);
  std::vector<double> cu(n * nv);
  std::vector<double> cv(n * nv);
  std::vector<char> guarded(n, 0);
  detail::with_kernel(c, c.delta, [&](const auto& kernel) {
    IntegratorConfig ic;
    ic.dt = c.dt;
    ic.T = 0.5 * c.T;
    ic.dt = std::min(ic.dt, std::max(ic.T, 1e-300));
    ic.guard_distance = c.guard_distance;
    ic.record_every = 0;
    parallel_for(n, workers, [&](std::size_t i) {
      std::mt19937_64 rng(derive_seed(c.seed, detail::kStationarity, i));
      const VortexEnsemble e = detail::draw(c, nv, rng);
      p0[i] = pair_ensemble(e, phi);
      const Trajectory half = integrate(e, ic, kernel);
      Trajectory full = half;
      if (!half.guard) full = integrate_unwrapped(half.final_unwrapped, e.xi, ic, kernel);
      if (half.guard || full.guard) {
        guarded[i] = 1;
        return;
      }
      ph[i] = pair_ensemble(half.final_ensemble(c.epsilon), phi);
      const VortexEnsemble fin = full.final_ensemble(c.epsilon);
      pt[i] = pair_ensemble(fin, phi);
      for (std::size_t k = 0; k < nv; ++k) {
        cu[i * nv + k] = fin.positions[k].u();
        cv[i * nv + k] = fin.positions[k].v();
      }
    });
  });
  std::vector<double> a0;
  std::vector<double> ah;
  std::vector<double> at;
  std::vector<double> u;
  std::vector<double> v;
  std::size_t events = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (guarded[i]) {
      ++events;
      continue;
    }
    a0.push_back(p0[i]);
    ah.push_back(ph[i]);
    at.push_back(pt[i]);
    for (std::size_t k = 0; k < nv; ++k) {
      u.push_back(cu[i * nv + k]);
      v.push_back(cv[i * nv + k]);
    }
  }
  detail::add_guard_row(rep, events, n);
  if (a0.size() < 2) {
    rep.add("usable_replicas", static_cast<double>(a0.size()), kNaN, kNaN, 2.0, 0.0,
            Relation::kAtLeast);
    return rep;
  }
  const auto ku = stats::ks_one_sample(u, stats::uniform_cdf);
  const auto kv = stats::ks_one_sample(v, stats::uniform_cdf);
  rep.add_test("ks_uniform_u[t=T]", ku.statistic, ku.p_value, c.significance);
  rep.add_test("ks_uniform_v[t=T]", kv.statistic, kv.p_value, c.significance);
  const auto k0t = stats::ks_two_sample(a0, at);
  const auto kht = stats::ks_two_sample(ah, at);
  rep.add_test("ks_pairing[0_vs_T]", k0t.statistic, k0t.p_value, c.significance);
  rep.add_test("ks_pairing[T/2_vs_T]", kht.statistic, kht.p_value, c.significance);
  const double times[3] = {0.0, 0.5 * c.T, c.T};
  const std::vector<double>* sets[3] = {&a0, &ah, &at};
  for (int s = 0; s < 3; ++s) {
    const auto var = stats::variance_with_error(*sets[s]);
    rep.add_series("pairing_variance", times[s], var.value, var.stderr_value);
  }
  return rep;
}

/// <theta^N_0, phi> against N(0, ||phi||^2) across an N ladder.
inline Report exp_clt_to_whitenoise(const ExperimentConfig& c, unsigned workers) {
  Report rep = detail::start_report(c);
  if (c.N_list.empty()) throw ConfigError("missing required field 'N_list'");
  const TestFunction phi = c.phi.build();
  const double norm2 = phi.l2_norm2();
  const auto n = static_cast<std::size_t>(c.replicas);
  std::vector<double> dist;
  stats::KsResult last;
  for (int nv : c.N_list) {
    std::vector<double> vals(n);
    parallel_for(n, workers, [&](std::size_t i) {
      std::mt19937_64 rng(derive_seed(c.seed, detail::kClt + static_cast<std::uint64_t>(nv) * 0x10000, i));
      vals[i] = pair_ensemble(sample_initial(static_cast<std::size_t>(nv), c.epsilon, rng), phi);
    });
    const auto var = stats::variance_with_error(vals);
    rep.add(detail::tag("variance", "N", nv), var.value, var.stderr_value, kNaN, norm2,
            c.sigma * var.stderr_value, Relation::kWithin);
    if (norm2 > 0.0) {
      const double sd = std::sqrt(norm2);
      last = stats::ks_one_sample(vals, [sd](double x) { return stats::normal_cdf(x, sd); });
    } else {
      last = {0.0, 1.0};
    }
    dist.push_back(last.statistic);
    rep.add_series("ks_distance", nv, last.statistic);
  }
  // a later distance may exceed an earlier one by at most the 1% critical value
  const double slack = 1.628 / std::sqrt(static_cast<double>(n));
  for (std::size_t k = 0; k + 1 < dist.size(); ++k) {
    rep.add("ks_distance_increase[N=" + std::to_string(c.N_list[k]) + "->" +
                std::to_string(c.N_list[k + 1]) + "]",
            dist[k + 1] - dist[k], kNaN, kNaN, 0.0, slack, Relation::kAtMost);
  }
  rep.add_test(detail::tag("ks_normality", "N", c.N_list.back()), last.statistic, last.p_value,
               c.significance);
  return rep;
}

/// Finite-difference time derivative of <theta_t, phi> against one half of
/// the vortex pairing with H_phi built from the same kernel.
inline Report exp_derivative_identity(const ExperimentConfig& c, unsigned workers) {
  Report rep = detail::start_report(c);
  const TestFunction phi = c.phi.build();
  const auto n = static_cast<std::size_t>(c.replicas);
  const auto nv = static_cast<std::size_t>(c.N);
  const auto samples = static_cast<std::size_t>(c.sample_times);
  struct Sample {
    double t = 0.0;
    double fd = 0.0;
    double fd2 = 0.0;
    double pairing = 0.0;
  };
  std::vector<std::vector<Sample>> out(n);
  std::vector<char> guarded(n, 0);
  detail::with_kernel(c, c.delta, [&](const auto& kernel) {
    const HphiEvaluator h(phi, kernel);
    IntegratorConfig ic;
    ic.dt = c.dt;
    ic.T = c.T;
    ic.guard_distance = c.guard_distance;
    ic.record_every = 1;
    parallel_for(n, workers, [&](std::size_t r) {
      std::mt19937_64 rng(derive_seed(c.seed, detail::kDerivative, r));
      const VortexEnsemble e = detail::draw(c, nv, rng);
      const Trajectory tr = integrate(e, ic, kernel);
      if (tr.guard) {
        guarded[r] = 1;
        return;
      }
      const std::size_t steps = tr.snapshots.size() - 1;
      if (steps < 5) throw ConfigError("derivative identity needs at least 5 steps (T/dt)");
      std::vector<double> p(tr.snapshots.size());
      for (std::size_t k = 0; k < p.size(); ++k) {
        VortexEnsemble s{tr.snapshots[k], e.xi, c.epsilon};
        p[k] = pair_ensemble(s, phi);
      }
      // interior step indices away from the shortened last step
      const std::size_t lo = 2;
      const std::size_t hi = steps - 3;
      for (std::size_t q = 0; q < samples; ++q) {
        const std::size_t k =
            samples == 1 ? (lo + hi) / 2 : lo + (hi - lo) * q / (samples - 1);
        Sample s;
        s.t = tr.times[k];
        s.fd = (p[k + 1] - p[k - 1]) / (tr.times[k + 1] - tr.times[k - 1]);
        s.fd2 = (p[k + 2] - p[k - 2]) / (tr.times[k + 2] - tr.times[k - 2]);
        VortexEnsemble st{tr.snapshots[k], e.xi, c.epsilon};
        s.pairing = pairing_vortex(st, h);
        out[r].push_back(s);
      }
    });
  });
  std::size_t events = 0;
  double worst = 0.0;
  double num = 0.0;
  double den = 0.0;
  double slack = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (guarded[r]) {
      ++events;
      continue;
    }
    for (const Sample& s : out[r]) {
      const double target = 0.5 * s.pairing;
      const double err = std::abs(s.fd - target);
      // the O(dt^2) error of the step-dt difference is a third of |fd2 - fd|
      const double envelope = std::max(1e-4 * std::abs(target), std::abs(s.fd2 - s.fd));
      const double ratio = envelope > 0.0 ? err / envelope : (err == 0.0 ? 0.0 : kInf);
      worst = std::max(worst, ratio);
      num += s.fd * s.pairing;
      den += s.pairing * s.pairing;
      slack += envelope * std::abs(s.pairing);
      rep.add_series("fd_derivative[replica=" + std::to_string(r) + "]", s.t, s.fd,
                     std::abs(s.fd2 - s.fd) / 3.0);
      rep.add_series("half_pairing[replica=" + std::to_string(r) + "]", s.t, target);
    }
  }
  detail::add_guard_row(rep, events, n);
  rep.add("fd_error_over_envelope", worst, kNaN, kNaN, 1.0, 0.0, Relation::kAtMost);
  if (den > 0.0) {
    // |sum (fd - P/2) P| / sum P^2 is bounded by the summed envelopes
    rep.add("derivative_to_pairing_ratio", num / den, kNaN, kNaN, 0.5, slack / den,
            Relation::kWithin);
  }
  return rep;
}

/// E[pairing^2] = (2(N-1)/N) ||H_phi||^2 under the product law, plus the
/// white-noise cutoff pairing when requested.
inline Report exp_second_moment_identity(const ExperimentConfig& c, unsigned workers) {
  Report rep = detail::start_report(c);
  const TestFunction phi = c.phi.build();
  const auto n = static_cast<std::size_t>(c.replicas);
  const auto nv = static_cast<std::size_t>(c.N);
  KernelConfig kc;
  kc.epsilon = c.epsilon;
  kc.spectral_cutoff = c.M;
  const DirectKernel singular(kc);
  const HphiEvaluator h(phi, singular);
  const QuadratureResult quad = hphi_l2_norm2(phi, singular);
  const double coeff = 2.0 * static_cast<double>(nv - 1) / static_cast<double>(nv);
  const double target = coeff * quad.value;
  rep.add_series("h_phi_l2_norm2", 0.0, quad.value, quad.error);

  std::vector<double> v0(n);
  std::vector<double> vt(n);
  std::vector<char> guarded(n, 0);
  const bool evolve = c.T > 0.0;
  auto body = [&](const auto* kernel) {
    IntegratorConfig ic;
    ic.dt = c.dt;
    ic.T = c.T;
    ic.record_every = 0;
    ic.guard_distance = c.guard_distance;
    parallel_for(n, workers, [&](std::size_t i) {
      std::mt19937_64 rng(derive_seed(c.seed, detail::kSecondMoment, i));
      const VortexEnsemble e = detail::draw(c, nv, rng);
      v0[i] = pairing_vortex(e, h);
      if (kernel != nullptr) {
        const Trajectory tr = integrate(e, ic, *kernel);
        if (tr.guard) {
          guarded[i] = 1;
          return;
        }
        vt[i] = pairing_vortex(tr.final_ensemble(c.epsilon), h);
      }
    });
  };
  if (evolve) {
    detail::with_kernel(c, c.delta, [&](const auto& kernel) { body(&kernel); });
  } else {
    body(static_cast<const DirectKernel*>(nullptr));
  }

  auto add_moments = [&](const std::vector<double>& vals, const std::string& when) {
    std::vector<double> sq(vals.size());
    for (std::size_t i = 0; i < vals.size(); ++i) sq[i] = vals[i] * vals[i];
    const auto m1 = stats::moments(vals);
    const auto m2 = stats::moments(sq);
    rep.add("mean[t=" + when + "]", m1.mean, m1.stderr_mean, kNaN, 0.0, c.sigma * m1.stderr_mean,
            Relation::kWithin);
    const double se = std::hypot(m2.stderr_mean, coeff * quad.error);
    rep.add("second_moment[t=" + when + "]", m2.mean, se, kNaN, target, c.sigma * se,
            Relation::kWithin);
  };
  add_moments(v0, "0");
  if (evolve) {
    std::vector<double> kept;
    std::size_t events = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (guarded[i]) {
        ++events;
      } else {
        kept.push_back(vt[i]);
      }
    }
    detail::add_guard_row(rep, events, n);
    if (kept.size() >= 2) add_moments(kept, "T");
  }

  if (c.wn_cutoff_index > 0) {
    const int grid = std::max(512, 4 * c.field_cutoff + 8);
    const CutoffHphiForm form(phi, singular, c.wn_cutoff_index, c.field_cutoff,
                              grid + (grid % 2));
    const auto st = wn_pairing_stats(form, n, c.field_cutoff,
                                     derive_seed(c.seed, detail::kWhiteNoise, 0), workers);
    const double trunc = form.truncated_variance();
    const QuadratureResult qn =
        hphi_l2_norm2(phi, singular, SeparationWeight::cutoff(c.wn_cutoff_index));
    const std::string nn = std::to_string(c.wn_cutoff_index);
    rep.add("wn_mean[n=" + nn + "]", st.mean, st.mean_stderr, kNaN, 0.0,
            c.sigma * st.mean_stderr, Relation::kWithin);
    rep.add("wn_second_moment[n=" + nn + "]", st.second_moment, st.second_moment_stderr, kNaN,
            trunc, c.sigma * st.second_moment_stderr, Relation::kWithin);
    // against the untruncated value 2 ||H_phi^n||^2, with the truncation gap
    // added to the tolerance
    const double limit = 2.0 * qn.value;
    rep.add("wn_limit_second_moment[n=" + nn + "]", st.second_moment, st.second_moment_stderr,
            kNaN, limit,
            c.sigma * st.second_moment_stderr + std::abs(limit - trunc) + 2.0 * qn.error,
            Relation::kWithin);
  }
  return rep;
}

/// Moments of truncated H^{-1-delta'} norms of empirical spectra.
inline Report exp_sobolev_moments(const ExperimentConfig& c, unsigned workers) {
  Report rep = detail::start_report(c);
  if (c.N_list.empty()) throw ConfigError("missing required field 'N_list'");
  const auto n = static_cast<std::size_t>(c.replicas);
  const auto lattice = std::make_shared<const HalfLattice>(c.field_cutoff);
  const double s = -1.0 - c.sobolev_delta;
  const double exact2 = lattice_weight_sum(c.field_cutoff, s);
  const bool evolve = c.T > 0.0;
  std::map<int, std::vector<double>> mean0;
  std::map<int, std::vector<double>> se0;
  std::vector<double> logn;
  std::size_t events = 0;
  for (int nv : c.N_list) {
    std::vector<double> n0(n);
    std::vector<double> nt(n);
    std::vector<char> guarded(n, 0);
    auto body = [&](const auto* kernel) {
      IntegratorConfig ic;
      ic.dt = c.dt;
      ic.T = c.T;
      ic.record_every = 0;
      ic.guard_distance = c.guard_distance;
      parallel_for(n, workers, [&](std::size_t i) {
        std::mt19937_64 rng(
            derive_seed(c.seed, detail::kSobolev + static_cast<std::uint64_t>(nv) * 0x10000, i));
        const VortexEnsemble e = sample_initial(static_cast<std::size_t>(nv), c.epsilon, rng);
        n0[i] = sobolev_norm(empirical_spectrum(e, lattice), s);
        if (kernel != nullptr) {
          const Trajectory tr = integrate(e, ic, *kernel);
          if (tr.guard) {
            guarded[i] = 1;
            return;
          }
          nt[i] = sobolev_norm(empirical_spectrum(tr.final_ensemble(c.epsilon), lattice), s);
        }
      });
    };
    if (evolve) {
      detail::with_kernel(c, c.delta, [&](const auto& kernel) { body(&kernel); });
    } else {
      body(static_cast<const DirectKernel*>(nullptr));
    }
    logn.push_back(std::log(static_cast<double>(nv)));
    for (int p : c.p_list) {
      std::vector<double> a(n);
      std::vector<double> b;
      for (std::size_t i = 0; i < n; ++i) {
        a[i] = std::pow(n0[i], p);
        if (evolve && !guarded[i]) b.push_back(std::pow(nt[i], p));
      }
      const auto ma = stats::moments(a);
      mean0[p].push_back(ma.mean);
      se0[p].push_back(ma.stderr_mean);
      rep.add_series("moment[p=" + std::to_string(p) + "]", nv, ma.mean, ma.stderr_mean);
      if (p == 2) {
        rep.add("moment[p=2 N=" + std::to_string(nv) + "]", ma.mean, ma.stderr_mean, kNaN, exact2,
                c.sigma * ma.stderr_mean, Relation::kWithin);
      } else if (p < 2) {
        // Jensen: E|X|^p <= (E|X|^2)^{p/2} = exact2^{p/2} for every N
        rep.add("moment_bound[p=" + std::to_string(p) + " N=" + std::to_string(nv) + "]", ma.mean,
                ma.stderr_mean, kNaN, std::pow(exact2, 0.5 * p), c.sigma * ma.stderr_mean,
                Relation::kAtMost);
      }
      if (evolve && b.size() >= 2) {
        const auto mb = stats::moments(b);
        const double se = std::hypot(ma.stderr_mean, mb.stderr_mean);
        rep.add("moment_change_0_to_T[p=" + std::to_string(p) + " N=" + std::to_string(nv) + "]",
                mb.mean - ma.mean, se, kNaN, 0.0, c.sigma * se, Relation::kWithin);
      }
    }
    for (std::size_t i = 0; i < n; ++i) events += guarded[i] ? 1 : 0;
  }
  if (evolve) detail::add_guard_row(rep, events, n * c.N_list.size());
  if (c.N_list.size() >= 2) {
    for (int p : c.p_list) {
      // p <= 2 has the exact N-independent bound above
      if (p <= 2) continue;
      std::vector<double> sig = se0[p];
      for (double& v : sig) v = std::max(v, 1e-300);
      const auto fit = stats::weighted_fit(logn, mean0[p], sig);
      const double z = fit.slope / fit.slope_stderr;
      rep.add_test("growth_trend[p=" + std::to_string(p) + "]", fit.slope,
                   stats::student_upper_tail(z, kInf), c.significance);
    }
  }
  return rep;
}

/// Determinant of the finite-difference Jacobian of the regularized flow.
inline Report exp_volume_preservation(const ExperimentConfig& c, unsigned workers) {
  Report rep = detail::start_report(c);
  if (!(c.delta > 0.0)) throw ConfigError("volume preservation needs delta > 0");
  const auto n = static_cast<std::size_t>(c.replicas);
  std::vector<double> det(n);
  detail::with_kernel(c, c.delta, [&](const auto& kernel) {
    IntegratorConfig ic;
    ic.dt = std::min(c.dt, std::max(c.T, 1e-300));
    ic.T = c.T;
    ic.record_every = 0;
    ic.guard_distance = 0.0;
    parallel_for(n, workers, [&](std::size_t i) {
      std::mt19937_64 rng(derive_seed(c.seed, detail::kVolume, i));
      const VortexEnsemble e = detail::draw(c, static_cast<std::size_t>(c.N), rng);
      det[i] = flow_jacobian_det_extrapolated(e, ic, kernel, c.fd_step);
    });
  });
  for (std::size_t i = 0; i < n; ++i) {
    rep.add("jacobian_det[ic=" + std::to_string(i) + "]", det[i], kNaN, kNaN, 1.0, 1e-3,
            Relation::kWithin);
    rep.add_series("jacobian_det", static_cast<double>(i), det[i]);
  }
  return rep;
}

/// Fraction of trajectories whose minimal distance drops below delta.
inline Report exp_collision_scaling(const ExperimentConfig& c, unsigned workers) {
  Report rep = detail::start_report(c);
  if (c.delta_list.size() < 2) throw ConfigError("field 'delta_list' needs at least two radii");
  const auto n = static_cast<std::size_t>(c.replicas);
  const double dmin_list = *std::min_element(c.delta_list.begin(), c.delta_list.end());
  std::vector<double> dmin(n);
  detail::with_kernel(c, 0.5 * dmin_list, [&](const auto& kernel) {
    IntegratorConfig ic;
    ic.dt = c.dt;
    ic.T = c.T;
    ic.record_every = 0;
    ic.guard_distance = 0.0;
    ic.max_rotation = c.max_rotation;
    ic.stop_distance = dmin_list;
    parallel_for(n, workers, [&](std::size_t i) {
      std::mt19937_64 rng(derive_seed(c.seed, detail::kCollision, i));
      const VortexEnsemble e = detail::draw(c, static_cast<std::size_t>(c.N), rng);
      dmin[i] = min_pairwise_distance(integrate(e, ic, kernel));
    });
  });
  std::vector<double> lx;
  std::vector<double> ly;
  std::vector<double> deltas = c.delta_list;
  std::sort(deltas.begin(), deltas.end());
  for (double d : deltas) {
    const auto hits = static_cast<double>(std::count_if(dmin.begin(), dmin.end(),
                                                        [d](double m) { return m < d; }));
    const double frac = hits / static_cast<double>(n);
    rep.add_series("near_approach_fraction", d, frac,
                   std::sqrt(frac * (1.0 - frac) / static_cast<double>(n)));
    if (hits > 0) {
      lx.push_back(std::log(d));
      ly.push_back(std::log(frac));
    }
  }
  const double target = 1.0 - c.epsilon;
  if (lx.size() >= 2) {
    const auto fit = stats::linear_fit(lx, ly);
    rep.add("fraction_slope", fit.slope, fit.slope_stderr, kNaN, target, 0.3, Relation::kAtLeast);
  } else {
    rep.add("fraction_slope", kNaN, kNaN, kNaN, target, 0.3, Relation::kAtLeast);
  }
  return rep;
}

/// Decay of ||H_phi - H_phi^n||^2 over a ladder of cutoff indices.
inline Report exp_cutoff_convergence(const ExperimentConfig& c, unsigned /*workers*/) {
  Report rep = detail::start_report(c);
  const TestFunction phi = c.phi.build();
  std::vector<double> eps = c.epsilon_list.empty() ? std::vector<double>{c.epsilon} : c.epsilon_list;
  for (double e : eps) {
    KernelConfig kc;
    kc.epsilon = e;
    kc.spectral_cutoff = c.M;
    const DirectKernel k(kc);
    std::vector<double> lx;
    std::vector<double> ly;
    bool degenerate = false;
    for (int nn : c.cutoff_ladder) {
      const QuadratureResult q = hphi_l2_norm2(phi, k, SeparationWeight::remainder(nn));
      rep.add_series(detail::tag("remainder_norm2", "eps", e), nn, q.value, q.error);
      if (!(q.value > 0.0)) {
        degenerate = true;
        continue;
      }
      lx.push_back(std::log(static_cast<double>(nn)));
      ly.push_back(std::log(q.value));
    }
    const double slope = (!degenerate && lx.size() >= 2) ? stats::linear_fit(lx, ly).slope : kNaN;
    rep.add(detail::tag("decay_slope", "eps", e), slope, kNaN, kNaN, -2.0 * e, 0.4,
            Relation::kWithin);
  }
  return rep;
}

/// Near-field slopes, symmetries, zero mean and table accuracy of the kernel.
inline Report exp_kernel_check(const ExperimentConfig& c, unsigned workers) {
  Report rep = detail::start_report(c);
  std::vector<double> eps = c.epsilon_list.empty() ? std::vector<double>{c.epsilon} : c.epsilon_list;
  for (double e : eps) {
    KernelConfig kc;
    kc.epsilon = e;
    kc.spectral_cutoff = c.M;
    const DirectKernel k(kc);
    // slopes over r in [1e-3, 1e-2]; G(r) - G(2r) removes the constant offset
    std::vector<double> lr;
    std::vector<double> lg;
    std::vector<double> lk;
    for (int i = 0; i <= 10; ++i) {
      const double r = 1e-3 * std::pow(10.0, i / 10.0);
      const KernelSample a = k.eval(Displacement::wrap(r, 0.0));
      const KernelSample b = k.eval(Displacement::wrap(2.0 * r, 0.0));
      lr.push_back(std::log(r));
      lg.push_back(std::log(a.g - b.g));
      lk.push_back(std::log(a.k.norm()));
      rep.add_series(detail::tag("G_increment", "eps", e), r, a.g - b.g);
      rep.add_series(detail::tag("K_norm", "eps", e), r, a.k.norm());
    }
    const double sg = stats::linear_fit(lr, lg).slope;
    const double sk = stats::linear_fit(lr, lk).slope;
    rep.add(detail::tag("G_slope", "eps", e), sg, kNaN, kNaN, -(1.0 - e), 0.05 * (1.0 - e),
            Relation::kWithin);
    rep.add(detail::tag("K_slope", "eps", e), sk, kNaN, kNaN, -(2.0 - e), 0.05 * (2.0 - e),
            Relation::kWithin);

    const auto probes = static_cast<std::size_t>(c.probes);
    std::vector<double> odd(probes);
    std::vector<double> even(probes);
    parallel_for(probes, workers, [&](std::size_t i) {
      std::mt19937_64 rng(derive_seed(c.seed, detail::kKernelProbe, i));
      std::uniform_real_distribution<double> uni(-0.5, 0.5);
      const Displacement d = Displacement::wrap(uni(rng), uni(rng));
      const KernelSample a = k.eval(d);
      const KernelSample b = k.eval(d.negated());
      odd[i] = (a.k + b.k).norm();
      even[i] = std::abs(a.g - b.g);
    });
    rep.add(detail::tag("max_K_antisymmetry_defect", "eps", e),
            *std::max_element(odd.begin(), odd.end()), kNaN, kNaN, 0.0, 1e-12, Relation::kAtMost);
    rep.add(detail::tag("max_G_evenness_defect", "eps", e),
            *std::max_element(even.begin(), even.end()), kNaN, kNaN, 0.0, 1e-12,
            Relation::kAtMost);

    // cell integral of G in polar coordinates around the singularity
    const auto [gx, gw] = gauss_legendre(64);
    double integral = 0.0;
    for (int sector = 0; sector < 4; ++sector) {
      for (std::size_t a = 0; a < gx.size(); ++a) {
        const double th = (sector + gx[a]) * kPi / 4.0;
        const double cs = std::cos(th);
        const double sn = std::sin(th);
        const double rmax = 0.5 / std::max(std::abs(cs), std::abs(sn));
        double ray = 0.0;
        for (std::size_t b = 0; b < gx.size(); ++b) {
          // r = rmax u^{1/eps} absorbs the r^{eps} behaviour at the origin
          const double p = 1.0 / e;
          const double r = rmax * std::pow(gx[b], p);
          const double jac = rmax * p * std::pow(gx[b], p - 1.0);
          ray += gw[b] * jac * r * k.eval(Displacement::wrap(r * cs, r * sn)).g;
        }
        integral += gw[a] * ray * kPi / 4.0;
      }
    }
    rep.add(detail::tag("G_cell_integral", "eps", e), 2.0 * integral, kNaN, kNaN, 0.0, 1e-6,
            Relation::kWithin);

    TableOptions opt;
    opt.resolution = c.table_resolution;
    opt.tolerance = kInf;
    const KernelTable table(kc, opt);
    rep.add(detail::tag("table_max_rel_error", "eps", e), table.check().max_error, kNaN, kNaN,
            0.0, 1e-6, Relation::kAtMost);
  }
  return rep;
}

/// Test functions of the white-noise covariance check; the last one overlaps
/// two of the others so off-diagonal targets are non-zero.
inline std::vector<TestFunction> white_noise_family() {
  return {TestFunction::constant(1.0), TestFunction::cosine(1, 0, 1.0),
          TestFunction::sine(1, 0, 1.0), TestFunction::cosine(1, 2, 1.0),
          TestFunction::cosine(1, 0, 1.0) + TestFunction::sine(0, 1, 0.5)};
}

/// Empirical Cov(<omega, phi>, <omega, psi>) against <phi, psi> over a fixed
/// family of test functions.
inline Report exp_white_noise(const ExperimentConfig& c, unsigned workers) {
  Report rep = detail::start_report(c);
  const auto family = white_noise_family();
  for (const auto& f : family) {
    if (f.band() > c.field_cutoff) throw ConfigError("field 'field_cutoff' is below the family band");
  }
  const auto n = static_cast<std::size_t>(c.replicas);
  if (n < 2) throw ConfigError("field 'replicas' must be at least 2");
  const auto lattice = std::make_shared<const HalfLattice>(c.field_cutoff);
  std::vector<std::vector<double>> vals(family.size(), std::vector<double>(n));
  parallel_for(n, workers, [&](std::size_t i) {
    std::mt19937_64 rng(derive_seed(c.seed, detail::kWhiteNoiseFamily, i));
    const SpectralField w = sample_white_noise(lattice, rng);
    for (std::size_t a = 0; a < family.size(); ++a) vals[a][i] = pair_field(w, family[a]);
  });
  for (std::size_t a = 0; a < family.size(); ++a) {
    for (std::size_t b = a; b < family.size(); ++b) {
      const auto cov = stats::covariance(vals[a], vals[b]);
      rep.add("covariance[f" + std::to_string(a) + " f" + std::to_string(b) + "]", cov.value,
              cov.stderr_value, kNaN, family[a].inner(family[b]), c.sigma * cov.stderr_value,
              Relation::kWithin);
    }
  }
  return rep;
}

/// Dispatch by experiment name.
inline Report run_experiment(const ExperimentConfig& c, unsigned workers) {
  if (c.experiment == "stationarity") return exp_stationarity(c, workers);
  if (c.experiment == "clt") return exp_clt_to_whitenoise(c, workers);
  if (c.experiment == "derivative_identity") return exp_derivative_identity(c, workers);
  if (c.experiment == "second_moment") return exp_second_moment_identity(c, workers);
  if (c.experiment == "sobolev_moments") return exp_sobolev_moments(c, workers);
  if (c.experiment == "volume_preservation") return exp_volume_preservation(c, workers);
  if (c.experiment == "collision_scaling") return exp_collision_scaling(c, workers);
  if (c.experiment == "cutoff_convergence") return exp_cutoff_convergence(c, workers);
  if (c.experiment == "kernel_check") return exp_kernel_check(c, workers);
  if (c.experiment == "white_noise") return exp_white_noise(c, workers);
  throw ConfigError("unknown experiment '" + c.experiment + "'");
}

}  // namespace msqg
