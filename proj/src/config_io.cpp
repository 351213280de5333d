#include "phasebal/config_io.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>

#include <json.hpp>

#include "phasebal/errors.hpp"

namespace phasebal {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& where) {
  if (!obj.is_object()) throw InvalidConfig(where + " must be a JSON object");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* k : allowed) known = known || item.key() == k;
    if (!known) throw InvalidConfig("unknown key '" + item.key() + "' in " + where);
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

CostFunction cost_from_json(const json& j, const std::string& where) {
  check_keys(j, {"kind", "coefficients"}, where);
  const std::string kind = j.value("kind", std::string("quadratic"));
  if (kind != "quadratic") {
    throw InvalidConfig(where + ": only quadratic costs can be configured from JSON");
  }
  const auto c = j.at("coefficients").get<std::vector<double>>();
  if (c.empty() || c.size() > 3) throw InvalidConfig(where + ": coefficients are [a, b, c]");
  return CostFunction::quadratic(c[0], c.size() > 1 ? c[1] : 0.0, c.size() > 2 ? c[2] : 0.0);
}

json cost_to_json(const CostFunction& fn) {
  if (!fn.is_quadratic()) throw InvalidConfig("general cost functions cannot be serialized");
  const auto& q = fn.coeffs();
  return {{"kind", "quadratic"}, {"coefficients", {q.a, q.b, q.c}}};
}

void apply_phase(const json& j, PhaseConfig& ph, const std::string& where) {
  check_keys(j, {"storage", "cost_l", "cost_deg", "r_min", "r_max", "f_min", "f_max"}, where);
  if (j.contains("storage")) {
    const auto& s = j.at("storage");
    if (s.is_null()) {
      ph.storage.reset();
    } else {
      check_keys(s, {"s_min", "s_max", "u_max", "eta_plus", "eta_minus", "s_initial"},
                 where + ".storage");
      StorageParams st = ph.storage.value_or(StorageParams{2.0, 10.0, 1.0, 1.0, 1.0, 2.0});
      read(s, "s_min", st.s_min);
      read(s, "s_max", st.s_max);
      read(s, "u_max", st.u_max);
      read(s, "eta_plus", st.eta_plus);
      read(s, "eta_minus", st.eta_minus);
      read(s, "s_initial", st.s_initial);
      ph.storage = st;
    }
  }
  if (j.contains("cost_l")) ph.cost_l = cost_from_json(j.at("cost_l"), where + ".cost_l");
  if (j.contains("cost_deg")) ph.cost_deg = cost_from_json(j.at("cost_deg"), where + ".cost_deg");
  read(j, "r_min", ph.r_min);
  read(j, "r_max", ph.r_max);
  read(j, "f_min", ph.f_min);
  read(j, "f_max", ph.f_max);
}

SystemConfig system_from_json(const json& j) {
  check_keys(j, {"phases", "phase_defaults", "loss", "p_min", "p_max"}, "system");
  std::size_t n = 3;
  const json* list = nullptr;
  if (j.contains("phases")) {
    const auto& p = j.at("phases");
    if (p.is_array()) {
      list = &p;
      n = p.size();
    } else {
      n = p.get<std::size_t>();
    }
  }
  SystemConfig cfg = default_system_config(n);
  if (j.contains("phase_defaults")) {
    for (auto& ph : cfg.phases) apply_phase(j.at("phase_defaults"), ph, "system.phase_defaults");
  }
  if (list) {
    for (std::size_t i = 0; i < n; ++i) {
      apply_phase((*list)[i], cfg.phases[i], "system.phases[" + std::to_string(i) + "]");
    }
  }
  if (j.contains("loss")) cfg.loss = cost_from_json(j.at("loss"), "system.loss");
  read(j, "p_min", cfg.p_min);
  read(j, "p_max", cfg.p_max);
  return cfg;
}

std::vector<double> per_phase(const json& v, std::size_t n, const char* name) {
  if (v.is_number()) return std::vector<double>(n, v.get<double>());
  auto out = v.get<std::vector<double>>();
  if (out.size() != n) {
    throw InvalidConfig(std::string("scenario.") + name + " needs one entry per phase");
  }
  return out;
}

void scenario_from_json(const json& j, RunConfig& run) {
  check_keys(j, {"seed", "horizon", "flow_mean", "flow_std", "phase_corr", "time_corr", "rng",
                 "replay_csv"},
             "scenario");
  const std::size_t n = run.system.size();
  auto& sc = run.scenario;
  read(j, "seed", sc.seed);
  read(j, "horizon", sc.horizon);
  if (j.contains("flow_mean")) sc.flow_mean = per_phase(j.at("flow_mean"), n, "flow_mean");
  if (j.contains("flow_std")) sc.flow_std = per_phase(j.at("flow_std"), n, "flow_std");
  read(j, "phase_corr", sc.phase_corr);
  read(j, "time_corr", sc.time_corr);
  read(j, "rng", sc.rng);
  if (j.contains("replay_csv")) run.replay_csv = j.at("replay_csv").get<std::string>();
}

void solver_from_json(const json& j, RunConfig& run) {
  check_keys(j, {"kind", "rho", "tol_primal", "tol_dual", "max_iter", "warm_start"}, "solver");
  if (j.contains("kind")) run.solver = solver_kind_from_string(j.at("kind").get<std::string>());
  read(j, "rho", run.rho);
  read(j, "tol_primal", run.tol_primal);
  read(j, "tol_dual", run.tol_dual);
  read(j, "max_iter", run.max_iter);
  read(j, "warm_start", run.warm_start);
}

}  // namespace

RunConfig run_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidConfig(std::string("config is not valid JSON: ") + e.what());
  }
  try {
    check_keys(j, {"system", "scenario", "algorithm", "mode", "v_policy", "solver", "output_dir"},
               "config");
    RunConfig run;
    run.system = j.contains("system") ? system_from_json(j.at("system")) : default_system_config(3);
    run.scenario = default_scenario_spec(run.system.size());
    if (j.contains("scenario")) scenario_from_json(j.at("scenario"), run);
    if (j.contains("algorithm")) run.algorithm = algorithm_from_string(j.at("algorithm").get<std::string>());
    if (j.contains("mode")) run.mode = storage_mode_from_string(j.at("mode").get<std::string>());
    if (j.contains("v_policy")) {
      const auto& v = j.at("v_policy");
      if (v.is_string()) {
        if (v.get<std::string>() != "v_max") {
          throw InvalidConfig("v_policy must be \"v_max\" or a list of per-phase values");
        }
      } else {
        run.v_values = v.get<std::vector<double>>();
      }
    }
    if (j.contains("solver")) solver_from_json(j.at("solver"), run);
    read(j, "output_dir", run.output_dir);
    return run;
  } catch (const json::exception& e) {
    throw InvalidConfig(std::string("config has a field of the wrong type: ") + e.what());
  }
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return run_config_from_json(ss.str());
}

std::string run_config_to_json(const RunConfig& run) {
  ordered_json sys;
  ordered_json phases = ordered_json::array();
  for (const auto& ph : run.system.phases) {
    ordered_json p;
    if (ph.storage) {
      const auto& st = *ph.storage;
      p["storage"] = {{"s_min", st.s_min},       {"s_max", st.s_max},
                      {"u_max", st.u_max},       {"eta_plus", st.eta_plus},
                      {"eta_minus", st.eta_minus}, {"s_initial", st.s_initial}};
    } else {
      p["storage"] = nullptr;
    }
    p["cost_l"] = cost_to_json(ph.cost_l);
    p["cost_deg"] = cost_to_json(ph.cost_deg);
    p["r_min"] = ph.r_min;
    p["r_max"] = ph.r_max;
    p["f_min"] = ph.f_min;
    p["f_max"] = ph.f_max;
    phases.push_back(p);
  }
  sys["phases"] = phases;
  sys["loss"] = cost_to_json(run.system.loss);
  sys["p_min"] = run.system.p_min;
  sys["p_max"] = run.system.p_max;

  ordered_json j;
  j["system"] = sys;
  const auto& sc = run.scenario;
  j["scenario"] = {{"seed", sc.seed},           {"horizon", sc.horizon},
                   {"flow_mean", sc.flow_mean}, {"flow_std", sc.flow_std},
                   {"phase_corr", sc.phase_corr}, {"time_corr", sc.time_corr},
                   {"rng", sc.rng}};
  if (run.replay_csv) j["scenario"]["replay_csv"] = *run.replay_csv;
  j["algorithm"] = to_string(run.algorithm);
  j["mode"] = to_string(run.mode);
  if (run.v_values) {
    j["v_policy"] = *run.v_values;
  } else {
    j["v_policy"] = "v_max";
  }
  j["solver"] = {{"kind", to_string(run.solver)}, {"rho", run.rho},
                 {"tol_primal", run.tol_primal},  {"tol_dual", run.tol_dual},
                 {"max_iter", run.max_iter},      {"warm_start", run.warm_start}};
  j["output_dir"] = run.output_dir;
  return j.dump(2);
}

}  // namespace phasebal
