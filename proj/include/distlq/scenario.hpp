#pragma once

#include <cstdio>
#include <filesystem>
#include <functional>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "distlq/errors.hpp"
#include "distlq/model.hpp"
#include "distlq/multi_agent.hpp"
#include "distlq/numerics.hpp"

namespace distlq {

using json = nlohmann::json;

/// Malformed or inconsistent scenario document.
class SchemaError : public Error {
 public:
  using Error::Error;
};

namespace io {

inline Matrix matrix_from_json(const json& j, const std::string& what) {
  if (j.is_number()) return Matrix::Constant(1, 1, j.get<double>());
  if (!j.is_array() || j.empty()) throw SchemaError(what + ": expected a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  if (!j[0].is_array()) {
    // A flat array is read as a column.
    Matrix M(rows, 1);
    for (Eigen::Index r = 0; r < rows; ++r) {
      if (!j[r].is_number()) throw SchemaError(what + ": entries must be numbers");
      M(r, 0) = j[r].get<double>();
    }
    return M;
  }
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  if (cols == 0) throw SchemaError(what + ": empty row");
  Matrix M(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (!j[r].is_array() || static_cast<Eigen::Index>(j[r].size()) != cols)
      throw SchemaError(what + ": rows must all have " + std::to_string(cols) + " entries");
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!j[r][c].is_number()) throw SchemaError(what + ": entries must be numbers");
      M(r, c) = j[r][c].get<double>();
    }
  }
  return M;
}

inline Vector vector_from_json(const json& j, const std::string& what) {
  if (j.is_number()) return Vector::Constant(1, j.get<double>());
  if (!j.is_array() || j.empty()) throw SchemaError(what + ": expected a non-empty array");
  Vector v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw SchemaError(what + ": entries must be numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

inline json to_json(const Matrix& M) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json to_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline const json& require(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw SchemaError(where + ": missing field \"" + key + "\"");
  return j.at(key);
}

template <class T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw SchemaError(where + ": field \"" + key + "\" has the wrong type");
  }
}

inline double number(const json& j, const char* key, const std::string& where) {
  const auto& v = require(j, key, where);
  if (!v.is_number()) throw SchemaError(where + ": field \"" + key + "\" must be a number");
  return v.get<double>();
}

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace io

struct LQScenario {
  std::string name;
  LQTerminalProblem system;
  std::vector<AgentView> agents;
  std::optional<Topology> topology;
  IterationSchedule schedule;
  int num_steps = 2000;
  double decomposition_tol = 1e-9;
  /// Acceptance tolerances against the centralized reference.
  double tol_P = 5e-2, tol_x = 5e-2, tol_u = 5e-2;

  TimeGrid grid() const { return TimeGrid(0.0, system.T, num_steps); }
};

inline IterationSchedule schedule_from_json(const json& j, const std::string& where = "schedule") {
  IterationSchedule s;
  if (j.is_null()) return s;
  if (!j.is_object()) throw SchemaError(where + ": expected an object");
  try {
    if (j.contains("alpha")) s.alpha = StepSize::parse(j.at("alpha").get<std::string>());
    s.tol_inner = io::get_or(j, "tol_inner", s.tol_inner, where);
    s.tol_outer = io::get_or(j, "tol_outer", s.tol_outer, where);
    s.max_n = io::get_or(j, "max_n", s.max_n, where);
    s.max_k = io::get_or(j, "max_k", s.max_k, where);
    s.max_varpi = io::get_or(j, "max_varpi", s.max_varpi, where);
    s.max_q = io::get_or(j, "max_q", s.max_q, where);
    s.max_w = io::get_or(j, "max_w", s.max_w, where);
    s.rank_tol = io::get_or(j, "rank_tol", s.rank_tol, where);
    s.local_rank_tol = io::get_or(j, "local_rank_tol", s.local_rank_tol, where);
    if (j.contains("stop_rule")) s.stop_rule = parse_stop_rule(j.at("stop_rule").get<std::string>());
    s.record_history = io::get_or(j, "record_history", s.record_history, where);
    s.validate();
  } catch (const json::exception& e) {
    throw SchemaError(where + ": " + e.what());
  } catch (const ParameterError& e) {
    throw SchemaError(where + ": " + e.what());
  }
  return s;
}

inline json schedule_to_json(const IterationSchedule& s, std::optional<double> gamma = std::nullopt) {
  json j;
  j["alpha"] = s.alpha.to_string();
  if (gamma) j["gamma"] = *gamma;
  j["tol_inner"] = s.tol_inner;
  j["tol_outer"] = s.tol_outer;
  j["max_n"] = s.max_n;
  j["max_k"] = s.max_k;
  j["max_varpi"] = s.max_varpi;
  j["max_q"] = s.max_q;
  j["max_w"] = s.max_w;
  j["rank_tol"] = s.rank_tol;
  j["local_rank_tol"] = s.local_rank_tol;
  j["stop_rule"] = to_string(s.stop_rule);
  j["record_history"] = s.record_history;
  return j;
}

/// Topology block: {N, edges: [[i, j], ...] (1-based), gamma}. A gamma in the schedule block
/// is accepted as well; both must agree when both are present.
inline Topology topology_from_json(const json& j, const json& schedule) {
  const std::string where = "topology";
  int N = 0;
  try {
    N = io::require(j, "N", where).get<int>();
  } catch (const json::exception&) {
    throw SchemaError("topology: N must be an integer");
  }
  std::optional<double> gamma;
  if (j.contains("gamma")) gamma = io::number(j, "gamma", where);
  if (schedule.is_object() && schedule.contains("gamma")) {
    const double g = io::number(schedule, "gamma", "schedule");
    if (gamma && *gamma != g) throw SchemaError("topology.gamma and schedule.gamma disagree");
    gamma = g;
  }
  if (!gamma) throw SchemaError("topology: missing field \"gamma\"");
  std::vector<std::pair<int, int>> edges;
  const auto& e = io::require(j, "edges", where);
  if (!e.is_array()) throw SchemaError("topology.edges must be an array of pairs");
  for (const auto& p : e) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number_integer() || !p[1].is_number_integer())
      throw SchemaError("topology.edges entries must be [i, j] integer pairs");
    edges.emplace_back(p[0].get<int>() - 1, p[1].get<int>() - 1);
  }
  try {
    return Topology(N, edges, *gamma);
  } catch (const StructuralError& ex) {
    throw SchemaError(std::string("topology: ") + ex.what());
  } catch (const ParameterError& ex) {
    throw SchemaError(std::string("topology: ") + ex.what());
  }
}

inline json topology_to_json(const Topology& t) {
  json j;
  j["N"] = t.N();
  json e = json::array();
  for (auto [a, b] : t.edges()) e.push_back({a + 1, b + 1});
  j["edges"] = e;
  j["gamma"] = t.gamma();
  return j;
}

inline LQScenario lq_scenario_from_json(const json& doc) {
  if (!doc.is_object()) throw SchemaError("scenario must be a JSON object");
  LQScenario sc;
  sc.name = io::get_or<std::string>(doc, "name", "", "scenario");
  const auto& s = io::require(doc, "system", "scenario");
  auto& p = sc.system;
  p.A = io::matrix_from_json(io::require(s, "A", "system"), "system.A");
  p.B = io::matrix_from_json(io::require(s, "B", "system"), "system.B");
  p.Q = io::matrix_from_json(io::require(s, "Q", "system"), "system.Q");
  p.R = io::matrix_from_json(io::require(s, "R", "system"), "system.R");
  p.T = io::number(s, "T", "system");
  p.x0 = io::vector_from_json(io::require(s, "x0", "system"), "system.x0");
  p.xT = io::vector_from_json(io::require(s, "xT", "system"), "system.xT");
  try {
    p.validate();
  } catch (const Error& e) {
    throw SchemaError(std::string("system: ") + e.what());
  }

  if (doc.contains("agents")) {
    const auto& ag = doc.at("agents");
    if (!ag.is_array() || ag.empty()) throw SchemaError("agents must be a non-empty array");
    for (std::size_t i = 0; i < ag.size(); ++i) {
      const std::string w = "agents[" + std::to_string(i) + "]";
      AgentView v;
      v.index = static_cast<int>(i);
      v.A = io::matrix_from_json(io::require(ag[i], "A", w), w + ".A");
      v.B = io::matrix_from_json(io::require(ag[i], "B", w), w + ".B");
      v.Q = io::matrix_from_json(io::require(ag[i], "Q", w), w + ".Q");
      v.M = io::matrix_from_json(io::require(ag[i], "M", w), w + ".M");
      v.x0 = io::vector_from_json(io::require(ag[i], "x0", w), w + ".x0");
      v.xT = io::vector_from_json(io::require(ag[i], "xT", w), w + ".xT");
      const auto n = p.n();
      if (v.A.rows() != n || v.A.cols() != n || v.B.rows() != n || v.B.cols() != p.m() || v.Q.rows() != n ||
          v.Q.cols() != n || v.M.rows() != n || v.x0.size() != n || v.xT.size() != n)
        throw SchemaError(w + ": dimensions do not match the system");
      sc.agents.push_back(std::move(v));
    }
  }
  const json sched = doc.contains("schedule") ? doc.at("schedule") : json();
  sc.schedule = schedule_from_json(sched);
  if (doc.contains("topology")) {
    sc.topology = topology_from_json(doc.at("topology"), sched);
    if (!sc.agents.empty() && sc.topology->N() != static_cast<int>(sc.agents.size()))
      throw SchemaError("topology.N does not match the number of agents");
  }
  if (doc.contains("grid")) sc.num_steps = io::get_or(doc.at("grid"), "num_steps", sc.num_steps, "grid");
  if (sc.num_steps < 2) throw SchemaError("grid.num_steps must be at least 2");
  if (doc.contains("tolerances")) {
    const auto& t = doc.at("tolerances");
    sc.decomposition_tol = io::get_or(t, "decomposition", sc.decomposition_tol, "tolerances");
    sc.tol_P = io::get_or(t, "P", sc.tol_P, "tolerances");
    sc.tol_x = io::get_or(t, "x", sc.tol_x, "tolerances");
    sc.tol_u = io::get_or(t, "u", sc.tol_u, "tolerances");
  }
  return sc;
}

inline json lq_scenario_to_json(const LQScenario& sc) {
  json doc;
  if (!sc.name.empty()) doc["name"] = sc.name;
  const auto& p = sc.system;
  doc["system"] = {{"A", io::to_json(p.A)}, {"B", io::to_json(p.B)},   {"Q", io::to_json(p.Q)},
                   {"R", io::to_json(p.R)}, {"T", p.T},                {"x0", io::to_json(p.x0)},
                   {"xT", io::to_json(p.xT)}};
  if (!sc.agents.empty()) {
    json ag = json::array();
    for (const auto& v : sc.agents)
      ag.push_back({{"A", io::to_json(v.A)},
                    {"B", io::to_json(v.B)},
                    {"Q", io::to_json(v.Q)},
                    {"M", io::to_json(v.M)},
                    {"x0", io::to_json(v.x0)},
                    {"xT", io::to_json(v.xT)}});
    doc["agents"] = ag;
  }
  if (sc.topology) doc["topology"] = topology_to_json(*sc.topology);
  doc["schedule"] = schedule_to_json(sc.schedule);
  doc["grid"] = {{"num_steps", sc.num_steps}};
  doc["tolerances"] = {{"decomposition", sc.decomposition_tol}, {"P", sc.tol_P}, {"x", sc.tol_x}, {"u", sc.tol_u}};
  return doc;
}

struct ConsensusCase {
  std::string name;
  double C = 1.0, D = 1.0;
  std::optional<double> reference_J;
  std::optional<double> reference_J_baseline;
};

enum class ControllerMode {
  /// u_i from each agent's own prediction x_i(t) (open loop on the plant).
  open_loop,
  /// u_i from the measured plant state with the agent's gain row block.
  state_feedback,
};

inline std::string to_string(ControllerMode m) { return m == ControllerMode::open_loop ? "open_loop" : "state_feedback"; }

inline ControllerMode parse_controller_mode(const std::string& s) {
  if (s == "open_loop") return ControllerMode::open_loop;
  if (s == "state_feedback") return ControllerMode::state_feedback;
  throw SchemaError("unknown controller_mode \"" + s + "\"");
}

struct UGVScenario {
  std::string name;
  MultiAgentSystem system;
  /// Set when the fleet was given as UGV parameters.
  std::vector<UGVParams> ugvs;
  /// "ring" (identity weights on every edge) or "explicit".
  bool identity_edge_weights = true;
  IterationSchedule schedule;
  DistributedAREOptions are;
  double T_sim = 30.0;
  int num_steps = 600;
  Matrix baseline_K;
  std::vector<ConsensusCase> cases;
  std::string case_mode = "homogeneous";
  ControllerMode controller_mode = ControllerMode::open_loop;
  std::optional<double> reference_P_norm;
  std::vector<double> reference_agent_P_norms;
  double consensus_tol = 1e-2;

  TimeGrid grid() const { return TimeGrid(0.0, T_sim, num_steps); }
};

inline bool is_multi_agent_document(const json& doc) {
  return doc.is_object() && (doc.contains("ugv") || doc.contains("weights"));
}

inline UGVScenario ugv_scenario_from_json(const json& doc) {
  if (!doc.is_object()) throw SchemaError("scenario must be a JSON object");
  UGVScenario sc;
  sc.name = io::get_or<std::string>(doc, "name", "", "scenario");
  const json sched = doc.contains("schedule") ? doc.at("schedule") : json();
  const Topology topo = topology_from_json(io::require(doc, "topology", "scenario"), sched);
  sc.schedule = schedule_from_json(sched);

  try {
    if (doc.contains("ugv")) {
      const auto& u = doc.at("ugv");
      if (!u.is_array() || u.empty()) throw SchemaError("ugv must be a non-empty array");
      for (std::size_t i = 0; i < u.size(); ++i) {
        const std::string w = "ugv[" + std::to_string(i) + "]";
        UGVParams p;
        p.C = io::number(u[i], "C", w);
        p.D = io::number(u[i], "D", w);
        const Vector q0 = io::vector_from_json(io::require(u[i], "q0", w), w + ".q0");
        const Vector v0 = io::vector_from_json(io::require(u[i], "v0", w), w + ".v0");
        if (q0.size() != 2 || v0.size() != 2) throw SchemaError(w + ": q0 and v0 must have 2 entries");
        p.q0 = q0;
        p.v0 = v0;
        sc.ugvs.push_back(p);
      }
      sc.system = build_ugv_scenario(sc.ugvs, topo);
    } else {
      const auto& ag = io::require(doc, "agents", "scenario");
      if (!ag.is_array() || ag.empty()) throw SchemaError("agents must be a non-empty array");
      sc.system.topology = topo;
      for (std::size_t i = 0; i < ag.size(); ++i) {
        const std::string w = "agents[" + std::to_string(i) + "]";
        sc.system.A.push_back(io::matrix_from_json(io::require(ag[i], "A", w), w + ".A"));
        sc.system.B.push_back(io::matrix_from_json(io::require(ag[i], "B", w), w + ".B"));
        sc.system.R.push_back(io::matrix_from_json(io::require(ag[i], "R", w), w + ".R"));
        sc.system.x0.push_back(io::vector_from_json(io::require(ag[i], "x0", w), w + ".x0"));
      }
    }
    const auto& wts = io::require(doc, "weights", "scenario");
    if (io::get_or(wts, "ring", false, "weights")) {
      sc.system.set_edge_weights_identity();
    } else {
      sc.identity_edge_weights = false;
      sc.system.weights.clear();
      const auto& ex = io::require(wts, "explicit", "weights");
      if (!ex.is_array()) throw SchemaError("weights.explicit must be an array");
      for (const auto& e : ex) {
        const int i = io::require(e, "i", "weights.explicit").get<int>() - 1;
        const int j = io::require(e, "j", "weights.explicit").get<int>() - 1;
        sc.system.weights[{i, j}] = io::matrix_from_json(io::require(e, "Q", "weights.explicit"), "weights.Q");
      }
    }
    sc.system.validate();
    build_Qtilde(sc.system);
  } catch (const SchemaError&) {
    throw;
  } catch (const json::exception& e) {
    throw SchemaError(e.what());
  } catch (const Error& e) {
    throw SchemaError(e.what());
  }

  if (doc.contains("are")) {
    const auto& a = doc.at("are");
    try {
      if (a.contains("init")) sc.are.init = parse_are_init(a.at("init").get<std::string>());
    } catch (const Error& e) {
      throw SchemaError(std::string("are: ") + e.what());
    }
    sc.are.max_consecutive_skips = io::get_or(a, "max_consecutive_skips", sc.are.max_consecutive_skips, "are");
  }
  if (doc.contains("simulation")) {
    const auto& s = doc.at("simulation");
    sc.T_sim = io::get_or(s, "T_sim", sc.T_sim, "simulation");
    sc.num_steps = io::get_or(s, "num_steps", sc.num_steps, "simulation");
    sc.consensus_tol = io::get_or(s, "consensus_tol", sc.consensus_tol, "simulation");
  }
  if (!(sc.T_sim > 0.0) || sc.num_steps < 2) throw SchemaError("simulation: need T_sim > 0 and num_steps >= 2");

  const auto n = sc.system.n(), m = sc.system.m();
  if (doc.contains("baseline")) {
    const auto& b = doc.at("baseline");
    if (b.contains("K")) {
      sc.baseline_K = io::matrix_from_json(b.at("K"), "baseline.K");
    } else if (b.contains("gains") && n == 4 && m == 2) {
      const auto& g = b.at("gains");
      const double kp = io::number(g, "kp", "baseline.gains"), kv = io::number(g, "kv", "baseline.gains");
      sc.baseline_K = Matrix::Zero(2, 4);
      sc.baseline_K.block(0, 0, 2, 2) = kp * Matrix::Identity(2, 2);
      sc.baseline_K.block(0, 2, 2, 2) = kv * Matrix::Identity(2, 2);
    } else {
      throw SchemaError("baseline: expected K (m x n) or gains {kp, kv}");
    }
    if (sc.baseline_K.rows() != m || sc.baseline_K.cols() != n) throw SchemaError("baseline.K must be m x n");
  }
  if (doc.contains("cases")) {
    if (sc.ugvs.empty()) throw SchemaError("cases need a fleet given as ugv parameters");
    for (const auto& c : doc.at("cases")) {
      ConsensusCase cc;
      cc.name = io::get_or<std::string>(c, "name", "case " + std::to_string(sc.cases.size() + 1), "cases");
      cc.C = io::number(c, "C", "cases");
      cc.D = io::number(c, "D", "cases");
      if (c.contains("reference_J")) cc.reference_J = io::number(c, "reference_J", "cases");
      if (c.contains("reference_J_baseline"))
        cc.reference_J_baseline = io::number(c, "reference_J_baseline", "cases");
      sc.cases.push_back(cc);
    }
  }
  sc.case_mode = io::get_or<std::string>(doc, "case_mode", sc.case_mode, "scenario");
  if (sc.case_mode != "homogeneous" && sc.case_mode != "first_agent")
    throw SchemaError("case_mode must be \"homogeneous\" or \"first_agent\"");
  if (doc.contains("controller_mode"))
    sc.controller_mode = parse_controller_mode(doc.at("controller_mode").get<std::string>());
  if (doc.contains("reference")) {
    const auto& r = doc.at("reference");
    if (r.contains("P_norm")) sc.reference_P_norm = io::number(r, "P_norm", "reference");
    if (r.contains("agent_P_norms")) sc.reference_agent_P_norms = r.at("agent_P_norms").get<std::vector<double>>();
  }
  return sc;
}

inline json ugv_scenario_to_json(const UGVScenario& sc) {
  json doc;
  if (!sc.name.empty()) doc["name"] = sc.name;
  if (!sc.ugvs.empty()) {
    json u = json::array();
    for (const auto& p : sc.ugvs)
      u.push_back({{"C", p.C}, {"D", p.D}, {"q0", {p.q0(0), p.q0(1)}}, {"v0", {p.v0(0), p.v0(1)}}});
    doc["ugv"] = u;
  } else {
    json ag = json::array();
    for (int i = 0; i < sc.system.N(); ++i)
      ag.push_back({{"A", io::to_json(sc.system.A[i])},
                    {"B", io::to_json(sc.system.B[i])},
                    {"R", io::to_json(sc.system.R[i])},
                    {"x0", io::to_json(sc.system.x0[i])}});
    doc["agents"] = ag;
  }
  doc["topology"] = topology_to_json(sc.system.topology);
  if (sc.identity_edge_weights) {
    doc["weights"] = {{"ring", true}};
  } else {
    json ex = json::array();
    for (const auto& [ij, Q] : sc.system.weights) ex.push_back({{"i", ij.first + 1}, {"j", ij.second + 1}, {"Q", io::to_json(Q)}});
    doc["weights"] = {{"explicit", ex}};
  }
  doc["schedule"] = schedule_to_json(sc.schedule);
  doc["are"] = {{"init", to_string(sc.are.init)}, {"max_consecutive_skips", sc.are.max_consecutive_skips}};
  doc["simulation"] = {{"T_sim", sc.T_sim}, {"num_steps", sc.num_steps}, {"consensus_tol", sc.consensus_tol}};
  if (sc.baseline_K.size()) doc["baseline"] = {{"K", io::to_json(sc.baseline_K)}};
  if (!sc.cases.empty()) {
    json cs = json::array();
    for (const auto& c : sc.cases) {
      json e = {{"name", c.name}, {"C", c.C}, {"D", c.D}};
      if (c.reference_J) e["reference_J"] = *c.reference_J;
      if (c.reference_J_baseline) e["reference_J_baseline"] = *c.reference_J_baseline;
      cs.push_back(e);
    }
    doc["cases"] = cs;
  }
  doc["case_mode"] = sc.case_mode;
  doc["controller_mode"] = to_string(sc.controller_mode);
  json ref = json::object();
  if (sc.reference_P_norm) ref["P_norm"] = *sc.reference_P_norm;
  if (!sc.reference_agent_P_norms.empty()) ref["agent_P_norms"] = sc.reference_agent_P_norms;
  if (!ref.empty()) doc["reference"] = ref;
  return doc;
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open scenario file " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError("scenario " + path + " is not valid JSON: " + e.what());
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

/// Header row, then one line per grid node with t first; 17 significant digits.
inline std::string trajectory_csv(const TimeGrid& grid, const std::vector<std::string>& columns,
                                  const std::function<Vector(int)>& row) {
  std::ostringstream os;
  os << "t";
  for (const auto& c : columns) os << ',' << c;
  os << '\n';
  for (int j = 0; j < grid.num_nodes(); ++j) {
    os << io::fmt17(grid.time(j));
    const Vector v = row(j);
    for (Eigen::Index k = 0; k < v.size(); ++k) os << ',' << io::fmt17(v(k));
    os << '\n';
  }
  return os.str();
}

inline std::vector<std::string> numbered_columns(const std::string& prefix, Eigen::Index count) {
  std::vector<std::string> c;
  for (Eigen::Index k = 1; k <= count; ++k) c.push_back(prefix + std::to_string(k));
  return c;
}

inline std::string vector_trajectory_csv(const VectorTrajectory& x, const std::string& prefix) {
  return trajectory_csv(x.grid(), numbered_columns(prefix, x.rows()), [&](int j) { return x[j]; });
}

inline std::string matrix_norm_csv(const MatrixTrajectory& P) {
  return trajectory_csv(P.grid(), {"P_norm"}, [&](int j) { return Vector::Constant(1, spectral_norm(P[j])); });
}

inline std::string diagnostics_csv(const ConsensusDiagnostics& d) {
  std::ostringstream os;
  os << "round,quantity,delta_consensus,delta_mean\n";
  for (const auto& r : d.records())
    os << r.round << ',' << r.quantity << ',' << io::fmt17(r.delta_consensus) << ',' << io::fmt17(r.delta_mean)
       << '\n';
  return os.str();
}

}  // namespace distlq
