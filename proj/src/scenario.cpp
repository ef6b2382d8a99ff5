#include "ecut_mppi/scenario.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

namespace ecut_mppi {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw ScenarioError(path.empty() ? what : path + ": " + what);
}

std::string indexed(const std::string& path, const char* key, int i) {
  return path.empty() ? std::string(key) + "[" + std::to_string(i) + "]"
                      : path + "." + key + "[" + std::to_string(i) + "]";
}

/// Wraps one JSON object, tracks which keys were consumed and reports the
/// first unknown one with its full field path.
class ObjectReader {
 public:
  ObjectReader(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) fail(path_, "expected an object");
  }

  bool has(const char* key) const { return node_.contains(key) && !node_[key].is_null(); }

  const json& raw(const char* key) {
    consumed_.insert(key);
    return node_.at(key);
  }

  std::string key_path(const char* key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  double number(const char* key, double fallback) {
    if (!take(key)) return fallback;
    const json& v = node_.at(key);
    if (!v.is_number()) fail(key_path(key), "expected a number");
    return v.get<double>();
  }

  int integer(const char* key, int fallback) {
    if (!take(key)) return fallback;
    const json& v = node_.at(key);
    if (!v.is_number_integer()) fail(key_path(key), "expected an integer");
    return v.get<int>();
  }

  std::string text(const char* key, const std::string& fallback) {
    if (!take(key)) return fallback;
    const json& v = node_.at(key);
    if (!v.is_string()) fail(key_path(key), "expected a string");
    return v.get<std::string>();
  }

  Vec2 vec2(const char* key, const Vec2& fallback) {
    if (!take(key)) return fallback;
    return read_vec2(node_.at(key), key_path(key));
  }

  /// Nested object; returns false if the key is absent.
  bool child(const char* key, const std::function<void(ObjectReader&)>& body) {
    if (!take(key)) return false;
    ObjectReader sub(node_.at(key), key_path(key));
    body(sub);
    sub.done();
    return true;
  }

  /// Array of elements; `body` receives each element and its path.
  bool array(const char* key, const std::function<void(const json&, const std::string&)>& body) {
    if (!take(key)) return false;
    const json& v = node_.at(key);
    if (!v.is_array()) fail(key_path(key), "expected an array");
    for (int i = 0; i < static_cast<int>(v.size()); ++i) {
      body(v[i], indexed(path_, key, i));
    }
    return true;
  }

  void done() const {
    for (const auto& item : node_.items()) {
      if (!consumed_.count(item.key())) {
        fail(path_.empty() ? item.key() : path_ + "." + item.key(), "unknown key");
      }
    }
  }

  static Vec2 read_vec2(const json& v, const std::string& path) {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
      fail(path, "expected an array of two numbers");
    }
    return Vec2(v[0].get<double>(), v[1].get<double>());
  }

 private:
  bool take(const char* key) {
    consumed_.insert(key);
    return node_.contains(key) && !node_[key].is_null();
  }

  const json& node_;
  std::string path_;
  std::set<std::string> consumed_;
};

template <typename Enum>
Enum parse_enum(const std::string& value, const std::string& path,
                std::initializer_list<std::pair<const char*, Enum>> table) {
  std::string options;
  for (const auto& [name, item] : table) {
    if (value == name) return item;
    if (!options.empty()) options += ", ";
    options += name;
  }
  fail(path, "invalid value '" + value + "' (expected one of: " + options + ")");
}

const char* to_string(RobotModel m) {
  return m == RobotModel::kSingleIntegrator ? "single_integrator" : "unicycle";
}
const char* to_string(NoiseScaling s) {
  return s == NoiseScaling::kStep ? "step" : "sqrt_step";
}
const char* to_string(PlannerKind k) {
  return k == PlannerKind::kEcut ? "ecut" : "mc_baseline";
}
const char* to_string(SwitchingPolicy p) {
  switch (p) {
    case SwitchingPolicy::kPerSigmaPoint: return "per_sigma_point";
    case SwitchingPolicy::kMeanBased: return "mean_based";
    default: return "unaware";
  }
}

ordered_json dump_vec2(const Vec2& v) { return ordered_json::array({v.x(), v.y()}); }

void require_finite(const Vec2& v, const std::string& path) {
  if (!v.allFinite()) fail(path, "must be finite");
}

Scenario from_json(const json& doc) {
  Scenario s;
  ObjectReader top(doc, "");

  if (!top.has("schema_version")) fail("schema_version", "missing required key");
  s.schema_version = top.integer("schema_version", 1);
  if (s.schema_version != 1) fail("schema_version", "unsupported version (expected 1)");

  s.name = top.text("name", s.name);
  s.dt = top.number("dt", s.dt);
  s.episode_steps = top.integer("episode_steps", s.episode_steps);
  s.goal_tolerance = top.number("goal_tolerance", s.goal_tolerance);
  s.goal = top.vec2("goal", s.goal);

  top.child("robot", [&](ObjectReader& r) {
    s.robot_model = parse_enum<RobotModel>(
        r.text("model", to_string(s.robot_model)), r.key_path("model"),
        {{"single_integrator", RobotModel::kSingleIntegrator}, {"unicycle", RobotModel::kUnicycle}});
    s.robot_start.position = r.vec2("start", s.robot_start.position);
    s.robot_start.heading = r.number("heading", s.robot_start.heading);
    s.robot_radius = r.number("radius", s.robot_radius);
  });

  top.array("obstacles", [&](const json& node, const std::string& path) {
    ObjectReader o(node, path);
    Obstacle ob;
    ob.center = o.vec2("center", Vec2::Zero());
    ob.radius = o.number("radius", 0.0);
    o.done();
    if (!(ob.radius >= 0.0) || !std::isfinite(ob.radius)) fail(path + ".radius", "must be >= 0");
    require_finite(ob.center, path + ".center");
    s.obstacles.push_back(ob);
  });

  top.child("agents", [&](ObjectReader& a) {
    s.agent_radius = a.number("radius", s.agent_radius);
    s.sensing_radius = a.number("sensing_radius", s.sensing_radius);
    s.nominal_velocity = a.vec2("nominal_velocity", s.nominal_velocity);
    a.child("disturbance", [&](ObjectReader& d) {
      s.disturbance.alpha = d.number("alpha", s.disturbance.alpha);
      s.disturbance.beta = d.number("beta", s.disturbance.beta);
    });
    a.child("potential_field", [&](ObjectReader& f) {
      s.field.gain = f.number("gain", s.field.gain);
      s.field.cutoff = f.number("cutoff", s.field.cutoff);
      s.field.max_speed = f.number("max_speed", s.field.max_speed);
    });
    s.noise_scaling = parse_enum<NoiseScaling>(
        a.text("noise_scaling", to_string(s.noise_scaling)), a.key_path("noise_scaling"),
        {{"step", NoiseScaling::kStep}, {"sqrt_step", NoiseScaling::kSqrtStep}});
    a.array("start_positions", [&](const json& node, const std::string& path) {
      s.agent_starts.push_back(ObjectReader::read_vec2(node, path));
    });
  });

  top.child("ground_truth", [&](ObjectReader& g) {
    s.ground_truth.sample_noise =
        parse_enum<bool>(g.text("noise", s.ground_truth.sample_noise ? "sample" : "none"),
                         g.key_path("noise"), {{"sample", true}, {"none", false}});
  });

  top.child("belief", [&](ObjectReader& b) {
    s.belief.position_stddev = b.number("position_stddev", s.belief.position_stddev);
  });

  top.child("planner", [&](ObjectReader& p) {
    s.planner_kind = parse_enum<PlannerKind>(
        p.text("kind", to_string(s.planner_kind)), p.key_path("kind"),
        {{"ecut", PlannerKind::kEcut}, {"mc_baseline", PlannerKind::kMcBaseline}});
    s.planner.horizon = p.integer("horizon", s.planner.horizon);
    s.planner.samples = p.integer("samples", s.planner.samples);
    s.planner.lambda = p.number("lambda", s.planner.lambda);
    s.planner.control_cost_weight = p.number("control_cost_weight", s.planner.control_cost_weight);
    s.planner.goal_weight = p.number("goal_weight", s.planner.goal_weight);
    s.planner.agent_risk_weight = p.number("agent_risk_weight", s.planner.agent_risk_weight);
    s.planner.obstacle_risk_weight =
        p.number("obstacle_risk_weight", s.planner.obstacle_risk_weight);
    s.planner.risk_sigma_gain = p.number("risk_sigma_gain", s.planner.risk_sigma_gain);
    s.planner.safety_margin = p.number("safety_margin", s.planner.safety_margin);
    s.planner.distance_floor = p.number("distance_floor", s.planner.distance_floor);
    if (p.has("noise_std") && p.has("noise_covariance")) {
      fail(p.key_path("noise_std"), "give either noise_std or noise_covariance, not both");
    }
    if (p.has("noise_std")) {
      const double sd = p.number("noise_std", 0.0);
      if (!(sd > 0.0)) fail(p.key_path("noise_std"), "must be > 0");
      s.planner.noise_covariance = sd * sd * Eigen::Matrix2d::Identity();
    } else if (p.has("noise_covariance")) {
      const json& m = p.raw("noise_covariance");
      const std::string path = p.key_path("noise_covariance");
      if (!m.is_array() || m.size() != 2) fail(path, "expected a 2x2 matrix");
      for (int r = 0; r < 2; ++r) {
        const Vec2 row = ObjectReader::read_vec2(m[r], path + "[" + std::to_string(r) + "]");
        s.planner.noise_covariance.row(r) = row.transpose();
      }
    }
    s.planner.switching = parse_enum<SwitchingPolicy>(
        p.text("switching", to_string(s.planner.switching)), p.key_path("switching"),
        {{"per_sigma_point", SwitchingPolicy::kPerSigmaPoint},
         {"mean_based", SwitchingPolicy::kMeanBased},
         {"unaware", SwitchingPolicy::kUnaware}});
    s.planner.mc_replicas = p.integer("mc_replicas", s.planner.mc_replicas);
    s.planner.seed = static_cast<uint64_t>(p.integer("seed", static_cast<int>(s.planner.seed)));
    s.planner.threads = p.integer("threads", s.planner.threads);
    const double kappa = p.number("kappa", std::numeric_limits<double>::quiet_NaN());
    if (!std::isnan(kappa)) s.planner.ut.kappa = kappa;
    p.child("control_bounds", [&](ObjectReader& b) {
      ControlBounds bounds;
      bounds.lower = b.vec2("lower", bounds.lower);
      bounds.upper = b.vec2("upper", bounds.upper);
      s.planner.control_bounds = bounds;
    });
  });

  top.done();
  finalize(s);
  return s;
}

}  // namespace

Scenario parse_scenario(const std::string& text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ScenarioError(origin + ": invalid JSON: " + e.what());
  }
  try {
    return from_json(doc);
  } catch (const ScenarioError& e) {
    throw ScenarioError(origin + ": " + e.what());
  }
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioError("cannot open scenario file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str(), path);
}

void finalize(Scenario& scenario) {
  Scenario& s = scenario;
  if (s.schema_version != 1) fail("schema_version", "unsupported version (expected 1)");
  if (!(s.dt > 0.0) || !std::isfinite(s.dt)) fail("dt", "must be > 0");
  if (s.episode_steps < 1) fail("episode_steps", "must be >= 1");
  if (!(s.goal_tolerance > 0.0) || !std::isfinite(s.goal_tolerance)) {
    fail("goal_tolerance", "must be > 0");
  }
  if (!(s.robot_radius >= 0.0) || !std::isfinite(s.robot_radius)) {
    fail("robot.radius", "must be >= 0");
  }
  require_finite(s.robot_start.position, "robot.start");
  if (!std::isfinite(s.robot_start.heading)) fail("robot.heading", "must be finite");
  require_finite(s.goal, "goal");
  for (int i = 0; i < static_cast<int>(s.obstacles.size()); ++i) {
    const std::string path = indexed("", "obstacles", i);
    require_finite(s.obstacles[i].center, path + ".center");
    if (!(s.obstacles[i].radius >= 0.0)) fail(path + ".radius", "must be >= 0");
  }
  if (!(s.agent_radius >= 0.0) || !std::isfinite(s.agent_radius)) {
    fail("agents.radius", "must be >= 0");
  }
  if (!(s.sensing_radius > 0.0) || !std::isfinite(s.sensing_radius)) {
    fail("agents.sensing_radius", "must be > 0");
  }
  require_finite(s.nominal_velocity, "agents.nominal_velocity");
  if (!(s.disturbance.alpha >= 0.0)) fail("agents.disturbance.alpha", "must be >= 0");
  if (!(s.disturbance.beta > 0.0)) fail("agents.disturbance.beta", "must be > 0");
  if (!(s.field.gain >= 0.0)) fail("agents.potential_field.gain", "must be >= 0");
  if (!(s.field.cutoff > 0.0)) fail("agents.potential_field.cutoff", "must be > 0");
  if (!(s.field.max_speed > 0.0)) fail("agents.potential_field.max_speed", "must be > 0");
  for (int i = 0; i < static_cast<int>(s.agent_starts.size()); ++i) {
    const std::string path = indexed("agents", "start_positions", i);
    require_finite(s.agent_starts[i], path);
    if ((s.agent_starts[i] - s.robot_start.position).norm() <= 1e-9) {
      fail(path, "coincides with the robot start position");
    }
  }
  if (!(s.belief.position_stddev >= 0.0) || !std::isfinite(s.belief.position_stddev)) {
    fail("belief.position_stddev", "must be >= 0");
  }

  s.planner.dt = s.dt;
  s.planner.robot_model = s.robot_model;
  s.planner.robot_radius = s.robot_radius;
  s.planner.prediction = s.planner_kind == PlannerKind::kMcBaseline
                             ? PredictionMode::kMonteCarlo
                             : PredictionMode::kSigmaPoints;
  try {
    validate(s.planner);
  } catch (const std::invalid_argument& e) {
    fail("planner", e.what());
  }
}

std::string scenario_echo(const Scenario& s) {
  ordered_json doc;
  doc["schema_version"] = s.schema_version;
  doc["name"] = s.name;
  doc["dt"] = s.dt;
  doc["episode_steps"] = s.episode_steps;
  doc["goal_tolerance"] = s.goal_tolerance;
  doc["robot"] = {{"model", to_string(s.robot_model)},
                  {"start", dump_vec2(s.robot_start.position)},
                  {"heading", s.robot_start.heading},
                  {"radius", s.robot_radius}};
  doc["goal"] = dump_vec2(s.goal);
  doc["obstacles"] = ordered_json::array();
  for (const Obstacle& ob : s.obstacles) {
    doc["obstacles"].push_back({{"center", dump_vec2(ob.center)}, {"radius", ob.radius}});
  }
  ordered_json starts = ordered_json::array();
  for (const Vec2& a : s.agent_starts) starts.push_back(dump_vec2(a));
  doc["agents"] = {{"radius", s.agent_radius},
                   {"sensing_radius", s.sensing_radius},
                   {"nominal_velocity", dump_vec2(s.nominal_velocity)},
                   {"disturbance", {{"alpha", s.disturbance.alpha}, {"beta", s.disturbance.beta}}},
                   {"potential_field",
                    {{"gain", s.field.gain},
                     {"cutoff", s.field.cutoff},
                     {"max_speed", s.field.max_speed}}},
                   {"noise_scaling", to_string(s.noise_scaling)},
                   {"start_positions", starts}};
  doc["ground_truth"] = {{"noise", s.ground_truth.sample_noise ? "sample" : "none"}};
  doc["belief"] = {{"position_stddev", s.belief.position_stddev}};
  ordered_json planner;
  planner["kind"] = to_string(s.planner_kind);
  planner["horizon"] = s.planner.horizon;
  planner["samples"] = s.planner.samples;
  planner["lambda"] = s.planner.lambda;
  planner["control_cost_weight"] = s.planner.control_cost_weight;
  planner["noise_covariance"] = {dump_vec2(s.planner.noise_covariance.row(0).transpose()),
                                 dump_vec2(s.planner.noise_covariance.row(1).transpose())};
  planner["goal_weight"] = s.planner.goal_weight;
  planner["agent_risk_weight"] = s.planner.agent_risk_weight;
  planner["obstacle_risk_weight"] = s.planner.obstacle_risk_weight;
  planner["risk_sigma_gain"] = s.planner.risk_sigma_gain;
  planner["safety_margin"] = s.planner.safety_margin;
  planner["distance_floor"] = s.planner.distance_floor;
  planner["switching"] = to_string(s.planner.switching);
  planner["mc_replicas"] = s.planner.mc_replicas;
  planner["seed"] = s.planner.seed;
  planner["threads"] = s.planner.threads;
  if (s.planner.ut.kappa.has_value()) {
    planner["kappa"] = *s.planner.ut.kappa;
  } else {
    planner["kappa"] = nullptr;
  }
  if (s.planner.control_bounds.has_value()) {
    planner["control_bounds"] = {{"lower", dump_vec2(s.planner.control_bounds->lower)},
                                 {"upper", dump_vec2(s.planner.control_bounds->upper)}};
  } else {
    planner["control_bounds"] = nullptr;
  }
  doc["planner"] = planner;
  return doc.dump(2) + "\n";
}

HybridAgentModel agent_model(const Scenario& s) {
  return make_attention_model(s.sensing_radius, s.nominal_velocity, s.disturbance, s.field,
                              s.noise_scaling, s.obstacles, s.agent_radius);
}

PlanningProblem base_problem(const Scenario& s) {
  PlanningProblem problem;
  problem.robot = s.robot_start;
  problem.goal = s.goal;
  problem.obstacles = s.obstacles;
  const HybridAgentModel model = agent_model(s);
  const Eigen::Matrix2d cov =
      s.belief.position_stddev * s.belief.position_stddev * Eigen::Matrix2d::Identity();
  problem.models.assign(s.agent_starts.size(), model);
  problem.beliefs.resize(s.agent_starts.size());
  for (std::size_t i = 0; i < s.agent_starts.size(); ++i) {
    problem.beliefs[i].mean = s.agent_starts[i];
    problem.beliefs[i].covariance = cov;
  }
  return problem;
}

Scenario with_switching(const Scenario& scenario, SwitchingPolicy policy) {
  Scenario out = scenario;
  out.planner.switching = policy;
  finalize(out);
  return out;
}

Scenario with_mc_baseline(const Scenario& scenario, int replicas) {
  Scenario out = scenario;
  out.planner_kind = PlannerKind::kMcBaseline;
  out.planner.mc_replicas = replicas;
  finalize(out);
  return out;
}

}  // namespace ecut_mppi
