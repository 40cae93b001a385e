#include "derl/io.hpp"

#include "derl/mdp.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <sstream>

namespace derl {

using nlohmann::json;

namespace {

[[noreturn]] void schema_error(const std::string& pointer, const std::string& message) {
  throw ConfigError(ConfigError::Kind::Schema, pointer, message);
}

json parse_text(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ConfigError(ConfigError::Kind::Parse, "", e.what());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(ConfigError::Kind::Io, "", "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError(ConfigError::Kind::Io, "", "cannot write " + path.string());
  out << text;
}

double number_at(const json& node, const std::string& pointer) {
  if (!node.is_number()) schema_error(pointer, "expected a number");
  return node.get<double>();
}

Index positive_int_at(const json& node, const std::string& pointer) {
  if (!node.is_number_integer() || node.get<std::int64_t>() <= 0) schema_error(pointer, "expected a positive integer");
  return static_cast<Index>(node.get<std::int64_t>());
}

const json& array_at(const json& node, const std::string& pointer, Index length) {
  if (!node.is_array()) schema_error(pointer, "expected an array");
  if (static_cast<Index>(node.size()) != length)
    schema_error(pointer, "expected " + std::to_string(length) + " entries, found " + std::to_string(node.size()));
  return node;
}

Eigen::MatrixXd matrix_at(const json& node, const std::string& pointer, Index rows, Index cols) {
  Eigen::MatrixXd m(rows, cols);
  array_at(node, pointer, rows);
  for (Index i = 0; i < rows; ++i) {
    const std::string pi = pointer + "/" + std::to_string(i);
    array_at(node[i], pi, cols);
    for (Index j = 0; j < cols; ++j) m(i, j) = number_at(node[i][j], pi + "/" + std::to_string(j));
  }
  return m;
}

const json& member(const json& obj, const char* key, const std::string& prefix = "") {
  if (!obj.contains(key)) schema_error(prefix + "/" + key, "required field is missing");
  return obj.at(key);
}

std::string pointer_for(const Violation& v) {
  std::string field = v.field == "discount" ? "gamma" : v.field;
  std::string out = "/" + field;
  for (Index i : v.index) out += "/" + std::to_string(i);
  return out;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace

void validate_bundle(const MdpBundle& bundle) {
  for (const auto& v : validate_mdp(bundle.mdp))
    throw ConfigError(ConfigError::Kind::Validation, pointer_for(v), v.message);
  for (const auto& v : validate_policy(bundle.reference, "reference_policy"))
    throw ConfigError(ConfigError::Kind::Validation, pointer_for(v), v.message);
  for (Index x = 0; x < bundle.reference.probs.rows(); ++x)
    if (!(bundle.reference.probs.row(x).maxCoeff() > 0))
      throw ConfigError(ConfigError::Kind::Validation, "/reference_policy/" + std::to_string(x), "empty support");
  const auto& nu0 = bundle.initial_dist;
  for (Index x = 0; x < nu0.size(); ++x)
    if (!std::isfinite(nu0(x)) || nu0(x) < 0)
      throw ConfigError(ConfigError::Kind::Validation, "/initial_dist/" + std::to_string(x),
                        "probability must be finite and nonnegative");
  if (!(std::abs(nu0.sum() - 1) <= stochastic_tolerance<double>()))
    throw ConfigError(ConfigError::Kind::Validation, "/initial_dist", "does not sum to 1");
}

MdpBundle parse_mdp(std::string_view text) {
  const json doc = parse_text(text);
  if (!doc.is_object()) schema_error("", "expected a JSON object");

  MdpBundle b;
  auto& m = b.mdp;
  m.n_states = positive_int_at(member(doc, "n_states"), "/n_states");
  m.n_actions = positive_int_at(member(doc, "n_actions"), "/n_actions");
  m.discount = number_at(member(doc, "gamma"), "/gamma");
  m.reward = matrix_at(member(doc, "reward"), "/reward", m.n_states, m.n_actions);

  const json& p = array_at(member(doc, "transition"), "/transition", m.n_states);
  m.transition.resize(m.n_pairs(), m.n_states);
  for (Index x = 0; x < m.n_states; ++x)
    m.transition.middleRows(x * m.n_actions, m.n_actions) =
        matrix_at(p[x], "/transition/" + std::to_string(x), m.n_actions, m.n_states);

  b.reference = doc.contains("reference_policy")
                    ? Policy<double>{matrix_at(doc["reference_policy"], "/reference_policy", m.n_states, m.n_actions)}
                    : Policy<double>::uniform(m.n_states, m.n_actions);
  if (doc.contains("initial_dist")) {
    b.initial_dist = matrix_at(json::array({doc["initial_dist"]}), "/initial_dist", 1, m.n_states).row(0).transpose();
  } else {
    b.initial_dist = Eigen::VectorXd::Constant(m.n_states, 1.0 / static_cast<double>(m.n_states));
  }
  validate_bundle(b);
  return b;
}

MdpBundle load_mdp(const std::filesystem::path& path) { return parse_mdp(read_file(path)); }

std::string mdp_to_json(const MdpBundle& b) {
  const auto& m = b.mdp;
  json doc;
  doc["n_states"] = m.n_states;
  doc["n_actions"] = m.n_actions;
  doc["gamma"] = m.discount;
  doc["reward"] = matrix_json(m.reward);
  json p = json::array();
  for (Index x = 0; x < m.n_states; ++x) p.push_back(matrix_json(m.transition.middleRows(x * m.n_actions, m.n_actions)));
  doc["transition"] = std::move(p);
  doc["reference_policy"] = matrix_json(b.reference.probs);
  doc["initial_dist"] = matrix_json(b.initial_dist.transpose())[0];
  return doc.dump(2) + "\n";
}

void save_mdp(const MdpBundle& bundle, const std::filesystem::path& path) { write_file(path, mdp_to_json(bundle)); }

std::string format_real(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, std::vector<std::string> header) : columns_(header.size()) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::binary);
  if (!out_) throw ConfigError(ConfigError::Kind::Io, "", "cannot write " + path.string());
  bool first = true;
  for (const auto& h : header) write_field(h, first);
  out_ << '\n';
}

void ExperimentConfig::validate() const {
  auto fail = [](const char* pointer, const char* message) {
    throw ConfigError(ConfigError::Kind::Validation, pointer, message);
  };
  if (mdp_path && builtin) fail("/builtin", "give either mdp_path or builtin, not both");
  if (temperatures.empty()) fail("/temperatures", "temperature ladder must not be empty");
  for (std::size_t i = 0; i < temperatures.size(); ++i) {
    if (!(temperatures[i] > 0) || !std::isfinite(temperatures[i])) fail("/temperatures", "temperatures must be positive");
    if (i > 0 && !(temperatures[i] < temperatures[i - 1])) fail("/temperatures", "temperatures must strictly decrease");
  }
  if (!(decouple_exponent > 0)) fail("/decouple_exponent", "must be positive");
  if (n_control < 1) fail("/n_control", "must be at least 1");
  if (n_eval < 1) fail("/n_eval", "must be at least 1");
  if (grid && grid->count < 2) fail("/grid/count", "must be at least 2");
  if (grid && !(grid->min < grid->max)) fail("/grid", "min must be below max");
  if (!(solver_tolerance > 0)) fail("/solver_tolerance", "must be positive");
  if (sql_steps < 0) fail("/sql_steps", "must be nonnegative");
  if (mc_rollouts < 1) fail("/mc_rollouts", "must be at least 1");
}

ExperimentConfig parse_config(std::string_view text) {
  const json doc = parse_text(text);
  if (!doc.is_object()) schema_error("", "expected a JSON object");
  ExperimentConfig cfg;
  auto integer = [&](const char* key, auto& field) {
    if (!doc.contains(key)) return;
    if (!doc[key].is_number_integer()) schema_error(std::string("/") + key, "expected an integer");
    field = doc[key].get<std::decay_t<decltype(field)>>();
  };
  auto string = [&](const char* key) -> std::optional<std::string> {
    if (!doc.contains(key)) return std::nullopt;
    if (!doc[key].is_string()) schema_error(std::string("/") + key, "expected a string");
    return doc[key].get<std::string>();
  };
  if (auto s = string("mdp_path")) cfg.mdp_path = *s;
  cfg.builtin = string("builtin");
  if (auto s = string("output_dir")) cfg.output_dir = *s;
  if (doc.contains("temperatures")) {
    const json& t = doc["temperatures"];
    if (!t.is_array()) schema_error("/temperatures", "expected an array");
    for (std::size_t i = 0; i < t.size(); ++i) cfg.temperatures.push_back(number_at(t[i], "/temperatures/" + std::to_string(i)));
  }
  if (doc.contains("decouple_exponent")) cfg.decouple_exponent = number_at(doc["decouple_exponent"], "/decouple_exponent");
  if (doc.contains("solver_tolerance")) cfg.solver_tolerance = number_at(doc["solver_tolerance"], "/solver_tolerance");
  integer("n_control", cfg.n_control);
  integer("n_eval", cfg.n_eval);
  integer("seed", cfg.seed);
  integer("sql_steps", cfg.sql_steps);
  integer("mc_rollouts", cfg.mc_rollouts);
  if (doc.contains("grid")) {
    const json& g = doc["grid"];
    if (!g.is_object()) schema_error("/grid", "expected an object");
    GridSpec spec;
    spec.min = number_at(member(g, "min", "/grid"), "/grid/min");
    spec.max = number_at(member(g, "max", "/grid"), "/grid/max");
    if (!member(g, "count", "/grid").is_number_integer()) schema_error("/grid/count", "expected an integer");
    spec.count = static_cast<Index>(g["count"].get<std::int64_t>());
    cfg.grid = spec;
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  ExperimentConfig cfg = parse_config(read_file(path));
  if (cfg.mdp_path && cfg.mdp_path->is_relative()) cfg.mdp_path = path.parent_path() / *cfg.mdp_path;
  return cfg;
}

std::vector<double> decade_ladder(int first_exponent, int last_exponent, int stride) {
  std::vector<double> out;
  for (int e = first_exponent; e <= last_exponent; e += stride) out.push_back(std::stod("1e-" + std::to_string(e)));  // exact decimal literal
  return out;
}

}  // namespace derl
