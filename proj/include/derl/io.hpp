#pragma once

// MDP and experiment-config JSON files, plus the CSV writer shared by all
// experiment artifacts.

#include "derl/core.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace derl {

/// Config, schema, validation or I/O failure; `pointer` is a JSON pointer to the offending field.
class ConfigError : public std::runtime_error {
 public:
  enum class Kind { Io, Parse, Schema, Validation };

  ConfigError(Kind kind, std::string pointer, const std::string& message)
      : std::runtime_error(describe(kind, pointer, message)), kind_(kind), pointer_(std::move(pointer)) {}

  Kind kind() const noexcept { return kind_; }
  const std::string& pointer() const noexcept { return pointer_; }

 private:
  static std::string describe(Kind kind, const std::string& pointer, const std::string& message) {
    static const char* names[] = {"I/O error", "parse error", "schema error", "validation error"};
    std::string out = names[static_cast<int>(kind)];
    if (!pointer.empty()) out += " at " + pointer;
    return out + ": " + message;
  }

  Kind kind_;
  std::string pointer_;
};

/// An MDP together with its reference policy and initial state law.
struct MdpBundle {
  TabularMdp<double> mdp;
  Policy<double> reference;
  Eigen::VectorXd initial_dist;
};

/// Parses and validates the MDP JSON schema; throws ConfigError.
MdpBundle parse_mdp(std::string_view text);
MdpBundle load_mdp(const std::filesystem::path& path);

std::string mdp_to_json(const MdpBundle& bundle);
void save_mdp(const MdpBundle& bundle, const std::filesystem::path& path);

/// Runs validate_mdp and the policy/initial-law checks, throwing on the first violation.
void validate_bundle(const MdpBundle& bundle);

/// printf "%.17g": enough digits to round-trip any double.
std::string format_real(double value);

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, std::vector<std::string> header);

  template <typename... Fields>
  void row(const Fields&... fields) {
    if (sizeof...(Fields) != columns_) throw std::logic_error("CsvWriter: wrong number of fields");
    bool first = true;
    ((write_field(fields, first)), ...);
    out_ << '\n';
  }

 private:
  void write_field(double v, bool& first) { sep(first) << format_real(v); }
  void write_field(float v, bool& first) { write_field(static_cast<double>(v), first); }
  void write_field(const std::string& v, bool& first) { sep(first) << v; }
  void write_field(const char* v, bool& first) { sep(first) << v; }
  template <typename Int, std::enable_if_t<std::is_integral_v<Int>, int> = 0>
  void write_field(Int v, bool& first) {
    sep(first) << v;
  }
  std::ofstream& sep(bool& first) {
    if (!first) out_ << ',';
    first = false;
    return out_;
  }

  std::ofstream out_;
  std::size_t columns_;
};

struct GridSpec {
  double min = -2;
  double max = 8;
  Index count = 121;
};

struct ExperimentConfig {
  std::optional<std::filesystem::path> mdp_path;
  std::optional<std::string> builtin;
  std::vector<double> temperatures;  // strictly decreasing, all > 0
  double decouple_exponent = 2;      // sigma = tau^exponent
  int n_control = 1000;
  int n_eval = 1000;
  std::optional<GridSpec> grid;      // default: derived from the MDP's reward range
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";
  double solver_tolerance = 1e-12;
  std::int64_t sql_steps = 1'000'000;    // 0 disables soft Q-learning estimates
  std::int64_t mc_rollouts = 1'000'000;  // Monte-Carlo oracle size

  void validate() const;  // throws ConfigError::Validation
};

ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// 1e-1, 1e-2, ..., 1e-9.
std::vector<double> decade_ladder(int first_exponent = 1, int last_exponent = 9, int stride = 1);

}  // namespace derl
