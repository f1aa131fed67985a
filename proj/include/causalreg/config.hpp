#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "causalreg/harness.hpp"
#include "causalreg/sweep.hpp"

namespace causalreg {

// Config files are sectioned key-value text:
//
//   # comment
//   [dataset]
//   shift = causal
//   [model]
//   lr = 0.001
//
// Sections: dataset, model, penalty, sweep, experiment. Every key can be
// overridden by the environment variable CAUSALREG_<SECTION>_<KEY> (upper
// case) and then by explicit "section.key=value" overrides.

/// section -> key -> raw value.
using ConfigValues = std::map<std::string, std::map<std::string, std::string>>;

/// Known sections and keys with their default values.
[[nodiscard]] const ConfigValues& config_schema();

/// Throws ParseError on malformed lines and on unknown sections or keys.
[[nodiscard]] ConfigValues parse_config(std::istream& in);
[[nodiscard]] ConfigValues load_config(const std::filesystem::path& path);

/// Sets "section.key" after checking it against the schema.
void set_config_value(ConfigValues& values, std::string_view dotted_key, std::string value);
/// "section.key=value".
void apply_override(ConfigValues& values, std::string_view assignment);

using EnvLookup = std::function<std::optional<std::string>(const std::string& name)>;
/// Applies CAUSALREG_<SECTION>_<KEY> for every schema key that is set.
void apply_env_overrides(ConfigValues& values, const EnvLookup& lookup);
/// std::getenv-backed lookup.
[[nodiscard]] EnvLookup process_env();
[[nodiscard]] std::string env_var_name(std::string_view section, std::string_view key);

/// Every schema key, defaults filled in, sections and keys sorted.
[[nodiscard]] std::string canonical_text(const ConfigValues& values);
/// FNV-1a 64 of canonical_text, 16 lower-case hex digits.
[[nodiscard]] std::string config_hash(const ConfigValues& values);

struct ExperimentSettings {
    std::vector<ShiftType> shifts;
    std::vector<double> lambdas;
    ShiftType lambda_shift = ShiftType::Causal;
    /// penalty.kernel and penalty.gamma, used by the constraint experiments.
    KernelConfig kernel;
};

struct RunConfig {
    TrainConfig train;
    SweepConfig sweep;
    ExperimentSettings experiment;
};

/// Starts from slab_train_config(dataset.shift, dataset.rows_per_env) and
/// applies every key. `shift` replaces dataset.shift when given. Throws
/// ValidationError naming the key on bad values.
[[nodiscard]] RunConfig build_run_config(const ConfigValues& values, std::optional<ShiftType> shift = std::nullopt);

}  // namespace causalreg
