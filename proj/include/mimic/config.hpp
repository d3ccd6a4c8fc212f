// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0
//
// Flat key=value run configuration. Every key has a documented default; unknown
// keys are rejected. File syntax: one `key = value` per line, `#` starts a comment.

#pragma once

#include "mimic/renderer.hpp"
#include "mimic/student.hpp"
#include "mimic/teacher.hpp"
#include "mimic/trainer.hpp"

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace mimic {

/// Usage or configuration error; the CLI maps it to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigKey {
    std::string name;
    std::string default_value;
    std::string help;
};

/// All keys in documentation order.
const std::vector<ConfigKey>& config_keys();

class RunConfig {
public:
    RunConfig();

    /// Applies every `key = value` line of the file on top of the current values.
    void load_file(const std::string& path);
    void set(const std::string& key, const std::string& value);
    /// Parses `key=value`.
    void apply_override(const std::string& assignment);

    const std::string& get(const std::string& key) const;
    std::string get_string(const std::string& key) const { return get(key); }
    double get_double(const std::string& key) const;
    std::size_t get_size(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<double> get_list(const std::string& key) const;

    /// Throws ConfigError naming the key when its value is empty.
    void require(const std::string& key) const;

    /// Every key with its current value, one `key = value` line each, preceded by
    /// its help text as a comment.
    std::string dump() const;

private:
    std::map<std::string, std::string> values_;
};

OracleScene scene_from(const RunConfig& config);
InconsistencySpec inconsistency_from(const RunConfig& config);
OracleOptions oracle_options_from(const RunConfig& config);
StudentConfig student_from(const RunConfig& config);
RenderOptions render_options_from(const RunConfig& config);
FitConfig fit_from(const RunConfig& config);

}  // namespace mimic
