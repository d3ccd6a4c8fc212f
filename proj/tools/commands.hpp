// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0
//
// Subcommands of the triplane-mimic tool. Each takes a resolved configuration and
// returns a process exit code; errors are reported on `err`.

#pragma once

#include "mimic/config.hpp"

#include <ostream>
#include <string>

namespace mimic::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;

int cmd_fit(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_render(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_mesh(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_eval(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_gradcheck(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Dispatches by name after applying `threads`. Configuration, usage and file
/// format errors give kExitUsage; any other failure gives kExitCheckFailed.
int run_command(const std::string& name, const RunConfig& config, std::ostream& out, std::ostream& err);

}  // namespace mimic::cli
