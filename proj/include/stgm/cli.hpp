// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: synth, train-m2s, train-s2v, generate, render,
// eval, verify, bench.
//
// Every command takes flat key=value settings from an optional --config file,
// overridden by --key value flags. Unknown keys are rejected. Each run writes
// run_header.txt (seed, config hash, format versions, resolved settings) into
// its output directory.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace stgm::cli {

enum ExitCode : int { kOk = 0, kValidation = 1, kRuntime = 2, kVerifyFailed = 3 };

/// Default data root when STGM_DATA_ROOT is unset.
inline constexpr const char* kDefaultDataRoot = "data";
inline constexpr const char* kDataRootEnv = "STGM_DATA_ROOT";

using Settings = std::map<std::string, std::string>;

/// Parses "key = value" lines; '#' starts a comment, blank lines are skipped.
/// ConfigError (naming `origin` and the line) on a line without '=' or a
/// repeated key.
Settings parse_settings(const std::string& text, const std::string& origin = "config");

/// 64-bit FNV-1a over "key=value\n" in key order, as 16 hex digits.
std::string settings_hash(const Settings& s);

/// Runs one command. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace stgm::cli
