// Copyright 2026 The fasd Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace fasd::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,  // numerical failure (e.g. a diverged fit)
  kExitUsage = 2,    // bad flags or config
  kExitIo = 3,
  kExitProvider = 4,
};

inline constexpr int kConfigVersion = 1;

/// Invalid run configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

const std::vector<std::string>& command_names();

/// Every key a command's config may hold, with its default value.
nlohmann::json default_config(const std::string& command);

/// Merges `user` over the defaults. Unknown keys, type mismatches, a wrong
/// "command" or a "config_version" other than 1 throw ConfigError.
nlohmann::json resolve_config(const std::string& command, const nlohmann::json& user);

/// Runs one command line (args excludes the program name). The run
/// directory given by --out must not exist; it receives config.json with
/// the resolved configuration and the command's artifacts.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fasd::cli
