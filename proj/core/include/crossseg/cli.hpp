#pragma once

#include <string>
#include <vector>

namespace crossseg {

struct CommandResult {
  int exit_code = 0;  // 0 success, 1 runtime failure, 2 usage/validation failure
  std::string summary;
  std::vector<std::string> artifact_paths;
};

// args exclude the program and subcommand names.
CommandResult cmd_synthgen(const std::vector<std::string>& args);
CommandResult cmd_train(const std::vector<std::string>& args);
CommandResult cmd_evaluate(const std::vector<std::string>& args);
CommandResult cmd_predict(const std::vector<std::string>& args);

// Full dispatcher used by the crossseg binary.
int run_cli(int argc, const char* const* argv);

}  // namespace crossseg
