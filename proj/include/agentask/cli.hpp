#pragma once

#include <string>
#include <vector>

namespace agentask {

// exit codes: 0 success, 1 usage error, 2 data error, 3 training abort
int run_command(const std::vector<std::string>& args);

}  // namespace agentask
