#pragma once

#include <string>
#include <vector>

namespace nova {

// Entry point shared by the nova binary and the CLI tests. argv excludes
// the program name. Exit codes: 0 ok, 2 usage error, 3 data error,
// 4 numeric failure.
int cli_main(const std::vector<std::string>& argv);

}  // namespace nova
