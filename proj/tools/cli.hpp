#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace emadapt::cli {

// Exit status: 0 ok, 1 runtime failure, 2 usage error, 3 config error.
// Failures print one "error: <Code>: <message>" line on `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace emadapt::cli
