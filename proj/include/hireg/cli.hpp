#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hireg::cli {

enum ExitCode : int {
  kOk = 0,
  kValidation = 1,
  kNoConsensus = 2,
  kNumerical = 3,
};

/// Entry point shared by the `hireg` binary and the tests. argv[0] is the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

}  // namespace hireg::cli
