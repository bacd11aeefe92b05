#pragma once

// Failures that should surface as process exit codes. The convention,
// shared by every subcommand:
//   0  success
//   1  usage or configuration problem
//   2  matching infeasible or a search limit was hit without an
//      acceptable solution
//   3  input/output failure (missing or unreadable files)

#include <stdexcept>
#include <string>

namespace ivmatch {

inline constexpr int kExitUsage = 1;
inline constexpr int kExitInfeasible = 2;
inline constexpr int kExitIo = 3;

class ExitError : public std::runtime_error {
 public:
  ExitError(int code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  int code() const { return code_; }

 private:
  int code_;
};

}  // namespace ivmatch
