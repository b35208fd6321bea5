#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pitlab::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;
inline constexpr int kUsage = 2;
inline constexpr int kNoConvergence = 3;
inline constexpr int kBadTrace = 4;

/// Runs one invocation; args excludes the program name.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, char** argv);

}  // namespace pitlab::cli
