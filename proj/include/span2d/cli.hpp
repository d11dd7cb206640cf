#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace span2d {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

/// Subcommands: train, eval, extract, bpe-train, synth. args[0] is the program name.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_command(int argc, char** argv);

}  // namespace span2d
