// SPDX-License-Identifier: Apache-2.0
//
// The `megc` command line: gen-data, train, eval, gradcheck, analyze-rms,
// ablate, sweep and augment-preview.
#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace megc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheck = 1;  // a check or run failed
inline constexpr int kExitUsage = 2;  // bad arguments, config or input file
inline constexpr int kExitIo = 3;     // output could not be written

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
/// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace megc::cli
