// SPDX-License-Identifier: Apache-2.0
#include "helpers.hpp"

#include <fstream>
#include <sstream>

namespace megc::test {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace megc::test
