// SPDX-License-Identifier: Apache-2.0
#include "omnistereo/random.hpp"

#include <sstream>

namespace omnistereo {

std::string Rand::save_state() const {
  std::ostringstream os;
  os << eng_;
  return os.str();
}

void Rand::load_state(const std::string& s) {
  std::istringstream is(s);
  is >> eng_;
}

}  // namespace omnistereo
