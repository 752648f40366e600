#include "hitter/version.hpp"

namespace hitter {

const char* version() { return "0.1.0"; }

}  // namespace hitter
