#pragma once

namespace hitter {

// Library version string, reported by the CLI.
const char* version();

}  // namespace hitter
