#pragma once

#include <iosfwd>

namespace ddic::cli {

// Exit codes: 0 every cell succeeded, 1 some cell failed, 2 bad usage or
// configuration, 3 data or output I/O error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ddic::cli
