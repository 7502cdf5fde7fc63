#pragma once

namespace odetex::io {

// Exit status: 0 success, 1 usage error, 2 runtime failure.
int run_cli(int argc, const char* const* argv);

}  // namespace odetex::io
