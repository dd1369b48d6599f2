#pragma once

namespace protodiff::cli {

/// Entry point for the `protodiff` command. Returns 0 on success, 1 on a
/// usage error and 2 when the requested operation fails.
int run(int argc, char** argv);

}  // namespace protodiff::cli
