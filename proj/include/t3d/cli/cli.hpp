#pragma once

#include <iosfwd>

namespace t3d::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs the t3d command line. Every flag can also be set through a T3D_<FLAG> environment variable
/// (upper case, dashes as underscores); explicit flags win.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace t3d::cli
