#pragma once

#include <iosfwd>

namespace gazeid::cli {

/// Parses argv, runs one verb and maps errors onto exit codes:
/// 0 success, 1 config error, 2 data error, 3 numerical failure.
int run(int argc, char** argv);
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace gazeid::cli
