#pragma once

namespace sphsfm {

/// Exit status: 0 success (including --help), 1 usage error, 2 pipeline failure.
int run_cli(int argc, char** argv);

}  // namespace sphsfm
