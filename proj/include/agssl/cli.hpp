#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "agssl/graph.hpp"

namespace agssl::cli {

/// Bad flags or flag values; mapped to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Runs one command. Exit codes: 0 success, 2 usage error, 1 runtime failure.
int run(int argc, const char* const* argv);

/// "50x2" = two blocks of 50 nodes; comma-separated groups are allowed
/// ("50x2,30x1"). Block b gets label b.
std::vector<SbmBlock> parse_blocks(std::string_view text);

/// Replaces `--config FILE` with `--key=value` arguments read from FILE
/// (flat key=value lines, '#' comments), placed right after the command name
/// so that explicit flags given later take precedence.
std::vector<std::string> expand_config(const std::vector<std::string>& args);

}  // namespace agssl::cli
