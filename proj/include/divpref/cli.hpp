#pragma once

#include <string>
#include <vector>

namespace divpref::cli {

// Entry point shared by the binary and the tests. Exit codes: 0 success,
// 1 usage error, 2 data error, 3 numerical failure.
int run(const std::vector<std::string>& args);

// Endpoint actually used for http featurizers: the EMBED_ENDPOINT environment
// variable when set and nonempty, otherwise `flag_value`.
std::string resolve_embed_endpoint(const std::string& flag_value);

}  // namespace divpref::cli
