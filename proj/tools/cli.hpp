// Copyright 2026 The voxstream Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>

namespace voxstream::cli {

inline constexpr const char* kCacheEnv = "VOXSTREAM_CACHE_MB";

// Runs the command line; returns the process exit status. Reports go to out, errors to err.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace voxstream::cli
