#pragma once

#include <iosfwd>

#include "cli/config.hpp"

namespace memcap::cli {

// Exit statuses.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;  // bad flags, config, input files or preconditions
inline constexpr int kExitNumeric = 2;  // divergence, non-finite values, failed factorization

/// Runs one resolved configuration. Writes manifest.json under cfg.out before
/// anything else and marks it complete after the last artifact. Exceptions
/// propagate to the caller.
void run(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Full command-line entry point: parses argv, resolves the config, runs it,
/// and maps exceptions to exit statuses.
int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace memcap::cli
