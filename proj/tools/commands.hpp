#pragma once

#include "CLI11.hpp"

namespace eatt::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitDivergence = 3;
inline constexpr int kExitAuditMismatch = 4;

// Each register_* adds a subcommand whose callback stores its exit code in
// `status`.
void register_energy(CLI::App& app, int& status);
void register_gradcheck(CLI::App& app, int& status);
void register_train(CLI::App& app, int& status);
void register_stats(CLI::App& app, int& status);
void register_audit(CLI::App& app, int& status);

}  // namespace eatt::cli
