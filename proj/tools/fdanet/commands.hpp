#pragma once

#include <string>
#include <vector>

#include "CLI11.hpp"

namespace fdanet::cli {

enum ExitCode : int { kOk = 0, kVerifyFailed = 1, kIoError = 2, kFormatError = 3 };

/// Status a command reports without throwing (e.g. a failed check).
int& exit_status();

void register_synth(CLI::App& app);
void register_train(CLI::App& app);
void register_infer(CLI::App& app);
void register_check(CLI::App& app);
void register_bench(CLI::App& app);
void register_flops(CLI::App& app);

/// "HxW" -> {H, W}; "1x4x256x256" -> {1, 4, 256, 256}.
std::vector<long long> parse_dims(const std::string& s);

}  // namespace fdanet::cli
