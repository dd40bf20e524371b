// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

#include "mias/dataset.hpp"
#include "mias/pipeline.hpp"
#include "mias/report.hpp"

namespace mias {

struct BankBuildResult {
    std::size_t vectors = 0;
    int dim = 0;
    std::filesystem::path path;
    std::string fingerprint;
};

// Each command writes its outputs and returns what it computed; all throw
// mias::Error (Config for bad settings).
std::vector<SynthSquare> cmd_synth(const std::filesystem::path& out, const SynthConfig& config);
BankBuildResult cmd_build_bank(const RunConfig& config);
// out/report.json and out/report.txt
EvalRun cmd_evaluate(const RunConfig& config);
// out/ablate_prompt.{json,txt}: cog, max, bbox at the configured rank
EvalRun cmd_ablate_prompt(const RunConfig& config);
// out/ablate_mask.{json,txt}: ranks 1-3 at the configured prompt mode
EvalRun cmd_ablate_mask(const RunConfig& config);

MemoryBank load_bank(const RunConfig& config, BankSummary* summary = nullptr);

} // namespace mias
