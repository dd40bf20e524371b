// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mias/dataset.hpp"
#include "mias/metrics.hpp"
#include "mias/pipeline.hpp"

namespace mias {

struct BankSummary {
    std::size_t vectors = 0;
    int dim = 0;
    std::string index;
    std::string fingerprint; // FNV-1a of the bank file
};

// Report JSON: stable key order, no timings, so identical runs produce
// identical bytes.
nlohmann::ordered_json report_json(const EvalReport& report, const RunConfig& config, const Variant& variant,
                                   const RunStats& stats, const BankSummary& bank);

// One table row per variant: prompt, rank, P-AUROC, DICE.
std::string report_table(const std::string& title, const std::vector<Variant>& variants,
                         const std::vector<EvalReport>& reports);

nlohmann::ordered_json ablation_json(const std::string& kind, const RunConfig& config,
                                     const std::vector<Variant>& variants, const std::vector<EvalReport>& reports,
                                     const RunStats& stats, const BankSummary& bank);

// Input | anomaly map | prediction overlay | ground-truth overlay.
Image overlay_panel(const Image& input, const AnomalyMap& map, const BinaryMask& pred, const BinaryMask& gt);
void write_overlay(const std::filesystem::path& dir, const DatasetRecord& record, const AnomalyMap& map,
                   const BinaryMask& pred);

// Writes `text` to `path` atomically (temp file + rename).
void write_text(const std::filesystem::path& path, const std::string& text);

std::string file_fingerprint(const std::filesystem::path& path);

} // namespace mias
