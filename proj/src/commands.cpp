// SPDX-License-Identifier: Apache-2.0
#include "mias/commands.hpp"

#include "mias/error.hpp"

namespace mias {

namespace fs = std::filesystem;

namespace {

BankSummary summarize(const MemoryBank& bank, const fs::path& path) {
    BankSummary s;
    s.vectors = bank.size();
    s.dim = bank.dim();
    s.index = bank.config().index == IndexKind::Ivf ? "ivf" : "flat";
    s.fingerprint = file_fingerprint(path);
    return s;
}

void require_out(const RunConfig& c) {
    MIAS_THROW_IF_NOT(!c.out.empty(), ErrorCode::Config, "--out is required");
    fs::create_directories(c.out);
}

EvalRun run_variants(const RunConfig& config, const std::vector<Variant>& variants, const std::string& stem,
                     const std::string& title, const char* ablation) {
    require_out(config);
    Pipeline pipeline(config);
    BankSummary summary;
    const MemoryBank bank = load_bank(config, &summary);
    EvalRun run = pipeline.evaluate(bank, variants);
    nlohmann::ordered_json j = ablation == nullptr
                                   ? report_json(run.reports.front(), config, variants.front(), run.stats, summary)
                                   : ablation_json(ablation, config, variants, run.reports, run.stats, summary);
    write_text(config.out / (stem + ".json"), j.dump(2) + "\n");
    write_text(config.out / (stem + ".txt"), report_table(title, variants, run.reports));
    return run;
}

} // namespace

std::vector<SynthSquare> cmd_synth(const fs::path& out, const SynthConfig& config) {
    MIAS_THROW_IF_NOT(!out.empty(), ErrorCode::Config, "--out is required");
    return generate_synthetic(out, config);
}

MemoryBank load_bank(const RunConfig& config, BankSummary* summary) {
    MIAS_THROW_IF_NOT(!config.bank.empty(), ErrorCode::Config, "--bank is required");
    MIAS_THROW_IF_NOT(fs::is_regular_file(config.bank), ErrorCode::Io,
                      "bank file " + config.bank.string() + " does not exist; run build-bank first");
    MemoryBank bank = MemoryBank::load(config.bank);
    if (summary != nullptr) {
        *summary = summarize(bank, config.bank);
    }
    return bank;
}

BankBuildResult cmd_build_bank(const RunConfig& config) {
    validate(config);
    MIAS_THROW_IF_NOT(!config.bank.empty(), ErrorCode::Config, "--bank is required");
    Pipeline pipeline(config);
    const MemoryBank bank = pipeline.build_bank();
    if (config.bank.has_parent_path()) {
        fs::create_directories(config.bank.parent_path());
    }
    bank.save(config.bank);
    BankBuildResult r;
    r.vectors = bank.size();
    r.dim = bank.dim();
    r.path = config.bank;
    r.fingerprint = file_fingerprint(config.bank);
    return r;
}

EvalRun cmd_evaluate(const RunConfig& config) {
    return run_variants(config, {Variant{config.prompt, config.mask_rank}}, "report",
                        "evaluation (" + config.dataset.filename().string() + ")", nullptr);
}

EvalRun cmd_ablate_prompt(const RunConfig& config) {
    const int r = config.mask_rank;
    return run_variants(config, {{PromptMode::Cog, r}, {PromptMode::Max, r}, {PromptMode::Bbox, r}}, "ablate_prompt",
                        "prompt ablation", "prompt");
}

EvalRun cmd_ablate_mask(const RunConfig& config) {
    const PromptMode p = config.prompt;
    return run_variants(config, {{p, 1}, {p, 2}, {p, 3}}, "ablate_mask", "mask-rank ablation", "mask");
}

} // namespace mias
