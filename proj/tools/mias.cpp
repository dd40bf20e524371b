// SPDX-License-Identifier: Apache-2.0
// mias: build memory banks, evaluate, run the prompt/mask ablations, and
// generate the synthetic dataset.

#include <cstdio>
#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "mias/commands.hpp"
#include "mias/error.hpp"
#include "mias/kernels.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct Options {
    mias::RunConfig run;
    std::string provider = "toy";
    std::string prompt = "cog";
    std::string decoder = "reference";
    std::string dice_mode = "per-image";
    std::string index = "flat";
    std::vector<double> alphas = {0.25, 0.5, 0.75};
};

void add_run_options(CLI::App* app, Options& o) {
    app->add_option("--dataset", o.run.dataset, "dataset root (BMAD-style tree)")->required();
    app->add_option("--resolution", o.run.resolution, "working resolution")->capture_default_str();
    app->add_option("--provider", o.provider, "toy | embeddings-file | bridge")->capture_default_str();
    app->add_option("--embeddings", o.run.embeddings, "embedding container (embeddings-file provider)");
    app->add_option("--bank", o.run.bank, "memory bank file")->required();
    app->add_option("--seed", o.run.seed, "seed")->capture_default_str();
    app->add_option("--threads", o.run.threads, "worker threads (0 = all cores)")->capture_default_str();
    app->add_option("--bridge-cmd", o.run.bridge_cmd,
                    "bridge command (decoder runs '<cmd> serve'; 'unix:<path>' connects to a socket)")
        ->envname("MIAS_BRIDGE_CMD");
    app->add_option("--index", o.index, "flat | ivf")->capture_default_str();
    app->add_option("--nprobe", o.run.nprobe, "IVF lists probed (0 = default)");
}

void add_eval_options(CLI::App* app, Options& o) {
    app->add_option("--gamma", o.run.gamma, "center-of-gravity exponent")->capture_default_str();
    app->add_option("--prompt", o.prompt, "cog | max | bbox")->capture_default_str();
    app->add_option("--tau", o.run.tau, "bbox threshold")->capture_default_str();
    app->add_option("--mask-rank", o.run.mask_rank, "decoder mask rank 1-3")->capture_default_str();
    app->add_option("--decoder", o.decoder, "reference | external")->capture_default_str();
    app->add_option("--alphas", o.alphas, "reference decoder alphas a1 a2 a3")->expected(3);
    app->add_option("--dice-mode", o.dice_mode, "per-image | pooled")->capture_default_str();
    app->add_option("--decoder-timeout", o.run.decoder_timeout_ms, "external decoder timeout (ms)")
        ->capture_default_str();
    app->add_option("--out", o.run.out, "output directory")->required();
    app->add_flag("--overlays", o.run.overlays, "write per-image PNG panels");
}

mias::RunConfig finish(Options& o) {
    mias::RunConfig c = o.run;
    c.provider = mias::parse_provider(o.provider);
    c.prompt = mias::parse_prompt(o.prompt);
    c.decoder = mias::parse_decoder(o.decoder);
    if (o.dice_mode == "per-image") {
        c.dice_mode = mias::DiceMode::PerImage;
    } else if (o.dice_mode == "pooled") {
        c.dice_mode = mias::DiceMode::Pooled;
    } else {
        throw mias::Error(mias::ErrorCode::Config, "unknown dice mode '" + o.dice_mode + "'");
    }
    if (o.index == "flat") {
        c.index = mias::IndexKind::Flat;
    } else if (o.index == "ivf") {
        c.index = mias::IndexKind::Ivf;
    } else {
        throw mias::Error(mias::ErrorCode::Config, "unknown index '" + o.index + "'");
    }
    c.alphas = {o.alphas[0], o.alphas[1], o.alphas[2]};
    mias::validate(c);
    return c;
}

void print_run(const mias::EvalRun& run, const std::vector<std::string>& labels) {
    for (std::size_t i = 0; i < run.reports.size(); ++i) {
        const auto& r = run.reports[i];
        std::printf("%-12s P-AUROC %.4f  DICE %.4f\n", labels[i].c_str(), r.p_auroc, r.dice_mean);
    }
    std::fprintf(stderr, "scoring %.2fs, decoding %.2fs (%zu decoder calls)\n", run.stats.seconds_scoring,
                 run.stats.seconds_decoding, run.stats.decode_calls);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"MIAS-SAM anomaly segmentation engine"};
    app.require_subcommand(1);
    app.set_version_flag("--version", mias::kVersion);

    mias::SynthConfig synth;
    std::string synth_out;
    auto* cmd_synth = app.add_subcommand("synth", "generate the synthetic dataset");
    cmd_synth->add_option("--out", synth_out, "output root")->required();
    cmd_synth->add_option("--resolution", synth.resolution, "image size")->capture_default_str();
    cmd_synth->add_option("--train", synth.n_train, "normal training images")->capture_default_str();
    cmd_synth->add_option("--test-normal", synth.n_test_normal, "normal test images")->capture_default_str();
    cmd_synth->add_option("--test-anomalous", synth.n_test_anomalous, "anomalous test images")
        ->capture_default_str();
    cmd_synth->add_option("--seed", synth.seed, "seed")->capture_default_str();

    Options bank_opts;
    auto* cmd_bank = app.add_subcommand("build-bank", "encode the training split and save the memory bank");
    add_run_options(cmd_bank, bank_opts);

    Options eval_opts;
    auto* cmd_eval = app.add_subcommand("evaluate", "segment the test split and write report.{json,txt}");
    add_run_options(cmd_eval, eval_opts);
    add_eval_options(cmd_eval, eval_opts);

    Options prompt_opts;
    auto* cmd_ap = app.add_subcommand("ablate-prompt", "compare cog, max and bbox prompts");
    add_run_options(cmd_ap, prompt_opts);
    add_eval_options(cmd_ap, prompt_opts);

    Options mask_opts;
    auto* cmd_am = app.add_subcommand("ablate-mask", "compare decoder mask ranks 1-3");
    add_run_options(cmd_am, mask_opts);
    add_eval_options(cmd_am, mask_opts);

    auto* cmd_info = app.add_subcommand("info", "print the active SIMD kernels");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        if (cmd_synth->parsed()) {
            const auto squares = mias::cmd_synth(synth_out, synth);
            std::printf("wrote %d train, %d normal test, %zu anomalous test images to %s\n", synth.n_train,
                        synth.n_test_normal, squares.size(), synth_out.c_str());
        } else if (cmd_bank->parsed()) {
            const auto r = mias::cmd_build_bank(finish(bank_opts));
            std::printf("N=%zu C=%d bank=%s fnv=%s\n", r.vectors, r.dim, r.path.c_str(), r.fingerprint.c_str());
        } else if (cmd_eval->parsed()) {
            const auto cfg = finish(eval_opts);
            print_run(mias::cmd_evaluate(cfg),
                      {std::string(mias::to_string(cfg.prompt)) + "/r" + std::to_string(cfg.mask_rank)});
        } else if (cmd_ap->parsed()) {
            print_run(mias::cmd_ablate_prompt(finish(prompt_opts)), {"cog", "max", "bbox"});
        } else if (cmd_am->parsed()) {
            print_run(mias::cmd_ablate_mask(finish(mask_opts)), {"rank 1", "rank 2", "rank 3"});
        } else if (cmd_info->parsed()) {
            std::printf("active kernels: %s\n", std::string(mias::simd::to_string(mias::simd::active().isa)).c_str());
        }
    } catch (const mias::Error& e) {
        std::fprintf(stderr, "mias: %s\n", e.what());
        return e.code() == mias::ErrorCode::Config ? kExitConfig : kExitRuntime;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "mias: %s\n", e.what());
        return kExitRuntime;
    }
    return 0;
}
