// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <atomic>
#include <fstream>
#include <functional>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "mias/commands.hpp"
#include "mias/error.hpp"
#include "mias/patching.hpp"
#include "mias/pipeline.hpp"
#include "test_util.hpp"

using namespace mias;
namespace fs = std::filesystem;

namespace {

const std::string kCli = MIAS_CLI;
const std::string kEcho = MIAS_ECHO_DECODER;

// Small synthetic tree shared by the cases below (64 px: one pixel per cell).
const fs::path& small_tree() {
    static TempDir dir;
    static const bool made = [] {
        SynthConfig cfg;
        cfg.n_train = 6;
        cfg.n_test_normal = 3;
        cfg.n_test_anomalous = 6;
        cfg.resolution = 64;
        cfg.seed = 7;
        generate_synthetic(dir.path(), cfg);
        return true;
    }();
    (void)made;
    return dir.path();
}

RunConfig small_config(const fs::path& out) {
    RunConfig c;
    c.dataset = small_tree();
    c.resolution = 64;
    c.bank = out / "bank.bin";
    c.out = out;
    c.threads = 2;
    return c;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

int run(const std::string& cmd) {
    const int status = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class CountingDecoder final : public Decoder {
  public:
    MaskSet decode_point(const EmbeddingGrid* e, const AnomalyMap& m, const PointPrompt& p) override {
        ++points;
        return inner.decode_point(e, m, p);
    }
    MaskSet decode_box(const EmbeddingGrid* e, const AnomalyMap& m, const Box& b) override {
        ++boxes;
        return inner.decode_box(e, m, b);
    }
    std::string name() const override { return "counting"; }
    ReferenceDecoder inner;
    std::atomic<int> points{0};
    std::atomic<int> boxes{0};
};

} // namespace

TEST_CASE("configuration validation and parsing") {
    RunConfig c;
    CHECK_ERROR_CODE(validate(c), ErrorCode::Config);
    c.dataset = "x";
    validate(c);
    for (auto mutate : std::vector<std::function<void(RunConfig&)>>{
             [](RunConfig& r) { r.mask_rank = 4; },
             [](RunConfig& r) { r.gamma = 0; },
             [](RunConfig& r) { r.tau = 1.5; },
             [](RunConfig& r) { r.alphas = {0.5, 0.25, 0.75}; },
             [](RunConfig& r) { r.decoder = DecoderKind::External; },
             [](RunConfig& r) { r.provider = ProviderKind::EmbeddingsFile; },
             [](RunConfig& r) { r.provider = ProviderKind::Bridge; },
         }) {
        RunConfig bad = c;
        mutate(bad);
        CHECK_ERROR_CODE(validate(bad), ErrorCode::Config);
    }
    CHECK(parse_prompt("bbox") == PromptMode::Bbox);
    CHECK(parse_provider("embeddings-file") == ProviderKind::EmbeddingsFile);
    CHECK(parse_decoder("external") == DecoderKind::External);
    CHECK_ERROR_CODE(parse_prompt("centroid"), ErrorCode::Config);
}

TEST_CASE("config hash covers results-relevant settings only") {
    RunConfig a;
    a.dataset = "d";
    RunConfig b = a;
    b.out = "elsewhere";
    b.threads = 7;
    b.overlays = true;
    CHECK(config_hash(a) == config_hash(b));
    b.gamma = 4.0;
    CHECK(config_hash(a) != config_hash(b));
    b = a;
    b.seed = 1;
    CHECK(config_hash(a) != config_hash(b));
    CHECK(nlohmann::json::parse(canonical_config(a)).contains("gamma"));
}

TEST_CASE("one decode pass serves every variant") {
    TempDir out;
    RunConfig c = small_config(out.path());
    auto counting = std::make_unique<CountingDecoder>();
    CountingDecoder* dec = counting.get();
    Pipeline p(c, make_provider(c), std::move(counting));
    const MemoryBank bank = p.build_bank();
    CHECK(bank.size() == 6u * 30 * 30);

    const std::vector<Variant> ranks{{PromptMode::Cog, 1}, {PromptMode::Cog, 2}, {PromptMode::Cog, 3}};
    const EvalRun r = p.evaluate(bank, ranks);
    REQUIRE(r.reports.size() == 3);
    CHECK(dec->points == 9 - static_cast<int>(r.stats.skipped_prompts));
    CHECK(r.stats.decode_calls == static_cast<std::size_t>(dec->points.load()));
    CHECK(dec->boxes == 0);
    CHECK(r.reports[0].p_auroc == r.reports[2].p_auroc);
    CHECK(r.reports[0].counts.test_anomalous == 6);
    CHECK(r.reports[0].counts.test_normal == 3);
    for (const EvalReport& rep : r.reports) {
        CHECK(rep.dice_mean >= 0.0);
        CHECK(rep.dice_mean <= 1.0);
        CHECK(rep.p_auroc >= 0.0);
        CHECK(rep.p_auroc <= 1.0);
    }

    dec->points = 0;
    const std::vector<Variant> modes{{PromptMode::Cog, 3}, {PromptMode::Max, 3}, {PromptMode::Bbox, 3}};
    const EvalRun m = p.evaluate(bank, modes);
    CHECK(dec->points <= 18);
    CHECK(m.reports[0].p_auroc == m.reports[1].p_auroc);
    CHECK(m.reports[1].p_auroc == m.reports[2].p_auroc);
}

TEST_CASE("evaluate is deterministic across runs and thread counts") {
    TempDir a;
    TempDir b;
    RunConfig ca = small_config(a.path());
    RunConfig cb = small_config(b.path());
    cb.threads = 1;
    cmd_build_bank(ca);
    cmd_build_bank(cb);
    CHECK(slurp(ca.bank) == slurp(cb.bank));
    cb.bank = ca.bank; // same bank path in the report
    cmd_evaluate(ca);
    cmd_evaluate(cb);
    CHECK(slurp(a / "report.json") == slurp(b / "report.json"));
    const auto j = nlohmann::json::parse(slurp(a / "report.json"));
    CHECK(j["metrics"]["p_auroc"].get<double>() > 0.5);
    CHECK(j["per_image"].size() == 9);
}

TEST_CASE("embeddings-file provider reproduces the toy provider") {
    TempDir out;
    RunConfig toy = small_config(out.path());
    Pipeline p(toy);
    std::vector<EmbeddingGrid> grids;
    for (const auto* split : {&p.dataset().train(), &p.dataset().test()}) {
        for (const DatasetEntry& e : *split) {
            grids.push_back(p.provider().embed(p.dataset().load(e)));
        }
    }
    write_embeddings(grids, out / "emb.bin");

    const MemoryBank bank = p.build_bank();
    const std::vector<Variant> v{{PromptMode::Cog, 3}};
    const EvalRun a = p.evaluate(bank, v);

    RunConfig file = toy;
    file.provider = ProviderKind::EmbeddingsFile;
    file.embeddings = out / "emb.bin";
    Pipeline q(file);
    const EvalRun b = q.evaluate(q.build_bank(), v);
    CHECK(a.reports[0].p_auroc == b.reports[0].p_auroc);
    CHECK(a.reports[0].dice_mean == b.reports[0].dice_mean);
}

TEST_CASE("external decoder through the pipeline") {
    TempDir out;
    RunConfig c = small_config(out.path());
    c.decoder = DecoderKind::External;
    c.bridge_cmd = kEcho;
    Pipeline p(c);
    const std::vector<Variant> v{{PromptMode::Cog, 3}};
    const EvalRun r = p.evaluate(p.build_bank(), v);
    CHECK(r.reports[0].dice_mean >= 0.0);
    CHECK(r.stats.decode_calls > 0);
}

TEST_CASE("command line: exit codes and outputs") {
    TempDir out;
    const std::string data = small_tree().string();
    const std::string bank = (out / "bank.bin").string();
    CHECK(run(kCli + " --help") == 0);
    CHECK(run(kCli + " evaluate --no-such-flag") == 2);
    CHECK(run(kCli + " evaluate --dataset " + data + " --mask-rank 5 --bank " + bank) == 2);
    CHECK(run(kCli + " evaluate --dataset " + data + " --resolution 64 --bank " + bank + " --out " +
              (out / "o").string()) == 3); // bank not built yet
    CHECK(run(kCli + " build-bank --dataset " + data + " --resolution 64 --bank " + bank) == 0);
    CHECK(fs::exists(bank));
    CHECK(run(kCli + " evaluate --dataset " + data + " --resolution 64 --bank " + bank + " --out " +
              (out / "o").string()) == 0);
    CHECK(fs::exists(out / "o" / "report.json"));
    CHECK(run(kCli + " ablate-mask --dataset " + data + " --resolution 64 --bank " + bank + " --out " +
              (out / "o").string()) == 0);
    const auto j = nlohmann::json::parse(slurp(out / "o" / "ablate_mask.json"));
    CHECK(j["rows"].size() == 3);
    CHECK(run(kCli + " synth --out " + (out / "s").string() + " --resolution 100") == 2);
}

TEST_CASE("defaults match the published configuration") {
    // 1024^2 inputs, 256 x 64 x 64 embeddings, 5x5 patches at stride 2,
    // gamma 5, box threshold 0.5, third (finest) mask.
    const RunConfig c;
    CHECK(c.resolution == 1024);
    CHECK(c.gamma == 5.0);
    CHECK(c.tau == 0.5);
    CHECK(c.mask_rank == 3);
    CHECK(c.prompt == PromptMode::Cog);
    const ToyEncoderConfig enc;
    CHECK(enc.out_dim == 256);
    CHECK(enc.grid_height == 64);
    CHECK(enc.grid_width == 64);
    CHECK(kDefaultPatchWindow == 5);
    CHECK(kDefaultPatchStride == 2);
    CHECK(kDefaultGamma == 5.0);
    CHECK(kDefaultTau == 0.5);
}
