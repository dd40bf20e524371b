// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mias/dataset.hpp"
#include "mias/embedding.hpp"
#include "mias/memory_bank.hpp"
#include "mias/metrics.hpp"
#include "mias/segmentation.hpp"

namespace mias {

inline constexpr const char* kVersion = "1.0.0";

enum class ProviderKind { Toy, EmbeddingsFile, Bridge };
enum class PromptMode { Cog, Max, Bbox };
enum class DecoderKind { Reference, External };

const char* to_string(ProviderKind v);
const char* to_string(PromptMode v);
const char* to_string(DecoderKind v);
ProviderKind parse_provider(const std::string& s);
PromptMode parse_prompt(const std::string& s);
DecoderKind parse_decoder(const std::string& s);

struct RunConfig {
    std::filesystem::path dataset;
    int resolution = 1024;
    ProviderKind provider = ProviderKind::Toy;
    std::filesystem::path embeddings; // container for the embeddings-file provider
    std::filesystem::path bank;
    double gamma = 5.0;
    PromptMode prompt = PromptMode::Cog;
    int mask_rank = 3;
    DecoderKind decoder = DecoderKind::Reference;
    Alphas alphas;
    double tau = 0.5;
    DiceMode dice_mode = DiceMode::PerImage;
    IndexKind index = IndexKind::Flat;
    std::size_t nprobe = 0;
    std::string bridge_cmd;
    int decoder_timeout_ms = 120000;
    std::uint64_t seed = 42;
    std::filesystem::path out;
    int threads = 0;       // 0: hardware concurrency
    bool overlays = false; // per-image PNG panels under out/overlays
};

// Throws Config errors for inconsistent settings.
void validate(const RunConfig& config);
// Canonical form of everything that can change results (not out, threads or
// overlays), and its FNV-1a fingerprint.
std::string canonical_config(const RunConfig& config);
std::string config_hash(const RunConfig& config);

// Image -> embedding grid. Implementations are safe for concurrent calls.
class EmbeddingProvider {
  public:
    virtual ~EmbeddingProvider() = default;
    virtual EmbeddingGrid embed(const DatasetRecord& record) = 0;
    // Image channels the provider wants from the loader.
    virtual int channels() const { return 1; }
    virtual std::string name() const = 0;
};

class ToyProvider final : public EmbeddingProvider {
  public:
    ToyProvider(int resolution, ToyEncoderConfig config = {});
    EmbeddingGrid embed(const DatasetRecord& record) override;
    std::string name() const override { return "toy"; }

  private:
    ToyEncoder encoder_;
};

// Looks records up by id, then by file name, in an embedding container.
class FileProvider final : public EmbeddingProvider {
  public:
    explicit FileProvider(const std::filesystem::path& path);
    EmbeddingGrid embed(const DatasetRecord& record) override;
    std::string name() const override { return "embeddings-file"; }

  private:
    EmbeddingReader reader_;
    std::mutex mutex_;
};

std::unique_ptr<EmbeddingProvider> make_provider(const RunConfig& config);
std::unique_ptr<Decoder> make_decoder(const RunConfig& config);

struct Variant {
    PromptMode prompt = PromptMode::Cog;
    int rank = 3;
};

struct RunStats {
    std::size_t decode_calls = 0;
    std::size_t skipped_prompts = 0; // flat maps with no derivable prompt
    double seconds_scoring = 0.0;
    double seconds_decoding = 0.0;
};

struct EvalRun {
    std::vector<EvalReport> reports; // one per variant
    RunStats stats;
};

// Per-image scoring artifacts of one test image.
struct ScoredImage {
    AnomalyMap raw;
    AnomalyMap normalized;
};

class Pipeline {
  public:
    Pipeline(RunConfig config, std::unique_ptr<EmbeddingProvider> provider, std::unique_ptr<Decoder> decoder);
    explicit Pipeline(RunConfig config);

    const RunConfig& config() const { return config_; }
    const Dataset& dataset() const { return dataset_; }
    EmbeddingProvider& provider() { return *provider_; }
    Decoder& decoder() { return *decoder_; }

    PatchGrid patches(const DatasetRecord& record);
    MemoryBank build_bank();
    ScoredImage score(const MemoryBank& bank, const DatasetRecord& record);

    // One pass over the test split: each image is scored once and decoded
    // once per distinct prompt mode; every variant reads from that pass.
    EvalRun evaluate(const MemoryBank& bank, std::span<const Variant> variants);

  private:
    int worker_count() const;

    RunConfig config_;
    std::unique_ptr<EmbeddingProvider> provider_;
    std::unique_ptr<Decoder> decoder_;
    Dataset dataset_;
};

// Runs fn(i) for i in [0, n) on up to `threads` workers. The first exception
// is rethrown after all workers stop.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

} // namespace mias
