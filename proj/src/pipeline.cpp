// SPDX-License-Identifier: Apache-2.0
#include "mias/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <thread>

#include <json.hpp>

#include "mias/anomaly_map.hpp"
#include "mias/error.hpp"
#include "mias/hash.hpp"
#include "mias/patching.hpp"
#include "mias/prompting.hpp"
#include "mias/report.hpp"
#include "mias/transport.hpp"

namespace mias {

namespace fs = std::filesystem;

namespace {

template <typename E, std::size_t N>
E parse_enum(const std::string& s, const std::pair<const char*, E> (&table)[N], const char* what) {
    for (const auto& [name, value] : table) {
        if (s == name) {
            return value;
        }
    }
    std::string choices;
    for (const auto& [name, value] : table) {
        choices += choices.empty() ? name : std::string("|") + name;
    }
    throw Error(ErrorCode::Config, std::string("unknown ") + what + " '" + s + "' (expected " + choices + ")");
}

const std::pair<const char*, ProviderKind> kProviders[] = {
    {"toy", ProviderKind::Toy}, {"embeddings-file", ProviderKind::EmbeddingsFile}, {"bridge", ProviderKind::Bridge}};
const std::pair<const char*, PromptMode> kPrompts[] = {
    {"cog", PromptMode::Cog}, {"max", PromptMode::Max}, {"bbox", PromptMode::Bbox}};
const std::pair<const char*, DecoderKind> kDecoders[] = {
    {"reference", DecoderKind::Reference}, {"external", DecoderKind::External}};

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        out += c == '\'' ? std::string("'\\''") : std::string(1, c);
    }
    return out + "'";
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct PromptResult {
    MaskSet masks;
    bool has_point = false;
    PointPrompt point;
    bool skipped = false;
};

PromptResult run_prompt(Decoder& decoder, const EmbeddingGrid& emb, const AnomalyMap& map, PromptMode mode,
                        const RunConfig& cfg) {
    PromptResult r;
    Prompt prompt;
    try {
        switch (mode) {
        case PromptMode::Cog:
            r.point = center_of_gravity(map, GammaConfig{cfg.gamma});
            r.has_point = true;
            prompt = r.point;
            break;
        case PromptMode::Max:
            r.point = max_point(map);
            r.has_point = true;
            prompt = r.point;
            break;
        case PromptMode::Bbox:
            prompt = threshold_boxes(map, cfg.tau);
            break;
        }
    } catch (const Error& e) {
        if (e.code() != ErrorCode::AllZeroMap && e.code() != ErrorCode::ConstantMap) {
            throw;
        }
        // A flat map carries no location; predict nothing.
        r.skipped = true;
        for (BinaryMask& m : r.masks.masks) {
            m = BinaryMask(map.height, map.width);
        }
        return r;
    }
    r.masks = segment(decoder, &emb, map, prompt);
    return r;
}

} // namespace

const char* to_string(ProviderKind v) {
    for (const auto& [n, k] : kProviders) {
        if (k == v) {
            return n;
        }
    }
    return "?";
}
const char* to_string(PromptMode v) {
    for (const auto& [n, k] : kPrompts) {
        if (k == v) {
            return n;
        }
    }
    return "?";
}
const char* to_string(DecoderKind v) {
    for (const auto& [n, k] : kDecoders) {
        if (k == v) {
            return n;
        }
    }
    return "?";
}
ProviderKind parse_provider(const std::string& s) { return parse_enum(s, kProviders, "provider"); }
PromptMode parse_prompt(const std::string& s) { return parse_enum(s, kPrompts, "prompt mode"); }
DecoderKind parse_decoder(const std::string& s) { return parse_enum(s, kDecoders, "decoder"); }

void validate(const RunConfig& c) {
    MIAS_THROW_IF_NOT(!c.dataset.empty(), ErrorCode::Config, "--dataset is required");
    MIAS_THROW_IF_NOT(c.resolution > 0, ErrorCode::Config, "--resolution must be positive");
    MIAS_THROW_IF_NOT(c.gamma > 0.0 && std::isfinite(c.gamma), ErrorCode::Config, "--gamma must be positive");
    MIAS_THROW_IF_NOT(c.tau >= 0.0 && c.tau <= 1.0, ErrorCode::Config, "--tau must lie in [0, 1]");
    MIAS_THROW_IF_NOT(c.mask_rank >= 1 && c.mask_rank <= 3, ErrorCode::Config, "--mask-rank must be 1, 2 or 3");
    MIAS_THROW_IF_NOT(0.0 < c.alphas.coarse && c.alphas.coarse < c.alphas.mid && c.alphas.mid < c.alphas.fine &&
                          c.alphas.fine <= 1.0,
                      ErrorCode::Config, "alphas must satisfy 0 < a1 < a2 < a3 <= 1");
    MIAS_THROW_IF_NOT(c.threads >= 0, ErrorCode::Config, "--threads must be >= 0");
    MIAS_THROW_IF_NOT(c.provider != ProviderKind::EmbeddingsFile || !c.embeddings.empty(), ErrorCode::Config,
                      "the embeddings-file provider needs --embeddings");
    MIAS_THROW_IF_NOT(c.provider != ProviderKind::Bridge || !c.bridge_cmd.empty(), ErrorCode::Config,
                      "the bridge provider needs --bridge-cmd or MIAS_BRIDGE_CMD");
    MIAS_THROW_IF_NOT(c.decoder != DecoderKind::External || !c.bridge_cmd.empty(), ErrorCode::Config,
                      "the external decoder needs --bridge-cmd or MIAS_BRIDGE_CMD");
    MIAS_THROW_IF_NOT(c.decoder_timeout_ms > 0, ErrorCode::Config, "decoder timeout must be positive");
}

std::string canonical_config(const RunConfig& c) {
    nlohmann::ordered_json j;
    j["dataset"] = c.dataset.generic_string();
    j["resolution"] = c.resolution;
    j["provider"] = to_string(c.provider);
    j["embeddings"] = c.embeddings.generic_string();
    j["bank"] = c.bank.generic_string();
    j["gamma"] = c.gamma;
    j["prompt"] = to_string(c.prompt);
    j["mask_rank"] = c.mask_rank;
    j["decoder"] = to_string(c.decoder);
    j["alphas"] = {c.alphas.coarse, c.alphas.mid, c.alphas.fine};
    j["tau"] = c.tau;
    j["dice_mode"] = to_string(c.dice_mode);
    j["index"] = c.index == IndexKind::Flat ? "flat" : "ivf";
    j["nprobe"] = c.nprobe;
    j["bridge_cmd"] = c.decoder == DecoderKind::External || c.provider == ProviderKind::Bridge ? c.bridge_cmd : "";
    j["seed"] = c.seed;
    return j.dump();
}

std::string config_hash(const RunConfig& c) {
    Fnv1a h;
    h.add(std::string_view(canonical_config(c)));
    return hex64(h.value());
}

ToyProvider::ToyProvider(int resolution, ToyEncoderConfig config)
    : encoder_(ToyEncoder::for_image(config, resolution, resolution, 1)) {}

EmbeddingGrid ToyProvider::embed(const DatasetRecord& record) { return encoder_.encode(record.image, record.id); }

FileProvider::FileProvider(const fs::path& path) : reader_(path) {}

EmbeddingGrid FileProvider::embed(const DatasetRecord& record) {
    const auto& ids = reader_.ids();
    auto it = std::find(ids.begin(), ids.end(), record.id);
    if (it == ids.end()) {
        const std::string name = fs::path(record.id).filename().string();
        const std::size_t n = std::count(ids.begin(), ids.end(), name);
        MIAS_THROW_IF_NOT(n <= 1, ErrorCode::InvalidArgument,
                          "embedding id '" + name + "' is ambiguous; store ids as dataset-relative paths");
        it = std::find(ids.begin(), ids.end(), name);
    }
    MIAS_THROW_IF_NOT(it != ids.end(), ErrorCode::InvalidArgument, "no embedding for image '" + record.id + "'");
    std::lock_guard<std::mutex> lock(mutex_);
    EmbeddingGrid g = reader_.read(static_cast<std::uint32_t>(it - ids.begin()));
    g.image_id = record.id;
    return g;
}

std::unique_ptr<EmbeddingProvider> make_provider(const RunConfig& c) {
    switch (c.provider) {
    case ProviderKind::Toy:
        return std::make_unique<ToyProvider>(c.resolution, ToyEncoderConfig{64, 64, 256, c.seed});
    case ProviderKind::EmbeddingsFile:
        return std::make_unique<FileProvider>(c.embeddings);
    case ProviderKind::Bridge: {
        MIAS_THROW_IF_NOT(!c.out.empty(), ErrorCode::Config, "the bridge provider needs --out for its embeddings");
        fs::create_directories(c.out);
        const fs::path file = c.out / "embeddings.bin";
        const std::string cmd = c.bridge_cmd + " export --dataset " + shell_quote(c.dataset.string()) +
                                " --resolution " + std::to_string(c.resolution) + " --out " +
                                shell_quote(file.string());
        const int rc = std::system(cmd.c_str());
        MIAS_THROW_IF_NOT(rc == 0, ErrorCode::DecoderFailure,
                          "embedding export failed (status " + std::to_string(rc) + "): " + cmd);
        return std::make_unique<FileProvider>(file);
    }
    }
    throw Error(ErrorCode::Config, "unknown provider");
}

std::unique_ptr<Decoder> make_decoder(const RunConfig& c) {
    if (c.decoder == DecoderKind::Reference) {
        return std::make_unique<ReferenceDecoder>(c.alphas);
    }
    ExternalDecoder::Options opts;
    opts.timeout_ms = c.decoder_timeout_ms;
    if (c.provider == ProviderKind::EmbeddingsFile) {
        opts.embedding_ref_prefix = c.embeddings.string() + "#";
    } else if (c.provider == ProviderKind::Bridge) {
        opts.embedding_ref_prefix = (c.out / "embeddings.bin").string() + "#";
    } else {
        opts.embedding_ref_prefix = c.dataset.string() + "/";
    }
    std::unique_ptr<Transport> t;
    if (c.bridge_cmd.rfind("unix:", 0) == 0) {
        t = std::make_unique<UnixSocketTransport>(c.bridge_cmd.substr(5));
    } else {
        t = std::make_unique<SubprocessTransport>(c.bridge_cmd + " serve");
    }
    return std::make_unique<ExternalDecoder>(std::move(t), opts);
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(threads, 1)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i; !failed && (i = next++) < n;) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) {
                        error = std::current_exception();
                    }
                    failed = true;
                }
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

Pipeline::Pipeline(RunConfig config, std::unique_ptr<EmbeddingProvider> provider, std::unique_ptr<Decoder> decoder)
    : config_(std::move(config)), provider_(std::move(provider)), decoder_(std::move(decoder)),
      dataset_(config_.dataset, DatasetOptions{config_.resolution, provider_->channels(), {}}) {}

Pipeline::Pipeline(RunConfig config)
    : Pipeline(config, (validate(config), make_provider(config)), make_decoder(config)) {}

int Pipeline::worker_count() const {
    if (config_.threads > 0) {
        return config_.threads;
    }
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

PatchGrid Pipeline::patches(const DatasetRecord& record) { return patchify(provider_->embed(record)); }

MemoryBank Pipeline::build_bank() {
    BankConfig bc;
    bc.index = config_.index;
    bc.ivf.seed = config_.seed;
    bc.ivf.nprobe = config_.nprobe;
    MemoryBank bank(0, bc);
    const auto& train = dataset_.train();
    const int workers = worker_count();
    const std::size_t chunk = static_cast<std::size_t>(workers) * 4;
    std::vector<PatchGrid> grids;
    for (std::size_t start = 0; start < train.size(); start += chunk) {
        const std::size_t n = std::min(chunk, train.size() - start);
        grids.assign(n, PatchGrid{});
        parallel_for(n, workers, [&](std::size_t i) { grids[i] = patches(dataset_.load(train[start + i])); });
        for (const PatchGrid& g : grids) {
            bank.add(g);
        }
    }
    bank.freeze();
    return bank;
}

ScoredImage Pipeline::score(const MemoryBank& bank, const DatasetRecord& record) {
    const ScoreGrid scores = bank.score_patches(patches(record));
    ScoredImage s;
    s.raw = upsample(scores, config_.resolution, config_.resolution);
    s.raw.image_id = record.id;
    s.normalized = normalize(s.raw);
    return s;
}

EvalRun Pipeline::evaluate(const MemoryBank& bank, std::span<const Variant> variants) {
    MIAS_THROW_IF_NOT(!variants.empty(), ErrorCode::InvalidArgument, "no evaluation variants");
    std::vector<PromptMode> modes;
    for (const Variant& v : variants) {
        MIAS_THROW_IF_NOT(v.rank >= 1 && v.rank <= 3, ErrorCode::Config, "mask rank must be 1, 2 or 3");
        if (std::find(modes.begin(), modes.end(), v.prompt) == modes.end()) {
            modes.push_back(v.prompt);
        }
    }
    const auto& test = dataset_.test();
    const int workers = worker_count();
    const std::size_t chunk = static_cast<std::size_t>(workers) * 4;

    AurocAccumulator auroc;
    std::vector<std::vector<ImageOutcome>> outcomes(variants.size());
    std::atomic<std::size_t> decode_calls{0};
    std::atomic<std::size_t> skipped{0};
    EvalRun run;

    struct Slot {
        AurocAccumulator acc;
        std::vector<ImageOutcome> per_variant;
        double scoring = 0.0;
        double decoding = 0.0;
    };
    std::vector<Slot> slots;
    for (std::size_t start = 0; start < test.size(); start += chunk) {
        const std::size_t n = std::min(chunk, test.size() - start);
        slots.assign(n, Slot{});
        parallel_for(n, workers, [&](std::size_t i) {
            Slot& slot = slots[i];
            const DatasetRecord rec = dataset_.load(test[start + i]);
            auto t0 = std::chrono::steady_clock::now();
            const EmbeddingGrid emb = provider_->embed(rec);
            const ScoreGrid scores = bank.score_patches(patchify(emb));
            AnomalyMap raw = upsample(scores, config_.resolution, config_.resolution);
            raw.image_id = rec.id;
            AnomalyMap map = normalize(raw);
            slot.acc.add(raw, rec.gt.mask);
            slot.scoring = seconds_since(t0);

            t0 = std::chrono::steady_clock::now();
            std::vector<PromptResult> results;
            for (PromptMode m : modes) {
                results.push_back(run_prompt(*decoder_, emb, map, m, config_));
                if (results.back().skipped) {
                    ++skipped;
                } else {
                    ++decode_calls;
                }
            }
            slot.decoding = seconds_since(t0);

            for (const Variant& v : variants) {
                const auto mi = static_cast<std::size_t>(std::find(modes.begin(), modes.end(), v.prompt) - modes.begin());
                const PromptResult& pr = results[mi];
                ImageOutcome o = score_prediction(rec.id, select_mask(pr.masks, v.rank), rec.gt);
                o.image_score = image_score(raw);
                if (pr.has_point) {
                    o.has_prompt = true;
                    o.prompt_x = pr.point.x;
                    o.prompt_y = pr.point.y;
                    const int px = std::clamp(static_cast<int>(std::lround(pr.point.x)), 0, map.width - 1);
                    const int py = std::clamp(static_cast<int>(std::lround(pr.point.y)), 0, map.height - 1);
                    o.prompt_in_gt = rec.gt.mask.at(py, px) != 0;
                }
                slot.per_variant.push_back(std::move(o));
            }
            if (config_.overlays && !config_.out.empty()) {
                write_overlay(config_.out / "overlays", rec, map, select_mask(results.front().masks, variants.front().rank));
            }
        });
        for (Slot& s : slots) { // index order keeps the reduction deterministic
            auroc.merge(s.acc);
            for (std::size_t v = 0; v < variants.size(); ++v) {
                outcomes[v].push_back(std::move(s.per_variant[v]));
            }
            run.stats.seconds_scoring += s.scoring;
            run.stats.seconds_decoding += s.decoding;
        }
    }
    run.stats.decode_calls = decode_calls;
    run.stats.skipped_prompts = skipped;
    for (std::size_t v = 0; v < variants.size(); ++v) {
        EvalReport r = ::mias::evaluate(std::move(outcomes[v]), auroc, config_.dice_mode);
        r.config_hash = config_hash(config_);
        run.reports.push_back(std::move(r));
    }
    return run;
}

} // namespace mias
