// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <memory>
#include <mutex>
#include <string>
#include <variant>

#include "mias/prompting.hpp"
#include "mias/types.hpp"

namespace mias {

class Transport;

// Three masks, index 0 = rank 1 (coarsest) ... index 2 = rank 3 (finest).
struct MaskSet {
    std::array<BinaryMask, 3> masks;
    std::array<float, 3> confidences{1.0f, 1.0f, 1.0f};
};

using Prompt = std::variant<PointPrompt, BoxPromptSet>;

struct Alphas {
    double coarse = 0.25;
    double mid = 0.5;
    double fine = 0.75;
};

// Interface to a three-mask promptable decoder.
class Decoder {
  public:
    virtual ~Decoder() = default;
    virtual MaskSet decode_point(const EmbeddingGrid* embedding, const AnomalyMap& map,
                                 const PointPrompt& point) = 0;
    virtual MaskSet decode_box(const EmbeddingGrid* embedding, const AnomalyMap& map, const Box& box) = 0;
    virtual std::string name() const = 0;
};

// Deterministic surrogate decoder: mask k is the 4-connected region grown
// from the seed pixel over intensities >= alpha_k * I(seed). Boxes are seeded
// at their center.
class ReferenceDecoder final : public Decoder {
  public:
    explicit ReferenceDecoder(Alphas alphas = {});
    MaskSet decode_point(const EmbeddingGrid* embedding, const AnomalyMap& map, const PointPrompt& point) override;
    MaskSet decode_box(const EmbeddingGrid* embedding, const AnomalyMap& map, const Box& box) override;
    std::string name() const override { return "reference"; }

  private:
    Alphas alphas_;
};

MaskSet reference_decode(const AnomalyMap& map, const PointPrompt& seed, const Alphas& alphas = {});

// Sends each prompt to an external decoder process over the decoder wire
// protocol. Requests on one connection are serialized.
class ExternalDecoder final : public Decoder {
  public:
    struct Options {
        int timeout_ms = 120000;
        // embedding_ref sent for an image is prefix + image_id.
        std::string embedding_ref_prefix;
    };

    ExternalDecoder(std::unique_ptr<Transport> transport, Options options);
    ~ExternalDecoder() override;

    MaskSet decode_point(const EmbeddingGrid* embedding, const AnomalyMap& map, const PointPrompt& point) override;
    MaskSet decode_box(const EmbeddingGrid* embedding, const AnomalyMap& map, const Box& box) override;
    std::string name() const override { return "external"; }

  private:
    MaskSet round_trip(const AnomalyMap& map, const Prompt& prompt);

    std::unique_ptr<Transport> transport_;
    Options options_;
    std::mutex mutex_;
};

// Dispatches to the decoder; box sets are decoded box by box and merged with
// a pixelwise OR at each rank.
MaskSet segment(Decoder& decoder, const EmbeddingGrid* embedding, const AnomalyMap& map, const Prompt& prompt);

// rank in {1, 2, 3}.
const BinaryMask& select_mask(const MaskSet& set, int rank = 3);

} // namespace mias
