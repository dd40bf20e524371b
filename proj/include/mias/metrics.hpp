// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mias/types.hpp"

namespace mias {

struct GroundTruthMask {
    std::string image_id;
    BinaryMask mask;
    bool anomalous = false;
};

// 2|A n B| / (|A| + |B|); both empty -> 1, exactly one empty -> 0.
double dice(const BinaryMask& pred, const BinaryMask& gt);

// Pooled, mid-rank pixel AUROC that never holds more than the distinct score
// values. Pixels are added image by image; merging is order independent, so
// the result is bit-stable for any insertion order.
class AurocAccumulator {
  public:
    // Above this many distinct values the table is coarsened (keys lose low
    // mantissa bits, creating ties) and exact() turns false.
    AurocAccumulator() = default;
    explicit AurocAccumulator(std::size_t max_distinct);

    void add(std::span<const float> scores, std::span<const std::uint8_t> labels);
    void add(const AnomalyMap& scores, const BinaryMask& labels);
    void merge(const AurocAccumulator& other);

    // Throws SingleClass unless both labels were seen.
    double auroc() const;

    std::uint64_t positives() const { return positives_; }
    std::uint64_t negatives() const { return negatives_; }
    std::size_t distinct() const { return runs_.size(); }
    bool exact() const { return dropped_bits_ == 0; }

  private:
    struct Run {
        float value;
        std::uint64_t pos;
        std::uint64_t neg;
    };
    void merge_runs(std::vector<Run>& incoming);
    void coarsen();
    float quantize(float v) const;

    std::size_t max_distinct_ = std::size_t{1} << 24;
    int dropped_bits_ = 0;
    std::vector<Run> runs_; // ascending, distinct values
    std::uint64_t positives_ = 0;
    std::uint64_t negatives_ = 0;
};

double pixel_auroc(std::span<const AnomalyMap> scores, std::span<const GroundTruthMask> gts);

enum class DiceMode { PerImage, Pooled };
const char* to_string(DiceMode mode);

// What evaluation keeps per test image.
struct ImageOutcome {
    std::string image_id;
    bool anomalous = false;
    bool predicted = false;
    double dice = 0.0;
    std::uint64_t pred_pixels = 0;
    std::uint64_t gt_pixels = 0;
    std::uint64_t intersection = 0;
    float image_score = 0.0f;
    bool has_prompt = false;
    double prompt_x = 0.0;
    double prompt_y = 0.0;
    bool prompt_in_gt = false;
};

ImageOutcome score_prediction(const std::string& image_id, const BinaryMask& pred, const GroundTruthMask& gt);

struct EvalCounts {
    std::size_t test_normal = 0;
    std::size_t test_anomalous = 0;
    std::uint64_t pixels = 0;
};

struct EvalReport {
    double p_auroc = 0.0;
    bool p_auroc_exact = true;
    double dice_mean = 0.0; // anomalous images only, per `dice_mode`
    DiceMode dice_mode = DiceMode::PerImage;
    double dice_pooled = 0.0;
    double prompt_in_gt_rate = 0.0; // over anomalous images with a point prompt
    EvalCounts counts;
    std::string config_hash;
    std::vector<ImageOutcome> per_image;
};

// Aggregates outcomes (any order; they are sorted by id) and the pooled
// AUROC. Throws MissingPrediction / EmptySplit.
EvalReport evaluate(std::vector<ImageOutcome> outcomes, const AurocAccumulator& auroc,
                    DiceMode mode = DiceMode::PerImage);

} // namespace mias
