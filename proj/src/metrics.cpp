// SPDX-License-Identifier: Apache-2.0
#include "mias/metrics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <utility>

#include "mias/error.hpp"

namespace mias {

double dice(const BinaryMask& pred, const BinaryMask& gt) {
    MIAS_THROW_IF_NOT(pred.height == gt.height && pred.width == gt.width && pred.bits.size() == gt.bits.size(),
                      ErrorCode::ShapeMismatch,
                      "dice: prediction " + std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                          " vs ground truth " + std::to_string(gt.height) + "x" + std::to_string(gt.width));
    std::uint64_t a = 0;
    std::uint64_t b = 0;
    std::uint64_t both = 0;
    for (std::size_t i = 0; i < pred.bits.size(); ++i) {
        a += pred.bits[i] != 0;
        b += gt.bits[i] != 0;
        both += (pred.bits[i] != 0) & (gt.bits[i] != 0);
    }
    if (a + b == 0) {
        return 1.0;
    }
    return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

AurocAccumulator::AurocAccumulator(std::size_t max_distinct) : max_distinct_(std::max<std::size_t>(max_distinct, 2)) {}

float AurocAccumulator::quantize(float v) const {
    if (v == 0.0f) {
        return 0.0f; // folds -0 into +0
    }
    if (dropped_bits_ == 0) {
        return v;
    }
    // Truncating the magnitude's low bits is monotone non-decreasing in v.
    const auto bits = std::bit_cast<std::uint32_t>(v) & ~((std::uint32_t{1} << dropped_bits_) - 1);
    return std::bit_cast<float>(bits);
}

void AurocAccumulator::merge_runs(std::vector<Run>& incoming) {
    std::vector<Run> out;
    out.reserve(runs_.size() + incoming.size());
    auto a = runs_.begin();
    auto b = incoming.begin();
    while (a != runs_.end() || b != incoming.end()) {
        Run next;
        if (b == incoming.end() || (a != runs_.end() && a->value < b->value)) {
            next = *a++;
        } else if (a == runs_.end() || b->value < a->value) {
            next = *b++;
        } else {
            next = {a->value, a->pos + b->pos, a->neg + b->neg};
            ++a;
            ++b;
        }
        out.push_back(next);
    }
    runs_ = std::move(out);
    while (runs_.size() > max_distinct_) {
        coarsen();
    }
}

void AurocAccumulator::coarsen() {
    dropped_bits_ = std::min(dropped_bits_ + 4, 23);
    std::vector<Run> out;
    out.reserve(runs_.size());
    for (const Run& r : runs_) {
        const float q = quantize(r.value);
        if (!out.empty() && out.back().value == q) {
            out.back().pos += r.pos;
            out.back().neg += r.neg;
        } else {
            out.push_back({q, r.pos, r.neg});
        }
    }
    runs_ = std::move(out);
    if (dropped_bits_ == 23) {
        max_distinct_ = std::max(max_distinct_, runs_.size());
    }
}

void AurocAccumulator::add(std::span<const float> scores, std::span<const std::uint8_t> labels) {
    MIAS_THROW_IF_NOT(scores.size() == labels.size(), ErrorCode::ShapeMismatch,
                      "auroc: score and label counts differ");
    std::vector<std::pair<float, std::uint8_t>> px(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        MIAS_THROW_IF_NOT(!std::isnan(scores[i]), ErrorCode::InvalidArgument, "auroc: NaN score");
        px[i] = {quantize(scores[i]), labels[i] != 0};
    }
    std::sort(px.begin(), px.end(), [](const auto& l, const auto& r) { return l.first < r.first; });
    std::vector<Run> incoming;
    for (const auto& [v, lab] : px) {
        if (incoming.empty() || incoming.back().value != v) {
            incoming.push_back({v, 0, 0});
        }
        (lab ? incoming.back().pos : incoming.back().neg) += 1;
        (lab ? positives_ : negatives_) += 1;
    }
    merge_runs(incoming);
}

void AurocAccumulator::add(const AnomalyMap& scores, const BinaryMask& labels) {
    MIAS_THROW_IF_NOT(scores.height == labels.height && scores.width == labels.width, ErrorCode::ShapeMismatch,
                      "auroc: map '" + scores.image_id + "' and mask differ in shape");
    add(scores.values, labels.bits);
}

void AurocAccumulator::merge(const AurocAccumulator& other) {
    while (dropped_bits_ < other.dropped_bits_) {
        coarsen();
    }
    std::vector<Run> incoming;
    incoming.reserve(other.runs_.size());
    for (const Run& r : other.runs_) {
        const float q = quantize(r.value);
        if (!incoming.empty() && incoming.back().value == q) {
            incoming.back().pos += r.pos;
            incoming.back().neg += r.neg;
        } else {
            incoming.push_back({q, r.pos, r.neg});
        }
    }
    positives_ += other.positives_;
    negatives_ += other.negatives_;
    merge_runs(incoming);
}

double AurocAccumulator::auroc() const {
    MIAS_THROW_IF_NOT(positives_ > 0 && negatives_ > 0, ErrorCode::SingleClass,
                      "pixel AUROC needs both anomalous and normal pixels (" + std::to_string(positives_) +
                          " anomalous, " + std::to_string(negatives_) + " normal)");
    // Twice the Mann-Whitney U, accumulated exactly in 128 bits.
    unsigned __int128 twice_u = 0;
    std::uint64_t neg_below = 0;
    for (const Run& r : runs_) {
        twice_u += static_cast<unsigned __int128>(r.pos) * (2 * static_cast<unsigned __int128>(neg_below) + r.neg);
        neg_below += r.neg;
    }
    const long double denom = 2.0L * static_cast<long double>(positives_) * static_cast<long double>(negatives_);
    return static_cast<double>(static_cast<long double>(twice_u) / denom);
}

double pixel_auroc(std::span<const AnomalyMap> scores, std::span<const GroundTruthMask> gts) {
    MIAS_THROW_IF_NOT(scores.size() == gts.size(), ErrorCode::ShapeMismatch, "auroc: one mask per map required");
    AurocAccumulator acc;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        acc.add(scores[i], gts[i].mask);
    }
    return acc.auroc();
}

const char* to_string(DiceMode mode) { return mode == DiceMode::Pooled ? "pooled" : "per-image"; }

ImageOutcome score_prediction(const std::string& image_id, const BinaryMask& pred, const GroundTruthMask& gt) {
    ImageOutcome o;
    o.image_id = image_id;
    o.anomalous = gt.anomalous;
    o.predicted = true;
    o.dice = dice(pred, gt.mask);
    for (std::size_t i = 0; i < pred.bits.size(); ++i) {
        o.pred_pixels += pred.bits[i] != 0;
        o.gt_pixels += gt.mask.bits[i] != 0;
        o.intersection += (pred.bits[i] != 0) & (gt.mask.bits[i] != 0);
    }
    return o;
}

EvalReport evaluate(std::vector<ImageOutcome> outcomes, const AurocAccumulator& auroc, DiceMode mode) {
    std::sort(outcomes.begin(), outcomes.end(),
              [](const ImageOutcome& a, const ImageOutcome& b) { return a.image_id < b.image_id; });
    EvalReport r;
    r.dice_mode = mode;
    double dice_sum = 0.0;
    std::uint64_t inter = 0;
    std::uint64_t sizes = 0;
    std::size_t prompted = 0;
    std::size_t inside = 0;
    for (const ImageOutcome& o : outcomes) {
        MIAS_THROW_IF_NOT(o.predicted, ErrorCode::MissingPrediction, "no prediction for test image '" + o.image_id + "'");
        if (!o.anomalous) {
            ++r.counts.test_normal;
            continue;
        }
        ++r.counts.test_anomalous;
        dice_sum += o.dice;
        inter += o.intersection;
        sizes += o.pred_pixels + o.gt_pixels;
        if (o.has_prompt) {
            ++prompted;
            inside += o.prompt_in_gt;
        }
    }
    MIAS_THROW_IF_NOT(r.counts.test_anomalous > 0, ErrorCode::EmptySplit,
                      "evaluation needs at least one anomalous test image");
    r.p_auroc = auroc.auroc();
    r.p_auroc_exact = auroc.exact();
    r.counts.pixels = auroc.positives() + auroc.negatives();
    r.dice_pooled = sizes == 0 ? 1.0 : 2.0 * static_cast<double>(inter) / static_cast<double>(sizes);
    r.dice_mean = mode == DiceMode::Pooled ? r.dice_pooled : dice_sum / static_cast<double>(r.counts.test_anomalous);
    r.prompt_in_gt_rate = prompted == 0 ? 0.0 : static_cast<double>(inside) / static_cast<double>(prompted);
    r.per_image = std::move(outcomes);
    return r;
}

} // namespace mias
