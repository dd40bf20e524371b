// SPDX-License-Identifier: Apache-2.0
#include "mias/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "mias/error.hpp"
#include "mias/hash.hpp"
#include "mias/png_io.hpp"
#include "mias/wire_protocol.hpp"

namespace mias {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

json versions() {
    json v;
    v["mias"] = kVersion;
    v["decoder_protocol"] = kProtocolVersion;
    v["bank_format"] = 1;
    v["embedding_format"] = 1;
    return v;
}

json bank_json(const BankSummary& b) {
    json j;
    j["vectors"] = b.vectors;
    j["dim"] = b.dim;
    j["index"] = b.index;
    j["fingerprint"] = b.fingerprint;
    return j;
}

json metrics_json(const EvalReport& r) {
    json m;
    m["p_auroc"] = r.p_auroc;
    m["p_auroc_exact"] = r.p_auroc_exact;
    m["dice_mean"] = r.dice_mean;
    m["dice_mode"] = to_string(r.dice_mode);
    m["dice_pooled"] = r.dice_pooled;
    m["prompt_in_gt_rate"] = r.prompt_in_gt_rate;
    return m;
}

json counts_json(const EvalReport& r) {
    json c;
    c["test_normal"] = r.counts.test_normal;
    c["test_anomalous"] = r.counts.test_anomalous;
    c["pixels"] = r.counts.pixels;
    return c;
}

json stats_json(const RunStats& s) {
    json j;
    j["decode_calls"] = s.decode_calls;
    j["skipped_prompts"] = s.skipped_prompts;
    return j;
}

void heat(float v, float& r, float& g, float& b) {
    const float t = std::clamp(v, 0.0f, 1.0f) * 3.0f;
    r = std::clamp(t, 0.0f, 1.0f);
    g = std::clamp(t - 1.0f, 0.0f, 1.0f);
    b = std::clamp(t - 2.0f, 0.0f, 1.0f);
}

std::string fixed(double v, int digits) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

} // namespace

json report_json(const EvalReport& report, const RunConfig& config, const Variant& variant, const RunStats& stats,
                 const BankSummary& bank) {
    json j;
    j["config_hash"] = report.config_hash;
    j["seed"] = config.seed;
    j["versions"] = versions();
    j["config"] = json::parse(canonical_config(config));
    j["variant"] = {{"prompt", to_string(variant.prompt)}, {"mask_rank", variant.rank}};
    j["bank"] = bank_json(bank);
    j["metrics"] = metrics_json(report);
    j["counts"] = counts_json(report);
    j["stats"] = stats_json(stats);
    json per = json::array();
    for (const ImageOutcome& o : report.per_image) {
        json e;
        e["id"] = o.image_id;
        e["anomalous"] = o.anomalous;
        e["dice"] = o.dice;
        e["pred_pixels"] = o.pred_pixels;
        e["gt_pixels"] = o.gt_pixels;
        e["intersection"] = o.intersection;
        e["image_score"] = o.image_score;
        if (o.has_prompt) {
            e["prompt"] = {o.prompt_x, o.prompt_y};
            e["prompt_in_gt"] = o.prompt_in_gt;
        }
        per.push_back(std::move(e));
    }
    j["per_image"] = std::move(per);
    return j;
}

std::string report_table(const std::string& title, const std::vector<Variant>& variants,
                         const std::vector<EvalReport>& reports) {
    std::ostringstream out;
    out << title << "\n";
    char line[128];
    std::snprintf(line, sizeof(line), "%-8s %-6s %9s %9s %9s\n", "prompt", "rank", "P-AUROC", "DICE", "in-GT");
    out << line;
    for (std::size_t i = 0; i < variants.size(); ++i) {
        const EvalReport& r = reports[i];
        std::snprintf(line, sizeof(line), "%-8s %-6d %9s %9s %9s\n", to_string(variants[i].prompt), variants[i].rank,
                      fixed(100.0 * r.p_auroc, 2).c_str(), fixed(100.0 * r.dice_mean, 2).c_str(),
                      variants[i].prompt == PromptMode::Bbox ? "-" : fixed(100.0 * r.prompt_in_gt_rate, 1).c_str());
        out << line;
    }
    if (!reports.empty()) {
        out << "images: " << reports.front().counts.test_normal << " normal, " << reports.front().counts.test_anomalous
            << " anomalous; DICE mode " << to_string(reports.front().dice_mode) << "; config "
            << reports.front().config_hash << "\n";
    }
    return out.str();
}

json ablation_json(const std::string& kind, const RunConfig& config, const std::vector<Variant>& variants,
                   const std::vector<EvalReport>& reports, const RunStats& stats, const BankSummary& bank) {
    json j;
    j["ablation"] = kind;
    j["config_hash"] = reports.empty() ? std::string{} : reports.front().config_hash;
    j["seed"] = config.seed;
    j["versions"] = versions();
    j["config"] = json::parse(canonical_config(config));
    j["bank"] = bank_json(bank);
    j["stats"] = stats_json(stats);
    json rows = json::array();
    for (std::size_t i = 0; i < variants.size(); ++i) {
        json row;
        row["prompt"] = to_string(variants[i].prompt);
        row["mask_rank"] = variants[i].rank;
        row["metrics"] = metrics_json(reports[i]);
        row["counts"] = counts_json(reports[i]);
        rows.push_back(std::move(row));
    }
    j["rows"] = std::move(rows);
    return j;
}

Image overlay_panel(const Image& input, const AnomalyMap& map, const BinaryMask& pred, const BinaryMask& gt) {
    const int h = input.height;
    const int w = input.width;
    MIAS_THROW_IF_NOT(map.height == h && map.width == w && pred.height == h && gt.height == h && pred.width == w &&
                          gt.width == w,
                      ErrorCode::ShapeMismatch, "overlay inputs differ in shape");
    Image out(h, 4 * w, 3);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double g = 0.0;
            for (int c = 0; c < input.channels; ++c) {
                g += input.at(y, x, c);
            }
            const float v = static_cast<float>(g / input.channels);
            float r, gr, b;
            heat(map.at(y, x), r, gr, b);
            const float px[4][3] = {
                {v, v, v},
                {r, gr, b},
                {pred.at(y, x) ? 0.5f * v + 0.5f : v, pred.at(y, x) ? 0.5f * v : v, pred.at(y, x) ? 0.5f * v : v},
                {gt.at(y, x) ? 0.5f * v : v, gt.at(y, x) ? 0.5f * v + 0.5f : v, gt.at(y, x) ? 0.5f * v : v},
            };
            for (int p = 0; p < 4; ++p) {
                for (int c = 0; c < 3; ++c) {
                    out.at(y, p * w + x, c) = px[p][c];
                }
            }
        }
    }
    return out;
}

void write_overlay(const fs::path& dir, const DatasetRecord& record, const AnomalyMap& map, const BinaryMask& pred) {
    fs::create_directories(dir);
    std::string name = record.id;
    std::replace(name.begin(), name.end(), '/', '_');
    if (fs::path(name).extension() != ".png") {
        name += ".png";
    }
    write_png(dir / name, overlay_panel(record.image, map, pred, record.gt.mask));
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << text;
        MIAS_THROW_IF_NOT(out.good(), ErrorCode::Io, "cannot write " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string file_fingerprint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    MIAS_THROW_IF_NOT(in.good(), ErrorCode::Io, "cannot read " + path.string());
    Fnv1a h;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        h.add_bytes(buf, static_cast<std::size_t>(in.gcount()));
    }
    return hex64(h.value());
}

} // namespace mias
