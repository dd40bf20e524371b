// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mias/metrics.hpp"
#include "mias/types.hpp"

namespace mias {

enum class Split { Train, Test };

struct DatasetRecord {
    std::string id; // path relative to the dataset root, '/'-separated
    Split split = Split::Train;
    Image image;
    GroundTruthMask gt;
};

// Candidate directories (relative to the root) for each part of the tree; the
// first one that exists is used. Defaults cover the plain and the img/label
// variants of the BMAD layout.
struct DatasetLayout {
    std::vector<std::string> train = {"train/good", "train/good/img"};
    std::vector<std::string> test_normal = {"test/good", "test/good/img"};
    std::vector<std::string> test_anomalous = {"test/ungood", "test/Ungood", "test/ungood/img", "test/Ungood/img"};
    std::vector<std::string> masks = {"ground_truth/ungood", "ground_truth/Ungood", "test/ungood/label",
                                      "test/Ungood/label"};
};

struct DatasetOptions {
    int resolution = 1024;
    int channels = 1; // gray inputs are replicated, color inputs averaged to this count
    DatasetLayout layout;
};

struct DatasetEntry {
    std::string id;
    Split split = Split::Train;
    bool anomalous = false;
    std::filesystem::path image;
    std::filesystem::path mask; // empty for normal images
};

// File listing of a dataset; records are decoded on demand.
class Dataset {
  public:
    Dataset(std::filesystem::path root, DatasetOptions options);

    const std::vector<DatasetEntry>& train() const { return train_; }
    const std::vector<DatasetEntry>& test() const { return test_; }
    const DatasetOptions& options() const { return options_; }
    const std::filesystem::path& root() const { return root_; }

    DatasetRecord load(const DatasetEntry& entry) const;

  private:
    std::filesystem::path root_;
    DatasetOptions options_;
    std::vector<DatasetEntry> train_;
    std::vector<DatasetEntry> test_; // normal then anomalous, each in filename order
};

Dataset load_dataset(const std::filesystem::path& root, const DatasetOptions& options = {});

// Bilinear (pixel-center aligned) resize; identity when sizes match.
Image resize_bilinear(const Image& image, int height, int width);
// Nearest-neighbor resize of channel 0, binarized at 0.5.
BinaryMask resize_mask(const Image& mask, int height, int width);

struct SynthConfig {
    int n_train = 200;
    int n_test_normal = 20;
    int n_test_anomalous = 50;
    int resolution = 256;
    std::uint64_t seed = 42;
};

// Where the synthetic square of an anomalous image sits (inclusive bounds).
struct SynthSquare {
    int x = 0;
    int y = 0;
    int side = 0;
};

// Normal images: value-noise texture in [0.15, 0.45]. Anomalous images add
// +0.5 (clamped) on one axis-aligned square; its mask is written alongside.
// Returns the squares of the anomalous images in file order.
std::vector<SynthSquare> generate_synthetic(const std::filesystem::path& root, const SynthConfig& config);

// The in-memory image generate_synthetic writes (before 8-bit quantization).
Image synth_texture(int resolution, std::uint64_t seed);

} // namespace mias
