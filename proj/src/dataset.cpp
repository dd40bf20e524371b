// SPDX-License-Identifier: Apache-2.0
#include "mias/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "mias/error.hpp"
#include "mias/png_io.hpp"
#include "mias/random.hpp"

namespace mias {

namespace fs = std::filesystem;

namespace {

std::vector<fs::path> list_pngs(const fs::path& dir) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) {
            continue;
        }
        std::string ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext == ".png") {
            out.push_back(e.path());
        }
    }
    std::sort(out.begin(), out.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
    return out;
}

// First alias that names an existing directory; empty path when none does.
fs::path resolve(const fs::path& root, const std::vector<std::string>& aliases) {
    for (const auto& a : aliases) {
        const fs::path p = root / a;
        if (fs::is_directory(p) && !list_pngs(p).empty()) {
            return p;
        }
    }
    return {};
}

std::string relative_id(const fs::path& root, const fs::path& p) {
    return fs::relative(p, root).generic_string();
}

Image to_channels(const Image& img, int channels) {
    if (img.channels == channels) {
        return img;
    }
    Image out(img.height, img.width, channels);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            float v = 0.0f;
            if (img.channels == 1) {
                v = img.at(y, x, 0);
            } else {
                double s = 0.0;
                for (int c = 0; c < img.channels; ++c) {
                    s += img.at(y, x, c);
                }
                v = static_cast<float>(s / img.channels);
            }
            for (int c = 0; c < channels; ++c) {
                out.at(y, x, c) = img.channels == 1 || channels == 1 ? v : img.at(y, x, std::min(c, img.channels - 1));
            }
        }
    }
    return out;
}

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

// One octave of value noise on a (cells + 1)^2 lattice, in [0, 1).
void add_octave(std::vector<double>& acc, int res, int cells, double weight, Rng& rng) {
    const int n = cells + 1;
    std::vector<double> lattice(static_cast<std::size_t>(n) * n);
    for (double& v : lattice) {
        v = rng.uniform();
    }
    const double scale = static_cast<double>(cells) / res;
    for (int y = 0; y < res; ++y) {
        const double fy = (y + 0.5) * scale;
        const int iy = std::min(static_cast<int>(fy), cells - 1);
        const double ty = smooth(fy - iy);
        for (int x = 0; x < res; ++x) {
            const double fx = (x + 0.5) * scale;
            const int ix = std::min(static_cast<int>(fx), cells - 1);
            const double tx = smooth(fx - ix);
            const double a = lattice[iy * n + ix];
            const double b = lattice[iy * n + ix + 1];
            const double c = lattice[(iy + 1) * n + ix];
            const double d = lattice[(iy + 1) * n + ix + 1];
            const double top = a + tx * (b - a);
            const double bottom = c + tx * (d - c);
            acc[static_cast<std::size_t>(y) * res + x] += weight * (top + ty * (bottom - top));
        }
    }
}

std::string file_name(int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%03d.png", i);
    return buf;
}

} // namespace

Dataset::Dataset(fs::path root, DatasetOptions options) : root_(std::move(root)), options_(std::move(options)) {
    MIAS_THROW_IF_NOT(options_.resolution > 0, ErrorCode::Config, "resolution must be positive");
    MIAS_THROW_IF_NOT(options_.channels == 1 || options_.channels == 3, ErrorCode::Config, "channels must be 1 or 3");
    MIAS_THROW_IF_NOT(fs::is_directory(root_), ErrorCode::Io, "dataset root " + root_.string() + " is not a directory");

    const fs::path train_dir = resolve(root_, options_.layout.train);
    MIAS_THROW_IF_NOT(!train_dir.empty(), ErrorCode::EmptySplit, "no training images under " + root_.string());
    for (const auto& p : list_pngs(train_dir)) {
        train_.push_back({relative_id(root_, p), Split::Train, false, p, {}});
    }

    if (const fs::path good = resolve(root_, options_.layout.test_normal); !good.empty()) {
        for (const auto& p : list_pngs(good)) {
            test_.push_back({relative_id(root_, p), Split::Test, false, p, {}});
        }
    }
    if (const fs::path bad = resolve(root_, options_.layout.test_anomalous); !bad.empty()) {
        const fs::path masks = resolve(root_, options_.layout.masks);
        for (const auto& p : list_pngs(bad)) {
            fs::path m;
            if (!masks.empty()) {
                for (const std::string& name : {p.filename().string(), p.stem().string() + "_mask.png"}) {
                    if (fs::is_regular_file(masks / name)) {
                        m = masks / name;
                        break;
                    }
                }
            }
            MIAS_THROW_IF_NOT(!m.empty(), ErrorCode::MissingMask,
                              "anomalous test image " + p.string() + " has no ground-truth mask" +
                                  (masks.empty() ? std::string(" (no mask directory found)")
                                                 : " in " + masks.string()));
            test_.push_back({relative_id(root_, p), Split::Test, true, p, m});
        }
    }
    MIAS_THROW_IF_NOT(!test_.empty(), ErrorCode::EmptySplit, "no test images under " + root_.string());
}

DatasetRecord Dataset::load(const DatasetEntry& entry) const {
    const int r = options_.resolution;
    DatasetRecord rec;
    rec.id = entry.id;
    rec.split = entry.split;
    rec.image = to_channels(resize_bilinear(read_png(entry.image), r, r), options_.channels);
    rec.gt.image_id = entry.id;
    rec.gt.anomalous = entry.anomalous;
    rec.gt.mask = entry.anomalous ? resize_mask(read_png(entry.mask), r, r) : BinaryMask(r, r);
    return rec;
}

Dataset load_dataset(const fs::path& root, const DatasetOptions& options) { return Dataset(root, options); }

Image resize_bilinear(const Image& image, int height, int width) {
    MIAS_THROW_IF_NOT(height > 0 && width > 0, ErrorCode::InvalidArgument, "resize target must be positive");
    if (image.height == height && image.width == width) {
        return image;
    }
    struct Tap {
        int lo, hi;
        double t;
    };
    auto taps = [](int dst, int src) {
        std::vector<Tap> out(static_cast<std::size_t>(dst));
        const double scale = static_cast<double>(src) / dst;
        for (int p = 0; p < dst; ++p) {
            const double u = std::clamp((p + 0.5) * scale - 0.5, 0.0, static_cast<double>(src - 1));
            const int lo = static_cast<int>(u);
            out[p] = {lo, std::min(lo + 1, src - 1), u - lo};
        }
        return out;
    };
    const auto ty = taps(height, image.height);
    const auto tx = taps(width, image.width);
    Image out(height, width, image.channels);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < image.channels; ++c) {
                const double a = image.at(ty[y].lo, tx[x].lo, c);
                const double b = image.at(ty[y].lo, tx[x].hi, c);
                const double d = image.at(ty[y].hi, tx[x].lo, c);
                const double e = image.at(ty[y].hi, tx[x].hi, c);
                const double top = a + tx[x].t * (b - a);
                const double bottom = d + tx[x].t * (e - d);
                out.at(y, x, c) = static_cast<float>(std::clamp(top + ty[y].t * (bottom - top), 0.0, 1.0));
            }
        }
    }
    return out;
}

BinaryMask resize_mask(const Image& mask, int height, int width) {
    BinaryMask out(height, width);
    for (int y = 0; y < height; ++y) {
        const int sy = std::min(static_cast<int>((y + 0.5) * mask.height / height), mask.height - 1);
        for (int x = 0; x < width; ++x) {
            const int sx = std::min(static_cast<int>((x + 0.5) * mask.width / width), mask.width - 1);
            out.at(y, x) = mask.at(sy, sx, 0) >= 0.5f ? 1 : 0;
        }
    }
    return out;
}

Image synth_texture(int resolution, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> acc(static_cast<std::size_t>(resolution) * resolution, 0.0);
    add_octave(acc, resolution, 4, 2.0 / 3.0, rng);
    add_octave(acc, resolution, 8, 1.0 / 3.0, rng);
    Image img(resolution, resolution, 1);
    for (std::size_t i = 0; i < acc.size(); ++i) {
        img.pixels[i] = static_cast<float>(0.15 + 0.3 * acc[i]);
    }
    return img;
}

std::vector<SynthSquare> generate_synthetic(const fs::path& root, const SynthConfig& cfg) {
    MIAS_THROW_IF_NOT(cfg.n_train > 0 && cfg.n_test_normal >= 0 && cfg.n_test_anomalous > 0, ErrorCode::Config,
                      "synthetic dataset needs train and anomalous test images");
    MIAS_THROW_IF_NOT(cfg.resolution >= 64 && cfg.resolution % 64 == 0, ErrorCode::Config,
                      "synthetic resolution must be a positive multiple of 64");
    MIAS_THROW_IF_NOT(cfg.n_train <= 999 && cfg.n_test_normal <= 999 && cfg.n_test_anomalous <= 999,
                      ErrorCode::Config, "at most 999 images per split");
    const int res = cfg.resolution;
    for (const char* d : {"train/good", "test/good", "test/ungood", "ground_truth/ungood"}) {
        fs::create_directories(root / d);
    }
    auto image_seed = [&](std::uint64_t split, int i) {
        return splitmix(cfg.seed ^ splitmix((split << 32) | static_cast<std::uint64_t>(i)));
    };
    for (int i = 0; i < cfg.n_train; ++i) {
        write_png(root / "train/good" / file_name(i), synth_texture(res, image_seed(1, i)));
    }
    for (int i = 0; i < cfg.n_test_normal; ++i) {
        write_png(root / "test/good" / file_name(i), synth_texture(res, image_seed(2, i)));
    }
    std::vector<SynthSquare> squares;
    for (int i = 0; i < cfg.n_test_anomalous; ++i) {
        const std::uint64_t s = image_seed(3, i);
        Image img = synth_texture(res, s);
        Rng rng(splitmix(s));
        const int lo = res / 16;
        const int hi = res / 6;
        SynthSquare sq;
        sq.side = lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
        sq.x = static_cast<int>(rng.below(static_cast<std::uint64_t>(res - sq.side + 1)));
        sq.y = static_cast<int>(rng.below(static_cast<std::uint64_t>(res - sq.side + 1)));
        BinaryMask mask(res, res);
        for (int y = sq.y; y < sq.y + sq.side; ++y) {
            for (int x = sq.x; x < sq.x + sq.side; ++x) {
                img.at(y, x) = std::min(1.0f, img.at(y, x) + 0.5f);
                mask.at(y, x) = 1;
            }
        }
        write_png(root / "test/ungood" / file_name(i), img);
        write_mask_png(root / "ground_truth/ungood" / file_name(i), mask);
        squares.push_back(sq);
    }
    return squares;
}

} // namespace mias
