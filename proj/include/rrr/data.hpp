#pragma once

#include "rrr/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace rrr {

struct Geometry {
    Index height = 0;
    Index width = 0;
    Index channels = 0;
    bool present() const { return height > 0; }
    Index numel() const { return height * width * channels; }
};

struct Dataset {
    Tensor X;         // N x D
    Tensor y;         // N x K one-hot
    Geometry geom;    // optional image geometry, h*w*c == D
    Tensor aux_mask;  // optional N x D marker of injected decoy features

    Index n() const { return X.rows(); }
    Index d() const { return X.cols(); }
    Index k() const { return y.cols(); }
    void validate() const;
};

// Toy Color: 5x5 RGB images over a fixed 4-color palette. Class 0 images have
// all four corners equal and the top-middle three pixels pairwise distinct;
// class 1 images satisfy neither condition.
inline constexpr Index kToyColorSide = 5;
inline constexpr Index kToyColorChannels = 3;
inline constexpr Index kToyColorDim = kToyColorSide * kToyColorSide * kToyColorChannels;
inline constexpr double kToyColorPalette[4][3] = {
    {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0}};

Dataset gen_toy_color(Index n, std::uint64_t seed);

enum class DecoyMode { train, test };

/// Overwrite one 4x4 corner block per image with a gray shade:
/// (255 - 25*label)/255 in train mode, a label-independent draw from the ten
/// training shades in test mode. Requires single-channel images >= 8x8 and
/// ten classes. The touched coordinates are recorded in aux_mask.
Dataset inject_decoy(const Dataset& base, DecoyMode mode, std::uint64_t seed);

/// Toy Color with a three-pixel gray decoy on the bottom-middle row, the
/// two-class analogue of the digit swatch rule: shade (255 - 225*label)/255
/// in train mode, label-independent in test mode. aux_mask marks the decoy.
/// In train mode a rule_noise fraction of images get their rule pixels
/// scrambled (labels unchanged), so the decoy is the only perfect predictor
/// and cross entropy keeps pulling toward it; test images are never scrambled.
Dataset gen_decoy_color(Index n, DecoyMode mode, std::uint64_t seed, double rule_noise = 0.2);

/// 2D points, class 0 uniform in [0.1,1]^2 and class 1 in [-1,-0.1]^2.
Dataset gen_quadrant2d(Index n, std::uint64_t seed);

struct IdxArray {
    std::vector<Index> dims;
    std::vector<std::uint8_t> bytes;
    Index numel() const;
};

/// Big-endian IDX (unsigned-byte payload only).
IdxArray parse_idx(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> idx_bytes(const IdxArray& a);
IdxArray load_idx_file(const std::filesystem::path& path);

/// Images [N,h,w] (pixels scaled by 1/255) plus labels [N] -> Dataset.
Dataset dataset_from_idx(const IdxArray& images, const IdxArray& labels, Index limit = 0,
                         Index num_classes = 10);

/// Composite Iris (classes 1,2) x Breast-Cancer (first 50 per class) dataset:
/// 100 rows, 34 columns with the four Iris features first, min-max scaled to
/// [0,1] over the loaded rows. Row order is shuffled by seed.
Dataset load_iris_cancer(const std::filesystem::path& iris_csv,
                         const std::filesystem::path& cancer_csv, std::uint64_t seed);

/// Stratified row partition; fraction goes to the first output.
std::pair<Dataset, Dataset> train_test_split(const Dataset& ds, double fraction,
                                             std::uint64_t seed);

Dataset subset(const Dataset& ds, std::span<const Index> rows);
/// First n rows.
Dataset take(const Dataset& ds, Index n);
Dataset replace_columns(const Dataset& ds, std::span<const Index> cols, double value);

void save_dataset(const Dataset& ds, const std::filesystem::path& path,
                  const std::map<std::string, std::string>& manifest = {});
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace rrr
