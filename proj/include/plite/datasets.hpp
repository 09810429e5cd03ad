#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "plite/tensor.hpp"

namespace plite {

struct Example {
    Tensor image;  // [h,w,1], values in [0,1]
    int label = 0;
};

struct LabeledDataset {
    std::vector<Example> items;
    std::vector<std::string> class_names;

    size_t size() const { return items.size(); }
    int num_classes() const { return static_cast<int>(class_names.size()); }
};

/// Reads the IDX pair MNIST ships in (big-endian headers, magic 0x00000803
/// for images and 0x00000801 for labels). Pixels are scaled by 1/255.
LabeledDataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Writes a dataset back out as an IDX pair; inverse of load_idx for 8-bit
/// grayscale data.
void write_idx(const LabeledDataset& ds, const std::string& images_path,
               const std::string& labels_path);

/// Loads root/<class_name>/<file>.pgm trees: class_names are the sorted
/// subdirectory names, items sorted by (class, filename). Binary 8-bit PGM
/// (P5) only.
LabeledDataset load_folder(const std::string& root);

/// Materializes a dataset as a folder-per-class PGM tree (what load_folder
/// and the benchmark harness read).
void write_folder_pgm(const LabeledDataset& ds, const std::string& root);

Tensor load_pgm(const std::string& path);
void write_pgm(const Tensor& image, const std::string& path);

/// Seeded shuffle then per-class stratified split: floor(train_fraction *
/// class_count) items of each class go to train, the rest to validation.
std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& ds, double train_fraction,
                                                uint64_t seed);

struct SynthSpec {
    int classes = 2;
    int per_class = 50;
    int image_size = 16;
    double noise_sigma = 0.1;
};

/// Deterministic synthetic set: each class is a horizontal bar at a
/// class-specific row band plus seeded Gaussian noise. Separable by a small
/// CNN; a fast stand-in for image datasets in tests and sweeps.
LabeledDataset synth_dataset(const SynthSpec& spec, uint64_t seed);

/// Deterministic MNIST-scale stand-in: 10 digit glyphs rendered into
/// size x size grayscale images with per-item jitter, intensity variation and
/// Gaussian noise. Label = digit.
LabeledDataset synth_digits(int per_class, uint64_t seed, int image_size = 28,
                            double noise_sigma = 0.08, int jitter = 3);

/// First n items in round-robin class order (class 0 item 0, class 1 item 0,
/// ...); used to pick balanced calibration/benchmark subsets.
LabeledDataset take_round_robin(const LabeledDataset& ds, int n);

}  // namespace plite
