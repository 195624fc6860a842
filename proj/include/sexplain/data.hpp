#ifndef SEXPLAIN_DATA_HPP
#define SEXPLAIN_DATA_HPP

#include "sexplain/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace sexplain {

struct ParseError : std::runtime_error {
    std::size_t offset;
    ParseError(const std::string& msg, std::size_t off)
        : std::runtime_error(msg + " (byte offset " + std::to_string(off) + ")"), offset(off) {}
};

struct LabeledImage {
    int label = 0;
    int c = 0, h = 0, w = 0;
    std::vector<float> pixels;  // CHW, values in [0,1]

    float& at(int ic, int iy, int ix) { return pixels[(static_cast<std::size_t>(ic) * h + iy) * w + ix]; }
    float at(int ic, int iy, int ix) const {
        return pixels[(static_cast<std::size_t>(ic) * h + iy) * w + ix];
    }
};

struct DatasetSplit {
    std::vector<LabeledImage> images;
    int num_classes = 0;
    std::string tag;  // "train" or "test"
};

// CIFAR-10 binary batches: 3073-byte records, label byte then R,G,B planes.
// CIFAR-100 uses 3074-byte records (coarse label, fine label, planes); the
// fine label is kept.
DatasetSplit parse_cifar10(const std::vector<std::filesystem::path>& paths,
                           const std::string& tag = "train");
DatasetSplit parse_cifar100(const std::vector<std::filesystem::path>& paths,
                            const std::string& tag = "train");

// Serializer matching parse_cifar10's record layout (test round trips and
// the synthetic dataset writer).
void write_cifar10(const std::filesystem::path& path, const std::vector<LabeledImage>& images);

// MNIST IDX pair: images magic 0x00000803, labels magic 0x00000801, big-endian.
DatasetSplit parse_mnist_idx(const std::filesystem::path& images_path,
                             const std::filesystem::path& labels_path,
                             const std::string& tag = "train");
void write_mnist_idx(const std::filesystem::path& images_path,
                     const std::filesystem::path& labels_path,
                     const std::vector<LabeledImage>& images);

// Resolves --dir: explicit path, else SE_EXPLAIN_DATA_DIR, else cwd.
std::filesystem::path default_data_dir();

// Loads train+test splits for a dataset id ("cifar10", "cifar100", "mnist")
// rooted at dir, using the standard file names of each distribution.
std::pair<DatasetSplit, DatasetSplit> load_dataset(const std::string& dataset,
                                                   const std::filesystem::path& dir);

LabeledImage flip_horizontal(const LabeledImage& img);
// Reflect-pad by `pad` then crop the original extent at offset (oy, ox).
LabeledImage reflect_pad_crop(const LabeledImage& img, int pad, int oy, int ox);
// Training augmentation: horizontal flip with p=0.5, then pad-4-reflect
// random crop. Label and shape preserved.
LabeledImage augment(const LabeledImage& img, Rng& rng);

struct ChannelStats {
    std::vector<float> mean;
    std::vector<float> stddev;
};

ChannelStats compute_channel_stats(const DatasetSplit& split);
LabeledImage normalize(const LabeledImage& img, const ChannelStats& stats);
LabeledImage denormalize(const LabeledImage& img, const ChannelStats& stats);

}  // namespace sexplain

#endif
