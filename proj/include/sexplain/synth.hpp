#ifndef SEXPLAIN_SYNTH_HPP
#define SEXPLAIN_SYNTH_HPP

#include "sexplain/data.hpp"

#include <filesystem>

namespace sexplain {

// Procedural 10-class 32x32 RGB corpus written in the CIFAR-10 binary
// record format: class = shape (square, circle, triangle, cross, ring)
// x palette (warm, cool), drawn at a random position over a noisy
// gradient background. Localized class evidence makes the corpus usable
// for saliency evaluation, not just classification.
LabeledImage synth_image(int cls, Rng& rng);

// Writes data_batch_1..5.bin and test_batch.bin under dir.
void write_synthetic_cifar10(const std::filesystem::path& dir, std::uint64_t seed,
                             int per_train_batch = 10000, int train_batches = 5,
                             int test_count = 10000);

}  // namespace sexplain

#endif
