#include "sexplain/synth.hpp"

#include <algorithm>
#include <cmath>

namespace sexplain {

namespace {

bool in_shape(int shape, double dx, double dy, double half) {
    const double r2 = dx * dx + dy * dy;
    switch (shape) {
        case 0:  // square
            return std::abs(dx) <= half && std::abs(dy) <= half;
        case 1:  // circle
            return r2 <= half * half;
        case 2:  // triangle
            return std::abs(dy) <= half && std::abs(dx) <= (dy + half) * 0.5;
        case 3:  // cross
            return (std::abs(dx) <= half / 3.0 && std::abs(dy) <= half) ||
                   (std::abs(dy) <= half / 3.0 && std::abs(dx) <= half);
        case 4:  // ring
            return r2 <= half * half && r2 >= 0.3 * half * half;
        default:
            return false;
    }
}

}  // namespace

LabeledImage synth_image(int cls, Rng& rng) {
    if (cls < 0 || cls > 9) throw std::invalid_argument("synth_image: class must be in [0,10)");
    constexpr int kSize = 32;
    const int shape = cls / 2;
    const bool warm = (cls % 2) == 0;

    LabeledImage img;
    img.label = cls;
    img.c = 3;
    img.h = kSize;
    img.w = kSize;
    img.pixels.resize(3 * kSize * kSize);

    // noisy gradient background
    const double base = rng.uniform(50.0, 150.0);
    const double gx = rng.uniform(-1.2, 1.2);
    const double gy = rng.uniform(-1.2, 1.2);
    for (int y = 0; y < kSize; ++y)
        for (int x = 0; x < kSize; ++x) {
            const double level = base + gx * (x - 16) + gy * (y - 16);
            for (int c = 0; c < 3; ++c) {
                const double v = level + rng.normal(0.0, 12.0);
                img.at(c, y, x) = static_cast<float>(std::clamp(v, 0.0, 255.0) / 255.0);
            }
        }

    // a couple of neutral distractor blobs
    const int blobs = static_cast<int>(rng.below(3));
    for (int b = 0; b < blobs; ++b) {
        const int by = 3 + static_cast<int>(rng.below(kSize - 6));
        const int bx = 3 + static_cast<int>(rng.below(kSize - 6));
        const double br = rng.uniform(1.5, 3.0);
        const double lvl = rng.uniform(30.0, 225.0);
        for (int y = std::max(0, by - 3); y < std::min(kSize, by + 4); ++y)
            for (int x = std::max(0, bx - 3); x < std::min(kSize, bx + 4); ++x)
                if ((y - by) * (y - by) + (x - bx) * (x - bx) <= br * br)
                    for (int c = 0; c < 3; ++c)
                        img.at(c, y, x) = static_cast<float>(
                            std::clamp(lvl + rng.normal(0.0, 8.0), 0.0, 255.0) / 255.0);
    }

    // class object
    const double half = rng.uniform(5.0, 8.0);
    const int margin = static_cast<int>(std::ceil(half)) + 1;
    const int cy = margin + static_cast<int>(rng.below(kSize - 2 * margin));
    const int cx = margin + static_cast<int>(rng.below(kSize - 2 * margin));
    double color[3];
    if (warm) {
        color[0] = 220 + rng.uniform(-25.0, 25.0);
        color[1] = 70 + rng.uniform(-25.0, 25.0);
        color[2] = 40 + rng.uniform(-25.0, 25.0);
    } else {
        color[0] = 40 + rng.uniform(-25.0, 25.0);
        color[1] = 90 + rng.uniform(-25.0, 25.0);
        color[2] = 220 + rng.uniform(-25.0, 25.0);
    }
    for (int y = 0; y < kSize; ++y)
        for (int x = 0; x < kSize; ++x)
            if (in_shape(shape, x - cx, y - cy, half))
                for (int c = 0; c < 3; ++c)
                    img.at(c, y, x) = static_cast<float>(
                        std::clamp(color[c] + rng.normal(0.0, 10.0), 0.0, 255.0) / 255.0);
    return img;
}

void write_synthetic_cifar10(const std::filesystem::path& dir, std::uint64_t seed,
                             int per_train_batch, int train_batches, int test_count) {
    std::filesystem::create_directories(dir);
    Rng rng(seed);
    auto make_batch = [&](int count) {
        std::vector<LabeledImage> images;
        images.reserve(count);
        for (int i = 0; i < count; ++i)
            images.push_back(synth_image(static_cast<int>(rng.below(10)), rng));
        return images;
    };
    for (int b = 1; b <= train_batches; ++b)
        write_cifar10(dir / ("data_batch_" + std::to_string(b) + ".bin"),
                      make_batch(per_train_batch));
    write_cifar10(dir / "test_batch.bin", make_batch(test_count));
}

}  // namespace sexplain
