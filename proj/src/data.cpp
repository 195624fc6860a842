#include "sexplain/data.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>

namespace sexplain {

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string(), 0);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return bytes;
}

DatasetSplit parse_cifar_common(const std::vector<std::filesystem::path>& paths, int label_bytes,
                                int num_classes, const std::string& tag) {
    const std::size_t record = static_cast<std::size_t>(label_bytes) + 3072;
    DatasetSplit split;
    split.num_classes = num_classes;
    split.tag = tag;
    for (const auto& path : paths) {
        const std::vector<std::uint8_t> bytes = read_file(path);
        if (bytes.empty()) throw ParseError(path.string() + ": empty file", 0);
        if (bytes.size() % record != 0)
            throw ParseError(path.string() + ": truncated record " +
                                 std::to_string(bytes.size() / record),
                             (bytes.size() / record) * record);
        for (std::size_t r = 0; r * record < bytes.size(); ++r) {
            const std::size_t base = r * record;
            const int label = bytes[base + label_bytes - 1];  // fine label for CIFAR-100
            if (label >= num_classes)
                throw ParseError(path.string() + ": label byte " + std::to_string(label) +
                                     " out of range",
                                 base + label_bytes - 1);
            LabeledImage img;
            img.label = label;
            img.c = 3;
            img.h = 32;
            img.w = 32;
            img.pixels.resize(3072);
            for (std::size_t i = 0; i < 3072; ++i)
                img.pixels[i] = static_cast<float>(bytes[base + label_bytes + i]) / 255.0f;
            split.images.push_back(std::move(img));
        }
    }
    return split;
}

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_u32_be(const std::vector<std::uint8_t>& bytes, std::size_t off) {
    if (off + 4 > bytes.size()) throw ParseError("IDX header truncated", off);
    return (static_cast<std::uint32_t>(bytes[off]) << 24) |
           (static_cast<std::uint32_t>(bytes[off + 1]) << 16) |
           (static_cast<std::uint32_t>(bytes[off + 2]) << 8) |
           static_cast<std::uint32_t>(bytes[off + 3]);
}

}  // namespace

DatasetSplit parse_cifar10(const std::vector<std::filesystem::path>& paths,
                           const std::string& tag) {
    return parse_cifar_common(paths, 1, 10, tag);
}

DatasetSplit parse_cifar100(const std::vector<std::filesystem::path>& paths,
                            const std::string& tag) {
    return parse_cifar_common(paths, 2, 100, tag);
}

void write_cifar10(const std::filesystem::path& path, const std::vector<LabeledImage>& images) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    std::vector<std::uint8_t> rec(3073);
    for (const auto& img : images) {
        rec[0] = static_cast<std::uint8_t>(img.label);
        for (std::size_t i = 0; i < 3072; ++i)
            rec[1 + i] = static_cast<std::uint8_t>(std::lround(img.pixels[i] * 255.0f));
        out.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
    }
}

DatasetSplit parse_mnist_idx(const std::filesystem::path& images_path,
                             const std::filesystem::path& labels_path, const std::string& tag) {
    const std::vector<std::uint8_t> ib = read_file(images_path);
    const std::vector<std::uint8_t> lb = read_file(labels_path);
    if (get_u32_be(ib, 0) != 0x00000803u)
        throw ParseError(images_path.string() + ": bad IDX image magic", 0);
    if (get_u32_be(lb, 0) != 0x00000801u)
        throw ParseError(labels_path.string() + ": bad IDX label magic", 0);
    const std::uint32_t n = get_u32_be(ib, 4);
    const std::uint32_t h = get_u32_be(ib, 8);
    const std::uint32_t w = get_u32_be(ib, 12);
    const std::uint32_t nl = get_u32_be(lb, 4);
    if (n != nl)
        throw ParseError("IDX image/label count mismatch: " + std::to_string(n) + " vs " +
                             std::to_string(nl),
                         4);
    if (h == 0 || w == 0 || h > 4096 || w > 4096)
        throw ParseError(images_path.string() + ": implausible IDX dimensions", 8);
    const std::size_t need = 16 + static_cast<std::size_t>(n) * h * w;
    if (ib.size() != need)
        throw ParseError(images_path.string() + ": IDX image payload truncated",
                         std::min(ib.size(), need));
    if (lb.size() != 8 + static_cast<std::size_t>(n))
        throw ParseError(labels_path.string() + ": IDX label payload truncated",
                         std::min(lb.size(), static_cast<std::size_t>(8) + n));

    DatasetSplit split;
    split.num_classes = 10;
    split.tag = tag;
    split.images.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        const int label = lb[8 + i];
        if (label > 9)
            throw ParseError(labels_path.string() + ": label byte out of range",
                             8 + static_cast<std::size_t>(i));
        LabeledImage img;
        img.label = label;
        img.c = 1;
        img.h = static_cast<int>(h);
        img.w = static_cast<int>(w);
        img.pixels.resize(static_cast<std::size_t>(h) * w);
        const std::size_t base = 16 + static_cast<std::size_t>(i) * h * w;
        for (std::size_t p = 0; p < img.pixels.size(); ++p)
            img.pixels[p] = static_cast<float>(ib[base + p]) / 255.0f;
        split.images.push_back(std::move(img));
    }
    return split;
}

void write_mnist_idx(const std::filesystem::path& images_path,
                     const std::filesystem::path& labels_path,
                     const std::vector<LabeledImage>& images) {
    const int h = images.empty() ? 28 : images[0].h;
    const int w = images.empty() ? 28 : images[0].w;
    std::vector<std::uint8_t> ib, lb;
    put_u32_be(ib, 0x00000803u);
    put_u32_be(ib, static_cast<std::uint32_t>(images.size()));
    put_u32_be(ib, static_cast<std::uint32_t>(h));
    put_u32_be(ib, static_cast<std::uint32_t>(w));
    put_u32_be(lb, 0x00000801u);
    put_u32_be(lb, static_cast<std::uint32_t>(images.size()));
    for (const auto& img : images) {
        lb.push_back(static_cast<std::uint8_t>(img.label));
        for (float p : img.pixels)
            ib.push_back(static_cast<std::uint8_t>(std::lround(p * 255.0f)));
    }
    std::ofstream io(images_path, std::ios::binary), lo(labels_path, std::ios::binary);
    io.write(reinterpret_cast<const char*>(ib.data()), static_cast<std::streamsize>(ib.size()));
    lo.write(reinterpret_cast<const char*>(lb.data()), static_cast<std::streamsize>(lb.size()));
}

std::filesystem::path default_data_dir() {
    if (const char* env = std::getenv("SE_EXPLAIN_DATA_DIR")) return env;
    return std::filesystem::current_path();
}

std::pair<DatasetSplit, DatasetSplit> load_dataset(const std::string& dataset,
                                                   const std::filesystem::path& dir) {
    if (dataset == "cifar10") {
        std::vector<std::filesystem::path> train;
        for (int i = 1; i <= 5; ++i) train.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
        return {parse_cifar10(train, "train"), parse_cifar10({dir / "test_batch.bin"}, "test")};
    }
    if (dataset == "cifar100") {
        return {parse_cifar100({dir / "train.bin"}, "train"),
                parse_cifar100({dir / "test.bin"}, "test")};
    }
    if (dataset == "mnist") {
        return {parse_mnist_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte",
                                "train"),
                parse_mnist_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte",
                                "test")};
    }
    throw std::invalid_argument("unknown dataset id: " + dataset);
}

LabeledImage flip_horizontal(const LabeledImage& img) {
    LabeledImage out = img;
    for (int c = 0; c < img.c; ++c)
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x) out.at(c, y, x) = img.at(c, y, img.w - 1 - x);
    return out;
}

LabeledImage reflect_pad_crop(const LabeledImage& img, int pad, int oy, int ox) {
    if (oy < 0 || ox < 0 || oy > 2 * pad || ox > 2 * pad)
        throw std::invalid_argument("reflect_pad_crop: offset outside padded range");
    auto reflect = [](int i, int n) {
        // reflect without repeating the border sample
        if (i < 0) i = -i;
        if (i >= n) i = 2 * n - 2 - i;
        return i;
    };
    LabeledImage out = img;
    for (int c = 0; c < img.c; ++c)
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x) {
                const int sy = reflect(y + oy - pad, img.h);
                const int sx = reflect(x + ox - pad, img.w);
                out.at(c, y, x) = img.at(c, sy, sx);
            }
    return out;
}

LabeledImage augment(const LabeledImage& img, Rng& rng) {
    LabeledImage out = rng.bernoulli(0.5) ? flip_horizontal(img) : img;
    const int oy = static_cast<int>(rng.below(9));
    const int ox = static_cast<int>(rng.below(9));
    return reflect_pad_crop(out, 4, oy, ox);
}

ChannelStats compute_channel_stats(const DatasetSplit& split) {
    if (split.images.empty()) throw std::invalid_argument("compute_channel_stats: empty split");
    const int c = split.images[0].c;
    std::vector<double> sum(c, 0.0), sumsq(c, 0.0);
    std::size_t count = 0;
    for (const auto& img : split.images) {
        const std::size_t hw = static_cast<std::size_t>(img.h) * img.w;
        for (int ch = 0; ch < c; ++ch)
            for (std::size_t i = 0; i < hw; ++i) {
                const double v = img.pixels[ch * hw + i];
                sum[ch] += v;
                sumsq[ch] += v * v;
            }
        count += hw;
    }
    ChannelStats stats;
    for (int ch = 0; ch < c; ++ch) {
        const double mean = sum[ch] / static_cast<double>(count);
        const double var = sumsq[ch] / static_cast<double>(count) - mean * mean;
        stats.mean.push_back(static_cast<float>(mean));
        stats.stddev.push_back(static_cast<float>(std::sqrt(std::max(var, 1e-12))));
    }
    return stats;
}

LabeledImage normalize(const LabeledImage& img, const ChannelStats& stats) {
    LabeledImage out = img;
    const std::size_t hw = static_cast<std::size_t>(img.h) * img.w;
    for (int c = 0; c < img.c; ++c) {
        if (stats.stddev[c] <= 0) throw std::invalid_argument("normalize: stddev must be > 0");
        for (std::size_t i = 0; i < hw; ++i)
            out.pixels[c * hw + i] = (img.pixels[c * hw + i] - stats.mean[c]) / stats.stddev[c];
    }
    return out;
}

LabeledImage denormalize(const LabeledImage& img, const ChannelStats& stats) {
    LabeledImage out = img;
    const std::size_t hw = static_cast<std::size_t>(img.h) * img.w;
    for (int c = 0; c < img.c; ++c)
        for (std::size_t i = 0; i < hw; ++i)
            out.pixels[c * hw + i] = img.pixels[c * hw + i] * stats.stddev[c] + stats.mean[c];
    return out;
}

}  // namespace sexplain
