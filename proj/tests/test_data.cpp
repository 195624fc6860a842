#include "sexplain/data.hpp"
#include "sexplain/synth.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"

using namespace sexplain;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const char* stem) {
    return fs::temp_directory_path() / (std::string("sexplain_data_") + stem);
}

LabeledImage random_image(Rng& rng, int c = 3, int h = 32, int w = 32) {
    LabeledImage img;
    img.label = static_cast<int>(rng.below(10));
    img.c = c;
    img.h = h;
    img.w = w;
    img.pixels.resize(static_cast<std::size_t>(c) * h * w);
    // quantized values survive the u8 round trip exactly
    for (auto& p : img.pixels) p = static_cast<float>(rng.below(256)) / 255.0f;
    return img;
}

void write_raw(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("cifar10 write/parse round trip") {
    Rng rng(1);
    std::vector<LabeledImage> imgs;
    for (int i = 0; i < 5; ++i) imgs.push_back(random_image(rng));
    const auto path = temp_path("c10.bin");
    write_cifar10(path, imgs);
    CHECK(fs::file_size(path) == 5 * 3073);
    auto split = parse_cifar10({path}, "test");
    CHECK(split.tag == "test");
    CHECK(split.num_classes == 10);
    REQUIRE(split.images.size() == 5);
    for (int i = 0; i < 5; ++i) {
        CHECK(split.images[i].label == imgs[i].label);
        CHECK(split.images[i].pixels == imgs[i].pixels);
    }
    fs::remove(path);
}

TEST_CASE("cifar10 parser failure modes carry byte offsets") {
    Rng rng(2);
    const auto path = temp_path("c10bad.bin");

    SUBCASE("truncated record") {
        std::vector<std::uint8_t> bytes(3073 + 100, 0);
        write_raw(path, bytes);
        try {
            parse_cifar10({path});
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.offset == 3073);
        }
    }
    SUBCASE("label out of range") {
        std::vector<std::uint8_t> bytes(3073, 0);
        bytes[0] = 10;
        write_raw(path, bytes);
        try {
            parse_cifar10({path});
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.offset == 0);
        }
    }
    SUBCASE("empty file") {
        write_raw(path, {});
        CHECK_THROWS_AS(parse_cifar10({path}), ParseError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(parse_cifar10({temp_path("does_not_exist.bin")}), ParseError);
    }
    fs::remove(path);
}

TEST_CASE("cifar100 records keep the fine label") {
    std::vector<std::uint8_t> bytes(3074 * 2, 0);
    bytes[0] = 7;           // coarse
    bytes[1] = 42;          // fine
    bytes[3074] = 3;
    bytes[3075] = 99;
    const auto path = temp_path("c100.bin");
    write_raw(path, bytes);
    auto split = parse_cifar100({path});
    CHECK(split.num_classes == 100);
    REQUIRE(split.images.size() == 2);
    CHECK(split.images[0].label == 42);
    CHECK(split.images[1].label == 99);
    fs::remove(path);
}

TEST_CASE("mnist idx round trip and magic checks") {
    Rng rng(3);
    std::vector<LabeledImage> imgs;
    for (int i = 0; i < 4; ++i) imgs.push_back(random_image(rng, 1, 28, 28));
    const auto ip = temp_path("imgs.idx");
    const auto lp = temp_path("lbls.idx");
    write_mnist_idx(ip, lp, imgs);
    auto split = parse_mnist_idx(ip, lp);
    REQUIRE(split.images.size() == 4);
    CHECK(split.images[2].label == imgs[2].label);
    CHECK(split.images[2].pixels == imgs[2].pixels);
    CHECK(split.images[0].c == 1);
    CHECK(split.images[0].h == 28);

    // files swapped -> magic mismatch, not garbage data
    CHECK_THROWS_AS(parse_mnist_idx(lp, ip), ParseError);

    // truncate the image payload
    auto bytes = [&] {
        std::ifstream in(ip, std::ios::binary);
        return std::vector<std::uint8_t>{std::istreambuf_iterator<char>(in),
                                         std::istreambuf_iterator<char>()};
    }();
    bytes.resize(bytes.size() - 10);
    write_raw(ip, bytes);
    CHECK_THROWS_AS(parse_mnist_idx(ip, lp), ParseError);
    fs::remove(ip);
    fs::remove(lp);
}

TEST_CASE("parser fuzz: random bytes never crash") {
    Rng rng(4);
    const auto path = temp_path("fuzz.bin");
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<std::uint8_t> bytes(rng.below(4096));
        for (auto& b : bytes) b = static_cast<std::uint8_t>(rng.below(256));
        write_raw(path, bytes);
        try {
            parse_cifar10({path});
        } catch (const ParseError&) {
        }
        try {
            parse_mnist_idx(path, path);
        } catch (const ParseError&) {
        }
    }
    fs::remove(path);
}

TEST_CASE("flip_horizontal is an involution and mirrors columns") {
    Rng rng(5);
    auto img = random_image(rng);
    auto flipped = flip_horizontal(img);
    CHECK(flipped.at(0, 3, 0) == img.at(0, 3, 31));
    CHECK(flipped.at(2, 17, 10) == img.at(2, 17, 21));
    auto twice = flip_horizontal(flipped);
    CHECK(twice.pixels == img.pixels);
    CHECK(flipped.label == img.label);
}

TEST_CASE("reflect_pad_crop at the center offset is the identity") {
    Rng rng(6);
    auto img = random_image(rng);
    auto same = reflect_pad_crop(img, 4, 4, 4);
    CHECK(same.pixels == img.pixels);
}

TEST_CASE("reflect_pad_crop reflects without repeating the border row") {
    Rng rng(7);
    auto img = random_image(rng, 1, 8, 8);
    // shift fully up: output row 0 reads padded row -4, which reflects to row 4
    auto shifted = reflect_pad_crop(img, 4, 0, 4);
    for (int x = 0; x < 8; ++x) {
        CHECK(shifted.at(0, 0, x) == img.at(0, 4, x));
        CHECK(shifted.at(0, 1, x) == img.at(0, 3, x));
        CHECK(shifted.at(0, 4, x) == img.at(0, 0, x));
        CHECK(shifted.at(0, 5, x) == img.at(0, 1, x));
    }
    CHECK_THROWS_AS(reflect_pad_crop(img, 4, 9, 0), std::invalid_argument);
    CHECK_THROWS_AS(reflect_pad_crop(img, 4, 0, -1), std::invalid_argument);
}

TEST_CASE("augment preserves label and shape and is seed deterministic") {
    Rng rng(8);
    auto img = random_image(rng);
    Rng a(77), b(77), c(78);
    auto out_a = augment(img, a);
    auto out_b = augment(img, b);
    auto out_c = augment(img, c);
    CHECK(out_a.label == img.label);
    CHECK(out_a.h == 32);
    CHECK(out_a.w == 32);
    CHECK(out_a.pixels == out_b.pixels);
    // different stream almost surely moves at least one pixel
    CHECK(out_a.pixels != out_c.pixels);
}

TEST_CASE("normalize/denormalize are inverse maps") {
    Rng rng(9);
    auto img = random_image(rng);
    ChannelStats stats{{0.48f, 0.45f, 0.40f}, {0.20f, 0.22f, 0.25f}};
    auto normed = normalize(img, stats);
    auto back = denormalize(normed, stats);
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
        CHECK(back.pixels[i] == doctest::Approx(img.pixels[i]).epsilon(1e-5));
    ChannelStats bad{{0, 0, 0}, {0.1f, 0.0f, 0.1f}};
    CHECK_THROWS_AS(normalize(img, bad), std::invalid_argument);
}

TEST_CASE("compute_channel_stats matches a direct two-pass computation") {
    Rng rng(10);
    DatasetSplit split;
    for (int i = 0; i < 8; ++i) split.images.push_back(random_image(rng));
    auto stats = compute_channel_stats(split);
    for (int c = 0; c < 3; ++c) {
        double mean = 0;
        std::size_t n = 0;
        for (const auto& img : split.images)
            for (int y = 0; y < 32; ++y)
                for (int x = 0; x < 32; ++x) {
                    mean += img.at(c, y, x);
                    ++n;
                }
        mean /= static_cast<double>(n);
        double var = 0;
        for (const auto& img : split.images)
            for (int y = 0; y < 32; ++y)
                for (int x = 0; x < 32; ++x) {
                    const double d = img.at(c, y, x) - mean;
                    var += d * d;
                }
        var /= static_cast<double>(n);
        CHECK(stats.mean[c] == doctest::Approx(mean).epsilon(1e-4));
        CHECK(stats.stddev[c] == doctest::Approx(std::sqrt(var)).epsilon(1e-3));
    }
}

TEST_CASE("load_dataset rejects unknown ids, synthetic corpus loads") {
    CHECK_THROWS_AS(load_dataset("imagenet", "."), std::invalid_argument);

    const auto dir = temp_path("synthdir");
    fs::create_directories(dir);
    write_synthetic_cifar10(dir, 123, 20, 5, 20);
    auto [train, test] = load_dataset("cifar10", dir);
    CHECK(train.images.size() == 100);
    CHECK(test.images.size() == 20);
    // labels cover all ten classes across the corpus
    std::vector<int> seen(10, 0);
    for (const auto& img : train.images) ++seen[img.label];
    for (int k = 0; k < 10; ++k) CHECK(seen[k] > 0);
    // regeneration with the same seed is byte-identical
    const auto dir2 = temp_path("synthdir2");
    fs::create_directories(dir2);
    write_synthetic_cifar10(dir2, 123, 20, 5, 20);
    auto a = std::ifstream(dir / "data_batch_1.bin", std::ios::binary);
    auto b = std::ifstream(dir2 / "data_batch_1.bin", std::ios::binary);
    std::vector<char> ba{std::istreambuf_iterator<char>(a), std::istreambuf_iterator<char>()};
    std::vector<char> bb{std::istreambuf_iterator<char>(b), std::istreambuf_iterator<char>()};
    CHECK(ba == bb);
    fs::remove_all(dir);
    fs::remove_all(dir2);
}
