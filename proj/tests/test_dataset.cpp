#include <cstdint>
#include <filesystem>
#include <fstream>

#include "coco/dataset.hpp"
#include "coco/errors.hpp"
#include "doctest.h"

using namespace coco;
namespace fs = std::filesystem;

namespace {

void put_be_u32(std::ofstream& out, std::uint32_t v) {
    const unsigned char b[4] = {
        static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
        static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

struct IdxFixture {
    fs::path dir;
    fs::path images;
    fs::path labels;

    IdxFixture() {
        dir = fs::temp_directory_path() / "cocolab_idx_test";
        fs::create_directories(dir);
        images = dir / "images-idx3-ubyte";
        labels = dir / "labels-idx1-ubyte";
    }

    // 10 images of 28x28 where pixel value = (sample + pixel) % 256.
    void write_valid(std::uint32_t count = 10) const {
        std::ofstream img(images, std::ios::binary);
        put_be_u32(img, 0x00000803);
        put_be_u32(img, count);
        put_be_u32(img, 28);
        put_be_u32(img, 28);
        for (std::uint32_t i = 0; i < count; ++i)
            for (std::uint32_t p = 0; p < 28 * 28; ++p) {
                const unsigned char v =
                    static_cast<unsigned char>((i + p) % 256);
                img.write(reinterpret_cast<const char*>(&v), 1);
            }
        std::ofstream lab(labels, std::ios::binary);
        put_be_u32(lab, 0x00000801);
        put_be_u32(lab, count);
        for (std::uint32_t i = 0; i < count; ++i) {
            const unsigned char v = static_cast<unsigned char>(i % 10);
            lab.write(reinterpret_cast<const char*>(&v), 1);
        }
    }
};

} // namespace

TEST_SUITE("dataset") {

TEST_CASE("synth_clusters basics") {
    SUBCASE("zero spread duplicates the class direction") {
        const auto ds = synth_clusters(3, 8, 5, 0.0, 42);
        CHECK(ds.size() == 15);
        CHECK(ds.dim() == 8);
        for (std::size_t i = 0; i < ds.size(); ++i) {
            const std::size_t base = (i / 5) * 5;
            for (std::size_t d = 0; d < 8; ++d)
                CHECK(ds.inputs(i, d) == ds.inputs(base, d));
        }
    }
    SUBCASE("same seed reproduces the dataset exactly") {
        const auto a = synth_clusters(4, 16, 10, 0.1, 7);
        const auto b = synth_clusters(4, 16, 10, 0.1, 7);
        CHECK(a.inputs == b.inputs);
        CHECK(a.labels == b.labels);
    }
    SUBCASE("different seeds differ") {
        const auto a = synth_clusters(4, 16, 10, 0.1, 7);
        const auto b = synth_clusters(4, 16, 10, 0.1, 8);
        CHECK_FALSE(a.inputs == b.inputs);
    }
    SUBCASE("labels are dense 1..K") {
        const auto ds = synth_clusters(5, 4, 3, 0.2, 1);
        std::vector<int> counts(5, 0);
        for (int l : ds.labels) {
            REQUIRE(l >= 1);
            REQUIRE(l <= 5);
            ++counts[static_cast<std::size_t>(l - 1)];
        }
        for (int c : counts) CHECK(c == 3);
    }
}

TEST_CASE("idx round-trip of a synthetic fixture") {
    IdxFixture fx;
    fx.write_valid();
    const auto ds = load_idx(fx.images.string(), fx.labels.string());
    CHECK(ds.size() == 10);
    CHECK(ds.dim() == 28 * 28);
    CHECK(ds.num_classes == 10);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(ds.labels[i] == static_cast<int>(i % 10) + 1);
        for (std::size_t p = 0; p < 28 * 28; ++p)
            CHECK(ds.inputs(i, p) == double((i + p) % 256) / 255.0);
    }
}

TEST_CASE("idx rejects a wrong magic") {
    IdxFixture fx;
    fx.write_valid();
    // Image magic where a label magic belongs.
    CHECK_THROWS_AS(load_idx(fx.images.string(), fx.images.string()),
                    BadMagicError);
    CHECK_THROWS_AS(load_idx(fx.labels.string(), fx.labels.string()),
                    BadMagicError);
}

TEST_CASE("idx rejects a truncated payload") {
    IdxFixture fx;
    fx.write_valid();
    // Chop the image payload short.
    const auto size = fs::file_size(fx.images);
    fs::resize_file(fx.images, size - 100);
    CHECK_THROWS_AS(load_idx(fx.images.string(), fx.labels.string()),
                    TruncatedFileError);
}

TEST_CASE("idx rejects mismatched counts") {
    IdxFixture fx;
    fx.write_valid();
    {
        std::ofstream lab(fx.labels, std::ios::binary);
        put_be_u32(lab, 0x00000801);
        put_be_u32(lab, 7);  // images say 10
        for (int i = 0; i < 7; ++i) {
            const unsigned char v = 0;
            lab.write(reinterpret_cast<const char*>(&v), 1);
        }
    }
    CHECK_THROWS_AS(load_idx(fx.images.string(), fx.labels.string()),
                    CountMismatchError);
}

} // TEST_SUITE
