#include "coco/dataset.hpp"

#include <cstdio>
#include <fstream>

#include "coco/core_math.hpp"
#include "coco/errors.hpp"
#include "coco/rng.hpp"

namespace coco {

Dataset synth_clusters(int num_classes, int input_dim, int per_class,
                       double spread, std::uint64_t seed) {
    if (num_classes < 2)
        throw InvalidKError("synth_clusters: need at least 2 classes");
    if (per_class < 1)
        throw Error("synth_clusters: per_class must be >= 1");
    if (input_dim < 1)
        throw Error("synth_clusters: input_dim must be >= 1");
    if (spread < 0.0)
        throw Error("synth_clusters: spread must be >= 0");

    Rng rng(seed);
    const std::size_t K = static_cast<std::size_t>(num_classes);
    const std::size_t D = static_cast<std::size_t>(input_dim);

    Matrix directions(K, D);
    for (std::size_t k = 0; k < K; ++k) {
        Vec dir(D);
        double sq = 0.0;
        do {
            sq = 0.0;
            for (auto& x : dir) {
                x = rng.normal();
                sq += x * x;
            }
        } while (sq < 1e-12);
        const Vec unit = normalize_scale(dir, 1.0);
        std::copy(unit.begin(), unit.end(), directions.row(k));
    }

    Dataset ds;
    ds.num_classes = num_classes;
    ds.inputs = Matrix(K * static_cast<std::size_t>(per_class), D);
    ds.labels.resize(ds.inputs.rows);
    std::size_t row = 0;
    for (std::size_t k = 0; k < K; ++k) {
        for (int s = 0; s < per_class; ++s, ++row) {
            const double* dir = directions.row(k);
            double* x = ds.inputs.row(row);
            for (std::size_t d = 0; d < D; ++d)
                x[d] = dir[d] + spread * rng.normal();
            ds.labels[row] = static_cast<int>(k) + 1;
        }
    }
    return ds;
}

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be_u32(std::ifstream& in, const std::string& path) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw TruncatedFileError("idx: truncated header in " + path);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

std::ifstream open_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("idx: cannot open " + path);
    return in;
}

} // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img = open_binary(images_path);
    const std::uint32_t img_magic = read_be_u32(img, images_path);
    if (img_magic != kImageMagic) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "0x%08x", img_magic);
        throw BadMagicError("idx: image file " + images_path +
                            " has magic " + buf);
    }
    const std::uint32_t count = read_be_u32(img, images_path);
    const std::uint32_t rows = read_be_u32(img, images_path);
    const std::uint32_t cols = read_be_u32(img, images_path);
    const std::size_t pixels = std::size_t(rows) * cols;

    std::ifstream lab = open_binary(labels_path);
    const std::uint32_t lab_magic = read_be_u32(lab, labels_path);
    if (lab_magic != kLabelMagic) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "0x%08x", lab_magic);
        throw BadMagicError("idx: label file " + labels_path +
                            " has magic " + buf);
    }
    const std::uint32_t lab_count = read_be_u32(lab, labels_path);
    if (lab_count != count)
        throw CountMismatchError("idx: " + std::to_string(count) +
                                 " images vs " + std::to_string(lab_count) +
                                 " labels");

    Dataset ds;
    ds.num_classes = 10;
    ds.inputs = Matrix(count, pixels);
    ds.labels.resize(count);

    std::vector<unsigned char> buf(pixels);
    for (std::uint32_t i = 0; i < count; ++i) {
        if (!img.read(reinterpret_cast<char*>(buf.data()),
                      static_cast<std::streamsize>(pixels)))
            throw TruncatedFileError("idx: image payload truncated at sample " +
                                     std::to_string(i));
        double* x = ds.inputs.row(i);
        for (std::size_t p = 0; p < pixels; ++p)
            x[p] = buf[p] / 255.0;
    }
    for (std::uint32_t i = 0; i < count; ++i) {
        unsigned char l = 0;
        if (!lab.read(reinterpret_cast<char*>(&l), 1))
            throw TruncatedFileError("idx: label payload truncated at sample " +
                                     std::to_string(i));
        if (l > 9)
            throw Error("idx: label value " + std::to_string(int(l)) +
                        " out of range");
        ds.labels[i] = int(l) + 1;  // digits 0..9 stored as classes 1..10
    }
    return ds;
}

} // namespace coco
