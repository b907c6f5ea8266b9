#include "hufu/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace hufu {

namespace {

constexpr double kPi = 3.14159265358979323846;

float clamp01(double v) {
    return static_cast<float>(std::min(1.0, std::max(0.0, v)));
}

double bars_pattern(std::size_t cls, std::size_t classes, std::size_t y, std::size_t x, Shape3 shape) {
    const double theta = kPi * static_cast<double>(cls) / static_cast<double>(classes);
    const double extent = static_cast<double>(std::max(shape.height, shape.width));
    const double u = (static_cast<double>(x) * std::cos(theta) + static_cast<double>(y) * std::sin(theta)) / extent;
    return 0.5 + 0.42 * std::sin(2.0 * kPi * 2.0 * u);
}

// A strong class-independent blob carries most of the pixel mass; the class
// signal is a faint oriented texture on top. Classifiers must rely on many
// small coordinated weights, which keeps the task sensitive to pruning.
double blobs_pattern(std::size_t cls, std::size_t classes, std::size_t y, std::size_t x, Shape3 shape) {
    const double cy = static_cast<double>(shape.height - 1) / 2.0;
    const double cx = static_cast<double>(shape.width - 1) / 2.0;
    const double s = static_cast<double>(std::min(shape.height, shape.width)) / 3.0;
    const double dy = static_cast<double>(y) - cy;
    const double dx = static_cast<double>(x) - cx;
    const double blob = 0.5 * std::exp(-(dy * dy + dx * dx) / (2.0 * s * s));

    const double theta = kPi * static_cast<double>(cls) / static_cast<double>(classes);
    const double extent = static_cast<double>(std::max(shape.height, shape.width));
    const double u = (static_cast<double>(x) * std::cos(theta) + static_cast<double>(y) * std::sin(theta)) / extent;
    const double texture = 0.16 * std::sin(2.0 * kPi * 3.5 * u);
    return 0.3 + blob + texture;
}

std::uint32_t read_be32(std::istream& in, const char* what) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) fail(ErrorKind::Truncated, std::string("idx file truncated while reading ") + what);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

} // namespace

void Dataset::validate() const {
    if (images.size() != labels.size())
        fail(ErrorKind::Structural, "dataset image/label counts differ");
    for (std::size_t s = 0; s < size(); ++s) {
        if (labels[s] >= class_count) fail(ErrorKind::Structural, "label exceeds class count");
        if (!images[s].same_shape(images[0])) fail(ErrorKind::ShapeMismatch, "dataset images have mixed shapes");
    }
}

Dataset synth_generate(std::size_t classes, std::size_t per_class, Shape3 shape,
                       std::uint64_t seed, PatternFamily family) {
    if (classes < 2) fail(ErrorKind::InvalidArgument, "need at least two classes");
    Dataset d;
    d.class_count = classes;
    Rng rng(seed);
    for (std::size_t cls = 0; cls < classes; ++cls) {
        for (std::size_t s = 0; s < per_class; ++s) {
            Tensor img({shape.channels, shape.height, shape.width});
            for (std::size_t c = 0; c < shape.channels; ++c) {
                for (std::size_t y = 0; y < shape.height; ++y) {
                    for (std::size_t x = 0; x < shape.width; ++x) {
                        const double base = family == PatternFamily::Bars
                                                ? bars_pattern(cls, classes, y, x, shape)
                                                : blobs_pattern(cls, classes, y, x, shape);
                        img.at(c, y, x) = clamp01(base + 0.1 * rng.normal());
                    }
                }
            }
            d.images.push_back(std::move(img));
            d.labels.push_back(cls);
        }
    }
    return d;
}

std::pair<Dataset, Dataset> split(const Dataset& d, float fraction, std::uint64_t seed) {
    if (!(fraction > 0.0f && fraction < 1.0f)) fail(ErrorKind::InvalidArgument, "split fraction must be in (0, 1)");
    const std::size_t first_count = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(d.size())));
    if (first_count == 0 || first_count == d.size())
        fail(ErrorKind::InvalidArgument, "degenerate split: one side would be empty");

    std::vector<std::size_t> order(d.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(order);

    Dataset a, b;
    a.class_count = b.class_count = d.class_count;
    for (std::size_t s = 0; s < d.size(); ++s) {
        Dataset& target = s < first_count ? a : b;
        target.images.push_back(d.images[order[s]]);
        target.labels.push_back(d.labels[order[s]]);
    }
    return {std::move(a), std::move(b)};
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) fail(ErrorKind::Io, "cannot open idx image file: " + images_path);
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) fail(ErrorKind::Io, "cannot open idx label file: " + labels_path);

    if (read_be32(img, "image magic") != 0x00000803u)
        fail(ErrorKind::BadMagic, "bad idx image magic (expected 0x00000803)");
    const std::uint32_t count = read_be32(img, "image count");
    const std::uint32_t rows = read_be32(img, "rows");
    const std::uint32_t cols = read_be32(img, "cols");

    if (read_be32(lab, "label magic") != 0x00000801u)
        fail(ErrorKind::BadMagic, "bad idx label magic (expected 0x00000801)");
    const std::uint32_t label_count = read_be32(lab, "label count");
    if (label_count != count) fail(ErrorKind::Structural, "idx image/label counts differ");

    Dataset d;
    std::vector<unsigned char> pixels(static_cast<std::size_t>(rows) * cols);
    std::size_t max_label = 0;
    for (std::uint32_t s = 0; s < count; ++s) {
        img.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
        if (!img) fail(ErrorKind::Truncated, "idx image payload truncated");
        Tensor t({1, rows, cols});
        for (std::size_t p = 0; p < pixels.size(); ++p)
            t.data[p] = static_cast<float>(pixels[p]) / 255.0f;
        d.images.push_back(std::move(t));

        unsigned char label = 0;
        lab.read(reinterpret_cast<char*>(&label), 1);
        if (!lab) fail(ErrorKind::Truncated, "idx label payload truncated");
        d.labels.push_back(label);
        max_label = std::max<std::size_t>(max_label, label);
    }
    d.class_count = max_label + 1;
    d.validate();
    return d;
}

void save_idx(const Dataset& d, const std::string& images_path, const std::string& labels_path) {
    d.validate();
    if (d.size() == 0) fail(ErrorKind::EmptyDataset, "refusing to write empty idx files");
    const Tensor& first = d.images[0];
    if (first.shape.size() != 3 || first.shape[0] != 1)
        fail(ErrorKind::ShapeMismatch, "idx format stores single-channel images");

    std::ofstream img(images_path, std::ios::binary);
    if (!img) fail(ErrorKind::Io, "cannot write idx image file: " + images_path);
    std::ofstream lab(labels_path, std::ios::binary);
    if (!lab) fail(ErrorKind::Io, "cannot write idx label file: " + labels_path);

    write_be32(img, 0x00000803u);
    write_be32(img, static_cast<std::uint32_t>(d.size()));
    write_be32(img, static_cast<std::uint32_t>(first.shape[1]));
    write_be32(img, static_cast<std::uint32_t>(first.shape[2]));
    write_be32(lab, 0x00000801u);
    write_be32(lab, static_cast<std::uint32_t>(d.size()));

    for (std::size_t s = 0; s < d.size(); ++s) {
        for (float v : d.images[s].data) {
            const int q = static_cast<int>(std::lround(std::min(1.0f, std::max(0.0f, v)) * 255.0f));
            const unsigned char byte = static_cast<unsigned char>(q);
            img.write(reinterpret_cast<const char*>(&byte), 1);
        }
        const unsigned char label = static_cast<unsigned char>(d.labels[s]);
        lab.write(reinterpret_cast<const char*>(&label), 1);
    }
    if (!img || !lab) fail(ErrorKind::Io, "idx write failed");
}

} // namespace hufu
