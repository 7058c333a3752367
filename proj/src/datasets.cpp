#include "saak/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>

namespace saak::datasets {

namespace {

constexpr uint32_t kIdxImagesMagic = 0x00000803;  // rank-3 unsigned byte
constexpr uint32_t kIdxLabelsMagic = 0x00000801;  // rank-1 unsigned byte

uint32_t read_be32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) | (uint32_t(b[2]) << 8) |
           uint32_t(b[3]);
}

void write_be32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<char*>(b), 4);
}

}  // namespace

LabeledSet load_idx(const std::string& image_path, const std::string& label_path) {
    std::ifstream img(image_path, std::ios::binary);
    if (!img) throw FormatError("cannot open IDX image file: " + image_path);
    std::ifstream lab(label_path, std::ios::binary);
    if (!lab) throw FormatError("cannot open IDX label file: " + label_path);

    if (read_be32(img) != kIdxImagesMagic)
        throw FormatError("bad IDX magic in image file: " + image_path);
    uint32_t n_img = read_be32(img);
    uint32_t rows = read_be32(img);
    uint32_t cols = read_be32(img);

    if (read_be32(lab) != kIdxLabelsMagic)
        throw FormatError("bad IDX magic in label file: " + label_path);
    uint32_t n_lab = read_be32(lab);

    if (n_img != n_lab)
        throw FormatError("IDX image/label count mismatch: " + std::to_string(n_img) +
                          " vs " + std::to_string(n_lab));

    LabeledSet set;
    set.images.reserve(n_img);
    set.labels.reserve(n_img);
    std::vector<unsigned char> buf(size_t(rows) * cols);
    int max_label = 0;
    for (uint32_t i = 0; i < n_img; ++i) {
        img.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size()));
        if (!img) throw FormatError("truncated IDX image file: " + image_path);
        ImageTensor t(int(rows), int(cols), 1);
        for (size_t p = 0; p < buf.size(); ++p) t.data[Eigen::Index(p)] = buf[p] / 255.0;
        set.images.push_back(std::move(t));
        char lb;
        lab.read(&lb, 1);
        if (!lab) throw FormatError("truncated IDX label file: " + label_path);
        int l = static_cast<unsigned char>(lb);
        max_label = std::max(max_label, l);
        set.labels.push_back(l);
    }
    set.num_classes = max_label + 1;
    return set;
}

void save_idx(const LabeledSet& set, const std::string& image_path,
              const std::string& label_path) {
    if (set.images.empty()) throw std::invalid_argument("save_idx: empty set");
    const auto& first = set.images.front();
    if (first.channels != 1)
        throw std::invalid_argument("save_idx: IDX container is single-channel");

    std::ofstream img(image_path, std::ios::binary);
    if (!img) throw FormatError("cannot write IDX image file: " + image_path);
    write_be32(img, kIdxImagesMagic);
    write_be32(img, uint32_t(set.images.size()));
    write_be32(img, uint32_t(first.height));
    write_be32(img, uint32_t(first.width));
    for (const auto& t : set.images) {
        for (Eigen::Index p = 0; p < t.data.size(); ++p) {
            double v = std::clamp(t.data[p], 0.0, 1.0);
            unsigned char b = static_cast<unsigned char>(std::lround(v * 255.0));
            img.write(reinterpret_cast<char*>(&b), 1);
        }
    }

    std::ofstream lab(label_path, std::ios::binary);
    if (!lab) throw FormatError("cannot write IDX label file: " + label_path);
    write_be32(lab, kIdxLabelsMagic);
    write_be32(lab, uint32_t(set.labels.size()));
    for (int l : set.labels) {
        unsigned char b = static_cast<unsigned char>(l);
        lab.write(reinterpret_cast<char*>(&b), 1);
    }
}

LabeledSet load_cifar10(const std::vector<std::string>& batch_paths) {
    constexpr int kSide = 32;
    constexpr size_t kRecord = 3073;  // 1 label byte + 3 * 32 * 32 pixels
    LabeledSet set;
    set.num_classes = 10;
    for (const auto& path : batch_paths) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw FormatError("cannot open CIFAR batch: " + path);
        in.seekg(0, std::ios::end);
        auto len = size_t(in.tellg());
        if (len == 0 || len % kRecord != 0)
            throw FormatError("CIFAR batch length not a multiple of 3073: " + path);
        in.seekg(0);
        std::vector<unsigned char> rec(kRecord);
        size_t n = len / kRecord;
        for (size_t r = 0; r < n; ++r) {
            in.read(reinterpret_cast<char*>(rec.data()), kRecord);
            set.labels.push_back(rec[0]);
            ImageTensor t(kSide, kSide, 3);
            for (int c = 0; c < 3; ++c)
                for (int i = 0; i < kSide; ++i)
                    for (int j = 0; j < kSide; ++j)
                        t.at(i, j, c) = rec[1 + (c * kSide + i) * kSide + j] / 255.0;
            set.images.push_back(std::move(t));
        }
    }
    return set;
}

LabeledSet synth_blobs(int n_per_class, int num_classes, int side, unsigned seed) {
    if (side < 4) throw std::invalid_argument("synth_blobs: side must be >= 4");
    if (num_classes < 2) throw std::invalid_argument("synth_blobs: need >= 2 classes");

    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> noise(0.0, 0.1);

    LabeledSet set;
    set.num_classes = num_classes;
    for (int c = 0; c < num_classes; ++c) {
        // Class pattern: a bright stripe at a class-specific row band.
        int band = (c * side) / num_classes;
        int band_h = std::max(1, side / num_classes);
        for (int s = 0; s < n_per_class; ++s) {
            ImageTensor t(side, side, 1);
            for (int i = 0; i < side; ++i)
                for (int j = 0; j < side; ++j) {
                    double base = (i >= band && i < band + band_h) ? 0.8 : 0.1;
                    t.at(i, j, 0) = std::clamp(base + noise(rng), 0.0, 1.0);
                }
            set.images.push_back(std::move(t));
            set.labels.push_back(c);
        }
    }
    return set;
}

std::pair<LabeledSet, LabeledSet> split(const LabeledSet& set, double train_fraction,
                                        unsigned seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw std::invalid_argument("split: train_fraction must be in (0,1)");
    set.validate();

    std::vector<std::vector<size_t>> by_class(size_t(set.num_classes));
    for (size_t i = 0; i < set.size(); ++i) by_class[size_t(set.labels[i])].push_back(i);

    std::mt19937 rng(seed);
    LabeledSet train, test;
    train.num_classes = test.num_classes = set.num_classes;
    for (auto& idx : by_class) {
        if (!idx.empty() && idx.size() < 2)
            throw std::runtime_error("split: class with fewer than 2 samples");
        std::shuffle(idx.begin(), idx.end(), rng);
        size_t n_train = size_t(std::ceil(train_fraction * double(idx.size())));
        for (size_t k = 0; k < idx.size(); ++k) {
            auto& dst = (k < n_train) ? train : test;
            dst.images.push_back(set.images[idx[k]]);
            dst.labels.push_back(set.labels[idx[k]]);
        }
    }
    return {std::move(train), std::move(test)};
}

LabeledSet pad_images(const LabeledSet& set, int target_side) {
    LabeledSet out;
    out.num_classes = set.num_classes;
    out.labels = set.labels;
    out.images.reserve(set.size());
    for (const auto& img : set.images) {
        if (img.height > target_side || img.width > target_side)
            throw ShapeError("pad_images: image larger than target");
        int top = (target_side - img.height) / 2;
        int left = (target_side - img.width) / 2;
        ImageTensor t(target_side, target_side, img.channels);
        for (int i = 0; i < img.height; ++i)
            for (int j = 0; j < img.width; ++j)
                for (int c = 0; c < img.channels; ++c)
                    t.at(top + i, left + j, c) = img.at(i, j, c);
        out.images.push_back(std::move(t));
    }
    return out;
}

}  // namespace saak::datasets
