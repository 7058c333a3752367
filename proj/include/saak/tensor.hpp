#ifndef SAAK_TENSOR_HPP
#define SAAK_TENSOR_HPP

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace saak {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Dense H x W x C block stored row-major in (h, w, c) order.
/// Used both for input images (values in [0,1]) and for per-stage
/// feature responses (nonnegative after rectification).
struct Tensor3 {
    int height = 0;
    int width = 0;
    int channels = 0;
    Vector data;

    Tensor3() = default;
    Tensor3(int h, int w, int c)
        : height(h), width(w), channels(c), data(Vector::Zero(size_t(h) * w * c)) {}

    Eigen::Index size() const { return data.size(); }

    double& at(int i, int j, int k) {
        return data[(size_t(i) * width + j) * channels + k];
    }
    double at(int i, int j, int k) const {
        return data[(size_t(i) * width + j) * channels + k];
    }

    bool same_shape(const Tensor3& o) const {
        return height == o.height && width == o.width && channels == o.channels;
    }
};

using ImageTensor = Tensor3;

/// Feature responses of one Saak stage. Channel 0 is the DC projection,
/// channels 2i-1 / 2i hold the rectified positive / negative halves of
/// AC kernel i.
struct FeatureBlock {
    int stage_index = 0;
    Tensor3 values;
};

struct LabeledSet {
    std::vector<ImageTensor> images;
    std::vector<int> labels;
    int num_classes = 0;

    size_t size() const { return images.size(); }

    void validate() const {
        if (images.size() != labels.size())
            throw std::invalid_argument("LabeledSet: image/label count mismatch");
        for (int l : labels)
            if (l < 0 || l >= num_classes)
                throw std::invalid_argument("LabeledSet: label out of range");
    }
};

struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& m) : std::runtime_error(m) {}
};

struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& m) : std::runtime_error(m) {}
};

}  // namespace saak

#endif  // SAAK_TENSOR_HPP
