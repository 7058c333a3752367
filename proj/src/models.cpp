#include "saak/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>

namespace saak::models {

namespace {

Vector softmax(const Vector& z) {
    Vector e = (z.array() - z.maxCoeff()).exp();
    return e / e.sum();
}

int argmax_lowest_tie(const Vector& p) {
    int best = 0;
    for (int i = 1; i < p.size(); ++i)
        if (p[i] > p[best]) best = i;
    return best;
}

Vector flatten(const ImageTensor& img) { return img.data; }

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

void write_matrix(std::ostream& out, const Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) write_pod<double>(out, m(i, j));
}

void read_matrix(std::istream& in, Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = read_pod<double>(in);
}

}  // namespace

Vector SoftmaxClassifier::probabilities(const Vector& x) const {
    if (x.size() != weights.cols()) throw ShapeError("SoftmaxClassifier: dim mismatch");
    return softmax(weights * x + bias);
}

int SoftmaxClassifier::predict(const Vector& x) const {
    return argmax_lowest_tie(probabilities(x));
}

Vector TargetMLP::logits(const Vector& x) const {
    if (x.size() != input_dim()) throw ShapeError("TargetMLP: input dim mismatch");
    Vector a = x;
    for (size_t l = 0; l < weights.size(); ++l) {
        a = weights[l] * a + biases[l];
        if (l + 1 < weights.size()) a = a.cwiseMax(0.0);
    }
    return a;
}

Vector TargetMLP::probabilities(const Vector& x) const { return softmax(logits(x)); }

int TargetMLP::predict(const Vector& x) const {
    return argmax_lowest_tie(probabilities(x));
}

FeatureScaler fit_scaler(const std::vector<Vector>& features) {
    if (features.empty()) throw std::invalid_argument("fit_scaler: empty feature set");
    Eigen::Index f = features.front().size();
    FeatureScaler s;
    s.mean = Vector::Zero(f);
    for (const auto& x : features) s.mean += x;
    s.mean /= double(features.size());
    Vector var = Vector::Zero(f);
    for (const auto& x : features) var += (x - s.mean).cwiseAbs2();
    var /= double(features.size());
    s.inv_std = (var.cwiseMax(1e-6)).cwiseSqrt().cwiseInverse();
    return s;
}

SoftmaxClassifier train_softmax(const std::vector<Vector>& features,
                                const std::vector<int>& labels, int num_classes,
                                const TrainConfig& cfg, std::ostream* log) {
    if (features.size() != labels.size())
        throw std::invalid_argument("train_softmax: feature/label mismatch");
    if (features.empty()) throw std::invalid_argument("train_softmax: empty set");
    const Eigen::Index f = features.front().size();

    SoftmaxClassifier model;
    model.weights = Matrix::Zero(num_classes, f);
    model.bias = Vector::Zero(num_classes);

    std::vector<size_t> order(features.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937 rng(cfg.seed);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (size_t start = 0; start < order.size(); start += size_t(cfg.batch_size)) {
            size_t end = std::min(order.size(), start + size_t(cfg.batch_size));
            Matrix grad_w = Matrix::Zero(num_classes, f);
            Vector grad_b = Vector::Zero(num_classes);
            for (size_t i = start; i < end; ++i) {
                const Vector& x = features[order[i]];
                int y = labels[order[i]];
                Vector p = softmax(model.weights * x + model.bias);
                epoch_loss += -std::log(std::max(p[y], 1e-300));
                p[y] -= 1.0;
                grad_w += p * x.transpose();
                grad_b += p;
            }
            double inv = 1.0 / double(end - start);
            model.weights -= cfg.learning_rate *
                             (inv * grad_w + 2.0 * cfg.l2_penalty * model.weights);
            model.bias -= cfg.learning_rate * inv * grad_b;
        }
        epoch_loss /= double(features.size());
        if (!std::isfinite(epoch_loss))
            throw std::runtime_error("train_softmax: diverged at epoch " +
                                     std::to_string(epoch));
        if (log) *log << "softmax epoch " << epoch << " loss " << epoch_loss << "\n";
    }
    return model;
}

TargetMLP make_mlp(const std::vector<int>& layer_sizes, unsigned seed) {
    if (layer_sizes.size() < 2) throw std::invalid_argument("make_mlp: need >= 2 layers");
    TargetMLP m;
    m.layer_sizes = layer_sizes;
    std::mt19937 rng(seed);
    for (size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        double s = 1.0 / std::sqrt(double(layer_sizes[l]));
        std::uniform_real_distribution<double> dist(-s, s);
        Matrix w(layer_sizes[l + 1], layer_sizes[l]);
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = dist(rng);
        m.weights.push_back(std::move(w));
        m.biases.push_back(Vector::Zero(layer_sizes[l + 1]));
    }
    return m;
}

namespace {

/// Forward pass keeping post-activation values of every layer.
std::vector<Vector> forward_activations(const TargetMLP& m, const Vector& x) {
    std::vector<Vector> acts{x};
    Vector a = x;
    for (size_t l = 0; l < m.weights.size(); ++l) {
        a = m.weights[l] * a + m.biases[l];
        if (l + 1 < m.weights.size()) a = a.cwiseMax(0.0);
        acts.push_back(a);
    }
    return acts;
}

}  // namespace

TargetMLP train_mlp(const LabeledSet& set, const std::vector<int>& hidden_sizes,
                    const TrainConfig& cfg, std::ostream* log) {
    set.validate();
    if (set.images.empty()) throw std::invalid_argument("train_mlp: empty set");
    std::vector<int> sizes;
    sizes.push_back(int(set.images.front().size()));
    sizes.insert(sizes.end(), hidden_sizes.begin(), hidden_sizes.end());
    sizes.push_back(set.num_classes);

    TargetMLP model = make_mlp(sizes, cfg.seed);
    const size_t n_layers = model.weights.size();

    std::vector<size_t> order(set.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937 rng(cfg.seed + 1);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (size_t start = 0; start < order.size(); start += size_t(cfg.batch_size)) {
            size_t end = std::min(order.size(), start + size_t(cfg.batch_size));
            std::vector<Matrix> grad_w;
            std::vector<Vector> grad_b;
            for (size_t l = 0; l < n_layers; ++l) {
                grad_w.push_back(Matrix::Zero(model.weights[l].rows(), model.weights[l].cols()));
                grad_b.push_back(Vector::Zero(model.biases[l].size()));
            }
            for (size_t i = start; i < end; ++i) {
                Vector x = flatten(set.images[order[i]]);
                int y = set.labels[order[i]];
                auto acts = forward_activations(model, x);
                Vector p = softmax(acts.back());
                epoch_loss += -std::log(std::max(p[y], 1e-300));
                Vector delta = p;
                delta[y] -= 1.0;
                for (size_t l = n_layers; l-- > 0;) {
                    grad_w[l] += delta * acts[l].transpose();
                    grad_b[l] += delta;
                    if (l > 0) {
                        delta = model.weights[l].transpose() * delta;
                        for (Eigen::Index j = 0; j < delta.size(); ++j)
                            if (acts[l][j] <= 0.0) delta[j] = 0.0;
                    }
                }
            }
            double inv = 1.0 / double(end - start);
            for (size_t l = 0; l < n_layers; ++l) {
                model.weights[l] -= cfg.learning_rate *
                                    (inv * grad_w[l] + 2.0 * cfg.l2_penalty * model.weights[l]);
                model.biases[l] -= cfg.learning_rate * inv * grad_b[l];
            }
        }
        epoch_loss /= double(set.size());
        if (!std::isfinite(epoch_loss))
            throw std::runtime_error("train_mlp: diverged at epoch " + std::to_string(epoch));
        if (log) *log << "mlp epoch " << epoch << " loss " << epoch_loss << "\n";
    }
    return model;
}

Vector input_gradient(const TargetMLP& model, const Vector& x, int label) {
    if (label < 0 || label >= model.num_classes())
        throw std::invalid_argument("input_gradient: label out of range");
    auto acts = forward_activations(model, x);
    Vector delta = softmax(acts.back());
    delta[label] -= 1.0;
    for (size_t l = model.weights.size(); l-- > 0;) {
        delta = model.weights[l].transpose() * delta;
        if (l > 0)
            for (Eigen::Index j = 0; j < delta.size(); ++j)
                if (acts[l][j] <= 0.0) delta[j] = 0.0;
    }
    return delta;
}

void loss_weight_gradients(const TargetMLP& model, const Vector& x, int label,
                           std::vector<Matrix>& grad_w, std::vector<Vector>& grad_b) {
    if (label < 0 || label >= model.num_classes())
        throw std::invalid_argument("loss_weight_gradients: label out of range");
    grad_w.clear();
    grad_b.clear();
    grad_w.resize(model.weights.size());
    grad_b.resize(model.weights.size());
    auto acts = forward_activations(model, x);
    Vector delta = softmax(acts.back());
    delta[label] -= 1.0;
    for (size_t l = model.weights.size(); l-- > 0;) {
        grad_w[l] = delta * acts[l].transpose();
        grad_b[l] = delta;
        if (l > 0) {
            delta = model.weights[l].transpose() * delta;
            for (Eigen::Index j = 0; j < delta.size(); ++j)
                if (acts[l][j] <= 0.0) delta[j] = 0.0;
        }
    }
}

Matrix class_score_gradients(const TargetMLP& model, const Vector& x) {
    auto acts = forward_activations(model, x);
    Matrix jac = model.weights.back();
    for (size_t l = model.weights.size() - 1; l-- > 0;) {
        Matrix masked = model.weights[l];
        for (Eigen::Index j = 0; j < masked.rows(); ++j)
            if (acts[l + 1][j] <= 0.0) masked.row(j).setZero();
        jac = jac * masked;
    }
    return jac;
}

double cross_entropy_loss(const TargetMLP& model, const Vector& x, int label) {
    Vector p = model.probabilities(x);
    return -std::log(std::max(p[label], 1e-300));
}

double evaluate_accuracy(const TargetMLP& model, const LabeledSet& set) {
    if (set.images.empty()) throw std::invalid_argument("evaluate_accuracy: empty set");
    size_t correct = 0;
    for (size_t i = 0; i < set.size(); ++i)
        if (model.predict(flatten(set.images[i])) == set.labels[i]) ++correct;
    return double(correct) / double(set.size());
}

double evaluate_accuracy(const SoftmaxClassifier& model, const std::vector<Vector>& features,
                         const std::vector<int>& labels) {
    if (features.empty()) throw std::invalid_argument("evaluate_accuracy: empty set");
    size_t correct = 0;
    for (size_t i = 0; i < features.size(); ++i)
        if (model.predict(features[i]) == labels[i]) ++correct;
    return double(correct) / double(features.size());
}

void save_softmax(const SoftmaxClassifier& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write model file: " + path);
    out.write("SMAX1", 5);
    write_pod<uint32_t>(out, uint32_t(m.weights.rows()));
    write_pod<uint32_t>(out, uint32_t(m.weights.cols()));
    write_matrix(out, m.weights);
    for (Eigen::Index i = 0; i < m.bias.size(); ++i) write_pod<double>(out, m.bias[i]);
}

SoftmaxClassifier load_softmax(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open model file: " + path);
    char magic[5];
    in.read(magic, 5);
    if (!in || std::string(magic, 5) != "SMAX1") throw FormatError("bad model magic: " + path);
    uint32_t c = read_pod<uint32_t>(in);
    uint32_t f = read_pod<uint32_t>(in);
    SoftmaxClassifier m;
    m.weights = Matrix(c, f);
    read_matrix(in, m.weights);
    m.bias = Vector(c);
    for (uint32_t i = 0; i < c; ++i) m.bias[i] = read_pod<double>(in);
    if (!in) throw FormatError("truncated model file: " + path);
    return m;
}

void save_mlp(const TargetMLP& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write model file: " + path);
    out.write("SMLP1", 5);
    write_pod<uint32_t>(out, uint32_t(m.layer_sizes.size()));
    for (int s : m.layer_sizes) write_pod<uint32_t>(out, uint32_t(s));
    for (size_t l = 0; l < m.weights.size(); ++l) {
        write_matrix(out, m.weights[l]);
        for (Eigen::Index i = 0; i < m.biases[l].size(); ++i)
            write_pod<double>(out, m.biases[l][i]);
    }
}

TargetMLP load_mlp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open model file: " + path);
    char magic[5];
    in.read(magic, 5);
    if (!in || std::string(magic, 5) != "SMLP1") throw FormatError("bad model magic: " + path);
    uint32_t n = read_pod<uint32_t>(in);
    TargetMLP m;
    for (uint32_t i = 0; i < n; ++i) m.layer_sizes.push_back(int(read_pod<uint32_t>(in)));
    for (uint32_t l = 0; l + 1 < n; ++l) {
        Matrix w(m.layer_sizes[l + 1], m.layer_sizes[l]);
        read_matrix(in, w);
        m.weights.push_back(std::move(w));
        Vector b(m.layer_sizes[l + 1]);
        for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = read_pod<double>(in);
        m.biases.push_back(std::move(b));
    }
    if (!in) throw FormatError("truncated model file: " + path);
    return m;
}

}  // namespace saak::models
