#ifndef SAAK_MODELS_HPP
#define SAAK_MODELS_HPP

#include <string>
#include <vector>

#include "saak/tensor.hpp"

namespace saak::models {

struct TrainConfig {
    double learning_rate = 0.1;
    int epochs = 20;
    int batch_size = 64;
    double l2_penalty = 1e-4;
    unsigned seed = 0;
};

/// Multinomial logistic regression head. Weights start at zero, so an
/// untrained model predicts the uniform distribution.
struct SoftmaxClassifier {
    Matrix weights;  // C x F
    Vector bias;     // C

    int num_classes() const { return int(weights.rows()); }
    int feature_dim() const { return int(weights.cols()); }

    Vector probabilities(const Vector& x) const;
    int predict(const Vector& x) const;
};

/// Fully connected ReLU network with a softmax output, trained by manual
/// backprop. Serves as the differentiable attack target on raw pixels.
struct TargetMLP {
    std::vector<int> layer_sizes;  // input, hidden..., output
    std::vector<Matrix> weights;   // per layer, out x in
    std::vector<Vector> biases;

    int num_classes() const { return layer_sizes.back(); }
    int input_dim() const { return layer_sizes.front(); }

    Vector logits(const Vector& x) const;
    Vector probabilities(const Vector& x) const;
    int predict(const Vector& x) const;
};

/// Per-dimension z-scoring fitted on training features; variance floor 1e-6.
struct FeatureScaler {
    Vector mean;
    Vector inv_std;

    Vector apply(const Vector& x) const { return (x - mean).cwiseProduct(inv_std); }
};

FeatureScaler fit_scaler(const std::vector<Vector>& features);

SoftmaxClassifier train_softmax(const std::vector<Vector>& features,
                                const std::vector<int>& labels, int num_classes,
                                const TrainConfig& cfg, std::ostream* log = nullptr);

TargetMLP make_mlp(const std::vector<int>& layer_sizes, unsigned seed);

TargetMLP train_mlp(const LabeledSet& set, const std::vector<int>& hidden_sizes,
                    const TrainConfig& cfg, std::ostream* log = nullptr);

/// Gradient of the cross-entropy loss w.r.t. the input pixels.
Vector input_gradient(const TargetMLP& model, const Vector& x, int label);

/// Per-sample gradients of the cross-entropy loss w.r.t. every weight
/// matrix and bias vector.
void loss_weight_gradients(const TargetMLP& model, const Vector& x, int label,
                           std::vector<Matrix>& grad_w, std::vector<Vector>& grad_b);

/// Gradient of each pre-softmax logit w.r.t. the input; rows are classes.
Matrix class_score_gradients(const TargetMLP& model, const Vector& x);

double cross_entropy_loss(const TargetMLP& model, const Vector& x, int label);

double evaluate_accuracy(const TargetMLP& model, const LabeledSet& set);
double evaluate_accuracy(const SoftmaxClassifier& model, const std::vector<Vector>& features,
                         const std::vector<int>& labels);

void save_softmax(const SoftmaxClassifier& m, const std::string& path);
SoftmaxClassifier load_softmax(const std::string& path);
void save_mlp(const TargetMLP& m, const std::string& path);
TargetMLP load_mlp(const std::string& path);

}  // namespace saak::models

#endif  // SAAK_MODELS_HPP
