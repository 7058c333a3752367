#ifndef SAAK_ATTACKS_HPP
#define SAAK_ATTACKS_HPP

#include <string>
#include <vector>

#include "saak/models.hpp"
#include "saak/tensor.hpp"

namespace saak::attacks {

enum class Method { Fgsm, Bim, DeepFool };

Method parse_method(const std::string& name);
std::string method_name(Method m);

struct AttackConfig {
    double epsilon = 0.25;   // L-inf budget, [0,1] pixel units
    double alpha = 0.025;    // BIM per-step size
    int iterations = 10;     // BIM steps
    double overshoot = 0.02; // DeepFool
    int max_iter_df = 50;
};

struct AdversarialResult {
    ImageTensor image;
    bool success = false;
    double linf_norm = 0.0;
    double l2_norm = 0.0;
    int iterations_used = 0;
};

/// One-step sign-gradient attack: x' = clip(x + eps * sign(grad J)).
/// sign(0) is taken as 0.
AdversarialResult fgsm(const ImageTensor& x, int label, const models::TargetMLP& model,
                       double epsilon);

/// Iterated FGSM projected into the L-inf ball of radius eps around x
/// and into [0,1] each step.
AdversarialResult bim(const ImageTensor& x, int label, const models::TargetMLP& model,
                      double epsilon, double alpha, int iterations);

/// Minimal-L2 linearized boundary attack; stops when the prediction flips
/// or max_iter is reached, then applies the overshoot factor.
AdversarialResult deepfool(const ImageTensor& x, const models::TargetMLP& model,
                           int max_iter, double overshoot);

struct AttackedSet {
    LabeledSet set;  // ground-truth labels preserved
    std::vector<AdversarialResult> results;
};

AttackedSet attack_set(const LabeledSet& set, const models::TargetMLP& model, Method method,
                       const AttackConfig& cfg);

void write_attack_log(const AttackedSet& atk, Method method, const std::string& path);

}  // namespace saak::attacks

#endif  // SAAK_ATTACKS_HPP
