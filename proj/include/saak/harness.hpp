#ifndef SAAK_HARNESS_HPP
#define SAAK_HARNESS_HPP

#include <optional>
#include <string>
#include <vector>

#include "saak/attacks.hpp"
#include "saak/defenses.hpp"
#include "saak/feature_select.hpp"
#include "saak/models.hpp"
#include "saak/tensor.hpp"
#include "saak/transform.hpp"

namespace saak::harness {

struct ExperimentConfig {
    // dataset
    std::string train_images, train_labels, test_images, test_labels;
    int pad_to = 32;
    int train_limit = 0;  // 0 = all
    int test_limit = 0;
    bool synth = false;  // synthetic blobs instead of IDX files
    int synth_per_class = 100, synth_classes = 4, synth_side = 8;

    std::vector<StageConfig> stages{{2, 1.0, 3}, {2, 0.99, 8}, {2, 0.99, 16}};
    fsel::SelectionParams selection;

    models::TrainConfig head{0.2, 30, 64, 1e-4, 0};
    std::vector<int> mlp_hidden{128};
    models::TrainConfig mlp{0.1, 10, 64, 1e-4, 0};

    std::vector<attacks::Method> attack_methods{attacks::Method::Fgsm, attacks::Method::Bim,
                                                attacks::Method::DeepFool};
    std::vector<double> epsilons{0.1, 0.2, 0.25, 0.3};
    double bim_alpha_fraction = 0.25;  // alpha = fraction * epsilon
    int bim_iterations = 10;
    double df_overshoot = 0.02;
    int df_max_iter = 50;

    std::vector<defenses::DefenseSpec> defense_list;

    unsigned seed = 0;
    std::string output_dir = "out";

    std::string source_text;  // raw config file contents, for hashing
};

ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig default_config();

/// The fitted Saak classifier: pipeline, per-stage selection masks, and a
/// linear head over the assembled (pre-standardized) feature vector.
struct SaakClassifier {
    SaakPipeline pipeline;
    std::vector<fsel::SelectionMask> masks;
    models::SoftmaxClassifier head;

    Vector features(const ImageTensor& img) const;
    int predict(const ImageTensor& img) const;
    double accuracy(const LabeledSet& set) const;
};

struct ReportRow {
    std::string defense;  // defense spec string, or "saak"
    std::string attack;
    double epsilon = 0.0;  // 0 for deepfool
    double c_clean = 0.0;
    double c_attack = 0.0;

    double drop_pp() const { return (c_clean - c_attack) * 100.0; }
};

struct RobustnessReport {
    std::vector<ReportRow> rows;
    std::string config_hash;
    size_t train_size = 0, test_size = 0;
    double runtime_seconds = 0.0;
};

struct SpectralDiagnostics {
    int stage = 0;
    std::vector<double> rmse, normalized_rmse;
    std::vector<double> q25_clean, q50_clean, q75_clean;
    std::vector<double> q25_adv, q50_adv, q75_adv;
};

LabeledSet load_dataset_split(const ExperimentConfig& cfg, bool train);

/// Trains the linear head over assembled Saak features. Features are
/// z-scored with training statistics; the scaler is folded back into the
/// returned affine model so it applies to raw assembled features.
models::SoftmaxClassifier train_saak_head(const ExperimentConfig& cfg,
                                          const SaakPipeline& pipeline,
                                          const std::vector<fsel::SelectionMask>& masks,
                                          const LabeledSet& train,
                                          std::ostream* log = nullptr);

/// Fits pipeline + masks + head on clean training data.
SaakClassifier fit_saak_classifier(const ExperimentConfig& cfg, const LabeledSet& train,
                                   std::vector<fsel::EntropyMap>* maps_out = nullptr,
                                   std::ostream* log = nullptr);

struct EvalOutputs {
    RobustnessReport report;
    std::optional<SpectralDiagnostics> stage1_diag;  // vs the first FGSM column
};

/// Attack/defense evaluation grid over the test set, given already fitted
/// models. Writes per-attack logs under attack_log_dir when non-empty.
EvalOutputs evaluate_robustness(const ExperimentConfig& cfg, const SaakClassifier& clf,
                                const models::TargetMLP& mlp, const LabeledSet& test,
                                std::ostream* log = nullptr,
                                const std::string& attack_log_dir = "");

RobustnessReport run_experiment(const ExperimentConfig& cfg, std::ostream* log = nullptr);

SpectralDiagnostics spectral_diagnostics(const LabeledSet& clean, const LabeledSet& attacked,
                                         const SaakPipeline& pipeline, int stage);

void write_report(const RobustnessReport& report, const std::string& path);
RobustnessReport read_report(const std::string& path);
void write_report_meta(const RobustnessReport& report, const std::string& path);
void write_diagnostics(const SpectralDiagnostics& diag, const std::string& path);

/// FNV-1a 64-bit hash, hex-encoded. Used for config hashes and the manifest.
std::string fnv1a_hex(const std::string& bytes);
std::string file_hash(const std::string& path);
void write_manifest(const std::vector<std::string>& paths, const std::string& manifest_path);

}  // namespace saak::harness

#endif  // SAAK_HARNESS_HPP
