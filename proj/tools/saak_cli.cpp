#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "saak/datasets.hpp"
#include "saak/harness.hpp"

namespace fs = std::filesystem;
using namespace saak;

namespace {

harness::ExperimentConfig load_cfg(const std::string& path, int seed_override) {
    auto cfg = harness::load_config(path);
    if (seed_override >= 0) {
        cfg.seed = unsigned(seed_override);
        cfg.head.seed = unsigned(seed_override);
        cfg.mlp.seed = unsigned(seed_override);
    }
    return cfg;
}

harness::SaakClassifier load_saak_artifacts(const std::string& dir) {
    harness::SaakClassifier clf;
    clf.pipeline = load_pipeline(dir + "/pipeline.bin");
    clf.masks = fsel::load_masks(dir + "/masks.txt");
    clf.head = models::load_softmax(dir + "/head.bin");
    return clf;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-stage Saak transform classification and adversarial robustness harness"};
    app.require_subcommand(1);

    std::string config_path, artifacts = "out", out_dir = "out";
    int seed_override = -1;
    app.add_option("--seed", seed_override, "Override config seeds")->capture_default_str();

    auto* run = app.add_subcommand("run", "End-to-end experiment from a config file");
    run->add_option("--config", config_path, "Config file")->required();

    auto* fit = app.add_subcommand("fit", "Fit Saak pipeline and selection masks");
    fit->add_option("--config", config_path)->required();
    fit->add_option("--out", out_dir, "Artifact directory");

    auto* train = app.add_subcommand("train", "Train the Saak head and/or the target MLP");
    train->add_option("--config", config_path)->required();
    train->add_option("--artifacts", artifacts, "Directory with pipeline.bin/masks.txt");
    bool head_only = false, target_only = false;
    train->add_flag("--head-only", head_only, "Train only the Saak head");
    train->add_flag("--target-only", target_only, "Train only the target MLP");

    auto* attack = app.add_subcommand("attack", "Craft an adversarial test set");
    std::string method = "fgsm", out_prefix = "adv";
    double epsilon = 0.25;
    attack->add_option("--config", config_path)->required();
    attack->add_option("--artifacts", artifacts, "Directory with mlp.bin");
    attack->add_option("--method", method, "fgsm|bim|deepfool");
    attack->add_option("--epsilon", epsilon)->capture_default_str();
    attack->add_option("--out-prefix", out_prefix, "Output IDX prefix");

    auto* defend = app.add_subcommand("defend", "Apply a defense to an IDX set");
    std::string spec_text = "none", in_images, in_labels;
    defend->add_option("--spec", spec_text, "Defense spec, e.g. jpeg:q=90")->required();
    defend->add_option("--images", in_images)->required();
    defend->add_option("--labels", in_labels)->required();
    defend->add_option("--out-prefix", out_prefix)->required();

    auto* evalc = app.add_subcommand("eval", "Evaluate a classifier on an IDX set");
    std::string eval_model = "saak";
    evalc->add_option("--config", config_path)->required();
    evalc->add_option("--artifacts", artifacts);
    evalc->add_option("--model", eval_model, "saak|mlp");
    evalc->add_option("--images", in_images, "IDX images (default: config test set)");
    evalc->add_option("--labels", in_labels);

    auto* report = app.add_subcommand("report", "Evaluate the robustness grid from artifacts");
    report->add_option("--config", config_path)->required();
    report->add_option("--artifacts", artifacts);

    auto* diag = app.add_subcommand("diag", "Spectral diagnostics between two aligned sets");
    std::string adv_images, adv_labels;
    int stage = 0;
    diag->add_option("--config", config_path)->required();
    diag->add_option("--artifacts", artifacts);
    diag->add_option("--adv-images", adv_images)->required();
    diag->add_option("--adv-labels", adv_labels)->required();
    diag->add_option("--stage", stage)->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            auto cfg = load_cfg(config_path, seed_override);
            auto rep = harness::run_experiment(cfg, &std::cerr);
            for (const auto& r : rep.rows)
                std::cout << r.defense << " / " << r.attack << " eps=" << r.epsilon
                          << " clean=" << r.c_clean << " attacked=" << r.c_attack
                          << " drop=" << r.drop_pp() << "pp\n";
            std::cout << "artifacts written to " << cfg.output_dir << "\n";
        } else if (fit->parsed()) {
            auto cfg = load_cfg(config_path, seed_override);
            auto train_set = harness::load_dataset_split(cfg, true);
            std::vector<fsel::EntropyMap> maps;
            auto clf = harness::fit_saak_classifier(cfg, train_set, &maps, &std::cerr);
            fs::create_directories(out_dir);
            save_pipeline(clf.pipeline, out_dir + "/pipeline.bin");
            fsel::save_masks(clf.masks, out_dir + "/masks.txt");
            models::save_softmax(clf.head, out_dir + "/head.bin");
            fsel::write_entropy_csv(maps, out_dir + "/entropy.csv");
            std::cout << "wrote pipeline.bin, masks.txt, head.bin, entropy.csv to "
                      << out_dir << "\n";
        } else if (train->parsed()) {
            auto cfg = load_cfg(config_path, seed_override);
            auto train_set = harness::load_dataset_split(cfg, true);
            fs::create_directories(artifacts);
            if (!target_only) {
                auto pipeline = load_pipeline(artifacts + "/pipeline.bin");
                auto masks = fsel::load_masks(artifacts + "/masks.txt");
                auto head =
                    harness::train_saak_head(cfg, pipeline, masks, train_set, &std::cerr);
                models::save_softmax(head, artifacts + "/head.bin");
                std::cout << "wrote " << artifacts << "/head.bin\n";
            }
            if (!head_only) {
                auto mlp = models::train_mlp(train_set, cfg.mlp_hidden, cfg.mlp, &std::cerr);
                models::save_mlp(mlp, artifacts + "/mlp.bin");
                std::cout << "wrote " << artifacts << "/mlp.bin\n";
            }
        } else if (attack->parsed()) {
            auto cfg = load_cfg(config_path, seed_override);
            auto test_set = harness::load_dataset_split(cfg, false);
            auto mlp = models::load_mlp(artifacts + "/mlp.bin");
            attacks::AttackConfig acfg;
            acfg.epsilon = epsilon;
            acfg.alpha = std::max(cfg.bim_alpha_fraction * epsilon, 1e-6);
            acfg.iterations = cfg.bim_iterations;
            acfg.overshoot = cfg.df_overshoot;
            acfg.max_iter_df = cfg.df_max_iter;
            auto atk = attacks::attack_set(test_set, mlp, attacks::parse_method(method), acfg);
            datasets::save_idx(atk.set, out_prefix + "-images-idx3-ubyte",
                               out_prefix + "-labels-idx1-ubyte");
            attacks::write_attack_log(atk, attacks::parse_method(method),
                                      out_prefix + "-log.csv");
            std::cout << "wrote " << out_prefix << "-{images,labels,log}\n";
        } else if (defend->parsed()) {
            auto spec = defenses::parse_defense(spec_text);
            auto set = datasets::load_idx(in_images, in_labels);
            auto defended = defenses::apply_defense(set, spec);
            datasets::save_idx(defended, out_prefix + "-images-idx3-ubyte",
                               out_prefix + "-labels-idx1-ubyte");
            std::cout << "wrote " << out_prefix << "-{images,labels}\n";
        } else if (evalc->parsed()) {
            auto cfg = load_cfg(config_path, seed_override);
            LabeledSet set;
            if (in_images.empty()) {
                set = harness::load_dataset_split(cfg, false);
            } else {
                set = datasets::load_idx(in_images, in_labels);
                if (cfg.pad_to > 0 && set.images.front().height < cfg.pad_to)
                    set = datasets::pad_images(set, cfg.pad_to);
            }
            double acc;
            if (eval_model == "saak") {
                acc = load_saak_artifacts(artifacts).accuracy(set);
            } else if (eval_model == "mlp") {
                acc = models::evaluate_accuracy(models::load_mlp(artifacts + "/mlp.bin"), set);
            } else {
                throw std::invalid_argument("eval --model must be saak or mlp");
            }
            std::cout << "accuracy " << acc << "\n";
        } else if (report->parsed()) {
            auto cfg = load_cfg(config_path, seed_override);
            auto test_set = harness::load_dataset_split(cfg, false);
            auto clf = load_saak_artifacts(artifacts);
            auto mlp = models::load_mlp(artifacts + "/mlp.bin");
            auto eval = harness::evaluate_robustness(cfg, clf, mlp, test_set, &std::cerr);
            fs::create_directories(cfg.output_dir);
            harness::write_report(eval.report, cfg.output_dir + "/report.csv");
            if (eval.stage1_diag)
                harness::write_diagnostics(*eval.stage1_diag,
                                           cfg.output_dir + "/diagnostics.csv");
            std::cout << "wrote " << cfg.output_dir << "/report.csv\n";
        } else if (diag->parsed()) {
            auto cfg = load_cfg(config_path, seed_override);
            auto clean = harness::load_dataset_split(cfg, false);
            auto adv = datasets::load_idx(adv_images, adv_labels);
            if (cfg.pad_to > 0 && adv.images.front().height < cfg.pad_to)
                adv = datasets::pad_images(adv, cfg.pad_to);
            auto pipeline = load_pipeline(artifacts + "/pipeline.bin");
            auto d = harness::spectral_diagnostics(clean, adv, pipeline, stage);
            fs::create_directories(cfg.output_dir);
            harness::write_diagnostics(d, cfg.output_dir + "/diagnostics.csv");
            std::cout << "wrote " << cfg.output_dir << "/diagnostics.csv\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
