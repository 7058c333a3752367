#include "saak/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "saak/datasets.hpp"

namespace saak::harness {

namespace {

std::vector<std::string> split_list(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::istringstream ss(text);
    std::string item;
    while (std::getline(ss, item, sep))
        if (!item.empty()) out.push_back(item);
    return out;
}

std::vector<defenses::DefenseSpec> default_defenses() {
    std::vector<defenses::DefenseSpec> out;
    for (const char* s :
         {"none", "jpeg:q=90", "bitdepth:bits=4", "bitdepth:bits=5", "median:w=2",
          "median:w=3", "nlmeans:h=0.1,patch=3,search=7", "tvm:lambda=0.1,iters=30",
          "deflect:count=200,window=5,seed=7"})
        out.push_back(defenses::parse_defense(s));
    return out;
}

struct AttackColumn {
    attacks::Method method;
    double epsilon;  // 0 for deepfool
};

std::vector<AttackColumn> attack_columns(const ExperimentConfig& cfg) {
    std::vector<AttackColumn> cols;
    for (auto m : cfg.attack_methods) {
        if (m == attacks::Method::DeepFool) {
            cols.push_back({m, 0.0});
        } else {
            for (double e : cfg.epsilons) cols.push_back({m, e});
        }
    }
    return cols;
}

attacks::AttackConfig column_config(const ExperimentConfig& cfg, const AttackColumn& col) {
    attacks::AttackConfig acfg;
    acfg.epsilon = col.epsilon;
    acfg.alpha = std::max(cfg.bim_alpha_fraction * col.epsilon, 1e-6);
    acfg.iterations = cfg.bim_iterations;
    acfg.overshoot = cfg.df_overshoot;
    acfg.max_iter_df = cfg.df_max_iter;
    return acfg;
}

double quantile(std::vector<double>& sorted, double p) {
    if (sorted.empty()) return 0.0;
    double idx = p * double(sorted.size() - 1);
    size_t lo = size_t(std::floor(idx));
    size_t hi = std::min(lo + 1, sorted.size() - 1);
    double frac = idx - double(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

}  // namespace

ExperimentConfig default_config() {
    ExperimentConfig cfg;
    cfg.defense_list = default_defenses();
    return cfg;
}

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg = default_config();
    cfg.source_text = text;

    std::map<std::string, std::string> kv;
    std::istringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back())))
            line.pop_back();
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError("config line missing '=': " + line);
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }

    auto str = [&](const char* k, std::string& dst) {
        if (kv.count(k)) dst = kv[k];
    };
    auto num = [&](const char* k, auto& dst) {
        if (kv.count(k)) dst = static_cast<std::decay_t<decltype(dst)>>(std::stod(kv[k]));
    };

    str("dataset.train_images", cfg.train_images);
    str("dataset.train_labels", cfg.train_labels);
    str("dataset.test_images", cfg.test_images);
    str("dataset.test_labels", cfg.test_labels);
    num("dataset.pad_to", cfg.pad_to);
    num("dataset.train_limit", cfg.train_limit);
    num("dataset.test_limit", cfg.test_limit);
    if (kv.count("dataset.synth")) cfg.synth = kv["dataset.synth"] == "1";
    num("dataset.synth_per_class", cfg.synth_per_class);
    num("dataset.synth_classes", cfg.synth_classes);
    num("dataset.synth_side", cfg.synth_side);

    // Stage list: saak.stageN.kernel / .tau / .max_ac, N starting at 1.
    int max_stage = 0;
    for (const auto& [k, v] : kv)
        if (k.rfind("saak.stage", 0) == 0) {
            int n = std::stoi(k.substr(10, k.find('.', 10) - 10));
            max_stage = std::max(max_stage, n);
        }
    if (max_stage > 0) cfg.stages.resize(size_t(max_stage), StageConfig{2, 0.99, 16});
    for (size_t s = 0; s < cfg.stages.size(); ++s) {
        std::string prefix = "saak.stage" + std::to_string(s + 1) + ".";
        num((prefix + "kernel").c_str(), cfg.stages[s].kernel_size);
        num((prefix + "tau").c_str(), cfg.stages[s].energy_fraction);
        num((prefix + "max_ac").c_str(), cfg.stages[s].max_ac);
    }

    num("select.bins", cfg.selection.num_bins);
    num("select.spatial_fraction", cfg.selection.spatial_fraction);
    num("select.spectral_fraction", cfg.selection.spectral_fraction);
    if (kv.count("select.variant")) {
        const auto& v = kv["select.variant"];
        if (v == "literal")
            cfg.selection.variant = fsel::EntropyVariant::Literal;
        else if (v == "per_bin")
            cfg.selection.variant = fsel::EntropyVariant::PerBin;
        else
            throw FormatError("unknown entropy variant: " + v);
    }

    num("head.lr", cfg.head.learning_rate);
    num("head.epochs", cfg.head.epochs);
    num("head.batch", cfg.head.batch_size);
    num("head.l2", cfg.head.l2_penalty);

    if (kv.count("mlp.hidden")) {
        cfg.mlp_hidden.clear();
        for (const auto& h : split_list(kv["mlp.hidden"], ','))
            cfg.mlp_hidden.push_back(std::stoi(h));
    }
    num("mlp.lr", cfg.mlp.learning_rate);
    num("mlp.epochs", cfg.mlp.epochs);
    num("mlp.batch", cfg.mlp.batch_size);
    num("mlp.l2", cfg.mlp.l2_penalty);

    if (kv.count("attack.methods")) {
        cfg.attack_methods.clear();
        for (const auto& m : split_list(kv["attack.methods"], ','))
            cfg.attack_methods.push_back(attacks::parse_method(m));
    }
    if (kv.count("attack.epsilons")) {
        cfg.epsilons.clear();
        for (const auto& e : split_list(kv["attack.epsilons"], ','))
            cfg.epsilons.push_back(std::stod(e));
    }
    num("attack.bim_alpha_fraction", cfg.bim_alpha_fraction);
    num("attack.bim_iters", cfg.bim_iterations);
    num("attack.df_overshoot", cfg.df_overshoot);
    num("attack.df_max_iter", cfg.df_max_iter);

    if (kv.count("defenses")) {
        cfg.defense_list.clear();
        for (const auto& d : split_list(kv["defenses"], ';'))
            cfg.defense_list.push_back(defenses::parse_defense(d));
    }

    num("seed", cfg.seed);
    str("output_dir", cfg.output_dir);
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

LabeledSet load_dataset_split(const ExperimentConfig& cfg, bool train) {
    LabeledSet set;
    if (cfg.synth) {
        set = datasets::synth_blobs(cfg.synth_per_class, cfg.synth_classes, cfg.synth_side,
                                    cfg.seed + (train ? 0 : 1));
    } else {
        set = datasets::load_idx(train ? cfg.train_images : cfg.test_images,
                                 train ? cfg.train_labels : cfg.test_labels);
    }
    int limit = train ? cfg.train_limit : cfg.test_limit;
    if (limit > 0 && size_t(limit) < set.size()) {
        set.images.resize(size_t(limit));
        set.labels.resize(size_t(limit));
    }
    if (cfg.pad_to > 0 && !set.images.empty() && set.images.front().height < cfg.pad_to)
        set = datasets::pad_images(set, cfg.pad_to);
    return set;
}

Vector SaakClassifier::features(const ImageTensor& img) const {
    return fsel::assemble_features(transform_all(img, pipeline), masks);
}

int SaakClassifier::predict(const ImageTensor& img) const { return head.predict(features(img)); }

double SaakClassifier::accuracy(const LabeledSet& set) const {
    if (set.images.empty()) throw std::invalid_argument("SaakClassifier: empty set");
    size_t correct = 0;
    for (size_t i = 0; i < set.size(); ++i)
        if (predict(set.images[i]) == set.labels[i]) ++correct;
    return double(correct) / double(set.size());
}

models::SoftmaxClassifier train_saak_head(const ExperimentConfig& cfg,
                                          const SaakPipeline& pipeline,
                                          const std::vector<fsel::SelectionMask>& masks,
                                          const LabeledSet& train, std::ostream* log) {
    std::vector<Vector> feats;
    feats.reserve(train.size());
    for (const auto& img : train.images)
        feats.push_back(fsel::assemble_features(transform_all(img, pipeline), masks));

    // Standardize features, then fold the scaler into the linear head so
    // the serialized model operates on raw assembled features.
    auto scaler = models::fit_scaler(feats);
    std::vector<Vector> scaled;
    scaled.reserve(feats.size());
    for (const auto& f : feats) scaled.push_back(scaler.apply(f));
    auto head = models::train_softmax(scaled, train.labels, train.num_classes, cfg.head, log);

    models::SoftmaxClassifier folded;
    folded.weights = head.weights * scaler.inv_std.asDiagonal();
    folded.bias = head.bias - folded.weights * scaler.mean;
    return folded;
}

SaakClassifier fit_saak_classifier(const ExperimentConfig& cfg, const LabeledSet& train,
                                   std::vector<fsel::EntropyMap>* maps_out,
                                   std::ostream* log) {
    SaakClassifier clf;
    clf.pipeline = fit_pipeline(train, cfg.stages);
    if (log) *log << "fitted " << clf.pipeline.stages.size() << " saak stages\n";

    // Per-stage feature blocks over the whole training set.
    std::vector<std::vector<Tensor3>> per_stage(clf.pipeline.stages.size());
    for (const auto& img : train.images) {
        auto blocks = transform_all(img, clf.pipeline);
        for (size_t p = 0; p < blocks.size(); ++p)
            per_stage[p].push_back(std::move(blocks[p].values));
    }

    std::vector<fsel::EntropyMap> maps;
    for (size_t p = 0; p < per_stage.size(); ++p) {
        auto map = fsel::compute_entropy_map(per_stage[p], train.labels,
                                             cfg.selection.num_bins, train.num_classes,
                                             int(p), cfg.selection.variant);
        clf.masks.push_back(fsel::fit_mask(map, cfg.selection));
        maps.push_back(std::move(map));
    }
    if (maps_out) *maps_out = std::move(maps);

    clf.head = train_saak_head(cfg, clf.pipeline, clf.masks, train, log);
    return clf;
}

SpectralDiagnostics spectral_diagnostics(const LabeledSet& clean, const LabeledSet& attacked,
                                         const SaakPipeline& pipeline, int stage) {
    if (clean.size() != attacked.size())
        throw std::invalid_argument("spectral_diagnostics: sets not aligned");
    if (stage < 0 || size_t(stage) >= pipeline.stages.size())
        throw std::invalid_argument("spectral_diagnostics: stage out of range");

    auto stage_block = [&](const ImageTensor& img) {
        Tensor3 cur = img;
        for (int p = 0; p <= stage; ++p) cur = forward_stage(cur, pipeline.stages[size_t(p)]);
        return cur;
    };

    Tensor3 probe = stage_block(clean.images.front());
    const int K = probe.channels;

    SpectralDiagnostics diag;
    diag.stage = stage + 1;  // 1-based in reports
    std::vector<double> sq_diff(size_t(K), 0.0), sq_clean(size_t(K), 0.0);
    std::vector<std::vector<double>> clean_vals, adv_vals;
    clean_vals.resize(size_t(K));
    adv_vals.resize(size_t(K));
    size_t count = 0;

    for (size_t i = 0; i < clean.size(); ++i) {
        Tensor3 cb = stage_block(clean.images[i]);
        Tensor3 ab = stage_block(attacked.images[i]);
        for (int r = 0; r < cb.height; ++r)
            for (int cidx = 0; cidx < cb.width; ++cidx)
                for (int k = 0; k < K; ++k) {
                    double cv = cb.at(r, cidx, k), av = ab.at(r, cidx, k);
                    sq_diff[size_t(k)] += (cv - av) * (cv - av);
                    sq_clean[size_t(k)] += cv * cv;
                    clean_vals[size_t(k)].push_back(cv);
                    adv_vals[size_t(k)].push_back(av);
                }
        count += size_t(cb.height) * cb.width;
    }

    for (int k = 0; k < K; ++k) {
        double rmse = std::sqrt(sq_diff[size_t(k)] / double(count));
        double rms = std::max(std::sqrt(sq_clean[size_t(k)] / double(count)), 1e-12);
        diag.rmse.push_back(rmse);
        diag.normalized_rmse.push_back(rmse / rms);
        auto& cv = clean_vals[size_t(k)];
        auto& av = adv_vals[size_t(k)];
        std::sort(cv.begin(), cv.end());
        std::sort(av.begin(), av.end());
        diag.q25_clean.push_back(quantile(cv, 0.25));
        diag.q50_clean.push_back(quantile(cv, 0.50));
        diag.q75_clean.push_back(quantile(cv, 0.75));
        diag.q25_adv.push_back(quantile(av, 0.25));
        diag.q50_adv.push_back(quantile(av, 0.50));
        diag.q75_adv.push_back(quantile(av, 0.75));
    }
    return diag;
}

EvalOutputs evaluate_robustness(const ExperimentConfig& cfg, const SaakClassifier& clf,
                                const models::TargetMLP& mlp, const LabeledSet& test,
                                std::ostream* log, const std::string& attack_log_dir) {
    double saak_clean = clf.accuracy(test);
    double mlp_clean = models::evaluate_accuracy(mlp, test);
    if (log) *log << "clean accuracy: saak " << saak_clean << " mlp " << mlp_clean << "\n";
    (void)mlp_clean;

    // Defended clean accuracy, one pass per defense.
    std::vector<double> defended_clean;
    for (const auto& d : cfg.defense_list)
        defended_clean.push_back(
            models::evaluate_accuracy(mlp, defenses::apply_defense(test, d)));

    auto cols = attack_columns(cfg);
    std::vector<LabeledSet> attacked_sets;
    std::vector<double> saak_attack_acc;
    std::vector<std::vector<double>> mlp_defended_acc(cfg.defense_list.size());

    for (const auto& col : cols) {
        auto atk = attacks::attack_set(test, mlp, col.method, column_config(cfg, col));
        if (log)
            *log << "attacked with " << attacks::method_name(col.method) << " eps "
                 << col.epsilon << "\n";
        saak_attack_acc.push_back(clf.accuracy(atk.set));
        for (size_t d = 0; d < cfg.defense_list.size(); ++d)
            mlp_defended_acc[d].push_back(models::evaluate_accuracy(
                mlp, defenses::apply_defense(atk.set, cfg.defense_list[d])));
        if (!attack_log_dir.empty()) {
            std::ostringstream name;
            name << attack_log_dir << "/attacklog_" << attacks::method_name(col.method)
                 << "_" << std::fixed << std::setprecision(4) << col.epsilon << ".csv";
            attacks::write_attack_log(atk, col.method, name.str());
        }
        attacked_sets.push_back(std::move(atk.set));
    }

    EvalOutputs out;
    out.report.config_hash = fnv1a_hex(cfg.source_text);
    out.report.test_size = test.size();
    for (size_t d = 0; d < cfg.defense_list.size(); ++d)
        for (size_t c = 0; c < cols.size(); ++c)
            out.report.rows.push_back({defenses::defense_name(cfg.defense_list[d]),
                                       attacks::method_name(cols[c].method), cols[c].epsilon,
                                       defended_clean[d], mlp_defended_acc[d][c]});
    for (size_t c = 0; c < cols.size(); ++c)
        out.report.rows.push_back({"saak", attacks::method_name(cols[c].method),
                                   cols[c].epsilon, saak_clean, saak_attack_acc[c]});

    // Stage-1 spectral diagnostics against the first FGSM column, if any.
    for (size_t c = 0; c < cols.size(); ++c)
        if (cols[c].method == attacks::Method::Fgsm) {
            out.stage1_diag = spectral_diagnostics(test, attacked_sets[c], clf.pipeline, 0);
            break;
        }
    return out;
}

RobustnessReport run_experiment(const ExperimentConfig& cfg, std::ostream* log) {
    namespace fs = std::filesystem;
    auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(cfg.output_dir);
    auto out_path = [&](const std::string& name) { return cfg.output_dir + "/" + name; };

    LabeledSet train = load_dataset_split(cfg, true);
    LabeledSet test = load_dataset_split(cfg, false);
    if (log) *log << "train " << train.size() << " test " << test.size() << "\n";

    std::vector<fsel::EntropyMap> maps;
    SaakClassifier saak_clf = fit_saak_classifier(cfg, train, &maps, log);
    models::TargetMLP mlp = models::train_mlp(train, cfg.mlp_hidden, cfg.mlp, log);

    auto eval = evaluate_robustness(cfg, saak_clf, mlp, test, log, cfg.output_dir);
    RobustnessReport report = std::move(eval.report);
    report.train_size = train.size();
    auto& diag = eval.stage1_diag;

    save_pipeline(saak_clf.pipeline, out_path("pipeline.bin"));
    fsel::save_masks(saak_clf.masks, out_path("masks.txt"));
    models::save_softmax(saak_clf.head, out_path("head.bin"));
    models::save_mlp(mlp, out_path("mlp.bin"));
    fsel::write_entropy_csv(maps, out_path("entropy.csv"));
    write_report(report, out_path("report.csv"));
    if (diag) write_diagnostics(*diag, out_path("diagnostics.csv"));

    report.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_report_meta(report, out_path("report_meta.txt"));

    std::vector<std::string> artifacts = {out_path("pipeline.bin"), out_path("masks.txt"),
                                          out_path("head.bin"),     out_path("mlp.bin"),
                                          out_path("entropy.csv"),  out_path("report.csv")};
    if (diag) artifacts.push_back(out_path("diagnostics.csv"));
    write_manifest(artifacts, out_path("manifest.txt"));
    return report;
}

void write_report(const RobustnessReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write report: " + path);
    out << "defense,attack,epsilon,c_clean,c_attack,drop_pp\n"
        << std::fixed << std::setprecision(4);
    for (const auto& r : report.rows)
        out << r.defense << "," << r.attack << "," << r.epsilon << "," << r.c_clean << ","
            << r.c_attack << "," << r.drop_pp() << "\n";
}

RobustnessReport read_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open report: " + path);
    std::string line;
    std::getline(in, line);
    if (line != "defense,attack,epsilon,c_clean,c_attack,drop_pp")
        throw FormatError("bad report header: " + path);
    RobustnessReport report;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto parts = split_list(line, ',');
        if (parts.size() != 6) throw FormatError("bad report row: " + line);
        ReportRow r;
        r.defense = parts[0];
        r.attack = parts[1];
        r.epsilon = std::stod(parts[2]);
        r.c_clean = std::stod(parts[3]);
        r.c_attack = std::stod(parts[4]);
        report.rows.push_back(std::move(r));
    }
    return report;
}

void write_report_meta(const RobustnessReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write report meta: " + path);
    out << "config_hash=" << report.config_hash << "\n"
        << "train_size=" << report.train_size << "\n"
        << "test_size=" << report.test_size << "\n"
        << "runtime_seconds=" << std::fixed << std::setprecision(2)
        << report.runtime_seconds << "\n"
        << "note=defense rows are the target MLP with pre-processing; the saak row is "
           "the Saak classifier applied to raw attacked images\n";
}

void write_diagnostics(const SpectralDiagnostics& diag, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write diagnostics: " + path);
    out << "stage,spectral_dim,rmse,normalized_rmse,q25_clean,q50_clean,q75_clean,"
           "q25_adv,q50_adv,q75_adv\n"
        << std::fixed << std::setprecision(4);
    for (size_t k = 0; k < diag.rmse.size(); ++k)
        out << diag.stage << "," << k << "," << diag.rmse[k] << ","
            << diag.normalized_rmse[k] << "," << diag.q25_clean[k] << ","
            << diag.q50_clean[k] << "," << diag.q75_clean[k] << "," << diag.q25_adv[k] << ","
            << diag.q50_adv[k] << "," << diag.q75_adv[k] << "\n";
}

std::string fnv1a_hex(const std::string& bytes) {
    uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    std::ostringstream ss;
    ss << std::hex << std::setw(16) << std::setfill('0') << h;
    return ss.str();
}

std::string file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot hash file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return fnv1a_hex(ss.str());
}

void write_manifest(const std::vector<std::string>& paths, const std::string& manifest_path) {
    std::ofstream out(manifest_path);
    if (!out) throw FormatError("cannot write manifest: " + manifest_path);
    for (const auto& p : paths) out << p << " " << file_hash(p) << "\n";
}

}  // namespace saak::harness
