#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "saak/datasets.hpp"
#include "saak/models.hpp"

using namespace saak;

namespace {

std::vector<Vector> flatten(const LabeledSet& set) {
    std::vector<Vector> out;
    for (const auto& img : set.images) out.push_back(img.data);
    return out;
}

models::TargetMLP small_trained_mlp() {
    auto set = datasets::synth_blobs(30, 3, 8, 5);
    models::TrainConfig cfg;
    cfg.epochs = 8;
    cfg.seed = 2;
    return models::train_mlp(set, {16}, cfg);
}

}  // namespace

TEST_CASE("untrained softmax head predicts the uniform distribution") {
    auto set = datasets::synth_blobs(5, 4, 8, 1);
    models::TrainConfig cfg;
    cfg.epochs = 0;
    auto head = models::train_softmax(flatten(set), set.labels, 4, cfg);
    Vector p = head.probabilities(set.images[0].data);
    for (int c = 0; c < 4; ++c) CHECK(p[c] == doctest::Approx(0.25).epsilon(1e-12));
    // per-sample loss of the uniform predictor is ln C
    CHECK(-std::log(p[set.labels[0]]) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("softmax head reaches 100% on linearly separable blobs") {
    auto set = datasets::synth_blobs(40, 3, 8, 11);
    models::TrainConfig cfg;
    cfg.epochs = 40;
    cfg.learning_rate = 0.5;
    auto head = models::train_softmax(flatten(set), set.labels, 3, cfg);
    CHECK(models::evaluate_accuracy(head, flatten(set), set.labels) == 1.0);
}

TEST_CASE("mlp reaches 100% on separable blobs and is deterministic") {
    auto set = datasets::synth_blobs(30, 3, 8, 7);
    models::TrainConfig cfg;
    cfg.epochs = 15;
    cfg.seed = 4;
    auto m1 = models::train_mlp(set, {16}, cfg);
    CHECK(models::evaluate_accuracy(m1, set) == 1.0);

    auto m2 = models::train_mlp(set, {16}, cfg);
    for (size_t l = 0; l < m1.weights.size(); ++l) {
        CHECK((m1.weights[l] - m2.weights[l]).cwiseAbs().maxCoeff() == 0.0);
        CHECK((m1.biases[l] - m2.biases[l]).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("input_gradient matches finite differences") {
    auto model = small_trained_mlp();
    std::mt19937 rng(13);
    std::uniform_real_distribution<double> d(0.05, 0.95);
    Vector x(model.input_dim());
    for (int i = 0; i < x.size(); ++i) x[i] = d(rng);
    int label = 1;

    Vector g = models::input_gradient(model, x, label);
    const double h = 1e-6;
    std::uniform_int_distribution<int> pick(0, model.input_dim() - 1);
    for (int t = 0; t < 20; ++t) {
        int i = pick(rng);
        Vector xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        double fd = (models::cross_entropy_loss(model, xp, label) -
                     models::cross_entropy_loss(model, xm, label)) /
                    (2 * h);
        CHECK(g[i] == doctest::Approx(fd).epsilon(1e-4));
    }
}

TEST_CASE("loss_weight_gradients match finite differences") {
    auto model = small_trained_mlp();
    Vector x = Vector::Constant(model.input_dim(), 0.3);
    int label = 0;
    std::vector<Matrix> gw;
    std::vector<Vector> gb;
    models::loss_weight_gradients(model, x, label, gw, gb);
    REQUIRE(gw.size() == model.weights.size());

    const double h = 1e-6;
    std::mt19937 rng(23);
    for (size_t l = 0; l < model.weights.size(); ++l) {
        std::uniform_int_distribution<int> rr(0, int(model.weights[l].rows()) - 1);
        std::uniform_int_distribution<int> cc(0, int(model.weights[l].cols()) - 1);
        for (int t = 0; t < 10; ++t) {
            int r = rr(rng), c = cc(rng);
            auto mp = model, mm = model;
            mp.weights[l](r, c) += h;
            mm.weights[l](r, c) -= h;
            double fd = (models::cross_entropy_loss(mp, x, label) -
                         models::cross_entropy_loss(mm, x, label)) /
                        (2 * h);
            CHECK(gw[l](r, c) == doctest::Approx(fd).epsilon(1e-4));
        }
        auto mp = model, mm = model;
        int r = rr(rng);
        mp.biases[l][r] += h;
        mm.biases[l][r] -= h;
        double fd = (models::cross_entropy_loss(mp, x, label) -
                     models::cross_entropy_loss(mm, x, label)) /
                    (2 * h);
        CHECK(gb[l][r] == doctest::Approx(fd).epsilon(1e-4));
    }
}

TEST_CASE("class_score_gradients of a linear network are the weight rows") {
    models::TargetMLP lin = models::make_mlp({4, 3}, 9);
    Vector x(4);
    x << 0.2, 0.8, 0.1, 0.5;
    Matrix J = models::class_score_gradients(lin, x);
    CHECK((J - lin.weights[0]).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("class_score_gradients satisfy the loss-gradient identity") {
    // grad J = sum_c p_c * grad logit_c - grad logit_label
    auto model = small_trained_mlp();
    std::mt19937 rng(17);
    std::uniform_real_distribution<double> d(0.0, 1.0);
    Vector x(model.input_dim());
    for (int i = 0; i < x.size(); ++i) x[i] = d(rng);
    int label = 2;

    Matrix J = models::class_score_gradients(model, x);
    Vector p = model.probabilities(x);
    Vector combo = J.transpose() * p - J.row(label).transpose();
    Vector g = models::input_gradient(model, x, label);
    CHECK((combo - g).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("class_score_gradients match finite differences of logits") {
    auto model = small_trained_mlp();
    std::mt19937 rng(19);
    std::uniform_real_distribution<double> d(0.05, 0.95);
    Vector x(model.input_dim());
    for (int i = 0; i < x.size(); ++i) x[i] = d(rng);

    Matrix J = models::class_score_gradients(model, x);
    const double h = 1e-6;
    std::uniform_int_distribution<int> pick(0, model.input_dim() - 1);
    for (int t = 0; t < 15; ++t) {
        int i = pick(rng);
        Vector xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        Vector fd = (model.logits(xp) - model.logits(xm)) / (2 * h);
        for (int c = 0; c < model.num_classes(); ++c)
            CHECK(J(c, i) == doctest::Approx(fd[c]).epsilon(1e-4));
    }
}

TEST_CASE("probabilities are invariant to a uniform logit shift") {
    auto model = small_trained_mlp();
    Vector x = Vector::Constant(model.input_dim(), 0.4);
    Vector p1 = model.probabilities(x);
    auto shifted = model;
    shifted.biases.back().array() += 25.0;
    Vector p2 = shifted.probabilities(x);
    CHECK((p1 - p2).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(p1.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("evaluate_accuracy counts correct predictions, rejects empty sets") {
    auto set = datasets::synth_blobs(10, 2, 8, 21);
    auto model = models::make_mlp({64, 2}, 1);
    double acc = models::evaluate_accuracy(model, set);
    int correct = 0;
    for (size_t i = 0; i < set.size(); ++i)
        if (model.predict(set.images[i].data) == set.labels[i]) ++correct;
    CHECK(acc == doctest::Approx(double(correct) / double(set.size())));

    LabeledSet empty;
    empty.num_classes = 2;
    CHECK_THROWS_AS(models::evaluate_accuracy(model, empty), std::invalid_argument);
}

TEST_CASE("fit_scaler normalizes and floors tiny variances") {
    std::vector<Vector> feats;
    for (double v : {1.0, 2.0, 3.0}) {
        Vector f(2);
        f << v, 5.0;  // second dim constant
        feats.push_back(f);
    }
    auto sc = models::fit_scaler(feats);
    CHECK(sc.mean[0] == doctest::Approx(2.0));
    CHECK(sc.mean[1] == doctest::Approx(5.0));
    CHECK(std::isfinite(sc.inv_std[1]));
    Vector z = sc.apply(feats[2]);
    CHECK(z[1] == 0.0);
    CHECK(z[0] > 0.0);
}

TEST_CASE("softmax serialization roundtrip") {
    auto set = datasets::synth_blobs(10, 3, 8, 31);
    models::TrainConfig cfg;
    cfg.epochs = 5;
    auto head = models::train_softmax(flatten(set), set.labels, 3, cfg);
    auto path = (std::filesystem::temp_directory_path() / "head.bin").string();
    models::save_softmax(head, path);
    auto back = models::load_softmax(path);
    CHECK((head.weights - back.weights).cwiseAbs().maxCoeff() == 0.0);
    CHECK((head.bias - back.bias).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mlp serialization roundtrip preserves predictions") {
    auto model = small_trained_mlp();
    auto path = (std::filesystem::temp_directory_path() / "mlp.bin").string();
    models::save_mlp(model, path);
    auto back = models::load_mlp(path);
    REQUIRE(back.layer_sizes == model.layer_sizes);
    for (size_t l = 0; l < model.weights.size(); ++l)
        CHECK((model.weights[l] - back.weights[l]).cwiseAbs().maxCoeff() == 0.0);
    Vector x = Vector::Constant(model.input_dim(), 0.3);
    CHECK((model.logits(x) - back.logits(x)).cwiseAbs().maxCoeff() == 0.0);
}
