#include "saak/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

namespace saak::attacks {

namespace {

Vector sign_zero(const Vector& g) {
    Vector s(g.size());
    for (Eigen::Index i = 0; i < g.size(); ++i)
        s[i] = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
    return s;
}

AdversarialResult finish(const ImageTensor& x, Vector adv_data, int orig_pred,
                         const models::TargetMLP& model, int iterations) {
    AdversarialResult r;
    r.image = x;
    r.image.data = std::move(adv_data);
    Vector diff = r.image.data - x.data;
    r.linf_norm = diff.size() ? diff.cwiseAbs().maxCoeff() : 0.0;
    r.l2_norm = diff.norm();
    r.success = model.predict(r.image.data) != orig_pred;
    r.iterations_used = iterations;
    return r;
}

}  // namespace

Method parse_method(const std::string& name) {
    if (name == "fgsm") return Method::Fgsm;
    if (name == "bim") return Method::Bim;
    if (name == "deepfool") return Method::DeepFool;
    throw std::invalid_argument("unknown attack method: " + name);
}

std::string method_name(Method m) {
    switch (m) {
        case Method::Fgsm: return "fgsm";
        case Method::Bim: return "bim";
        case Method::DeepFool: return "deepfool";
    }
    return "?";
}

AdversarialResult fgsm(const ImageTensor& x, int label, const models::TargetMLP& model,
                       double epsilon) {
    if (epsilon < 0) throw std::invalid_argument("fgsm: epsilon must be >= 0");
    int orig_pred = model.predict(x.data);
    Vector g = models::input_gradient(model, x.data, label);
    Vector adv = (x.data + epsilon * sign_zero(g)).cwiseMax(0.0).cwiseMin(1.0);
    return finish(x, std::move(adv), orig_pred, model, 1);
}

AdversarialResult bim(const ImageTensor& x, int label, const models::TargetMLP& model,
                      double epsilon, double alpha, int iterations) {
    if (epsilon < 0 || alpha <= 0 || iterations < 1)
        throw std::invalid_argument("bim: invalid config");
    int orig_pred = model.predict(x.data);
    Vector lo = (x.data.array() - epsilon).cwiseMax(0.0);
    Vector hi = (x.data.array() + epsilon).cwiseMin(1.0);
    Vector cur = x.data;
    for (int t = 0; t < iterations; ++t) {
        Vector g = models::input_gradient(model, cur, label);
        cur = (cur + alpha * sign_zero(g)).cwiseMax(lo).cwiseMin(hi);
    }
    return finish(x, std::move(cur), orig_pred, model, iterations);
}

AdversarialResult deepfool(const ImageTensor& x, const models::TargetMLP& model,
                           int max_iter, double overshoot) {
    if (max_iter < 1 || overshoot < 0) throw std::invalid_argument("deepfool: invalid config");
    const int orig_pred = model.predict(x.data);
    const int num_classes = model.num_classes();

    Vector total = Vector::Zero(x.data.size());
    int iter = 0;
    bool degenerate = false;
    for (; iter < max_iter; ++iter) {
        // Linearize at the feasible iterate: success is defined on the
        // clipped image, so the stopping test must see the same point.
        Vector cur = (x.data + (1.0 + overshoot) * total).cwiseMax(0.0).cwiseMin(1.0);
        Vector f = model.logits(cur);
        int k0 = model.predict(cur);
        if (k0 != orig_pred) break;

        Matrix grads = models::class_score_gradients(model, cur);
        double best_dist = std::numeric_limits<double>::infinity();
        Vector best_w;
        double best_fk = 0.0;
        for (int k = 0; k < num_classes; ++k) {
            if (k == k0) continue;
            Vector w = (grads.row(k) - grads.row(k0)).transpose();
            double wn = w.norm();
            if (wn < 1e-12) continue;
            double fk = f[k] - f[k0];
            double dist = std::abs(fk) / wn;
            if (dist < best_dist) {
                best_dist = dist;
                best_w = std::move(w);
                best_fk = fk;
            }
        }
        if (!std::isfinite(best_dist)) {
            degenerate = true;  // all boundary gradients vanished
            break;
        }
        // Step to the nearest linearized boundary; the overshoot factor on
        // the accumulated perturbation pushes across it.
        double wn2 = best_w.squaredNorm();
        // The 1e-9 nudge keeps the boundary case (f_k == f_k0) from
        // producing a zero step that could never flip the prediction.
        total += ((std::abs(best_fk) + 1e-9) / wn2) * best_w;
    }

    Vector adv = (x.data + (1.0 + overshoot) * total).cwiseMax(0.0).cwiseMin(1.0);
    AdversarialResult res = finish(x, std::move(adv), orig_pred, model, iter);
    if (degenerate) res.success = false;
    return res;
}

AttackedSet attack_set(const LabeledSet& set, const models::TargetMLP& model, Method method,
                       const AttackConfig& cfg) {
    AttackedSet out;
    out.set.num_classes = set.num_classes;
    out.set.labels = set.labels;
    out.set.images.reserve(set.size());
    out.results.reserve(set.size());
    for (size_t i = 0; i < set.size(); ++i) {
        AdversarialResult r;
        switch (method) {
            case Method::Fgsm:
                r = fgsm(set.images[i], set.labels[i], model, cfg.epsilon);
                break;
            case Method::Bim:
                r = bim(set.images[i], set.labels[i], model, cfg.epsilon, cfg.alpha,
                        cfg.iterations);
                break;
            case Method::DeepFool:
                r = deepfool(set.images[i], model, cfg.max_iter_df, cfg.overshoot);
                break;
        }
        out.set.images.push_back(r.image);
        out.results.push_back(std::move(r));
    }
    return out;
}

void write_attack_log(const AttackedSet& atk, Method method, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write attack log: " + path);
    out << "index,method,success,linf,l2,iterations\n"
        << std::fixed << std::setprecision(6);
    for (size_t i = 0; i < atk.results.size(); ++i) {
        const auto& r = atk.results[i];
        out << i << "," << method_name(method) << "," << (r.success ? 1 : 0) << ","
            << r.linf_norm << "," << r.l2_norm << "," << r.iterations_used << "\n";
    }
}

}  // namespace saak::attacks
