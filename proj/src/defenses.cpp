#include "saak/defenses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

namespace saak::defenses {

namespace {

constexpr double kTvEps = 1e-6;

// JPEG Annex-K luminance quantization table.
constexpr std::array<int, 64> kLumaTable = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99};

std::map<std::string, std::string> parse_params(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto eq = item.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("defense param missing '=': " + item);
        kv[item.substr(0, eq)] = item.substr(eq + 1);
    }
    return kv;
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

void DefenseSpec::validate() const {
    switch (method) {
        case Method::None: break;
        case Method::Jpeg:
            if (quality < 1 || quality > 100)
                throw std::invalid_argument("jpeg quality must be in [1,100]");
            break;
        case Method::BitDepth:
            if (bits < 1 || bits > 8) throw std::invalid_argument("bits must be in [1,8]");
            break;
        case Method::Median:
            if (window != 2 && window != 3)
                throw std::invalid_argument("median window must be 2 or 3");
            break;
        case Method::NlMeans:
            if (h <= 0 || patch % 2 == 0 || search % 2 == 0)
                throw std::invalid_argument("nlmeans: h > 0, patch/search odd");
            break;
        case Method::Tvm:
            if (lambda <= 0 || iters < 1)
                throw std::invalid_argument("tvm: lambda > 0, iters >= 1");
            break;
        case Method::Deflect:
            if (count < 1 || deflect_window < 3 || deflect_window % 2 == 0)
                throw std::invalid_argument("deflect: count >= 1, window odd >= 3");
            break;
    }
}

DefenseSpec parse_defense(const std::string& text) {
    DefenseSpec spec;
    auto colon = text.find(':');
    std::string name = text.substr(0, colon);
    auto kv = colon == std::string::npos
                  ? std::map<std::string, std::string>{}
                  : parse_params(text.substr(colon + 1));

    if (name == "none") {
        spec.method = Method::None;
    } else if (name == "jpeg") {
        spec.method = Method::Jpeg;
        if (kv.count("q")) spec.quality = std::stoi(kv["q"]);
    } else if (name == "bitdepth") {
        spec.method = Method::BitDepth;
        if (kv.count("bits")) spec.bits = std::stoi(kv["bits"]);
    } else if (name == "median") {
        spec.method = Method::Median;
        if (kv.count("w")) spec.window = std::stoi(kv["w"]);
    } else if (name == "nlmeans") {
        spec.method = Method::NlMeans;
        if (kv.count("h")) spec.h = std::stod(kv["h"]);
        if (kv.count("patch")) spec.patch = std::stoi(kv["patch"]);
        if (kv.count("search")) spec.search = std::stoi(kv["search"]);
    } else if (name == "tvm") {
        spec.method = Method::Tvm;
        if (kv.count("lambda")) spec.lambda = std::stod(kv["lambda"]);
        if (kv.count("iters")) spec.iters = std::stoi(kv["iters"]);
    } else if (name == "deflect") {
        spec.method = Method::Deflect;
        if (kv.count("count")) spec.count = std::stoi(kv["count"]);
        if (kv.count("window")) spec.deflect_window = std::stoi(kv["window"]);
        if (kv.count("seed")) spec.seed = unsigned(std::stoul(kv["seed"]));
    } else {
        throw std::invalid_argument("unknown defense: " + name);
    }
    spec.validate();
    return spec;
}

std::string defense_name(const DefenseSpec& spec) {
    std::ostringstream ss;
    switch (spec.method) {
        case Method::None: ss << "none"; break;
        case Method::Jpeg: ss << "jpeg:q=" << spec.quality; break;
        case Method::BitDepth: ss << "bitdepth:bits=" << spec.bits; break;
        case Method::Median: ss << "median:w=" << spec.window; break;
        case Method::NlMeans:
            ss << "nlmeans:h=" << spec.h << ",patch=" << spec.patch
               << ",search=" << spec.search;
            break;
        case Method::Tvm: ss << "tvm:lambda=" << spec.lambda << ",iters=" << spec.iters; break;
        case Method::Deflect:
            ss << "deflect:count=" << spec.count << ",window=" << spec.deflect_window
               << ",seed=" << spec.seed;
            break;
    }
    return ss.str();
}

ImageTensor bit_depth_reduce(const ImageTensor& x, int bits) {
    if (bits < 1 || bits > 8) throw std::invalid_argument("bit_depth_reduce: bad bits");
    double q = double((1 << bits) - 1);
    ImageTensor out = x;
    for (Eigen::Index i = 0; i < out.data.size(); ++i)
        out.data[i] = std::lround(out.data[i] * q) / q;
    return out;
}

ImageTensor median_filter(const ImageTensor& x, int window) {
    if (window != 2 && window != 3) throw std::invalid_argument("median_filter: window 2 or 3");
    auto clampi = [](int v, int hi) { return std::clamp(v, 0, hi); };
    ImageTensor out = x;
    std::vector<double> vals;
    for (int c = 0; c < x.channels; ++c)
        for (int i = 0; i < x.height; ++i)
            for (int j = 0; j < x.width; ++j) {
                vals.clear();
                if (window == 3) {
                    for (int di = -1; di <= 1; ++di)
                        for (int dj = -1; dj <= 1; ++dj)
                            vals.push_back(x.at(clampi(i + di, x.height - 1),
                                                clampi(j + dj, x.width - 1), c));
                    std::nth_element(vals.begin(), vals.begin() + 4, vals.end());
                    out.at(i, j, c) = vals[4];
                } else {
                    for (int di = 0; di <= 1; ++di)
                        for (int dj = 0; dj <= 1; ++dj)
                            vals.push_back(x.at(clampi(i + di, x.height - 1),
                                                clampi(j + dj, x.width - 1), c));
                    std::sort(vals.begin(), vals.end());
                    out.at(i, j, c) = 0.5 * (vals[1] + vals[2]);
                }
            }
    return out;
}

ImageTensor nl_means(const ImageTensor& x, double h, int patch, int search) {
    if (h <= 0 || patch % 2 == 0 || search % 2 == 0)
        throw std::invalid_argument("nl_means: h > 0 and odd patch/search required");
    const int pr = patch / 2;
    const int sr = search / 2;
    auto clampi = [](int v, int hi) { return std::clamp(v, 0, hi); };

    ImageTensor out = x;
    for (int c = 0; c < x.channels; ++c)
        for (int i = 0; i < x.height; ++i)
            for (int j = 0; j < x.width; ++j) {
                double wsum = 0.0, acc = 0.0;
                for (int si = -sr; si <= sr; ++si)
                    for (int sj = -sr; sj <= sr; ++sj) {
                        int qi = i + si, qj = j + sj;
                        if (qi < 0 || qi >= x.height || qj < 0 || qj >= x.width) continue;
                        double d2 = 0.0;
                        for (int pi = -pr; pi <= pr; ++pi)
                            for (int pj = -pr; pj <= pr; ++pj) {
                                double a = x.at(clampi(i + pi, x.height - 1),
                                                clampi(j + pj, x.width - 1), c);
                                double b = x.at(clampi(qi + pi, x.height - 1),
                                                clampi(qj + pj, x.width - 1), c);
                                d2 += (a - b) * (a - b);
                            }
                        d2 /= double(patch) * patch;
                        double w = std::exp(-d2 / (h * h));
                        wsum += w;
                        acc += w * x.at(qi, qj, c);
                    }
                out.at(i, j, c) = acc / wsum;
            }
    return out;
}

double total_variation(const ImageTensor& x) {
    double tv = 0.0;
    for (int c = 0; c < x.channels; ++c)
        for (int i = 0; i < x.height; ++i)
            for (int j = 0; j < x.width; ++j) {
                double gx = (j + 1 < x.width) ? x.at(i, j + 1, c) - x.at(i, j, c) : 0.0;
                double gy = (i + 1 < x.height) ? x.at(i + 1, j, c) - x.at(i, j, c) : 0.0;
                tv += std::sqrt(gx * gx + gy * gy + kTvEps) - std::sqrt(kTvEps);
            }
    return tv;
}

namespace {

double tvm_energy(const ImageTensor& u, const ImageTensor& x, double lambda) {
    return (u.data - x.data).squaredNorm() + lambda * total_variation(u);
}

Vector tvm_gradient(const ImageTensor& u, const ImageTensor& x, double lambda) {
    Vector g = 2.0 * (u.data - x.data);
    for (int c = 0; c < u.channels; ++c)
        for (int i = 0; i < u.height; ++i)
            for (int j = 0; j < u.width; ++j) {
                double gx = (j + 1 < u.width) ? u.at(i, j + 1, c) - u.at(i, j, c) : 0.0;
                double gy = (i + 1 < u.height) ? u.at(i + 1, j, c) - u.at(i, j, c) : 0.0;
                double t = lambda / std::sqrt(gx * gx + gy * gy + kTvEps);
                auto idx = [&](int a, int b) {
                    return (Eigen::Index(a) * u.width + b) * u.channels + c;
                };
                g[idx(i, j)] -= (gx + gy) * t;
                if (j + 1 < u.width) g[idx(i, j + 1)] += gx * t;
                if (i + 1 < u.height) g[idx(i + 1, j)] += gy * t;
            }
    return g;
}

}  // namespace

ImageTensor tvm(const ImageTensor& x, double lambda, int iters) {
    if (lambda <= 0 || iters < 1) throw std::invalid_argument("tvm: invalid params");
    ImageTensor u = x;
    double step = 0.1 / (1.0 + 4.0 * lambda);
    double energy = tvm_energy(u, x, lambda);
    for (int it = 0; it < iters; ++it) {
        Vector g = tvm_gradient(u, x, lambda);
        double s = step;
        ImageTensor trial = u;
        // Backtrack until the step decreases the energy.
        for (int bt = 0; bt < 40; ++bt) {
            trial.data = u.data - s * g;
            double e = tvm_energy(trial, x, lambda);
            if (std::isfinite(e) && e <= energy) {
                u = trial;
                energy = e;
                break;
            }
            s *= 0.5;
        }
        if (!std::isfinite(energy)) throw std::runtime_error("tvm: energy diverged");
    }
    for (Eigen::Index i = 0; i < u.data.size(); ++i) u.data[i] = clamp01(u.data[i]);
    return u;
}

ImageTensor pixel_deflect(const ImageTensor& x, int count, int window, unsigned seed) {
    if (count < 1 || window < 3 || window % 2 == 0)
        throw std::invalid_argument("pixel_deflect: count >= 1, odd window >= 3");
    const int r = window / 2;
    std::mt19937 rng(seed);
    std::uniform_int_distribution<int> row(0, x.height - 1), col(0, x.width - 1);

    ImageTensor out = x;
    for (int t = 0; t < count; ++t) {
        int pi = row(rng), pj = col(rng);
        int qi = pi, qj = pj;
        do {
            std::uniform_int_distribution<int> wr(std::max(0, pi - r),
                                                  std::min(x.height - 1, pi + r));
            std::uniform_int_distribution<int> wc(std::max(0, pj - r),
                                                  std::min(x.width - 1, pj + r));
            qi = wr(rng);
            qj = wc(rng);
        } while (qi == pi && qj == pj);
        for (int c = 0; c < x.channels; ++c) out.at(pi, pj, c) = out.at(qi, qj, c);
    }
    return out;
}

ImageTensor jpeg_approx(const ImageTensor& x, int quality) {
    if (quality < 1 || quality > 100) throw std::invalid_argument("jpeg_approx: bad quality");

    // Quality-scaled quantization table.
    double scale = quality < 50 ? 5000.0 / quality : 200.0 - 2.0 * quality;
    std::array<double, 64> qtab;
    for (int i = 0; i < 64; ++i)
        qtab[size_t(i)] = std::max(1.0, std::round(kLumaTable[size_t(i)] * scale / 100.0));

    // Orthonormal 8x8 DCT-II basis.
    Matrix dct(8, 8);
    for (int u = 0; u < 8; ++u)
        for (int i = 0; i < 8; ++i)
            dct(u, i) = (u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0)) *
                        std::cos((2 * i + 1) * u * M_PI / 16.0);

    const int bh = (x.height + 7) / 8, bw = (x.width + 7) / 8;
    ImageTensor out = x;
    Matrix block(8, 8);
    for (int c = 0; c < x.channels; ++c)
        for (int bi = 0; bi < bh; ++bi)
            for (int bj = 0; bj < bw; ++bj) {
                for (int i = 0; i < 8; ++i)
                    for (int j = 0; j < 8; ++j) {
                        int si = std::min(bi * 8 + i, x.height - 1);
                        int sj = std::min(bj * 8 + j, x.width - 1);
                        block(i, j) = x.at(si, sj, c) * 255.0 - 128.0;
                    }
                Matrix freq = dct * block * dct.transpose();
                for (int i = 0; i < 8; ++i)
                    for (int j = 0; j < 8; ++j) {
                        double q = qtab[size_t(i * 8 + j)];
                        freq(i, j) = std::round(freq(i, j) / q) * q;
                    }
                Matrix rec = dct.transpose() * freq * dct;
                for (int i = 0; i < 8; ++i)
                    for (int j = 0; j < 8; ++j) {
                        int di = bi * 8 + i, dj = bj * 8 + j;
                        if (di < x.height && dj < x.width)
                            out.at(di, dj, c) = clamp01((rec(i, j) + 128.0) / 255.0);
                    }
            }
    return out;
}

ImageTensor apply_defense(const ImageTensor& x, const DefenseSpec& spec) {
    spec.validate();
    switch (spec.method) {
        case Method::None: return x;
        case Method::Jpeg: return jpeg_approx(x, spec.quality);
        case Method::BitDepth: return bit_depth_reduce(x, spec.bits);
        case Method::Median: return median_filter(x, spec.window);
        case Method::NlMeans: return nl_means(x, spec.h, spec.patch, spec.search);
        case Method::Tvm: return tvm(x, spec.lambda, spec.iters);
        case Method::Deflect:
            return pixel_deflect(x, spec.count, spec.deflect_window, spec.seed);
    }
    throw std::logic_error("apply_defense: unreachable");
}

LabeledSet apply_defense(const LabeledSet& set, const DefenseSpec& spec) {
    LabeledSet out;
    out.num_classes = set.num_classes;
    out.labels = set.labels;
    out.images.reserve(set.size());
    for (const auto& img : set.images) out.images.push_back(apply_defense(img, spec));
    return out;
}

}  // namespace saak::defenses
