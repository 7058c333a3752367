#include "saak/feature_select.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace saak::fsel {

namespace {
constexpr double kProbFloor = 1e-8;
}

std::pair<std::vector<int>, std::vector<double>> bin_assign(
    const std::vector<double>& values, int num_bins) {
    if (values.empty()) throw std::invalid_argument("bin_assign: empty values");
    if (num_bins < 2) throw std::invalid_argument("bin_assign: need >= 2 bins");

    auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    double lo = *lo_it, hi = *hi_it;

    std::vector<double> edges(size_t(num_bins) + 1);
    for (int b = 0; b <= num_bins; ++b)
        edges[size_t(b)] = lo + (hi - lo) * double(b) / double(num_bins);

    std::vector<int> bins(values.size(), 0);
    if (hi > lo) {
        double scale = double(num_bins) / (hi - lo);
        for (size_t i = 0; i < values.size(); ++i)
            bins[i] = std::min(int((values[i] - lo) * scale), num_bins - 1);
    }
    return {std::move(bins), std::move(edges)};
}

std::vector<std::pair<int, int>> majority_class_per_bin(const std::vector<int>& bins,
                                                        const std::vector<int>& labels,
                                                        int num_classes) {
    if (bins.size() != labels.size())
        throw std::invalid_argument("majority_class_per_bin: size mismatch");
    int max_bin = bins.empty() ? -1 : *std::max_element(bins.begin(), bins.end());

    std::vector<std::pair<int, int>> out;
    std::vector<int> counts(size_t(num_classes), 0);
    for (int b = 0; b <= max_bin; ++b) {
        std::fill(counts.begin(), counts.end(), 0);
        int total = 0;
        for (size_t i = 0; i < bins.size(); ++i)
            if (bins[i] == b) {
                ++counts[size_t(labels[i])];
                ++total;
            }
        if (total == 0) continue;  // empty bins have no majority class
        int mc = int(std::max_element(counts.begin(), counts.end()) - counts.begin());
        out.emplace_back(b, mc);
    }
    return out;
}

double location_entropy(const std::vector<double>& values, const std::vector<int>& labels,
                        int num_bins, int num_classes, EntropyVariant variant) {
    if (values.size() != labels.size())
        throw std::invalid_argument("location_entropy: size mismatch");
    auto [bins, edges] = bin_assign(values, num_bins);

    double h = 0.0;
    if (variant == EntropyVariant::Literal) {
        auto mc = majority_class_per_bin(bins, labels, num_classes);
        std::vector<double> p(size_t(num_classes), 0.0);
        for (const auto& [bin, cls] : mc) p[size_t(cls)] += 1.0;
        for (auto& v : p) v = std::max(v / double(mc.size()), kProbFloor);
        for (int l : labels) h += std::log(1.0 / p[size_t(l)]);
    } else {
        // Conditional reading: p is the fraction of the sample's own bin
        // that shares its class.
        int max_bin = *std::max_element(bins.begin(), bins.end());
        Matrix bin_class = Matrix::Zero(max_bin + 1, num_classes);
        for (size_t i = 0; i < bins.size(); ++i) bin_class(bins[i], labels[i]) += 1.0;
        Vector bin_total = bin_class.rowwise().sum();
        for (size_t i = 0; i < bins.size(); ++i) {
            double p = bin_class(bins[i], labels[i]) / bin_total[bins[i]];
            h += std::log(1.0 / std::max(p, kProbFloor));
        }
    }
    return h;
}

EntropyMap compute_entropy_map(const std::vector<Tensor3>& blocks,
                               const std::vector<int>& labels, int num_bins,
                               int num_classes, int stage_index, EntropyVariant variant) {
    if (blocks.size() != labels.size())
        throw std::invalid_argument("compute_entropy_map: block/label mismatch");
    if (blocks.empty()) throw std::invalid_argument("compute_entropy_map: empty");
    const auto& shape = blocks.front();

    EntropyMap map;
    map.stage_index = stage_index;
    map.values = Tensor3(shape.height, shape.width, shape.channels);

    std::vector<double> col(blocks.size());
    for (int i = 0; i < shape.height; ++i)
        for (int j = 0; j < shape.width; ++j)
            for (int k = 0; k < shape.channels; ++k) {
                for (size_t n = 0; n < blocks.size(); ++n) col[n] = blocks[n].at(i, j, k);
                map.values.at(i, j, k) =
                    location_entropy(col, labels, num_bins, num_classes, variant);
            }
    return map;
}

std::vector<std::vector<int>> spatial_select(const EntropyMap& map, int R) {
    const auto& v = map.values;
    const int n_pos = v.height * v.width;
    R = std::clamp(R, 1, n_pos);

    std::vector<std::vector<int>> keep(size_t(v.channels));
    std::vector<int> order(size_t(n_pos), 0);
    for (int k = 0; k < v.channels; ++k) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return v.at(a / v.width, a % v.width, k) < v.at(b / v.width, b % v.width, k);
        });
        keep[size_t(k)].assign(order.begin(), order.begin() + R);
        std::sort(keep[size_t(k)].begin(), keep[size_t(k)].end());
    }
    return keep;
}

std::vector<int> spectral_select(const EntropyMap& map, int k_keep) {
    const auto& v = map.values;
    k_keep = std::clamp(k_keep, 1, v.channels);

    std::vector<double> mean(size_t(v.channels), 0.0);
    for (int i = 0; i < v.height; ++i)
        for (int j = 0; j < v.width; ++j)
            for (int k = 0; k < v.channels; ++k) mean[size_t(k)] += v.at(i, j, k);
    for (auto& m : mean) m /= double(v.height) * v.width;

    std::vector<int> order(size_t(v.channels));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return mean[size_t(a)] < mean[size_t(b)]; });
    order.resize(size_t(k_keep));
    std::sort(order.begin(), order.end());
    return order;
}

SelectionMask fit_mask(const EntropyMap& map, const SelectionParams& params) {
    const auto& v = map.values;
    int R = int(std::ceil(params.spatial_fraction * v.height * v.width));
    int kp = int(std::ceil(params.spectral_fraction * v.channels));

    SelectionMask mask;
    mask.stage_index = map.stage_index;
    mask.spatial_height = v.height;
    mask.spatial_width = v.width;
    mask.spatial_keep = spatial_select(map, R);
    mask.spectral_keep = spectral_select(map, kp);
    return mask;
}

Vector assemble_features(const std::vector<FeatureBlock>& blocks,
                         const std::vector<SelectionMask>& masks) {
    if (blocks.size() != masks.size())
        throw std::invalid_argument("assemble_features: stage count mismatch");

    Eigen::Index total = 0;
    for (const auto& m : masks)
        for (int k : m.spectral_keep) total += Eigen::Index(m.spatial_keep[size_t(k)].size());

    Vector out(total);
    Eigen::Index pos = 0;
    for (size_t p = 0; p < blocks.size(); ++p) {
        const auto& b = blocks[p].values;
        const auto& m = masks[p];
        if (b.height != m.spatial_height || b.width != m.spatial_width ||
            b.channels != int(m.spatial_keep.size()))
            throw ShapeError("assemble_features: mask/block shape mismatch");
        for (int k : m.spectral_keep)
            for (int flat : m.spatial_keep[size_t(k)])
                out[pos++] = b.at(flat / b.width, flat % b.width, k);
    }
    return out;
}

void save_masks(const std::vector<SelectionMask>& masks, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write mask file: " + path);
    out << "MASKS " << masks.size() << "\n";
    for (const auto& m : masks) {
        out << "stage " << m.stage_index << " " << m.spatial_height << " "
            << m.spatial_width << " " << m.spatial_keep.size() << "\n";
        out << "spectral";
        for (int k : m.spectral_keep) out << " " << k;
        out << "\n";
        for (size_t k = 0; k < m.spatial_keep.size(); ++k) {
            out << "spatial " << k;
            for (int p : m.spatial_keep[k]) out << " " << p;
            out << "\n";
        }
    }
}

std::vector<SelectionMask> load_masks(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open mask file: " + path);
    std::string tag;
    size_t count = 0;
    in >> tag >> count;
    if (tag != "MASKS") throw FormatError("bad mask file header: " + path);

    std::vector<SelectionMask> masks(count);
    for (auto& m : masks) {
        size_t n_spectral_dims = 0;
        in >> tag >> m.stage_index >> m.spatial_height >> m.spatial_width >> n_spectral_dims;
        if (tag != "stage") throw FormatError("bad mask stage line: " + path);
        in >> tag;
        std::string line;
        std::getline(in, line);
        std::istringstream ss(line);
        for (int k; ss >> k;) m.spectral_keep.push_back(k);
        m.spatial_keep.resize(n_spectral_dims);
        for (size_t k = 0; k < n_spectral_dims; ++k) {
            size_t dim = 0;
            in >> tag >> dim;
            std::getline(in, line);
            std::istringstream ps(line);
            for (int p; ps >> p;) m.spatial_keep[dim].push_back(p);
        }
        if (!in) throw FormatError("truncated mask file: " + path);
    }
    return masks;
}

void write_entropy_csv(const std::vector<EntropyMap>& maps, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write entropy CSV: " + path);
    out << "stage,i,j,k,H\n" << std::fixed << std::setprecision(6);
    for (const auto& map : maps)
        for (int i = 0; i < map.values.height; ++i)
            for (int j = 0; j < map.values.width; ++j)
                for (int k = 0; k < map.values.channels; ++k)
                    out << map.stage_index << "," << i << "," << j << "," << k << ","
                        << map.values.at(i, j, k) << "\n";
}

}  // namespace saak::fsel
