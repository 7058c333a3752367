#ifndef SAAK_FEATURE_SELECT_HPP
#define SAAK_FEATURE_SELECT_HPP

#include <string>
#include <utility>
#include <vector>

#include "saak/tensor.hpp"
#include "saak/transform.hpp"

namespace saak::fsel {

/// Which reading of the bin-majority probability to use. `Literal` follows
/// the histogram-majority formula exactly (p independent of the sample);
/// `PerBin` conditions on the sample's own bin.
enum class EntropyVariant { Literal, PerBin };

/// Per-location cross-entropy values for one stage, same shape as the
/// stage's feature block.
struct EntropyMap {
    int stage_index = 0;
    Tensor3 values;
};

/// Retained spatial positions per spectral dim plus retained spectral dims
/// for one stage. Positions are flat row-major indices i * W + j.
struct SelectionMask {
    int stage_index = 0;
    int spatial_height = 0;
    int spatial_width = 0;
    std::vector<std::vector<int>> spatial_keep;  // per spectral dim, sorted
    std::vector<int> spectral_keep;              // ordered, no duplicates
};

struct SelectionParams {
    int num_bins = 10;
    double spatial_fraction = 0.5;   // R_p = ceil(fraction * D1 * D2)
    double spectral_fraction = 0.5;  // K_p' = ceil(fraction * K_p)
    EntropyVariant variant = EntropyVariant::Literal;
};

/// Equal-width binning over [min, max]; the max value lands in the last
/// bin, and a degenerate range puts everything in bin 0.
std::pair<std::vector<int>, std::vector<double>> bin_assign(
    const std::vector<double>& values, int num_bins);

/// Most frequent class per nonempty bin, ties to the lowest class index.
/// Returns (bin id, majority class) pairs in bin order.
std::vector<std::pair<int, int>> majority_class_per_bin(
    const std::vector<int>& bins, const std::vector<int>& labels, int num_classes);

double location_entropy(const std::vector<double>& values, const std::vector<int>& labels,
                        int num_bins, int num_classes,
                        EntropyVariant variant = EntropyVariant::Literal);

/// Entropy at every (i,j,k) of one stage's blocks over the training set.
EntropyMap compute_entropy_map(const std::vector<Tensor3>& blocks,
                               const std::vector<int>& labels, int num_bins,
                               int num_classes, int stage_index,
                               EntropyVariant variant = EntropyVariant::Literal);

/// Per spectral dim: the R lowest-entropy positions, ties in row-major order.
std::vector<std::vector<int>> spatial_select(const EntropyMap& map, int R);

/// The K' spectral dims with lowest spatially averaged entropy.
std::vector<int> spectral_select(const EntropyMap& map, int k_keep);

SelectionMask fit_mask(const EntropyMap& map, const SelectionParams& params);

/// Concatenates masked feature responses over all stages in (stage,
/// spectral_keep order, spatial_keep order) layout.
Vector assemble_features(const std::vector<FeatureBlock>& blocks,
                         const std::vector<SelectionMask>& masks);

void save_masks(const std::vector<SelectionMask>& masks, const std::string& path);
std::vector<SelectionMask> load_masks(const std::string& path);

void write_entropy_csv(const std::vector<EntropyMap>& maps, const std::string& path);

}  // namespace saak::fsel

#endif  // SAAK_FEATURE_SELECT_HPP
