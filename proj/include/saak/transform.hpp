#ifndef SAAK_TRANSFORM_HPP
#define SAAK_TRANSFORM_HPP

#include <string>
#include <vector>

#include "saak/tensor.hpp"

namespace saak {

/// Spatial/spectral geometry of the local cuboids at one stage.
struct CuboidSpec {
    int kernel_size = 2;    // spatial side k_s
    int input_channels = 1; // spectral depth K of the stage input

    int cuboid_dim() const { return kernel_size * kernel_size * input_channels; }
};

/// One fitted Saak stage: the fixed DC kernel plus the leading
/// eigenvectors of the DC-removed residual covariance.
struct KernelStage {
    CuboidSpec spec;
    Vector dc_kernel;          // 1/sqrt(n) * ones(n)
    Matrix ac_kernels;         // K_ac x n, rows orthonormal, orthogonal to DC
    Vector eigenvalues;        // K_ac, non-increasing
    bool degenerate = false;   // zero residual variance at fit time

    int num_ac() const { return int(ac_kernels.rows()); }
    int output_channels() const { return 1 + 2 * num_ac(); }
};

struct StageConfig {
    int kernel_size = 2;
    double energy_fraction = 1.0;  // tau
    int max_ac = 3;
};

struct SaakPipeline {
    std::vector<KernelStage> stages;
    int input_height = 0;
    int input_width = 0;
    int input_channels = 0;
};

/// Tiles the block into non-overlapping k_s x k_s x K cuboids (stride k_s,
/// row-major tile order) and flattens each in (h, w, c) order.
/// Returns M x n with M = (H/k_s) * (W/k_s).
Matrix extract_cuboids(const Tensor3& block, const CuboidSpec& spec);

/// Fits one stage from cuboid samples: removes the DC projection, then
/// eigendecomposes the residual covariance (divisor M). K_ac is capped by
/// max_ac and by the smallest count reaching energy_fraction of the
/// residual variance. Eigenvector signs are canonicalized so the
/// largest-magnitude entry is positive.
KernelStage fit_stage(const Matrix& samples, const CuboidSpec& spec,
                      double energy_fraction, int max_ac);

/// Projects each cuboid onto the stage kernels. Channel 0 is the DC
/// coefficient; each AC projection is split into rectified positive and
/// negative channels (sign-to-position conversion).
Tensor3 forward_stage(const Tensor3& block, const KernelStage& stage);

/// Recombines rectified pairs into signed coefficients and reconstructs
/// the input tiles. Exact when the stage keeps all n-1 AC kernels.
Tensor3 inverse_stage(const Tensor3& features, const KernelStage& stage);

/// Fits all stages in sequence on clean training images; stage p is fitted
/// on the forward outputs of stages 1..p-1 over the whole set.
SaakPipeline fit_pipeline(const LabeledSet& train, const std::vector<StageConfig>& config);

/// Applies every stage to one image and returns all per-stage outputs.
std::vector<FeatureBlock> transform_all(const ImageTensor& image,
                                        const SaakPipeline& pipeline);

void save_pipeline(const SaakPipeline& p, const std::string& path);
SaakPipeline load_pipeline(const std::string& path);

}  // namespace saak

#endif  // SAAK_TRANSFORM_HPP
