#include "saak/transform.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>

#include <Eigen/Eigenvalues>

namespace saak {

namespace {

constexpr size_t kMaxFitRows = 2'000'000;
constexpr unsigned kSubsampleSeed = 0;

void canonicalize_sign(Eigen::Ref<Vector> v) {
    Eigen::Index best = 0;
    double best_mag = -1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        double m = std::abs(v[i]);
        if (m > best_mag + 1e-15) {
            best_mag = m;
            best = i;
        }
    }
    if (v[best] < 0) v = -v;
}

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

}  // namespace

Matrix extract_cuboids(const Tensor3& block, const CuboidSpec& spec) {
    const int k = spec.kernel_size;
    if (block.channels != spec.input_channels)
        throw ShapeError("extract_cuboids: channel mismatch");
    if (block.height % k != 0 || block.width % k != 0)
        throw ShapeError("extract_cuboids: spatial dims not divisible by kernel size");

    const int th = block.height / k;
    const int tw = block.width / k;
    const int n = spec.cuboid_dim();
    Matrix out(Eigen::Index(th) * tw, n);
    for (int ti = 0; ti < th; ++ti)
        for (int tj = 0; tj < tw; ++tj) {
            Eigen::Index row = Eigen::Index(ti) * tw + tj;
            int col = 0;
            for (int di = 0; di < k; ++di)
                for (int dj = 0; dj < k; ++dj)
                    for (int c = 0; c < spec.input_channels; ++c)
                        out(row, col++) = block.at(ti * k + di, tj * k + dj, c);
        }
    return out;
}

KernelStage fit_stage(const Matrix& samples, const CuboidSpec& spec,
                      double energy_fraction, int max_ac) {
    const int n = spec.cuboid_dim();
    if (samples.cols() != n) throw ShapeError("fit_stage: sample width != cuboid dim");
    if (samples.rows() < n)
        throw std::runtime_error("fit_stage: fewer samples than cuboid dimension");
    if (!(energy_fraction > 0.0 && energy_fraction <= 1.0))
        throw std::invalid_argument("fit_stage: energy_fraction must be in (0,1]");
    max_ac = std::clamp(max_ac, 1, n - 1);

    KernelStage stage;
    stage.spec = spec;
    stage.dc_kernel = Vector::Constant(n, 1.0 / std::sqrt(double(n)));

    // Residual after removing each sample's DC projection.
    Vector dc_coefs = samples * stage.dc_kernel;
    Matrix residual = samples - dc_coefs * stage.dc_kernel.transpose();
    Matrix cov = residual.transpose() * residual / double(samples.rows());

    double total_var = cov.trace();
    if (total_var <= 1e-12) {
        stage.degenerate = true;
        Vector v = Vector::Zero(n);
        v[0] = 1.0 / std::sqrt(2.0);
        v[1] = -1.0 / std::sqrt(2.0);
        stage.ac_kernels = v.transpose();
        stage.eigenvalues = Vector::Zero(1);
        return stage;
    }

    Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
    // Eigen returns ascending order; collect descending, dropping the DC
    // direction (eigenvalue 0 by construction) and re-orthogonalizing the
    // null-space tail against DC and earlier picks.
    std::vector<std::pair<double, Vector>> basis;
    for (Eigen::Index i = n - 1; i >= 0 && int(basis.size()) < n - 1; --i) {
        Vector v = es.eigenvectors().col(i);
        v -= stage.dc_kernel.dot(v) * stage.dc_kernel;
        for (const auto& [ev, u] : basis) v -= u.dot(v) * u;
        double norm = v.norm();
        if (norm < 1e-8) continue;  // this was the DC direction
        v /= norm;
        canonicalize_sign(v);
        basis.emplace_back(std::max(es.eigenvalues()[i], 0.0), std::move(v));
    }

    // Cumulative-energy cut at energy_fraction of the residual variance.
    int k_energy = int(basis.size());
    double cum = 0.0;
    for (size_t i = 0; i < basis.size(); ++i) {
        cum += basis[i].first;
        if (cum >= energy_fraction * total_var - 1e-12) {
            k_energy = int(i) + 1;
            break;
        }
    }
    int k_ac = std::min({max_ac, k_energy, int(basis.size())});

    stage.ac_kernels = Matrix(k_ac, n);
    stage.eigenvalues = Vector(k_ac);
    for (int i = 0; i < k_ac; ++i) {
        stage.ac_kernels.row(i) = basis[size_t(i)].second.transpose();
        stage.eigenvalues[i] = basis[size_t(i)].first;
    }
    return stage;
}

Tensor3 forward_stage(const Tensor3& block, const KernelStage& stage) {
    Matrix cuboids = extract_cuboids(block, stage.spec);
    const int k = stage.spec.kernel_size;
    const int th = block.height / k;
    const int tw = block.width / k;
    const int kac = stage.num_ac();

    Vector dc = cuboids * stage.dc_kernel;
    Matrix ac = cuboids * stage.ac_kernels.transpose();  // M x K_ac

    Tensor3 out(th, tw, 1 + 2 * kac);
    for (int ti = 0; ti < th; ++ti)
        for (int tj = 0; tj < tw; ++tj) {
            Eigen::Index row = Eigen::Index(ti) * tw + tj;
            out.at(ti, tj, 0) = std::max(dc[row], 0.0);
            for (int i = 0; i < kac; ++i) {
                double c = ac(row, i);
                out.at(ti, tj, 1 + 2 * i) = std::max(c, 0.0);
                out.at(ti, tj, 2 + 2 * i) = std::max(-c, 0.0);
            }
        }
    return out;
}

Tensor3 inverse_stage(const Tensor3& features, const KernelStage& stage) {
    const int kac = stage.num_ac();
    if (features.channels != 1 + 2 * kac)
        throw ShapeError("inverse_stage: channel count does not match stage");
    const int k = stage.spec.kernel_size;
    const int n = stage.spec.cuboid_dim();

    Tensor3 out(features.height * k, features.width * k, stage.spec.input_channels);
    for (int ti = 0; ti < features.height; ++ti)
        for (int tj = 0; tj < features.width; ++tj) {
            Vector x = features.at(ti, tj, 0) * stage.dc_kernel;
            for (int i = 0; i < kac; ++i) {
                double c = features.at(ti, tj, 1 + 2 * i) - features.at(ti, tj, 2 + 2 * i);
                x += c * stage.ac_kernels.row(i).transpose();
            }
            int col = 0;
            for (int di = 0; di < k; ++di)
                for (int dj = 0; dj < k; ++dj)
                    for (int c = 0; c < stage.spec.input_channels; ++c)
                        out.at(ti * k + di, tj * k + dj, c) = x[col++];
            (void)n;
        }
    return out;
}

SaakPipeline fit_pipeline(const LabeledSet& train, const std::vector<StageConfig>& config) {
    if (train.images.empty()) throw std::invalid_argument("fit_pipeline: empty training set");
    const auto& first = train.images.front();

    SaakPipeline pipeline;
    pipeline.input_height = first.height;
    pipeline.input_width = first.width;
    pipeline.input_channels = first.channels;

    std::vector<Tensor3> blocks(train.images.begin(), train.images.end());
    for (const auto& cfg : config) {
        CuboidSpec spec{cfg.kernel_size, blocks.front().channels};
        const Eigen::Index per_image = Eigen::Index(blocks.front().height / cfg.kernel_size) *
                                       (blocks.front().width / cfg.kernel_size);
        size_t total_rows = size_t(per_image) * blocks.size();

        Matrix samples;
        if (total_rows > kMaxFitRows) {
            // Uniform image subsample with a fixed seed keeps the covariance
            // estimate stable while bounding memory.
            size_t keep_images = std::max<size_t>(1, kMaxFitRows / size_t(per_image));
            std::vector<size_t> idx(blocks.size());
            std::iota(idx.begin(), idx.end(), 0);
            std::mt19937 rng(kSubsampleSeed);
            std::shuffle(idx.begin(), idx.end(), rng);
            idx.resize(keep_images);
            std::sort(idx.begin(), idx.end());
            samples.resize(Eigen::Index(keep_images) * per_image, spec.cuboid_dim());
            for (size_t r = 0; r < keep_images; ++r)
                samples.middleRows(Eigen::Index(r) * per_image, per_image) =
                    extract_cuboids(blocks[idx[r]], spec);
        } else {
            samples.resize(Eigen::Index(total_rows), spec.cuboid_dim());
            for (size_t r = 0; r < blocks.size(); ++r)
                samples.middleRows(Eigen::Index(r) * per_image, per_image) =
                    extract_cuboids(blocks[r], spec);
        }

        KernelStage stage = fit_stage(samples, spec, cfg.energy_fraction, cfg.max_ac);
        for (auto& b : blocks) b = forward_stage(b, stage);
        pipeline.stages.push_back(std::move(stage));
    }
    return pipeline;
}

std::vector<FeatureBlock> transform_all(const ImageTensor& image,
                                        const SaakPipeline& pipeline) {
    if (pipeline.input_height > 0 &&
        (image.height != pipeline.input_height || image.width != pipeline.input_width ||
         image.channels != pipeline.input_channels))
        throw ShapeError("transform_all: image shape does not match pipeline input");

    std::vector<FeatureBlock> out;
    out.reserve(pipeline.stages.size());
    Tensor3 cur = image;
    for (size_t p = 0; p < pipeline.stages.size(); ++p) {
        cur = forward_stage(cur, pipeline.stages[p]);
        out.push_back(FeatureBlock{int(p), cur});
    }
    return out;
}

void save_pipeline(const SaakPipeline& p, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write pipeline file: " + path);
    out.write("SAAK1", 5);
    write_pod<uint32_t>(out, uint32_t(p.stages.size()));
    for (const auto& s : p.stages) {
        write_pod<uint32_t>(out, uint32_t(s.spec.kernel_size));
        write_pod<uint32_t>(out, uint32_t(s.spec.input_channels));
        write_pod<uint32_t>(out, uint32_t(s.num_ac()));
        write_pod<uint32_t>(out, uint32_t(s.spec.cuboid_dim()));
        for (int i = 0; i < s.num_ac(); ++i)
            for (int j = 0; j < s.spec.cuboid_dim(); ++j)
                write_pod<double>(out, s.ac_kernels(i, j));
        for (int i = 0; i < s.num_ac(); ++i) write_pod<double>(out, s.eigenvalues[i]);
    }
}

SaakPipeline load_pipeline(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open pipeline file: " + path);
    char magic[5];
    in.read(magic, 5);
    if (!in || std::string(magic, 5) != "SAAK1")
        throw FormatError("bad pipeline magic in " + path);

    SaakPipeline p;
    uint32_t n_stages = read_pod<uint32_t>(in);
    for (uint32_t si = 0; si < n_stages; ++si) {
        KernelStage s;
        s.spec.kernel_size = int(read_pod<uint32_t>(in));
        s.spec.input_channels = int(read_pod<uint32_t>(in));
        uint32_t kac = read_pod<uint32_t>(in);
        uint32_t n = read_pod<uint32_t>(in);
        if (!in || int(n) != s.spec.cuboid_dim())
            throw FormatError("inconsistent stage geometry in " + path);
        s.dc_kernel = Vector::Constant(n, 1.0 / std::sqrt(double(n)));
        s.ac_kernels = Matrix(kac, n);
        for (uint32_t i = 0; i < kac; ++i)
            for (uint32_t j = 0; j < n; ++j) s.ac_kernels(i, j) = read_pod<double>(in);
        s.eigenvalues = Vector(kac);
        for (uint32_t i = 0; i < kac; ++i) s.eigenvalues[i] = read_pod<double>(in);
        if (!in) throw FormatError("truncated pipeline file: " + path);

        // Orthonormality check on the full {dc} + AC basis.
        Matrix basis(kac + 1, n);
        basis.row(0) = s.dc_kernel.transpose();
        basis.bottomRows(kac) = s.ac_kernels;
        Matrix gram = basis * basis.transpose();
        if ((gram - Matrix::Identity(kac + 1, kac + 1)).cwiseAbs().maxCoeff() > 1e-6)
            throw FormatError("pipeline kernels not orthonormal: " + path);

        p.stages.push_back(std::move(s));
    }
    if (!p.stages.empty()) p.input_channels = p.stages.front().spec.input_channels;
    return p;
}

}  // namespace saak
