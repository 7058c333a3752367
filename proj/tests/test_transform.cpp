#include <doctest.h>

#include <filesystem>
#include <random>

#include <Eigen/Eigenvalues>

#include "saak/datasets.hpp"
#include "saak/transform.hpp"

using namespace saak;

namespace {

Tensor3 make_image(int h, int w, int c, std::mt19937& rng) {
    std::uniform_real_distribution<double> d(0.0, 1.0);
    Tensor3 t(h, w, c);
    for (Eigen::Index i = 0; i < t.data.size(); ++i) t.data[i] = d(rng);
    return t;
}

Matrix random_samples(int rows, int cols, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> d(0.0, 1.0);
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = d(rng);
    return m;
}

}  // namespace

TEST_CASE("extract_cuboids shapes and ordering") {
    CuboidSpec spec{2, 1};
    std::mt19937 rng(0);
    auto img = make_image(4, 4, 1, rng);
    auto m = extract_cuboids(img, spec);
    CHECK(m.rows() == 4);
    CHECK(m.cols() == 4);

    Tensor3 tiny(2, 2, 1);
    tiny.data << 1, 2, 3, 4;
    auto row = extract_cuboids(tiny, spec);
    REQUIRE(row.rows() == 1);
    CHECK(row(0, 0) == 1);
    CHECK(row(0, 1) == 2);
    CHECK(row(0, 2) == 3);
    CHECK(row(0, 3) == 4);

    Tensor3 constant(4, 4, 1);
    constant.data.setConstant(0.3);
    auto rows = extract_cuboids(constant, spec);
    CHECK((rows.array() - 0.3).abs().maxCoeff() == 0.0);

    Tensor3 odd(3, 4, 1);
    CHECK_THROWS_AS(extract_cuboids(odd, spec), ShapeError);
}

TEST_CASE("fit_stage flags zero residual variance") {
    Matrix samples = Matrix::Constant(10, 4, 0.5);
    auto stage = fit_stage(samples, CuboidSpec{2, 1}, 1.0, 3);
    CHECK(stage.degenerate);
    CHECK(stage.num_ac() == 1);
    CHECK(std::abs(stage.ac_kernels.row(0).norm() - 1.0) < 1e-12);
    CHECK(std::abs(stage.ac_kernels.row(0).dot(stage.dc_kernel)) < 1e-12);
}

TEST_CASE("fit_stage matches brute-force 2x2 eigendecomposition") {
    // Samples (t, -t): residual covariance has eigenvector (1,-1)/sqrt(2).
    Matrix samples(8, 2);
    int r = 0;
    for (double t : {1.0, -1.0, 2.0, -2.0, 3.0, -3.0, 4.0, -4.0}) {
        samples(r, 0) = t;
        samples(r, 1) = -t;
        ++r;
    }
    // independent oracle: dense 2x2 covariance eigendecomposition
    Vector dc = Vector::Constant(2, 1.0 / std::sqrt(2.0));
    Matrix resid = samples - (samples * dc) * dc.transpose();
    Matrix cov = resid.transpose() * resid / double(samples.rows());
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
    Vector expected = es.eigenvectors().col(1);

    CuboidSpec spec{1, 2};  // n = 2
    auto stage = fit_stage(samples, spec, 1.0, 1);
    double dot = std::abs(stage.ac_kernels.row(0).dot(expected));
    CHECK(dot == doctest::Approx(1.0).epsilon(1e-10));
    // canonical sign: largest-magnitude entry positive
    CHECK(stage.ac_kernels.row(0).cwiseAbs().maxCoeff() ==
          doctest::Approx(stage.ac_kernels.row(0).maxCoeff()));
}

TEST_CASE("fit_stage with tau=1 and max_ac=n-1 keeps the full basis") {
    auto samples = random_samples(100, 4, 7);
    auto stage = fit_stage(samples, CuboidSpec{2, 1}, 1.0, 3);
    CHECK(stage.num_ac() == 3);
    // eigenvalues non-increasing
    for (int i = 1; i < stage.num_ac(); ++i)
        CHECK(stage.eigenvalues[i] <= stage.eigenvalues[i - 1] + 1e-12);
}

TEST_CASE("forward_stage constant image has only DC response") {
    auto samples = random_samples(100, 4, 11);
    auto stage = fit_stage(samples, CuboidSpec{2, 1}, 1.0, 3);
    Tensor3 img(4, 4, 1);
    img.data.setConstant(0.7);
    auto out = forward_stage(img, stage);
    CHECK(out.channels == 7);
    for (int i = 0; i < out.height; ++i)
        for (int j = 0; j < out.width; ++j) {
            CHECK(out.at(i, j, 0) == doctest::Approx(1.4).epsilon(1e-12));  // 0.7 * sqrt(4)
            for (int k = 1; k < 7; ++k) CHECK(std::abs(out.at(i, j, k)) < 1e-12);
        }
}

TEST_CASE("sign-to-position pairs are complementary") {
    auto samples = random_samples(200, 4, 3);
    auto stage = fit_stage(samples, CuboidSpec{2, 1}, 1.0, 3);
    std::mt19937 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        auto img = make_image(8, 8, 1, rng);
        auto out = forward_stage(img, stage);
        for (int i = 0; i < out.height; ++i)
            for (int j = 0; j < out.width; ++j)
                for (int a = 0; a < stage.num_ac(); ++a)
                    CHECK(std::min(out.at(i, j, 1 + 2 * a), out.at(i, j, 2 + 2 * a)) == 0.0);
    }
}

TEST_CASE("forward_stage matches dense projection oracle") {
    auto samples = random_samples(100, 4, 13);
    auto stage = fit_stage(samples, CuboidSpec{2, 1}, 1.0, 3);
    Tensor3 img(2, 2, 1);
    img.data << 1, 2, 3, 4;
    auto out = forward_stage(img, stage);
    Vector x(4);
    x << 1, 2, 3, 4;
    CHECK(out.at(0, 0, 0) == doctest::Approx(stage.dc_kernel.dot(x)).epsilon(1e-12));
    for (int a = 0; a < 3; ++a) {
        double c = stage.ac_kernels.row(a).dot(x);
        CHECK(out.at(0, 0, 1 + 2 * a) == doctest::Approx(std::max(c, 0.0)));
        CHECK(out.at(0, 0, 2 + 2 * a) == doctest::Approx(std::max(-c, 0.0)));
    }
}

TEST_CASE("lossless roundtrip and energy conservation") {
    auto samples = random_samples(300, 4, 17);
    auto stage = fit_stage(samples, CuboidSpec{2, 1}, 1.0, 3);
    std::mt19937 rng(23);
    for (int trial = 0; trial < 10; ++trial) {
        auto img = make_image(6, 6, 1, rng);
        auto features = forward_stage(img, stage);
        auto back = inverse_stage(features, stage);
        CHECK((back.data - img.data).cwiseAbs().maxCoeff() < 1e-10);
    }

    // per-cuboid energy conservation
    auto img = make_image(4, 4, 1, rng);
    auto cuboids = extract_cuboids(img, stage.spec);
    for (int r = 0; r < cuboids.rows(); ++r) {
        Vector x = cuboids.row(r).transpose();
        double dc = stage.dc_kernel.dot(x);
        double energy = dc * dc;
        for (int a = 0; a < stage.num_ac(); ++a) {
            double c = stage.ac_kernels.row(a).dot(x);
            energy += c * c;
        }
        CHECK(energy == doctest::Approx(x.squaredNorm()).epsilon(1e-10));
    }
}

TEST_CASE("zero features invert to a zero block") {
    auto stage = fit_stage(random_samples(100, 4, 19), CuboidSpec{2, 1}, 1.0, 3);
    Tensor3 zeros(2, 2, 7);
    auto back = inverse_stage(zeros, stage);
    CHECK(back.data.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("lossy reconstruction error equals discarded energy") {
    auto samples = random_samples(400, 4, 29);
    auto full = fit_stage(samples, CuboidSpec{2, 1}, 1.0, 3);
    auto lossy = fit_stage(samples, CuboidSpec{2, 1}, 1.0, 1);

    std::mt19937 rng(31);
    auto img = make_image(4, 4, 1, rng);
    auto back = inverse_stage(forward_stage(img, lossy), lossy);

    auto cuboids = extract_cuboids(img, full.spec);
    double discarded = 0.0;
    for (int r = 0; r < cuboids.rows(); ++r) {
        Vector x = cuboids.row(r).transpose();
        for (int a = lossy.num_ac(); a < full.num_ac(); ++a) {
            double c = full.ac_kernels.row(a).dot(x);
            discarded += c * c;
        }
    }
    double err = (back.data - img.data).squaredNorm();
    CHECK(err == doctest::Approx(discarded).epsilon(1e-8));
}

TEST_CASE("fit_pipeline stage arithmetic and determinism") {
    auto set = datasets::synth_blobs(20, 2, 32, 77);
    std::vector<StageConfig> cfg{{2, 1.0, 3}, {2, 0.99, 8}, {2, 0.99, 16}};
    auto p = fit_pipeline(set, cfg);
    REQUIRE(p.stages.size() == 3);
    CHECK(p.stages[0].output_channels() == 7);  // 1 + 2*3
    CHECK(p.stages[1].spec.input_channels == 7);

    auto blocks = transform_all(set.images[0], p);
    CHECK(blocks[0].values.height == 16);
    CHECK(blocks[1].values.height == 8);
    CHECK(blocks[2].values.height == 4);

    auto p2 = fit_pipeline(set, cfg);
    for (size_t s = 0; s < p.stages.size(); ++s) {
        CHECK((p.stages[s].ac_kernels - p2.stages[s].ac_kernels).cwiseAbs().maxCoeff() == 0.0);
        CHECK((p.stages[s].eigenvalues - p2.stages[s].eigenvalues).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("orthonormality of fitted pipeline stages") {
    auto set = datasets::synth_blobs(20, 2, 16, 3);
    auto p = fit_pipeline(set, {{2, 1.0, 3}, {2, 0.99, 8}});
    for (const auto& s : p.stages) {
        Matrix basis(s.num_ac() + 1, s.spec.cuboid_dim());
        basis.row(0) = s.dc_kernel.transpose();
        basis.bottomRows(s.num_ac()) = s.ac_kernels;
        Matrix gram = basis * basis.transpose();
        CHECK((gram - Matrix::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() <= 1e-6);
    }
}

TEST_CASE("transform_all on zero image yields zero blocks") {
    auto set = datasets::synth_blobs(20, 2, 16, 4);
    auto p = fit_pipeline(set, {{2, 1.0, 3}, {2, 0.99, 8}});
    ImageTensor zero(16, 16, 1);
    for (const auto& b : transform_all(zero, p))
        CHECK(b.values.data.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("pipeline serialization roundtrip validates kernels") {
    auto set = datasets::synth_blobs(20, 2, 16, 8);
    auto p = fit_pipeline(set, {{2, 1.0, 3}, {2, 0.99, 8}});
    auto path = (std::filesystem::temp_directory_path() / "pipe.bin").string();
    save_pipeline(p, path);
    auto q = load_pipeline(path);
    REQUIRE(q.stages.size() == p.stages.size());
    for (size_t s = 0; s < p.stages.size(); ++s)
        CHECK((p.stages[s].ac_kernels - q.stages[s].ac_kernels).cwiseAbs().maxCoeff() == 0.0);

    ImageTensor img = set.images[0];
    auto a = transform_all(img, p);
    auto b = transform_all(img, q);
    CHECK((a.back().values.data - b.back().values.data).cwiseAbs().maxCoeff() == 0.0);
}
