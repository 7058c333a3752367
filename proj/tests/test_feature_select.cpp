#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "entropy_oracle.hpp"
#include "saak/feature_select.hpp"

using namespace saak;
using fsel::EntropyVariant;

TEST_CASE("bin_assign equal-width semantics") {
    auto [bins, edges] = fsel::bin_assign({0.0, 0.5, 1.0}, 10);
    CHECK(bins == std::vector<int>{0, 5, 9});
    CHECK(edges.front() == 0.0);
    CHECK(edges.back() == 1.0);

    auto [cbins, cedges] = fsel::bin_assign({0.3, 0.3, 0.3}, 10);
    CHECK(cbins == std::vector<int>{0, 0, 0});

    auto [one, oedges] = fsel::bin_assign({0.7}, 10);
    CHECK(one == std::vector<int>{0});
}

TEST_CASE("majority_class_per_bin with ties and empty bins") {
    // one bin {0,0,1} -> 0
    auto mc = fsel::majority_class_per_bin({0, 0, 0}, {0, 0, 1}, 2);
    REQUIRE(mc.size() == 1);
    CHECK(mc[0].second == 0);

    // tie breaks to lowest class
    mc = fsel::majority_class_per_bin({0, 0}, {0, 1}, 2);
    CHECK(mc[0].second == 0);

    // two bins, empty bin 1 skipped
    mc = fsel::majority_class_per_bin({0, 0, 2, 2}, {1, 1, 0, 0}, 2);
    REQUIRE(mc.size() == 2);
    CHECK(mc[0] == std::pair<int, int>{0, 1});
    CHECK(mc[1] == std::pair<int, int>{2, 0});
}

TEST_CASE("location_entropy hand-computed cases") {
    // all samples one class -> p = 1 -> H = 0
    std::vector<double> vals{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};
    std::vector<int> labs(8, 0);
    CHECK(fsel::location_entropy(vals, labs, 10, 2) == 0.0);

    // two pure bins of 4 each -> p0 = p1 = 1/2 -> H = 8 ln 2
    std::vector<double> split{0, 0, 0, 0, 1, 1, 1, 1};
    std::vector<int> slabs{0, 0, 0, 0, 1, 1, 1, 1};
    CHECK(fsel::location_entropy(split, slabs, 10, 2) ==
          doctest::Approx(8.0 * std::log(2.0)).epsilon(1e-12));

    // every nonempty bin majority 0 (ties) -> p1 clamped to 1e-8
    std::vector<double> mixed{0, 0, 0.5, 0.5, 0.9, 0.9, 1.0, 1.0};
    std::vector<int> mlabs{0, 1, 0, 1, 0, 1, 0, 1};
    CHECK(fsel::location_entropy(mixed, mlabs, 10, 2) ==
          doctest::Approx(4.0 * std::log(1e8)).epsilon(1e-12));
}

TEST_CASE("location_entropy matches naive oracle on 1000 random draws") {
    std::mt19937 rng(99);
    std::uniform_real_distribution<double> vd(0.0, 1.0);
    std::uniform_int_distribution<int> nd(2, 40), cd(2, 5), bd(2, 12);
    for (int trial = 0; trial < 1000; ++trial) {
        int n = nd(rng), C = cd(rng), B = bd(rng);
        std::uniform_int_distribution<int> ld(0, C - 1);
        std::vector<double> vals(size_t(n), 0.0);
        std::vector<int> labs(size_t(n), 0);
        for (int i = 0; i < n; ++i) {
            vals[size_t(i)] = vd(rng);
            labs[size_t(i)] = ld(rng);
        }
        double got_lit = fsel::location_entropy(vals, labs, B, C, EntropyVariant::Literal);
        double exp_lit = oracle::naive_entropy(vals, labs, B, C, false);
        CHECK(got_lit == doctest::Approx(exp_lit).epsilon(1e-12));
        double got_pb = fsel::location_entropy(vals, labs, B, C, EntropyVariant::PerBin);
        double exp_pb = oracle::naive_entropy(vals, labs, B, C, true);
        CHECK(got_pb == doctest::Approx(exp_pb).epsilon(1e-12));
    }
}

namespace {

std::vector<Tensor3> class_pattern_blocks(std::vector<int>& labels) {
    // 8 blocks, 2 classes; location (0,0,0) separates perfectly, (0,1,0)
    // is constant across the set.
    std::vector<Tensor3> blocks;
    for (int i = 0; i < 8; ++i) {
        Tensor3 b(2, 2, 2);
        int cls = i % 2;
        b.at(0, 0, 0) = cls == 0 ? 0.1 : 0.9;
        b.at(0, 1, 0) = 0.5;
        b.at(1, 0, 0) = 0.3 + 0.01 * i;
        b.at(1, 1, 0) = cls == 0 ? 0.2 : 0.21;
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c) b.at(r, c, 1) = 0.05 * i;
        blocks.push_back(b);
        labels.push_back(cls);
    }
    return blocks;
}

}  // namespace

TEST_CASE("compute_entropy_map shape and separable locations") {
    std::vector<int> labels;
    auto blocks = class_pattern_blocks(labels);
    auto map = fsel::compute_entropy_map(blocks, labels, 10, 2, 0);
    CHECK(map.values.height == 2);
    CHECK(map.values.width == 2);
    CHECK(map.values.channels == 2);
    // perfectly separable: each class owns one of the two nonempty bins
    CHECK(map.values.at(0, 0, 0) == doctest::Approx(8.0 * std::log(2.0)));
    // constant location: one bin, majority class 0, class-1 prob clamped
    CHECK(map.values.at(0, 1, 0) == doctest::Approx(4.0 * std::log(1e8)));
    // the conditional variant sees the separable location as zero entropy
    auto pb = fsel::compute_entropy_map(blocks, labels, 10, 2, 0, EntropyVariant::PerBin);
    CHECK(pb.values.at(0, 0, 0) == 0.0);
    // mixed-class single bin at the constant location: p = 1/2 everywhere
    CHECK(pb.values.at(0, 1, 0) == doctest::Approx(8.0 * std::log(2.0)));
    for (Eigen::Index i = 0; i < map.values.data.size(); ++i)
        CHECK(map.values.data[i] >= 0.0);
}

TEST_CASE("spatial_select ranking and tie-breaks") {
    fsel::EntropyMap map;
    map.values = Tensor3(2, 2, 1);
    map.values.at(0, 0, 0) = 0.1;
    map.values.at(0, 1, 0) = 0.4;
    map.values.at(1, 0, 0) = 0.3;
    map.values.at(1, 1, 0) = 0.2;

    auto keep_all = fsel::spatial_select(map, 4);
    CHECK(keep_all[0] == std::vector<int>{0, 1, 2, 3});

    auto keep1 = fsel::spatial_select(map, 1);
    CHECK(keep1[0] == std::vector<int>{0});

    map.values.data.setConstant(0.7);
    auto tied = fsel::spatial_select(map, 3);
    CHECK(tied[0] == std::vector<int>{0, 1, 2});  // row-major tie-break
}

TEST_CASE("spectral_select ranking matches brute-force means") {
    fsel::EntropyMap map;
    map.values = Tensor3(2, 2, 3);
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> d(0.0, 5.0);
    for (Eigen::Index i = 0; i < map.values.data.size(); ++i) map.values.data[i] = d(rng);

    // brute-force means
    std::vector<std::pair<double, int>> means;
    for (int k = 0; k < 3; ++k) {
        double m = 0;
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) m += map.values.at(i, j, k);
        means.emplace_back(m / 4.0, k);
    }
    std::stable_sort(means.begin(), means.end());

    auto keep1 = fsel::spectral_select(map, 1);
    CHECK(keep1 == std::vector<int>{means[0].second});
    auto keep_all = fsel::spectral_select(map, 3);
    CHECK(keep_all == std::vector<int>{0, 1, 2});
}

TEST_CASE("selection is invariant to monotone rescaling of entropies") {
    fsel::EntropyMap map;
    map.values = Tensor3(3, 3, 4);
    std::mt19937 rng(15);
    std::uniform_real_distribution<double> d(0.0, 2.0);
    for (Eigen::Index i = 0; i < map.values.data.size(); ++i) map.values.data[i] = d(rng);

    auto spatial1 = fsel::spatial_select(map, 4);
    auto spectral1 = fsel::spectral_select(map, 2);

    fsel::EntropyMap scaled = map;
    for (Eigen::Index i = 0; i < scaled.values.data.size(); ++i)
        scaled.values.data[i] = 3.0 * scaled.values.data[i] + 1.0;
    CHECK(fsel::spatial_select(scaled, 4) == spatial1);
    CHECK(fsel::spectral_select(scaled, 2) == spectral1);
}

TEST_CASE("assemble_features layout and masking semantics") {
    std::vector<int> labels;
    auto blocks = class_pattern_blocks(labels);
    std::vector<FeatureBlock> fb{FeatureBlock{0, blocks[0]}};

    fsel::SelectionMask full;
    full.stage_index = 0;
    full.spatial_height = 2;
    full.spatial_width = 2;
    full.spatial_keep = {{0, 1, 2, 3}, {0, 1, 2, 3}};
    full.spectral_keep = {0, 1};
    auto v = fsel::assemble_features(fb, {full});
    CHECK(v.size() == 8);
    // channel-major layout: all of spectral dim 0 first
    CHECK(v[0] == blocks[0].at(0, 0, 0));
    CHECK(v[4] == blocks[0].at(0, 0, 1));

    fsel::SelectionMask tiny = full;
    tiny.spatial_keep = {{2}, {2}};
    tiny.spectral_keep = {1};
    auto w = fsel::assemble_features(fb, {tiny});
    REQUIRE(w.size() == 1);
    CHECK(w[0] == blocks[0].at(1, 0, 1));

    // two blocks identical under the mask produce identical vectors
    auto other = blocks[0];
    other.at(0, 0, 0) += 0.5;  // not retained by `tiny`
    std::vector<FeatureBlock> fb2{FeatureBlock{0, other}};
    auto w2 = fsel::assemble_features(fb2, {tiny});
    CHECK(w2[0] == w[0]);
}

TEST_CASE("mask serialization roundtrip") {
    fsel::SelectionMask m;
    m.stage_index = 1;
    m.spatial_height = 2;
    m.spatial_width = 3;
    m.spatial_keep = {{0, 2, 5}, {1, 3, 4}};
    m.spectral_keep = {1, 0};
    auto path = (std::filesystem::temp_directory_path() / "masks.txt").string();
    fsel::save_masks({m}, path);
    auto loaded = fsel::load_masks(path);
    REQUIRE(loaded.size() == 1);
    CHECK(loaded[0].stage_index == 1);
    CHECK(loaded[0].spatial_keep == m.spatial_keep);
    CHECK(loaded[0].spectral_keep == m.spectral_keep);
}
