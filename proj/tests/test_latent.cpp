#include "oracles.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace anonypipe;
using testing::Rng;

TEST_CASE("latent sampling is seeded and roughly standard normal") {
    const auto a = sample_latent(5, 64), b = sample_latent(5, 64), c = sample_latent(6, 64);
    CHECK(a.values == b.values);
    CHECK(a.values != c.values);
    CHECK(a.space == LatentSpace::z);
    const auto big = sample_latent(1, 20000);
    CHECK(big.values.mean() == doctest::Approx(0).scale(1).epsilon(0.03));
    const double var = (big.values.array() - big.values.mean()).square().mean();
    CHECK(var == doctest::Approx(1).epsilon(0.05));
    CHECK_THROWS(sample_latent(0, 0));
}

TEST_CASE("derive_seed separates streams") {
    CHECK(derive_seed(0, 1, 2) == derive_seed(0, 1, 2));
    CHECK(derive_seed(0, 1, 2) != derive_seed(0, 2, 1));
    CHECK(derive_seed(0, 1, 2) != derive_seed(1, 1, 2));
}

TEST_CASE("standard truncation endpoints are exact") {
    Rng rng(51);
    for (int trial = 0; trial < 100; ++trial) {
        const auto z = sample_latent(trial, rng.uniform_int(1, 16));
        CHECK(truncate_standard(z, 1.0).values == z.values);
        CHECK((truncate_standard(z, 0.0).values.array() == 0).all());
        const double psi = rng.uniform();
        CHECK(truncate_standard(z, psi).values.norm() <= z.values.norm() + 1e-12);
    }
    CHECK_THROWS(truncate_standard(sample_latent(1, 2), 1.5));
    CHECK_THROWS(truncate_standard(sample_latent(1, 2), -0.1));
}

TEST_CASE("multimodal truncation selects the nearest center") {
    Rng rng(52);
    for (int trial = 0; trial < 1000; ++trial) {
        const int dim = rng.uniform_int(1, 6), k = rng.uniform_int(1, 7);
        ClusterCenters cc{Eigen::MatrixXd(dim, k)};
        for (int j = 0; j < k; ++j)
            for (int i = 0; i < dim; ++i) cc.centers(i, j) = rng.uniform_int(-2, 2);  // integer grid: ties
        LatentVector w{Eigen::VectorXd(dim), LatentSpace::omega};
        for (int i = 0; i < dim; ++i) w.values[i] = rng.coin() ? rng.uniform_int(-2, 2) : rng.uniform(-3, 3);
        const Eigen::Index idx = oracle::scan_nearest(w.values, cc.centers);
        REQUIRE(nearest_center(w.values, cc) == idx);
        REQUIRE(truncate_multimodal(w, cc, 0.0).values == Eigen::VectorXd(cc.centers.col(idx)));
        REQUIRE(truncate_multimodal(w, cc, 1.0).values == w.values);
        const double psi = rng.uniform();
        const Eigen::VectorXd t = truncate_multimodal(w, cc, psi).values;
        REQUIRE((t - cc.centers.col(idx)).norm() <= (w.values - cc.centers.col(idx)).norm() + 1e-12);
    }
}

TEST_CASE("k-means") {
    std::vector<LatentVector> samples;
    for (int i = 0; i < 50; ++i) samples.push_back(sample_latent(i, 3));
    const auto one = estimate_cluster_centers(samples, 1, 9);
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto& s : samples) mean += s.values;
    mean /= 50;
    CHECK((one.centers.col(0) - mean).cwiseAbs().maxCoeff() <= 1e-9);

    // two well separated blobs are recovered
    std::vector<LatentVector> blobs;
    for (int i = 0; i < 40; ++i) {
        auto s = sample_latent(100 + i, 2);
        s.values *= 0.1;
        s.values[0] += i % 2 ? 10 : -10;
        blobs.push_back(s);
    }
    const auto two = estimate_cluster_centers(blobs, 2, 3);
    const double a = two.centers(0, 0), b = two.centers(0, 1);
    CHECK(std::min(a, b) == doctest::Approx(-10).epsilon(0.01));
    CHECK(std::max(a, b) == doctest::Approx(10).epsilon(0.01));
    CHECK(estimate_cluster_centers(blobs, 2, 3).centers == two.centers);
    CHECK_THROWS(estimate_cluster_centers(blobs, 41, 3));
    CHECK_THROWS(estimate_cluster_centers(blobs, 0, 3));
}
