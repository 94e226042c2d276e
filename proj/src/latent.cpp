#include "anonypipe/latent.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace anonypipe {

NormalStream::NormalStream(std::uint64_t seed) : engine_(seed) {}

double NormalStream::uniform() { return double(engine_() >> 11) * 0x1.0p-53; }

double NormalStream::next() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

LatentVector sample_latent(std::uint64_t seed, int dim) {
    if (dim < 1) throw std::invalid_argument("latent dimension must be at least 1");
    NormalStream rng(seed);
    LatentVector z{Eigen::VectorXd(dim), LatentSpace::z};
    for (int i = 0; i < dim; ++i) z.values[i] = rng.next();
    return z;
}

namespace {

void check_psi(double psi) {
    if (!(psi >= 0 && psi <= 1)) throw std::invalid_argument("truncation psi must lie in [0, 1]");
}

}  // namespace

LatentVector truncate_standard(const LatentVector& z, double psi) {
    check_psi(psi);
    if (psi == 1) return z;
    return {psi * z.values, z.space};
}

Eigen::Index nearest_center(const Eigen::VectorXd& w, const ClusterCenters& centers) {
    if (centers.k() == 0) throw std::invalid_argument("no cluster centers");
    if (centers.dim() != w.size()) throw std::invalid_argument("cluster centers have the wrong dimension");
    Eigen::Index best = 0;
    (centers.centers.colwise() - w).colwise().squaredNorm().minCoeff(&best);
    return best;
}

LatentVector truncate_multimodal(const LatentVector& w, const ClusterCenters& centers, double psi) {
    check_psi(psi);
    const Eigen::Index idx = nearest_center(w.values, centers);
    if (psi == 1) return {w.values, LatentSpace::omega};
    const Eigen::VectorXd c = centers.centers.col(idx);
    if (psi == 0) return {c, LatentSpace::omega};
    return {c + psi * (w.values - c), LatentSpace::omega};
}

ClusterCenters estimate_cluster_centers(std::span<const LatentVector> samples, int k, std::uint64_t seed,
                                        int max_iterations) {
    const auto n = static_cast<Eigen::Index>(samples.size());
    if (k < 1) throw std::invalid_argument("k must be at least 1");
    if (k > n)
        throw std::invalid_argument("k = " + std::to_string(k) + " exceeds the sample count " + std::to_string(n));
    const Eigen::Index dim = samples.front().dim();
    Eigen::MatrixXd data(dim, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (samples[i].dim() != dim) throw std::invalid_argument("samples differ in dimension");
        data.col(i) = samples[i].values;
    }

    // k-means++ seeding
    NormalStream rng(seed);
    Eigen::MatrixXd centers(dim, k);
    Eigen::Index first = std::min<Eigen::Index>(static_cast<Eigen::Index>(rng.uniform() * n), n - 1);
    centers.col(0) = data.col(first);
    Eigen::VectorXd d2 = (data.colwise() - centers.col(0)).colwise().squaredNorm().transpose();
    for (int c = 1; c < k; ++c) {
        const double total = d2.sum();
        Eigen::Index pick = 0;
        if (total > 0) {
            const double target = rng.uniform() * total;
            double acc = 0;
            pick = -1;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (d2[i] <= 0) continue;
                acc += d2[i];
                pick = i;
                if (acc > target) break;
            }
        } else {
            pick = c % n;  // all samples coincide with chosen centers
        }
        centers.col(c) = data.col(pick);
        d2 = d2.cwiseMin((data.colwise() - centers.col(c)).colwise().squaredNorm().transpose());
    }

    std::vector<Eigen::Index> assign(n, -1);
    for (int it = 0; it < max_iterations; ++it) {
        bool changed = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            Eigen::Index best = 0;
            (centers.colwise() - data.col(i)).colwise().squaredNorm().minCoeff(&best);
            if (best != assign[i]) {
                assign[i] = best;
                changed = true;
            }
        }
        if (!changed && it > 0) break;
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(dim, k);
        Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.col(assign[i]) += data.col(i);
            counts[assign[i]] += 1;
        }
        for (int c = 0; c < k; ++c)
            if (counts[c] > 0) centers.col(c) = sums.col(c) / counts[c];
    }
    return {centers};
}

std::uint64_t derive_seed(std::uint64_t base, std::int64_t a, std::int64_t b) {
    auto mix = [](std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    };
    std::uint64_t h = mix(base);
    h = mix(h ^ static_cast<std::uint64_t>(a));
    h = mix(h ^ static_cast<std::uint64_t>(b));
    return h;
}

}  // namespace anonypipe
