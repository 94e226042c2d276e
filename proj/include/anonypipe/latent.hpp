#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace anonypipe {

enum class LatentSpace { z, omega };

struct LatentVector {
    Eigen::VectorXd values;
    LatentSpace space = LatentSpace::z;

    Eigen::Index dim() const { return values.size(); }
};

/// k centers in omega space, one per column.
struct ClusterCenters {
    Eigen::MatrixXd centers;

    Eigen::Index k() const { return centers.cols(); }
    Eigen::Index dim() const { return centers.rows(); }
};

/// Standard-normal entries from mt19937_64 through Box-Muller, so streams are identical across
/// standard library implementations.
class NormalStream {
public:
    explicit NormalStream(std::uint64_t seed);
    double next();
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0;
};

LatentVector sample_latent(std::uint64_t seed, int dim);

/// psi · z: interpolation toward the mode of N(0, I).
LatentVector truncate_standard(const LatentVector& z, double psi);

/// Index of the nearest center by Euclidean distance; ties go to the lower index.
Eigen::Index nearest_center(const Eigen::VectorXd& w, const ClusterCenters& centers);

/// c* + psi · (w − c*) with c* the nearest center.
LatentVector truncate_multimodal(const LatentVector& w, const ClusterCenters& centers, double psi);

/// k-means with k-means++ seeding and at most `max_iterations` Lloyd rounds.
ClusterCenters estimate_cluster_centers(std::span<const LatentVector> samples, int k, std::uint64_t seed,
                                        int max_iterations = 100);

/// splitmix64 finalizer folded over the parts; used to derive independent per-instance seeds.
std::uint64_t derive_seed(std::uint64_t base, std::int64_t a, std::int64_t b = 0);

}  // namespace anonypipe
