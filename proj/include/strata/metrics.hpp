#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace strata {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// n × d feature matrix with the identifier of the network that produced it.
struct FeatureSet {
    RowMatrix values;
    std::string extractor;

    Eigen::Index size() const { return values.rows(); }
    Eigen::Index dim() const { return values.cols(); }
};

struct PrecisionRecall {
    double precision = 0.0;
    double recall = 0.0;
};

/// Squared k-th nearest neighbour distance of every row within `points`
/// (the row itself excluded).
Eigen::VectorXd knn_radii_squared(const RowMatrix& points, int k);

/// k-NN manifold precision and recall.
///
/// The manifold of a set is the union of balls around each point whose
/// radius is the distance to its k-th nearest neighbour in the same set.
/// Precision is the fraction of generated points inside the real manifold,
/// recall the fraction of real points inside the generated manifold.
/// Throws std::invalid_argument when either set has fewer than k+1 points.
PrecisionRecall precision_recall(const FeatureSet& real, const FeatureSet& generated, int k = 3);

struct GaussianMoments {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance; // unbiased, 1/(n-1)
};

GaussianMoments feature_moments(const RowMatrix& values);

/// Tr((A B)^{1/2}) for symmetric PSD A and B, evaluated as
/// Tr((A^{1/2} B A^{1/2})^{1/2}) with negative eigenvalues clamped to zero.
double trace_sqrt_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

double frechet_distance(const GaussianMoments& a, const GaussianMoments& b);

/// Fréchet distance between Gaussians fitted to the two sets. Needs n >= 2.
double fid(const FeatureSet& real, const FeatureSet& generated);

/// Diagonal-covariance Gaussian mixture.
struct GmmFit {
    Eigen::VectorXd weights;   // k
    RowMatrix means;           // k × d
    RowMatrix variances;       // k × d, floored at kVarianceFloor
    std::vector<double> log_likelihood; // total log-likelihood before each M-step
    int iterations = 0;
    bool converged = false;

    static constexpr double kVarianceFloor = 1e-6;
};

/// EM with k-means++ seeding. Stops after max_iters M-steps or once the
/// log-likelihood gain drops below tol.
GmmFit gmm_em_fit(const RowMatrix& samples, int k, int max_iters, double tol, std::uint64_t seed);

/// Most responsible component for each row.
std::vector<int> gmm_assign(const GmmFit& fit, const RowMatrix& samples);

/// (1/N) Σ_cluster max_label count(cluster, label).
double cluster_purity(std::span<const int> assignments, std::span<const int> labels);

struct Embedding2d {
    RowMatrix coords;          // n × 2
    Eigen::MatrixXd axes;      // d × 2 unit principal directions
    std::vector<int> cluster_ids;
    double explained_variance = 0.0; // fraction captured by the two axes
    bool rank_deficient = false;     // second axis degenerate, coordinates zeroed
};

/// Projection onto the top-2 principal components. Axis signs are fixed so
/// the largest-magnitude loading of each axis is positive.
Embedding2d embed_2d(const RowMatrix& samples, std::vector<int> cluster_ids);

/// `count` uniformly spaced truncation strengths strictly inside (0,1):
/// 0.05 .. 0.95.
std::vector<double> interior_phi_grid(int count);

} // namespace strata
