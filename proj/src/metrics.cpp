#include "strata/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <stdexcept>

namespace strata {

namespace {

double squared_distance(const double* a, const double* b, Eigen::Index d)
{
    double s = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
        const double t = a[j] - b[j];
        s += t * t;
    }
    return s;
}

// Fraction of rows of `queries` inside the union of balls (centers, radii²).
double coverage(const RowMatrix& queries, const RowMatrix& centers, const Eigen::VectorXd& radii_sq)
{
    const Eigen::Index d = queries.cols();
    Eigen::Index inside = 0;
    for (Eigen::Index q = 0; q < queries.rows(); ++q) {
        const double* qp = queries.row(q).data();
        for (Eigen::Index i = 0; i < centers.rows(); ++i) {
            if (squared_distance(qp, centers.row(i).data(), d) <= radii_sq[i]) {
                ++inside;
                break;
            }
        }
    }
    return static_cast<double>(inside) / static_cast<double>(queries.rows());
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m)
{
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
    const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

double log_sum_exp(const Eigen::VectorXd& v)
{
    const double m = v.maxCoeff();
    if (!std::isfinite(m))
        return m;
    return m + std::log((v.array() - m).exp().sum());
}

// Per-row log(weight_k) + log N(x | mean_k, diag(var_k)), n × k.
Eigen::MatrixXd component_log_densities(const GmmFit& fit, const RowMatrix& x)
{
    const Eigen::Index n = x.rows();
    const Eigen::Index k = fit.means.rows();
    const Eigen::Index d = x.cols();
    Eigen::MatrixXd out(n, k);
    for (Eigen::Index c = 0; c < k; ++c) {
        double log_norm = std::log(std::max(fit.weights[c], std::numeric_limits<double>::min()));
        for (Eigen::Index j = 0; j < d; ++j)
            log_norm -= 0.5 * std::log(2.0 * std::numbers::pi * fit.variances(c, j));
        for (Eigen::Index i = 0; i < n; ++i) {
            double q = 0.0;
            for (Eigen::Index j = 0; j < d; ++j) {
                const double t = x(i, j) - fit.means(c, j);
                q += t * t / fit.variances(c, j);
            }
            out(i, c) = log_norm - 0.5 * q;
        }
    }
    return out;
}

double unit_draw(std::mt19937_64& rng)
{
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

} // namespace

Eigen::VectorXd knn_radii_squared(const RowMatrix& points, int k)
{
    const Eigen::Index n = points.rows();
    if (k < 1 || n < k + 1)
        throw std::invalid_argument("k-NN radii need at least k+1 points");
    Eigen::VectorXd radii(n);
    std::vector<double> dist(static_cast<std::size_t>(n - 1));
    for (Eigen::Index i = 0; i < n; ++i) {
        std::size_t m = 0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j != i)
                dist[m++] = squared_distance(points.row(i).data(), points.row(j).data(), points.cols());
        }
        auto kth = dist.begin() + (k - 1);
        std::nth_element(dist.begin(), kth, dist.end());
        radii[i] = *kth;
    }
    return radii;
}

PrecisionRecall precision_recall(const FeatureSet& real, const FeatureSet& generated, int k)
{
    if (real.dim() != generated.dim())
        throw std::invalid_argument("feature sets differ in dimension");
    if (real.size() < k + 1 || generated.size() < k + 1)
        throw std::invalid_argument("precision/recall needs at least k+1 points in each set");
    const auto real_radii = knn_radii_squared(real.values, k);
    const auto gen_radii = knn_radii_squared(generated.values, k);
    return {coverage(generated.values, real.values, real_radii),
            coverage(real.values, generated.values, gen_radii)};
}

GaussianMoments feature_moments(const RowMatrix& values)
{
    const Eigen::Index n = values.rows();
    if (n < 2)
        throw std::invalid_argument("moments need at least two samples");
    GaussianMoments m;
    m.mean = values.colwise().mean().transpose();
    const Eigen::MatrixXd centered = values.rowwise() - m.mean.transpose();
    m.covariance = centered.transpose() * centered / static_cast<double>(n - 1);
    return m;
}

double trace_sqrt_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b)
{
    const Eigen::MatrixXd ra = psd_sqrt(a);
    const Eigen::MatrixXd inner = ra * b * ra;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
}

double frechet_distance(const GaussianMoments& a, const GaussianMoments& b)
{
    if (a.mean.size() != b.mean.size())
        throw std::invalid_argument("moment dimensions differ");
    const double mean_term = (a.mean - b.mean).squaredNorm();
    const double value = mean_term + a.covariance.trace() + b.covariance.trace()
                         - 2.0 * trace_sqrt_product(a.covariance, b.covariance);
    return std::max(value, 0.0);
}

double fid(const FeatureSet& real, const FeatureSet& generated)
{
    if (real.dim() != generated.dim())
        throw std::invalid_argument("feature sets differ in dimension");
    return frechet_distance(feature_moments(real.values), feature_moments(generated.values));
}

GmmFit gmm_em_fit(const RowMatrix& samples, int k, int max_iters, double tol, std::uint64_t seed)
{
    const Eigen::Index n = samples.rows();
    const Eigen::Index d = samples.cols();
    if (k < 1 || n < std::max<Eigen::Index>(k, 2))
        throw std::invalid_argument("GMM needs at least max(k, 2) samples");

    // k-means++ seeding.
    std::mt19937_64 rng(seed);
    std::vector<Eigen::Index> chosen{static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(n))};
    Eigen::VectorXd nearest = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
    while (static_cast<int>(chosen.size()) < k) {
        const double* last = samples.row(chosen.back()).data();
        for (Eigen::Index i = 0; i < n; ++i)
            nearest[i] = std::min(nearest[i], squared_distance(samples.row(i).data(), last, d));
        const double total = nearest.sum();
        Eigen::Index pick = 0;
        if (total > 0.0) {
            double target = unit_draw(rng) * total;
            for (pick = 0; pick < n - 1; ++pick) {
                target -= nearest[pick];
                if (target < 0.0)
                    break;
            }
        } else {
            pick = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(n));
        }
        chosen.push_back(pick);
    }

    GmmFit fit;
    fit.weights = Eigen::VectorXd::Constant(k, 1.0 / k);
    fit.means.resize(k, d);
    for (int c = 0; c < k; ++c)
        fit.means.row(c) = samples.row(chosen[static_cast<std::size_t>(c)]);
    const auto overall = feature_moments(samples);
    fit.variances.resize(k, d);
    for (int c = 0; c < k; ++c)
        fit.variances.row(c) = overall.covariance.diagonal().cwiseMax(GmmFit::kVarianceFloor).transpose();

    Eigen::MatrixXd resp(n, k);
    for (int it = 0; it <= max_iters; ++it) {
        // E-step.
        const Eigen::MatrixXd logp = component_log_densities(fit, samples);
        double ll = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const Eigen::VectorXd row = logp.row(i).transpose();
            const double lse = log_sum_exp(row);
            ll += lse;
            resp.row(i) = (row.array() - lse).exp().transpose();
        }
        const bool stalled = !fit.log_likelihood.empty() && ll - fit.log_likelihood.back() < tol;
        fit.log_likelihood.push_back(ll);
        if (stalled) {
            fit.converged = true;
            break;
        }
        if (it == max_iters)
            break;

        // M-step.
        for (int c = 0; c < k; ++c) {
            const double nk = resp.col(c).sum();
            fit.weights[c] = nk / static_cast<double>(n);
            if (nk <= 0.0)
                continue;
            Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(d);
            for (Eigen::Index i = 0; i < n; ++i)
                mean += resp(i, c) * samples.row(i);
            mean /= nk;
            Eigen::RowVectorXd var = Eigen::RowVectorXd::Zero(d);
            for (Eigen::Index i = 0; i < n; ++i)
                var += resp(i, c) * (samples.row(i) - mean).array().square().matrix();
            var /= nk;
            fit.means.row(c) = mean;
            fit.variances.row(c) = var.cwiseMax(GmmFit::kVarianceFloor);
        }
        fit.iterations = it + 1;
    }
    return fit;
}

std::vector<int> gmm_assign(const GmmFit& fit, const RowMatrix& samples)
{
    const Eigen::MatrixXd logp = component_log_densities(fit, samples);
    std::vector<int> out(static_cast<std::size_t>(samples.rows()));
    for (Eigen::Index i = 0; i < samples.rows(); ++i) {
        Eigen::Index best = 0;
        logp.row(i).maxCoeff(&best);
        out[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return out;
}

double cluster_purity(std::span<const int> assignments, std::span<const int> labels)
{
    if (assignments.empty())
        throw std::invalid_argument("purity of an empty assignment");
    if (assignments.size() != labels.size())
        throw std::invalid_argument("assignments and labels differ in length");
    std::map<int, std::map<int, int>> table;
    for (std::size_t i = 0; i < assignments.size(); ++i)
        ++table[assignments[i]][labels[i]];
    long total = 0;
    for (const auto& [cluster, counts] : table) {
        int best = 0;
        for (const auto& [label, c] : counts)
            best = std::max(best, c);
        total += best;
    }
    return static_cast<double>(total) / static_cast<double>(assignments.size());
}

Embedding2d embed_2d(const RowMatrix& samples, std::vector<int> cluster_ids)
{
    const Eigen::Index n = samples.rows();
    if (n < 3)
        throw std::invalid_argument("2-D embedding needs at least 3 samples");
    if (!cluster_ids.empty() && static_cast<Eigen::Index>(cluster_ids.size()) != n)
        throw std::invalid_argument("cluster ids must match the sample count");

    const auto m = feature_moments(samples);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.covariance);
    const Eigen::Index d = samples.cols();
    const Eigen::VectorXd eval = es.eigenvalues().cwiseMax(0.0);
    Embedding2d out;
    out.axes = Eigen::MatrixXd::Zero(d, 2);
    out.cluster_ids = std::move(cluster_ids);
    const double total = eval.sum();
    const double top = eval[d - 1];
    const double second = d >= 2 ? eval[d - 2] : 0.0;
    out.rank_deficient = d < 2 || second <= 1e-12 * std::max(top, 1e-300);

    const int usable = out.rank_deficient ? 1 : 2;
    for (int a = 0; a < usable; ++a) {
        Eigen::VectorXd axis = es.eigenvectors().col(d - 1 - a);
        Eigen::Index arg = 0;
        axis.cwiseAbs().maxCoeff(&arg);
        if (axis[arg] < 0.0)
            axis = -axis;
        out.axes.col(a) = axis;
    }
    const Eigen::MatrixXd centered = samples.rowwise() - m.mean.transpose();
    out.coords = centered * out.axes;
    out.explained_variance = total > 0.0 ? (top + (out.rank_deficient ? 0.0 : second)) / total : 0.0;
    return out;
}

std::vector<double> interior_phi_grid(int count)
{
    if (count < 1)
        throw std::invalid_argument("phi grid needs at least one point");
    if (count == 1)
        return {0.5};
    std::vector<double> grid(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i)
        grid[static_cast<std::size_t>(i)] = 0.05 + 0.9 * i / (count - 1);
    return grid;
}

} // namespace strata
