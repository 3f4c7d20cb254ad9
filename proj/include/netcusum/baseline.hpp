#ifndef NETCUSUM_BASELINE_HPP
#define NETCUSUM_BASELINE_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "core.hpp"
#include "network.hpp"

namespace netcusum
{

/// How a covariance was turned into a metric for quadratic forms.
///
/// Simplex rows (probabilities) have deviations summing to zero, so their
/// covariance is singular; the last coordinate is dropped and the remaining
/// (K-1) x (K-1) block is inverted. Count rows keep all K coordinates and use
/// the (pseudo-)inverse of the full matrix.
struct Reduction
{
    /// Coordinate removed before inversion, or nullopt for the full metric.
    std::optional<Index> dropped;
    /// Ridge added to the diagonal before inversion (0 when none was needed).
    double ridge = 0.0;
    /// Rank kept by the full metric; equals the inverted dimension otherwise.
    Index rank = 0;

    friend bool operator==(const Reduction&, const Reduction&) = default;
};

/// Inverse metric Sigma^- over the retained coordinates.
struct CovarianceMetric
{
    Matrix inverse;
    Reduction reduction;

    Index retained() const { return inverse.rows(); }

    /// Restriction of a K-vector to the retained coordinates.
    Vector restrict(const Vector& x) const
    {
        return x.head(retained());
    }

    /// x' Sigma^- y evaluated on the retained coordinates.
    double quadratic(const Vector& x, const Vector& y) const
    {
        return restrict(x).dot(inverse * restrict(y));
    }

    /// Sigma^- y padded back to K coordinates (dropped coordinate = 0), so
    /// that x' Sigma^- y == x.dot(lift(y)).
    Vector lift(const Vector& y) const
    {
        Vector out = Vector::Zero(y.size());
        out.head(retained()) = inverse * restrict(y);
        return out;
    }
};

namespace detail
{

constexpr double kSingularRatio = 1e-12;
constexpr double kRidgeFactor = 1e-10;

inline Matrix symmetrize(const Matrix& m)
{
    return 0.5 * (m + m.transpose());
}

} // namespace detail

/// Inverse of the covariance restricted to the first K-1 coordinates.
/// Adds ridge 1e-10 * trace / (K-1) when the block is numerically singular.
inline CovarianceMetric reduce_covariance(const Matrix& sigma)
{
    const Index k = sigma.rows();
    if (k < 2 || sigma.cols() != k)
        throw Error("covariance must be square with K >= 2");
    if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, sigma.cwiseAbs().maxCoeff()))
        throw Error("covariance must be symmetric");

    const Index r = k - 1;
    Matrix block = detail::symmetrize(sigma.topLeftCorner(r, r));
    const double trace = sigma.trace();
    if (!(trace > 0.0) || !std::isfinite(trace))
        throw Error("degenerate covariance");

    CovarianceMetric metric;
    metric.reduction.dropped = r;
    metric.reduction.rank = r;

    Eigen::SelfAdjointEigenSolver<Matrix> eig(block, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(hi > 0.0))
        throw Error("degenerate covariance");
    if (lo <= detail::kSingularRatio * hi) {
        metric.reduction.ridge = detail::kRidgeFactor * trace / static_cast<double>(r);
        block.diagonal().array() += metric.reduction.ridge;
    }
    Eigen::LLT<Matrix> llt(block);
    if (llt.info() != Eigen::Success)
        throw Error("degenerate covariance");
    metric.inverse = detail::symmetrize(llt.solve(Matrix::Identity(r, r)));
    return metric;
}

/// Inverse of a full covariance; falls back to the pseudo-inverse on the
/// numerically non-null eigenspace when the matrix is rank deficient (e.g.
/// count rows whose totals never change).
inline CovarianceMetric full_covariance_metric(const Matrix& sigma)
{
    const Index k = sigma.rows();
    if (k < 1 || sigma.cols() != k)
        throw Error("covariance must be square");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(detail::symmetrize(sigma));
    const Vector& values = eig.eigenvalues();
    const double hi = values.maxCoeff();
    if (!(hi > 0.0) || !std::isfinite(hi))
        throw Error("degenerate covariance");
    Vector inv = Vector::Zero(k);
    Index rank = 0;
    for (Index i = 0; i < k; ++i) {
        if (values(i) > 1e-10 * hi) {
            inv(i) = 1.0 / values(i);
            ++rank;
        }
    }
    CovarianceMetric metric;
    metric.reduction.rank = rank;
    metric.inverse = detail::symmetrize(eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose());
    return metric;
}

enum class RowKind
{
    Probability,
    Count
};

/// Phase-I parameters of one row of the network.
struct RowBaseline
{
    RowKind kind = RowKind::Probability;
    Index row = 0;
    Vector mu0;
    Vector mu1;
    Matrix sigma;
    CovarianceMetric metric;
    /// Sigma^- (mu1 - mu0) padded to K coordinates; scores are deviation.dot(direction).
    Vector direction;
    double k_ref = 0.0;
    /// Lag autocovariances gamma(0..b_max).
    std::vector<double> gamma;
    int b_max = 0;
    Index m = 0;

    Index nodes() const { return mu0.size(); }

    void refresh_direction()
    {
        direction = metric.lift(mu1 - mu0);
        k_ref = std::max(0.0, 0.5 * (mu1 - mu0).dot(direction));
    }
};

/// Same shape as RowBaseline, over raw count rows (full metric).
using CountRowBaseline = RowBaseline;

/// Inner-product autocovariance at lag q:
/// (1/(m-q)) sum_{s=0}^{m-1-q} (x_s - mu0)'(x_{s+q} - mu0).
inline double estimate_autocov(std::span<const Vector> rows, const Vector& mu0, int q)
{
    const auto m = static_cast<std::ptrdiff_t>(rows.size());
    if (q < 0 || q >= m)
        throw Error("autocovariance lag must satisfy 0 <= q < m");
    double acc = 0.0;
    for (std::ptrdiff_t s = 0; s + q < m; ++s)
        acc += (rows[static_cast<std::size_t>(s)] - mu0).dot(rows[static_cast<std::size_t>(s + q)] - mu0);
    return acc / static_cast<double>(m - q);
}

namespace detail
{

inline Index min_ic_length(int b_max)
{
    return std::max<Index>(30, 5 * static_cast<Index>(b_max));
}

/// Shared estimator. `valid[s] == false` marks observations with no
/// information (zero-traffic rows): they are left out of the mean and
/// covariance and enter the autocovariance sums as zero deviations.
inline RowBaseline estimate_masked(std::span<const Vector> rows, const std::vector<bool>& valid,
                                   const Vector& mu1, int b_max, RowKind kind, Index row_index)
{
    if (b_max < 0)
        throw Error("B_max must be nonnegative");
    const Index m = static_cast<Index>(rows.size());
    Index used = 0;
    for (bool v : valid)
        used += v ? 1 : 0;
    if (m < min_ic_length(b_max) || used < min_ic_length(b_max) || m <= b_max)
        throw Error("insufficient IC data");
    const Index k = rows[0].size();
    if (mu1.size() != k)
        throw Error("mu1 dimension mismatch");

    RowBaseline b;
    b.kind = kind;
    b.row = row_index;
    b.m = m;
    b.b_max = b_max;
    b.mu1 = mu1;

    b.mu0 = Vector::Zero(k);
    for (Index s = 0; s < m; ++s) {
        const auto& x = rows[static_cast<std::size_t>(s)];
        if (x.size() != k)
            throw Error("IC rows have inconsistent dimension");
        if (valid[static_cast<std::size_t>(s)])
            b.mu0 += x;
    }
    b.mu0 /= static_cast<double>(used);

    b.sigma = Matrix::Zero(k, k);
    for (Index s = 0; s < m; ++s) {
        if (!valid[static_cast<std::size_t>(s)])
            continue;
        const Vector d = rows[static_cast<std::size_t>(s)] - b.mu0;
        b.sigma.noalias() += d * d.transpose();
    }
    b.sigma = symmetrize(b.sigma / static_cast<double>(used - 1));
    // Constant rows leave only rounding noise from the mean in sigma.
    const double resolution = 1e-12 * std::max(1.0, b.mu0.cwiseAbs().maxCoeff());
    if (!(b.sigma.trace() > resolution * resolution * static_cast<double>(k)))
        throw Error("degenerate covariance");

    b.metric = kind == RowKind::Probability ? reduce_covariance(b.sigma) : full_covariance_metric(b.sigma);
    b.refresh_direction();

    std::vector<Vector> devs;
    devs.reserve(static_cast<std::size_t>(m));
    for (Index s = 0; s < m; ++s)
        devs.push_back(valid[static_cast<std::size_t>(s)] ? Vector(rows[static_cast<std::size_t>(s)] - b.mu0)
                                                          : Vector(Vector::Zero(k)));
    const Vector zero = Vector::Zero(k);
    b.gamma.resize(static_cast<std::size_t>(b_max) + 1);
    for (int q = 0; q <= b_max; ++q)
        b.gamma[static_cast<std::size_t>(q)] = estimate_autocov(devs, zero, q);
    return b;
}

inline void check_probability_row(const Vector& x, const char* what)
{
    if ((x.array() < -1e-12).any() || (x.array() > 1.0 + 1e-12).any() || std::abs(x.sum() - 1.0) > 1e-9)
        throw Error(std::string(what) + " must be a probability row");
}

} // namespace detail

/// Phase-I estimate for one probability row from m in-control observations.
inline RowBaseline estimate_row_baseline(std::span<const Vector> ic_rows, const Vector& mu1, int b_max,
                                         Index row_index = 0)
{
    if (ic_rows.empty())
        throw Error("insufficient IC data");
    for (const auto& x : ic_rows)
        detail::check_probability_row(x, "IC row");
    detail::check_probability_row(mu1, "mu1");
    return detail::estimate_masked(ic_rows, std::vector<bool>(ic_rows.size(), true), mu1, b_max,
                                   RowKind::Probability, row_index);
}

/// Phase-I estimate for one count row (no simplex constraint).
inline CountRowBaseline estimate_count_baseline(std::span<const Vector> ic_rows, const Vector& mu1, int b_max,
                                                Index row_index = 0)
{
    if (ic_rows.empty())
        throw Error("insufficient IC data");
    return detail::estimate_masked(ic_rows, std::vector<bool>(ic_rows.size(), true), mu1, b_max,
                                   RowKind::Count, row_index);
}

/// Baselines for every row of a network, for both probability and count charts.
struct NetworkBaseline
{
    Index nodes = 0;
    int b_max = 0;
    Index m = 0;
    std::vector<RowBaseline> probability_rows;
    std::vector<CountRowBaseline> count_rows;
};

enum class BaselineParts
{
    Probability,
    Count,
    Both
};

/// Estimates per-row baselines from in-control snapshots. `mu1` is the
/// expected out-of-control probability matrix (one row per node); count rows
/// target mu1 scaled by the row's mean Phase-I total.
inline NetworkBaseline estimate_network_baseline(std::span<const TransitionSnapshot> ic, const Matrix& mu1, int b_max,
                                                 BaselineParts parts = BaselineParts::Both)
{
    if (ic.empty())
        throw Error("insufficient IC data");
    const Index k = ic.front().nodes();
    if (mu1.rows() != k || mu1.cols() != k)
        throw Error("mu1 dimension mismatch");

    NetworkBaseline net;
    net.nodes = k;
    net.b_max = b_max;
    net.m = static_cast<Index>(ic.size());

    std::vector<Vector> rows(ic.size());
    std::vector<bool> valid(ic.size());
    for (Index i = 0; i < k; ++i) {
        if (parts != BaselineParts::Count) {
            for (std::size_t s = 0; s < ic.size(); ++s) {
                if (ic[s].nodes() != k)
                    throw Error("IC snapshots have inconsistent dimension");
                const auto total = ic[s].row_total(i);
                valid[s] = total > 0;
                rows[s] = valid[s] ? Vector(ic[s].counts().row(i).cast<double>().transpose() / static_cast<double>(total))
                                   : Vector(Vector::Zero(k));
            }
            const Vector target = mu1.row(i).transpose();
            detail::check_probability_row(target, "mu1");
            net.probability_rows.push_back(
                detail::estimate_masked(rows, valid, target, b_max, RowKind::Probability, i));
        }
        if (parts != BaselineParts::Probability) {
            double mean_total = 0.0;
            for (std::size_t s = 0; s < ic.size(); ++s) {
                rows[s] = ic[s].counts().row(i).cast<double>().transpose();
                mean_total += static_cast<double>(ic[s].row_total(i));
            }
            mean_total /= static_cast<double>(ic.size());
            const Vector target = mu1.row(i).transpose() * mean_total;
            net.count_rows.push_back(detail::estimate_masked(rows, std::vector<bool>(ic.size(), true), target, b_max,
                                                             RowKind::Count, i));
        }
    }
    return net;
}

} // namespace netcusum

#endif // NETCUSUM_BASELINE_HPP
