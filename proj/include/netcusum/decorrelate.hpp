#ifndef NETCUSUM_DECORRELATE_HPP
#define NETCUSUM_DECORRELATE_HPP

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "baseline.hpp"
#include "core.hpp"

namespace netcusum
{

/// The last few deviation vectors x_{t-1}, x_{t-2}, ... of one row.
class DeviationBuffer
{
public:
    DeviationBuffer() = default;
    explicit DeviationBuffer(int capacity) : slots_(static_cast<std::size_t>(std::max(capacity, 0))) {}

    int capacity() const noexcept { return static_cast<int>(slots_.size()); }
    int size() const noexcept { return size_; }

    void push(const Vector& deviation)
    {
        if (slots_.empty())
            return;
        head_ = (head_ + 1) % slots_.size();
        slots_[head_] = deviation;
        size_ = std::min<int>(size_ + 1, capacity());
    }

    /// Deviation observed `lag` steps ago (lag 1 is the most recent push).
    const Vector& lagged(int lag) const
    {
        if (lag < 1 || lag > size_)
            throw Error("deviation buffer holds fewer entries than requested");
        const std::size_t n = slots_.size();
        return slots_[(head_ + n - static_cast<std::size_t>(lag - 1)) % n];
    }

    void clear() noexcept { size_ = 0; }

private:
    std::vector<Vector> slots_;
    std::size_t head_ = 0;
    int size_ = 0;
};

/// Linear-predictor blocks for a spring length B, built from normalised lag
/// correlations rho(q) = gamma(q) / gamma(0):
///
///   gamma_hat(a, b) = rho(|a - b|),  sigma_hat(b) = rho(B - b),
///   weights = gamma_hat^{-1} sigma_hat,  scale = 1 - sigma_hat' weights.
///
/// Index b = 0 pairs with the oldest deviation x_{t-B}.
struct GammaBlocks
{
    int requested = 0;
    /// Order actually used; smaller than `requested` when gamma_hat was singular.
    int order = 0;
    Matrix gamma_hat;
    Vector sigma_hat;
    Vector weights;
    double scale = 1.0;
    bool clamped = false;

    bool reduced() const noexcept { return order < requested; }
};

namespace detail
{

constexpr double kScaleFloor = 1e-6;
constexpr double kToeplitzSingular = 1e-10;

} // namespace detail

/// Solves the Toeplitz normal equations by the Levinson-Durbin recursion.
/// If gamma_hat of order B is numerically singular (some lower-order
/// prediction error is ~0) the order is reduced until it is not.
inline GammaBlocks build_gamma_blocks(std::span<const double> gamma, int order)
{
    if (order < 0 || static_cast<std::size_t>(order) >= gamma.size())
        throw Error("spring length exceeds available lags");
    if (!(gamma[0] > 0.0))
        throw Error("gamma(0) must be positive");

    GammaBlocks blocks;
    blocks.requested = order;

    std::vector<double> rho(static_cast<std::size_t>(order) + 1);
    for (int q = 0; q <= order; ++q)
        rho[static_cast<std::size_t>(q)] = gamma[static_cast<std::size_t>(q)] / gamma[0];

    // a[j-1] is the coefficient on x_{t-j}; err is the normalised one-step
    // prediction error of the current order.
    std::vector<double> a;
    std::vector<double> prev;
    double err = 1.0;
    int usable = 0;
    for (int n = 1; n <= order; ++n) {
        if (!(err > detail::kToeplitzSingular))
            break;
        double num = rho[static_cast<std::size_t>(n)];
        for (int j = 1; j < n; ++j)
            num -= a[static_cast<std::size_t>(j - 1)] * rho[static_cast<std::size_t>(n - j)];
        const double kappa = num / err;
        prev = a;
        a.push_back(kappa);
        for (int j = 1; j < n; ++j)
            a[static_cast<std::size_t>(j - 1)] = prev[static_cast<std::size_t>(j - 1)] - kappa * prev[static_cast<std::size_t>(n - j - 1)];
        err *= (1.0 - kappa * kappa);
        usable = n;
    }

    const int b = usable;
    blocks.order = b;
    blocks.gamma_hat.resize(b, b);
    blocks.sigma_hat.resize(b);
    blocks.weights.resize(b);
    for (int r = 0; r < b; ++r) {
        for (int c = 0; c < b; ++c)
            blocks.gamma_hat(r, c) = rho[static_cast<std::size_t>(std::abs(r - c))];
        blocks.sigma_hat(r) = rho[static_cast<std::size_t>(b - r)];
        blocks.weights(r) = a.empty() ? 0.0 : a[static_cast<std::size_t>(b - r - 1)];
    }
    double scale = b == 0 ? 1.0 : 1.0 - blocks.sigma_hat.dot(blocks.weights);
    if (!(scale >= detail::kScaleFloor)) {
        scale = detail::kScaleFloor;
        blocks.clamped = true;
    }
    blocks.scale = std::min(scale, 1.0);
    return blocks;
}

/// Predictor blocks for every spring length 0..b_max of one row.
inline std::vector<GammaBlocks> build_all_blocks(const RowBaseline& baseline)
{
    std::vector<GammaBlocks> out;
    out.reserve(baseline.gamma.size());
    for (int b = 0; b <= baseline.b_max; ++b)
        out.push_back(build_gamma_blocks(baseline.gamma, b));
    return out;
}

/// e = (x - mu0)' Sigma^- (mu1 - mu0).
inline double raw_score(const Vector& row, const RowBaseline& baseline)
{
    return (row - baseline.mu0).dot(baseline.direction);
}

/// Deviation minus its linear prediction from the last `blocks.order`
/// buffered deviations.
inline Vector prediction_residual(const Vector& deviation, const DeviationBuffer& buffer, const GammaBlocks& blocks)
{
    if (buffer.size() < blocks.order)
        throw Error("deviation buffer shorter than spring length");
    Vector d = deviation;
    for (int b = 0; b < blocks.order; ++b)
        d.noalias() -= blocks.weights(b) * buffer.lagged(blocks.order - b);
    return d;
}

/// Decorrelated score: the prediction residual projected on the shift
/// direction under Sigma~ = scale * Sigma.
inline double decorrelated_score(const Vector& row, const DeviationBuffer& buffer, const GammaBlocks& blocks,
                                 const RowBaseline& baseline)
{
    const Vector d = prediction_residual(row - baseline.mu0, buffer, blocks);
    return d.dot(baseline.direction) / blocks.scale;
}

} // namespace netcusum

#endif // NETCUSUM_DECORRELATE_HPP
