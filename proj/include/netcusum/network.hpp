#ifndef NETCUSUM_NETWORK_HPP
#define NETCUSUM_NETWORK_HPP

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "core.hpp"

namespace netcusum
{

/// Flow counts between K nodes during one time bucket: counts(i, j) units
/// moved from node i to node j.
class TransitionSnapshot
{
public:
    TransitionSnapshot() = default;

    TransitionSnapshot(std::int64_t t, CountMatrix counts)
        : t_(t), counts_(std::move(counts))
    {
        if (counts_.rows() != counts_.cols())
            throw Error("transition matrix must be square");
        if (counts_.rows() < 2)
            throw Error("transition matrix needs at least two nodes");
        if ((counts_.array() < 0).any())
            throw Error("transition counts must be nonnegative");
    }

    /// All-zero K x K snapshot.
    static TransitionSnapshot zeros(std::int64_t t, Index nodes)
    {
        return TransitionSnapshot(t, CountMatrix::Zero(nodes, nodes));
    }

    std::int64_t time() const noexcept { return t_; }
    Index nodes() const noexcept { return counts_.rows(); }
    const CountMatrix& counts() const noexcept { return counts_; }
    std::int64_t count(Index i, Index j) const { return counts_(i, j); }

    std::int64_t row_total(Index i) const { return counts_.row(i).sum(); }
    CountVector row_totals() const { return counts_.rowwise().sum(); }
    std::int64_t total() const { return counts_.sum(); }

    void add(Index i, Index j, std::int64_t n = 1) { counts_(i, j) += n; }

    friend bool operator==(const TransitionSnapshot& a, const TransitionSnapshot& b)
    {
        return a.t_ == b.t_ && a.counts_.rows() == b.counts_.rows() &&
               a.counts_ == b.counts_;
    }

private:
    std::int64_t t_ = 0;
    CountMatrix counts_;
};

/// Row-normalised transition probabilities. Rows with no outgoing flow are
/// flagged invalid and hold zeros; consumers must check row_valid.
struct ProbabilitySnapshot
{
    std::int64_t t = 0;
    Matrix probs;
    CountVector row_totals;
    std::vector<bool> row_valid;

    Index nodes() const noexcept { return probs.rows(); }
    Vector row(Index i) const { return probs.row(i).transpose(); }
};

inline ProbabilitySnapshot to_probability(const TransitionSnapshot& snapshot)
{
    const Index k = snapshot.nodes();
    ProbabilitySnapshot out;
    out.t = snapshot.time();
    out.probs = Matrix::Zero(k, k);
    out.row_totals = snapshot.row_totals();
    out.row_valid.assign(static_cast<std::size_t>(k), false);
    for (Index i = 0; i < k; ++i) {
        const std::int64_t n = out.row_totals(i);
        if (n == 0)
            continue;
        out.row_valid[static_cast<std::size_t>(i)] = true;
        for (Index j = 0; j < k; ++j)
            out.probs(i, j) = static_cast<double>(snapshot.count(i, j)) / static_cast<double>(n);
    }
    return out;
}

/// Share of the snapshot's total flow leaving each node.
inline Vector row_weights(const CountVector& row_totals)
{
    const std::int64_t total = row_totals.sum();
    if (total <= 0)
        throw Error("degenerate snapshot");
    return row_totals.cast<double>() / static_cast<double>(total);
}

inline Vector row_weights(const TransitionSnapshot& snapshot)
{
    return row_weights(snapshot.row_totals());
}

} // namespace netcusum

#endif // NETCUSUM_NETWORK_HPP
