#ifndef NETCUSUM_DETECTORS_HPP
#define NETCUSUM_DETECTORS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "baseline.hpp"
#include "core.hpp"
#include "decorrelate.hpp"
#include "network.hpp"

namespace netcusum
{

/// Two one-sided CUSUM accumulators of one row.
struct CusumRowState
{
    double c_plus = 0.0;
    double c_minus = 0.0;

    double two_sided() const noexcept { return std::max(c_plus, -c_minus); }
};

/// C+ = max(0, C+ + e - k), C- = min(0, C- + e + k); returns max(C+, -C-).
inline double cusum_update(CusumRowState& state, double score, double k_ref)
{
    state.c_plus = std::max(0.0, state.c_plus + score - k_ref);
    state.c_minus = std::min(0.0, state.c_minus + score + k_ref);
    return state.two_sided();
}

/// Spring length: grows by one (capped at b_max) while the statistic is
/// positive, resets to zero when it returns to zero.
inline int spring_update(int prev, double stat, int b_max)
{
    return stat > 0.0 ? std::min(b_max, prev + 1) : 0;
}

struct StepResult
{
    std::int64_t t = 0;
    double stat = 0.0;
    bool alarm = false;
    int spring = 0;
};

/// Scores one row: raw score at spring 0, decorrelated score otherwise.
class RowScorer
{
public:
    RowScorer() = default;

    explicit RowScorer(RowBaseline baseline)
        : baseline_(std::move(baseline)), blocks_(build_all_blocks(baseline_)), buffer_(baseline_.b_max)
    {
    }

    const RowBaseline& baseline() const noexcept { return baseline_; }
    const GammaBlocks& blocks(int spring) const { return blocks_.at(static_cast<std::size_t>(spring)); }

    double score(const Vector& deviation, int spring) const
    {
        if (spring <= 0)
            return deviation.dot(baseline_.direction);
        const auto& blk = blocks(spring);
        return prediction_residual(deviation, buffer_, blk).dot(baseline_.direction) / blk.scale;
    }

    bool clamped(int spring) const { return spring > 0 && blocks(spring).clamped; }

    void remember(const Vector& deviation) { buffer_.push(deviation); }

    const DeviationBuffer& buffer() const noexcept { return buffer_; }

private:
    RowBaseline baseline_;
    std::vector<GammaBlocks> blocks_;
    DeviationBuffer buffer_;
};

namespace detail
{

inline void check_dimension(const TransitionSnapshot& snap, std::size_t rows)
{
    if (static_cast<std::size_t>(snap.nodes()) != rows)
        throw Error("snapshot dimension does not match baselines");
}

inline Vector probability_row(const TransitionSnapshot& snap, Index i, std::int64_t total)
{
    return snap.counts().row(i).cast<double>().transpose() / static_cast<double>(total);
}

inline std::vector<RowScorer> make_scorers(std::vector<RowBaseline> baselines, int b_max)
{
    std::vector<RowScorer> out;
    out.reserve(baselines.size());
    for (auto& b : baselines) {
        if (b.b_max < b_max)
            throw Error("baseline estimated with fewer lags than B_max");
        b.b_max = b_max;
        b.gamma.resize(static_cast<std::size_t>(b_max) + 1);
        out.emplace_back(std::move(b));
    }
    return out;
}

} // namespace detail

/// Weighted CUSUM over the rows of the transition-probability matrix with a
/// single spring length driven by the weighted statistic.
class Wscusum
{
public:
    Wscusum(std::vector<RowBaseline> baselines, int b_max, double h)
        : scorers_(detail::make_scorers(std::move(baselines), b_max)), rows_(scorers_.size()),
          row_stats_(scorers_.size(), 0.0), b_max_(b_max), h_(h)
    {
    }

    StepResult step(const TransitionSnapshot& snap)
    {
        detail::check_dimension(snap, scorers_.size());
        const CountVector totals = snap.row_totals();
        const std::int64_t grand = totals.sum();
        if (grand == 0) {
            // Nothing moved anywhere: no evidence, state carries over.
            for (auto& s : scorers_)
                s.remember(Vector::Zero(snap.nodes()));
            return {snap.time(), stat_, stat_ > h_, spring_};
        }
        double weighted = 0.0;
        for (std::size_t i = 0; i < scorers_.size(); ++i) {
            auto& scorer = scorers_[i];
            const auto idx = static_cast<Index>(i);
            if (totals(idx) == 0) {
                scorer.remember(Vector::Zero(snap.nodes()));
                continue;
            }
            const Vector dev = detail::probability_row(snap, idx, totals(idx)) - scorer.baseline().mu0;
            const double e = scorer.score(dev, spring_);
            clamps_ += scorer.clamped(spring_) ? 1 : 0;
            row_stats_[i] = cusum_update(rows_[i], e, scorer.baseline().k_ref);
            weighted += static_cast<double>(totals(idx)) / static_cast<double>(grand) * row_stats_[i];
            scorer.remember(dev);
        }
        stat_ = weighted;
        spring_ = spring_update(spring_, stat_, b_max_);
        return {snap.time(), stat_, stat_ > h_, spring_};
    }

    double statistic() const noexcept { return stat_; }
    int spring() const noexcept { return spring_; }
    const std::vector<CusumRowState>& row_states() const noexcept { return rows_; }
    const std::vector<double>& row_statistics() const noexcept { return row_stats_; }
    std::size_t scale_clamps() const noexcept { return clamps_; }

private:
    std::vector<RowScorer> scorers_;
    std::vector<CusumRowState> rows_;
    std::vector<double> row_stats_;
    int b_max_;
    double h_;
    double stat_ = 0.0;
    int spring_ = 0;
    std::size_t clamps_ = 0;
};

/// Top-1 CUSUM family: max over rows of the two-sided row statistic.
/// `Decorrelate` switches on per-row spring lengths; `Counts` monitors raw
/// count rows instead of probability rows.
class TopCusum
{
public:
    TopCusum(std::vector<RowBaseline> baselines, int b_max, double h, bool decorrelate, bool counts)
        : scorers_(detail::make_scorers(std::move(baselines), decorrelate ? b_max : 0)), rows_(scorers_.size()),
          row_stats_(scorers_.size(), 0.0), springs_(scorers_.size(), 0), b_max_(decorrelate ? b_max : 0), h_(h),
          counts_(counts)
    {
    }

    StepResult step(const TransitionSnapshot& snap)
    {
        detail::check_dimension(snap, scorers_.size());
        for (std::size_t i = 0; i < scorers_.size(); ++i) {
            auto& scorer = scorers_[i];
            const auto idx = static_cast<Index>(i);
            Vector x;
            if (counts_) {
                x = snap.counts().row(idx).cast<double>().transpose();
            } else {
                const auto total = snap.row_total(idx);
                if (total == 0) {
                    scorer.remember(Vector::Zero(snap.nodes()));
                    continue;
                }
                x = detail::probability_row(snap, idx, total);
            }
            const Vector dev = x - scorer.baseline().mu0;
            const double e = scorer.score(dev, springs_[i]);
            clamps_ += scorer.clamped(springs_[i]) ? 1 : 0;
            row_stats_[i] = cusum_update(rows_[i], e, scorer.baseline().k_ref);
            springs_[i] = spring_update(springs_[i], row_stats_[i], b_max_);
            scorer.remember(dev);
        }
        const double stat = *std::max_element(row_stats_.begin(), row_stats_.end());
        const int spring = *std::max_element(springs_.begin(), springs_.end());
        return {snap.time(), stat, stat > h_, spring};
    }

    const std::vector<CusumRowState>& row_states() const noexcept { return rows_; }
    const std::vector<double>& row_statistics() const noexcept { return row_stats_; }
    const std::vector<int>& springs() const noexcept { return springs_; }
    std::size_t scale_clamps() const noexcept { return clamps_; }

private:
    std::vector<RowScorer> scorers_;
    std::vector<CusumRowState> rows_;
    std::vector<double> row_stats_;
    std::vector<int> springs_;
    int b_max_;
    double h_;
    bool counts_;
    std::size_t clamps_ = 0;
};

/// Conventional top-1 CUSUM on raw scores.
inline TopCusum make_tcusum(std::vector<RowBaseline> baselines, double h)
{
    return TopCusum(std::move(baselines), 0, h, false, false);
}

/// Decorrelated top-1 CUSUM with per-row spring lengths.
inline TopCusum make_dtcusum(std::vector<RowBaseline> baselines, int b_max, double h)
{
    return TopCusum(std::move(baselines), b_max, h, true, false);
}

/// Decorrelated top-1 CUSUM on count rows.
inline TopCusum make_dtcusum_n(std::vector<CountRowBaseline> baselines, int b_max, double h)
{
    for (const auto& b : baselines)
        if (b.kind != RowKind::Count)
            throw Error("DTCUSUM-n needs count-row baselines");
    return TopCusum(std::move(baselines), b_max, h, true, true);
}

/// EWMA chart on per-row standardised dispersion statistics.
///
/// U_i = (sum_j p_ij / (mu0_ij * n_i) - K) / sigma*_i by default; with
/// `count_form` the numerator uses n_ij / (mu0_ij * n_i) instead, which has
/// mean K and variance sigma*_i^2 under the in-control multinomial.
/// The reported statistic is max_i |G_i| / c_t, where
/// c_t = sqrt(lambda / (2 - lambda) * (1 - (1 - lambda)^{2t})), so an alarm
/// (any |G_i| beyond L * c_t) is equivalent to statistic > L.
class Newma
{
public:
    Newma(std::vector<Vector> mu0_rows, double lambda, double limit, bool count_form = false)
        : mu0_(std::move(mu0_rows)), g_(mu0_.size(), 0.0), lambda_(lambda), limit_(limit), count_form_(count_form)
    {
        if (!(lambda > 0.0 && lambda <= 1.0))
            throw Error("NEWMA lambda must lie in (0, 1]");
        for (const auto& mu : mu0_) {
            if ((mu.array() <= 0.0).any())
                throw Error("NEWMA requires strictly positive IC means");
            const double k = static_cast<double>(mu.size());
            const double factor = ((1.0 - mu.array()) / mu.array()).sum() - k * (k - 1.0);
            if (!(factor > 0.0))
                throw Error("NEWMA variance factor vanishes for a uniform IC mean");
            factors_.push_back(factor);
        }
    }

    static Newma from_baselines(const std::vector<RowBaseline>& baselines, double lambda, double limit,
                                bool count_form = false)
    {
        std::vector<Vector> mu0;
        for (const auto& b : baselines)
            mu0.push_back(b.mu0);
        return Newma(std::move(mu0), lambda, limit, count_form);
    }

    /// Control-limit multiplier c_t for step t >= 1.
    static double limit_factor(double lambda, std::int64_t t)
    {
        return std::sqrt(lambda / (2.0 - lambda) * (1.0 - std::pow(1.0 - lambda, 2.0 * static_cast<double>(t))));
    }

    StepResult step(const TransitionSnapshot& snap)
    {
        detail::check_dimension(snap, mu0_.size());
        ++t_;
        const double k = static_cast<double>(snap.nodes());
        for (std::size_t i = 0; i < mu0_.size(); ++i) {
            const auto idx = static_cast<Index>(i);
            const auto total = snap.row_total(idx);
            if (total == 0)
                continue;
            const double n = static_cast<double>(total);
            double sum = 0.0;
            for (Index j = 0; j < snap.nodes(); ++j) {
                const double c = static_cast<double>(snap.count(idx, j));
                const double p = c / n;
                sum += (count_form_ ? c : p) / (mu0_[i](j) * n);
            }
            const double sd = std::sqrt(factors_[i] / n);
            const double u = (sum - k) / sd;
            g_[i] = (1.0 - lambda_) * g_[i] + lambda_ * u;
        }
        double worst = 0.0;
        for (double g : g_)
            worst = std::max(worst, std::abs(g));
        const double stat = worst / limit_factor(lambda_, t_);
        return {snap.time(), stat, stat > limit_, 0};
    }

    const std::vector<double>& ewma() const noexcept { return g_; }
    std::int64_t steps() const noexcept { return t_; }

private:
    std::vector<Vector> mu0_;
    std::vector<double> factors_;
    std::vector<double> g_;
    double lambda_;
    double limit_;
    bool count_form_;
    std::int64_t t_ = 0;
};

enum class ChartKind
{
    Wscusum,
    Tcusum,
    Dtcusum,
    DtcusumN,
    Newma
};

inline constexpr ChartKind kAllCharts[] = {ChartKind::Wscusum, ChartKind::Tcusum, ChartKind::Dtcusum,
                                           ChartKind::DtcusumN, ChartKind::Newma};

inline std::string_view chart_name(ChartKind kind)
{
    switch (kind) {
    case ChartKind::Wscusum: return "WSCUSUM";
    case ChartKind::Tcusum: return "TCUSUM";
    case ChartKind::Dtcusum: return "DTCUSUM";
    case ChartKind::DtcusumN: return "DTCUSUM-n";
    case ChartKind::Newma: return "NEWMA";
    }
    return "?";
}

inline ChartKind parse_chart(std::string_view name)
{
    std::string lower;
    for (char c : name)
        lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (lower == "wscusum")
        return ChartKind::Wscusum;
    if (lower == "tcusum")
        return ChartKind::Tcusum;
    if (lower == "dtcusum")
        return ChartKind::Dtcusum;
    if (lower == "dtcusum-n" || lower == "dtcusum_n" || lower == "dtcusumn")
        return ChartKind::DtcusumN;
    if (lower == "newma")
        return ChartKind::Newma;
    throw Error("unknown chart: " + std::string(name));
}

/// Which chart to run and its tuning; `limit` is h for the CUSUM family and
/// L for NEWMA.
struct ChartConfig
{
    ChartKind kind = ChartKind::Wscusum;
    double limit = 0.0;
    int b_max = 4;
    double lambda = 0.1;
    bool newma_count_form = false;
};

/// Any of the five charts behind one step interface.
class Detector
{
public:
    Detector(const ChartConfig& config, const NetworkBaseline& baseline) : impl_(make(config, baseline)) {}

    StepResult step(const TransitionSnapshot& snap)
    {
        return std::visit([&](auto& d) { return d.step(snap); }, impl_);
    }

    std::size_t scale_clamps() const
    {
        return std::visit(
            [](const auto& d) -> std::size_t {
                if constexpr (requires { d.scale_clamps(); })
                    return d.scale_clamps();
                else
                    return 0;
            },
            impl_);
    }

private:
    using Impl = std::variant<Wscusum, TopCusum, Newma>;

    static Impl make(const ChartConfig& c, const NetworkBaseline& net)
    {
        const bool needs_counts = c.kind == ChartKind::DtcusumN;
        if (needs_counts ? net.count_rows.empty() : net.probability_rows.empty())
            throw Error("baseline bundle lacks the rows this chart needs");
        switch (c.kind) {
        case ChartKind::Wscusum: return Wscusum(net.probability_rows, c.b_max, c.limit);
        case ChartKind::Tcusum: return make_tcusum(net.probability_rows, c.limit);
        case ChartKind::Dtcusum: return make_dtcusum(net.probability_rows, c.b_max, c.limit);
        case ChartKind::DtcusumN: return make_dtcusum_n(net.count_rows, c.b_max, c.limit);
        case ChartKind::Newma:
            return Newma::from_baselines(net.probability_rows, c.lambda, c.limit, c.newma_count_form);
        }
        throw Error("unknown chart");
    }

    Impl impl_;
};

} // namespace netcusum

#endif // NETCUSUM_DETECTORS_HPP
