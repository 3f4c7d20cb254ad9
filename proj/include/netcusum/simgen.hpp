#ifndef NETCUSUM_SIMGEN_HPP
#define NETCUSUM_SIMGEN_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>

#include "core.hpp"
#include "network.hpp"

namespace netcusum
{

using Rng = std::mt19937_64;

/// Independent generator stream for (seed, replication, substream).
inline Rng make_stream(std::uint64_t seed, std::uint64_t rep, std::uint64_t substream)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(rep), static_cast<std::uint32_t>(rep >> 32),
                      static_cast<std::uint32_t>(substream), static_cast<std::uint32_t>(substream >> 32)};
    return Rng(seq);
}

/// Multinomial(n; p) by sequential conditional binomials.
template <class Gen>
CountVector multinomial_sample(std::int64_t n, const Vector& p, Gen& rng)
{
    if (n < 0)
        throw Error("multinomial total must be nonnegative");
    if (p.size() == 0 || !p.allFinite() || (p.array() < 0.0).any() || std::abs(p.sum() - 1.0) > 1e-9)
        throw Error("multinomial probabilities must be a probability vector");
    CountVector out = CountVector::Zero(p.size());
    std::int64_t left = n;
    double mass = 1.0;
    for (Index j = 0; j + 1 < p.size() && left > 0; ++j) {
        const double q = mass > 0.0 ? std::clamp(p(j) / mass, 0.0, 1.0) : 0.0;
        std::binomial_distribution<std::int64_t> draw(left, q);
        out(j) = draw(rng);
        left -= out(j);
        mass -= p(j);
    }
    out(p.size() - 1) += left;
    return out;
}

enum class Condition
{
    I,      ///< counts AR(1)
    II,     ///< probabilities AR(1), fixed totals
    III,    ///< totals AR(1), fixed probabilities
    Double, ///< probabilities and totals AR(1)
    RowCorr ///< row 2 probability driven by row 1
};

inline std::string_view condition_name(Condition c)
{
    switch (c) {
    case Condition::I: return "I";
    case Condition::II: return "II";
    case Condition::III: return "III";
    case Condition::Double: return "Double";
    case Condition::RowCorr: return "RowCorr";
    }
    return "?";
}

inline Condition parse_condition(std::string_view s)
{
    if (s == "I" || s == "1")
        return Condition::I;
    if (s == "II" || s == "2")
        return Condition::II;
    if (s == "III" || s == "3")
        return Condition::III;
    if (s == "Double" || s == "double")
        return Condition::Double;
    if (s == "RowCorr" || s == "rowcorr")
        return Condition::RowCorr;
    throw Error("unknown condition: " + std::string(s));
}

/// Where the AR(1) noise of the probability and total recursions is centred.
enum class NoiseCenter
{
    /// At the previous value, as the recursions are written. The process is
    /// then a random walk (reflected by the clamps).
    Previous,
    /// At the stationary target (true mean or initial total): a proper
    /// mean-reverting AR(1).
    Stationary
};

/// 2 x 2 simulation scenario.
struct ScenarioConfig
{
    Condition condition = Condition::II;
    std::array<std::int64_t, 2> initial_totals{100, 100};
    double ic_mu11 = 0.45;
    double ic_mu22 = 0.05;
    double oc_mu11 = 0.5;
    double oc_mu22 = 0.5;
    double true_mu11 = 0.45;
    double true_mu22 = 0.05;
    std::uint64_t seed = 1;
    NoiseCenter noise_center = NoiseCenter::Previous;
    double prob_noise_var = 1e-4;
    double count_noise_var = 16.0;
    double total_noise_var = 100.0;

    static Matrix mean_matrix(double mu11, double mu22)
    {
        Matrix m(2, 2);
        m << mu11, 1.0 - mu11, 1.0 - mu22, mu22;
        return m;
    }

    Matrix ic_mean() const { return mean_matrix(ic_mu11, ic_mu22); }
    Matrix oc_target() const { return mean_matrix(oc_mu11, oc_mu22); }
    Matrix true_mean() const { return mean_matrix(true_mu11, true_mu22); }

    /// Short label such as `II(100/100)` (no commas, so it can sit in a CSV field).
    std::string label() const
    {
        return std::string(condition_name(condition)) + "(" + std::to_string(initial_totals[0]) + "/" +
               std::to_string(initial_totals[1]) + ")";
    }

    void validate() const
    {
        for (double v : {ic_mu11, ic_mu22, oc_mu11, oc_mu22, true_mu11, true_mu22})
            if (!(v >= 0.0 && v <= 1.0))
                throw Error("scenario means must lie in [0, 1]");
        if (initial_totals[0] <= 0 || initial_totals[1] <= 0)
            throw Error("initial totals must be positive");
        if (prob_noise_var < 0.0 || count_noise_var < 0.0 || total_noise_var < 0.0)
            throw Error("noise variances must be nonnegative");
    }
};

/// Same scenario with the row-1 mean moved to `mu11_new`.
inline ScenarioConfig inject_shift(const ScenarioConfig& cfg, double mu11_new)
{
    if (!(mu11_new > 0.0 && mu11_new < 1.0))
        throw Error("shifted mu11 must lie in (0, 1)");
    ScenarioConfig out = cfg;
    out.true_mu11 = mu11_new;
    return out;
}

struct GenState
{
    /// Counts of the last emitted snapshot (Condition I recursion input).
    std::array<std::array<double, 2>, 2> counts{};
    double p11 = 0.0;
    double p22 = 0.0;
    std::array<std::int64_t, 2> totals{0, 0};
    std::int64_t t = 0;
};

/// One scenario's data-generating process.
class Generator
{
public:
    Generator(const ScenarioConfig& cfg, Rng rng) : cfg_(cfg), rng_(std::move(rng))
    {
        cfg_.validate();
        const auto n1 = cfg_.initial_totals[0];
        const auto n2 = cfg_.initial_totals[1];
        const double n11 = std::round(cfg_.true_mu11 * static_cast<double>(n1));
        const double n22 = std::round(cfg_.true_mu22 * static_cast<double>(n2));
        state_.counts = {{{n11, static_cast<double>(n1) - n11}, {static_cast<double>(n2) - n22, n22}}};
        state_.p11 = cfg_.true_mu11;
        state_.p22 = cfg_.true_mu22;
        state_.totals = cfg_.initial_totals;
    }

    const ScenarioConfig& config() const noexcept { return cfg_; }
    const GenState& state() const noexcept { return state_; }
    Rng& rng() noexcept { return rng_; }

    void set_rng(Rng rng) { rng_ = std::move(rng); }

    /// Switches to the shifted scenario without resetting the state. The
    /// current row-1 probability moves by the same amount as the mean.
    void retarget(const ScenarioConfig& shifted)
    {
        shifted.validate();
        state_.p11 = std::clamp(state_.p11 + (shifted.true_mu11 - cfg_.true_mu11), 0.0, 1.0);
        state_.p22 = std::clamp(state_.p22 + (shifted.true_mu22 - cfg_.true_mu22), 0.0, 1.0);
        cfg_ = shifted;
    }

    TransitionSnapshot step()
    {
        ++state_.t;
        switch (cfg_.condition) {
        case Condition::I: step_counts(); break;
        case Condition::II:
            step_probs(false);
            allocate();
            break;
        case Condition::III:
            step_totals();
            allocate();
            break;
        case Condition::Double:
            step_probs(false);
            step_totals();
            allocate();
            break;
        case Condition::RowCorr:
            step_probs(true);
            step_totals();
            allocate();
            break;
        }
        CountMatrix c(2, 2);
        for (Index i = 0; i < 2; ++i)
            for (Index j = 0; j < 2; ++j)
                c(i, j) = static_cast<std::int64_t>(state_.counts[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
        return TransitionSnapshot(state_.t, std::move(c));
    }

private:
    double normal(double mean, double var)
    {
        if (var == 0.0)
            return mean;
        std::normal_distribution<double> d(mean, std::sqrt(var));
        return d(rng_);
    }

    static double clamp01(double v) { return std::min(1.0, std::max(v, 0.0)); }

    static double floor0(double v) { return std::max(0.0, std::floor(v)); }

    void step_counts()
    {
        const double n1 = static_cast<double>(cfg_.initial_totals[0]);
        const double n2 = static_cast<double>(cfg_.initial_totals[1]);
        const double v = cfg_.count_noise_var;
        auto& c = state_.counts;
        const double e11 = normal(cfg_.true_mu11 * n1, v);
        const double e12 = normal(n1 - cfg_.true_mu11 * n1, v);
        const double e21 = normal(n2 - cfg_.true_mu22 * n2, v);
        const double e22 = normal(cfg_.true_mu22 * n2, v);
        c[0][0] = floor0(0.5 * c[0][0] + 0.5 * e11);
        c[0][1] = floor0(0.5 * c[0][1] + 0.5 * e12);
        c[1][0] = floor0(0.9 * c[1][0] + 0.1 * e21);
        c[1][1] = floor0(0.9 * c[1][1] + 0.1 * e22);
        state_.totals = {static_cast<std::int64_t>(c[0][0] + c[0][1]), static_cast<std::int64_t>(c[1][0] + c[1][1])};
    }

    void step_probs(bool row_coupled)
    {
        const bool prev = cfg_.noise_center == NoiseCenter::Previous;
        const double v = cfg_.prob_noise_var;
        const double p11 = state_.p11;
        const double p22 = state_.p22;
        if (row_coupled) {
            const double e1 = normal(prev ? p11 : cfg_.true_mu11, v);
            const double e2 = normal(prev ? p11 : cfg_.true_mu22, v);
            state_.p11 = clamp01(0.5 * p11 + 0.5 * e1);
            state_.p22 = clamp01(0.9 * p11 + 0.1 * e2);
        } else {
            const double e1 = normal(prev ? p11 : cfg_.true_mu11, v);
            const double e2 = normal(prev ? p22 : cfg_.true_mu22, v);
            state_.p11 = clamp01(0.5 * p11 + 0.5 * e1);
            state_.p22 = clamp01(0.9 * p22 + 0.1 * e2);
        }
    }

    void step_totals()
    {
        const bool prev = cfg_.noise_center == NoiseCenter::Previous;
        const double v = cfg_.total_noise_var;
        const double n1 = static_cast<double>(state_.totals[0]);
        const double n2 = static_cast<double>(state_.totals[1]);
        const double e1 = normal(prev ? n1 : static_cast<double>(cfg_.initial_totals[0]), v);
        const double e2 = normal(prev ? n2 : static_cast<double>(cfg_.initial_totals[1]), v);
        state_.totals = {static_cast<std::int64_t>(floor0(0.5 * n1 + 0.5 * e1)),
                         static_cast<std::int64_t>(floor0(0.9 * n2 + 0.1 * e2))};
    }

    void allocate()
    {
        Vector p1(2), p2(2);
        p1 << state_.p11, 1.0 - state_.p11;
        p2 << 1.0 - state_.p22, state_.p22;
        const CountVector r1 = multinomial_sample(state_.totals[0], p1, rng_);
        const CountVector r2 = multinomial_sample(state_.totals[1], p2, rng_);
        state_.counts = {{{static_cast<double>(r1(0)), static_cast<double>(r1(1))},
                          {static_cast<double>(r2(0)), static_cast<double>(r2(1))}}};
    }

    ScenarioConfig cfg_;
    Rng rng_;
    GenState state_;
};

} // namespace netcusum

#endif // NETCUSUM_SIMGEN_HPP
