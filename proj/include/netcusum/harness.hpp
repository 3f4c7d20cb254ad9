#ifndef NETCUSUM_HARNESS_HPP
#define NETCUSUM_HARNESS_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "baseline.hpp"
#include "core.hpp"
#include "detail/text.hpp"
#include "detectors.hpp"
#include "network.hpp"
#include "series.hpp"
#include "simgen.hpp"

namespace netcusum
{

/// Calls fn(i) for i in [0, n) on `workers` threads. Work is handed out by an
/// atomic counter; callers write results by index, so output never depends on
/// scheduling. The first exception thrown by any task is rethrown.
inline void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn)
{
    const auto threads = static_cast<std::size_t>(std::max(1, workers));
    if (threads == 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n || failed.load())
                return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error)
                    error = std::current_exception();
                failed = true;
            }
        }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(threads, n); ++w)
        pool.emplace_back(work);
    for (auto& th : pool)
        th.join();
    if (error)
        std::rethrow_exception(error);
}

inline int default_workers()
{
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

/// Monte Carlo setup shared by run-length simulation and calibration.
struct MonteCarloSpec
{
    /// In-control scenario; shifts are applied on top of it.
    ScenarioConfig scenario;
    ChartConfig chart;
    Index phase1_length = 1000;
    std::int64_t horizon = 100000;
    int workers = 1;
    /// Estimate one baseline (replication 0) and reuse it for all replications.
    bool shared_baseline = false;
    /// Phase-I redraws allowed when the IC sample is degenerate.
    int phase1_attempts = 20;
};

/// Phase-I outcome of one replication: its baselines and the generator
/// positioned at the end of the IC sample.
struct PreparedRep
{
    NetworkBaseline baseline;
    Generator generator;
};

namespace detail
{

inline BaselineParts parts_for(ChartKind kind)
{
    return kind == ChartKind::DtcusumN ? BaselineParts::Count : BaselineParts::Probability;
}

inline constexpr std::uint64_t kPhase2Stream = 1;

inline std::uint64_t phase1_stream(int attempt)
{
    return attempt == 0 ? 0 : static_cast<std::uint64_t>(attempt) + 1;
}

} // namespace detail

/// Draws m IC snapshots for replication `rep` and estimates baselines,
/// redrawing (on a fresh substream) when the sample is degenerate.
inline PreparedRep prepare_rep(const MonteCarloSpec& spec, std::uint64_t rep)
{
    ScenarioConfig ic = spec.scenario;
    ic.true_mu11 = ic.ic_mu11;
    ic.true_mu22 = ic.ic_mu22;
    std::string last_error = "no attempts";
    for (int attempt = 0; attempt < std::max(1, spec.phase1_attempts); ++attempt) {
        Generator gen(ic, make_stream(ic.seed, rep, detail::phase1_stream(attempt)));
        std::vector<TransitionSnapshot> sample;
        sample.reserve(static_cast<std::size_t>(spec.phase1_length));
        for (Index s = 0; s < spec.phase1_length; ++s)
            sample.push_back(gen.step());
        try {
            auto baseline = estimate_network_baseline(sample, ic.oc_target(), spec.chart.b_max,
                                                      detail::parts_for(spec.chart.kind));
            if (spec.chart.kind == ChartKind::Newma)
                Newma::from_baselines(baseline.probability_rows, spec.chart.lambda, 1.0);
            return {std::move(baseline), std::move(gen)};
        } catch (const Error& e) {
            last_error = e.what();
        }
    }
    throw Error("Phase-I sample degenerate after " + std::to_string(spec.phase1_attempts) +
                " attempts: " + last_error);
}

/// Phase-I preparation for replications 0..reps-1.
inline std::vector<PreparedRep> prepare_reps(const MonteCarloSpec& spec, std::size_t reps)
{
    if (spec.shared_baseline) {
        const PreparedRep shared = prepare_rep(spec, 0);
        return std::vector<PreparedRep>(reps, shared);
    }
    std::vector<std::optional<PreparedRep>> slots(reps);
    parallel_for(reps, spec.workers, [&](std::size_t r) { slots[r] = prepare_rep(spec, r); });
    std::vector<PreparedRep> out;
    out.reserve(reps);
    for (auto& s : slots)
        out.push_back(std::move(*s));
    return out;
}

/// Phase-II generator of replication `rep` under the row-1 mean `mu11`.
inline Generator phase2_generator(const MonteCarloSpec& spec, const PreparedRep& prepared, std::uint64_t rep,
                                  double mu11)
{
    Generator gen = prepared.generator;
    gen.retarget(inject_shift(gen.config(), mu11));
    gen.set_rng(make_stream(spec.scenario.seed, rep, detail::kPhase2Stream));
    return gen;
}

/// First t >= 1 with statistic > limit, or horizon + 1 when none occurs.
inline std::int64_t run_length(Detector& detector, Generator& generator, double limit, std::int64_t horizon)
{
    if (horizon < 1)
        throw Error("horizon must be at least 1");
    for (std::int64_t t = 1; t <= horizon; ++t) {
        const auto r = detector.step(generator.step());
        if (r.stat > limit)
            return t;
    }
    return horizon + 1;
}

/// Run length of one replication from its prepared Phase I.
inline std::int64_t run_length(const MonteCarloSpec& spec, const PreparedRep& prepared, std::uint64_t rep,
                               double mu11, double limit)
{
    ChartConfig chart = spec.chart;
    chart.limit = limit;
    Detector detector(chart, prepared.baseline);
    Generator gen = phase2_generator(spec, prepared, rep, mu11);
    return run_length(detector, gen, limit, spec.horizon);
}

struct RunLengthSummary
{
    std::string chart;
    std::string scenario;
    double mu11 = 0.0;
    std::int64_t reps = 0;
    double arl = 0.0;
    double sdrl = 0.0;
    double p5 = 0.0;
    double p50 = 0.0;
    double p95 = 0.0;
    std::int64_t censored = 0;
    double limit = 0.0;
};

/// Linear-interpolation quantile of sorted data (Hyndman-Fan type 7).
inline double quantile_sorted(const std::vector<double>& sorted, double q)
{
    if (sorted.empty())
        throw Error("quantile of empty sample");
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Mean, sample standard deviation, quantiles and censoring count of run
/// lengths. Censored runs (horizon + 1) are included at that value.
inline RunLengthSummary summarize_run_lengths(std::span<const std::int64_t> rls, std::int64_t horizon)
{
    if (rls.empty())
        throw Error("no run lengths to summarise");
    RunLengthSummary s;
    s.reps = static_cast<std::int64_t>(rls.size());
    std::vector<double> v(rls.begin(), rls.end());
    double sum = 0.0;
    for (double x : v)
        sum += x;
    s.arl = sum / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v)
        ss += (x - s.arl) * (x - s.arl);
    s.sdrl = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    std::sort(v.begin(), v.end());
    s.p5 = quantile_sorted(v, 0.05);
    s.p50 = quantile_sorted(v, 0.50);
    s.p95 = quantile_sorted(v, 0.95);
    for (auto r : rls)
        s.censored += r > horizon ? 1 : 0;
    return s;
}

/// True when censoring exceeds 0.1% of replications.
inline bool censoring_warning(const RunLengthSummary& s)
{
    return static_cast<double>(s.censored) > 0.001 * static_cast<double>(s.reps);
}

/// Run lengths of all prepared replications at one shift and limit.
inline std::vector<std::int64_t> simulate_run_lengths(const MonteCarloSpec& spec,
                                                      const std::vector<PreparedRep>& prepared, double mu11,
                                                      double limit)
{
    std::vector<std::int64_t> out(prepared.size());
    parallel_for(prepared.size(), spec.workers,
                 [&](std::size_t r) { out[r] = run_length(spec, prepared[r], r, mu11, limit); });
    return out;
}

/// ARL/SDRL of one chart at one shift from `prepared` replications.
inline RunLengthSummary arl_sdrl(const MonteCarloSpec& spec, const std::vector<PreparedRep>& prepared, double mu11,
                                 double limit)
{
    const auto rls = simulate_run_lengths(spec, prepared, mu11, limit);
    auto s = summarize_run_lengths(rls, spec.horizon);
    s.chart = std::string(chart_name(spec.chart.kind));
    s.scenario = spec.scenario.label();
    s.mu11 = mu11;
    s.limit = limit;
    return s;
}

/// As above, drawing `reps` fresh Phase-I samples.
inline RunLengthSummary arl_sdrl(const MonteCarloSpec& spec, double mu11, double limit, std::size_t reps)
{
    if (reps < 1)
        throw Error("reps must be positive");
    return arl_sdrl(spec, prepare_reps(spec, reps), mu11, limit);
}

/// Statistic path of one replication, advanced lazily and remembered through
/// its running-maximum records, so that the run length at any limit can be
/// read off without re-simulating. Paths do not depend on the limit.
class PathCursor
{
public:
    PathCursor(Detector detector, Generator generator, std::int64_t horizon)
        : detector_(std::move(detector)), generator_(std::move(generator)), horizon_(horizon)
    {
    }

    std::int64_t steps() const noexcept { return t_; }

    /// Run length at `limit` if the path has already crossed it or ended.
    std::optional<std::int64_t> known(double limit) const
    {
        if (max_ > limit) {
            const auto it = std::upper_bound(records_.begin(), records_.end(), limit,
                                             [](double h, const auto& rec) { return h < rec.second; });
            return it->first;
        }
        if (t_ >= horizon_)
            return horizon_ + 1;
        return std::nullopt;
    }

    /// Advances by at most `budget` steps or until the statistic exceeds `limit`.
    std::optional<std::int64_t> advance(double limit, std::int64_t budget)
    {
        for (std::int64_t i = 0; i < budget && t_ < horizon_; ++i) {
            ++t_;
            const double stat = detector_.step(generator_.step()).stat;
            if (stat > max_) {
                max_ = stat;
                records_.emplace_back(t_, stat);
            }
            if (stat > limit)
                return t_;
        }
        return known(limit);
    }

private:
    Detector detector_;
    Generator generator_;
    std::int64_t horizon_;
    std::int64_t t_ = 0;
    double max_ = -std::numeric_limits<double>::infinity();
    std::vector<std::pair<std::int64_t, double>> records_;
};

struct CalibrationStep
{
    double limit = 0.0;
    /// Exact ARL, or a lower bound when evaluation stopped early.
    double arl = 0.0;
    bool exact = true;
};

struct CalibrationResult
{
    std::string chart;
    std::string scenario;
    double limit = 0.0;
    double achieved_arl0 = 0.0;
    std::int64_t reps = 0;
    double target = 0.0;
    double tolerance = 0.0;
    std::vector<CalibrationStep> history;
};

struct CalibrationOptions
{
    double target_arl0 = 200.0;
    std::size_t reps = 10000;
    double tolerance = 0.02;
    double initial_limit = 1.0;
    int max_doublings = 60;
    int max_bisections = 200;
};

/// Finds the limit whose in-control ARL is within tolerance of the target.
/// Every evaluation reuses the same replications (common random numbers);
/// an evaluation stops as soon as the run-length sum proves the ARL is above
/// the band.
inline CalibrationResult calibrate_limit(const MonteCarloSpec& spec, const CalibrationOptions& opts)
{
    if (!(opts.target_arl0 > 1.0))
        throw Error("target ARL0 must exceed 1");
    if (opts.reps < 1 || !(opts.tolerance > 0.0) || !(opts.initial_limit > 0.0))
        throw Error("invalid calibration options");

    const auto prepared = prepare_reps(spec, opts.reps);
    std::vector<PathCursor> cursors;
    cursors.reserve(prepared.size());
    for (std::size_t r = 0; r < prepared.size(); ++r) {
        ChartConfig chart = spec.chart;
        chart.limit = std::numeric_limits<double>::infinity();
        cursors.emplace_back(Detector(chart, prepared[r].baseline),
                             phase2_generator(spec, prepared[r], r, spec.scenario.ic_mu11), spec.horizon);
    }

    const double n = static_cast<double>(opts.reps);
    const double upper = opts.target_arl0 * (1.0 + opts.tolerance);
    const double lower = opts.target_arl0 * (1.0 - opts.tolerance);
    const double budget = upper * n;

    CalibrationResult result;
    result.chart = std::string(chart_name(spec.chart.kind));
    result.scenario = spec.scenario.label();
    result.reps = static_cast<std::int64_t>(opts.reps);
    result.target = opts.target_arl0;
    result.tolerance = opts.tolerance;

    // Sum of run lengths; once it exceeds the budget the ARL is known to lie
    // above the band. Unfinished replications contribute their progress so
    // far, a lower bound on their run length.
    auto evaluate = [&](double limit) -> CalibrationStep {
        std::atomic<double> sum{0.0};
        std::atomic<bool> over{false};
        auto add = [&](double v) {
            double cur = sum.load();
            while (!sum.compare_exchange_weak(cur, cur + v)) {
            }
            if (cur + v > budget)
                over = true;
        };
        std::vector<double> rls(cursors.size(), 0.0);
        parallel_for(cursors.size(), spec.workers, [&](std::size_t r) {
            auto& c = cursors[r];
            if (auto rl = c.known(limit)) {
                rls[r] = static_cast<double>(*rl);
                add(rls[r]);
                return;
            }
            double counted = static_cast<double>(c.steps());
            add(counted);
            constexpr std::int64_t chunk = 256;
            while (!over.load()) {
                const auto rl = c.advance(limit, chunk);
                if (rl) {
                    rls[r] = static_cast<double>(*rl);
                    add(rls[r] - counted);
                    return;
                }
                add(static_cast<double>(c.steps()) - counted);
                counted = static_cast<double>(c.steps());
            }
            rls[r] = -1.0;
        });
        CalibrationStep step;
        step.limit = limit;
        if (over.load()) {
            step.exact = false;
            step.arl = budget / n;
        } else {
            double total = 0.0;
            for (double v : rls)
                total += v;
            step.arl = total / n;
        }
        result.history.push_back(step);
        return step;
    };
    auto above = [&](const CalibrationStep& s) { return !s.exact || s.arl > upper; };
    auto below = [&](const CalibrationStep& s) { return s.exact && s.arl < lower; };
    auto done = [&](const CalibrationStep& s) {
        result.limit = s.limit;
        result.achieved_arl0 = s.arl;
        return result;
    };

    double lo = 0.0;
    double hi = 0.0;
    double h = opts.initial_limit;
    auto first = evaluate(h);
    if (!above(first) && !below(first))
        return done(first);
    if (above(first)) {
        hi = h;
        for (int i = 0;; ++i) {
            if (i >= opts.max_doublings)
                throw Error("calibration diverged");
            h *= 0.5;
            const auto s = evaluate(h);
            if (!above(s) && !below(s))
                return done(s);
            if (below(s)) {
                lo = h;
                break;
            }
            hi = h;
        }
    } else {
        lo = h;
        for (int i = 0;; ++i) {
            if (i >= opts.max_doublings)
                throw Error("calibration diverged");
            h *= 2.0;
            const auto s = evaluate(h);
            if (!above(s) && !below(s))
                return done(s);
            if (above(s)) {
                hi = h;
                break;
            }
            lo = h;
        }
    }
    for (int i = 0; i < opts.max_bisections; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (!(mid > lo && mid < hi))
            break;
        const auto s = evaluate(mid);
        if (!above(s) && !below(s))
            return done(s);
        (above(s) ? hi : lo) = mid;
    }
    throw Error("calibration did not converge: ARL0 jumps across the tolerance band between limits " +
                std::to_string(lo) + " and " + std::to_string(hi));
}

/// Shift grid of the row-1 mean used for the run-length tables.
inline const std::vector<double>& default_mu11_grid()
{
    static const std::vector<double> grid = {0.45, 0.449, 0.448, 0.447, 0.446, 0.445, 0.44, 0.435,
                                             0.43, 0.425, 0.42,  0.415, 0.41,  0.405, 0.4,   0.35,
                                             0.3,  0.25,  0.2,   0.15,  0.1,   0.05};
    return grid;
}

namespace detail
{

inline std::string fmt(const char* spec, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

} // namespace detail

inline constexpr const char* kSummaryHeader = "chart,scenario,mu11,reps,arl,sdrl,p5,p50,p95,censored,limit";

/// Long-format CSV, one line per summary.
inline void write_summaries(std::ostream& out, std::span<const RunLengthSummary> summaries)
{
    out << kSummaryHeader << '\n';
    for (const auto& s : summaries) {
        out << s.chart << ',' << s.scenario << ',' << detail::fmt("%.6g", s.mu11) << ',' << s.reps << ','
            << detail::fmt("%.6f", s.arl) << ',' << detail::fmt("%.6f", s.sdrl) << ',' << detail::fmt("%.6f", s.p5)
            << ',' << detail::fmt("%.6f", s.p50) << ',' << detail::fmt("%.6f", s.p95) << ',' << s.censored << ','
            << detail::fmt("%.17g", s.limit) << '\n';
    }
}

inline std::vector<RunLengthSummary> read_summaries(std::istream& in)
{
    std::vector<RunLengthSummary> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto body = detail::trim(line);
        if (body.empty() || body.substr(0, 5) == "chart")
            continue;
        const auto f = detail::split(body);
        auto bad = [&] { return Error("summary CSV line " + std::to_string(lineno) + ": malformed row"); };
        if (f.size() != 11)
            throw bad();
        RunLengthSummary s;
        s.chart = std::string(f[0]);
        s.scenario = std::string(f[1]);
        const auto mu = detail::parse_double(f[2]);
        const auto reps = detail::parse_int<std::int64_t>(f[3]);
        const auto arl = detail::parse_double(f[4]);
        const auto sdrl = detail::parse_double(f[5]);
        const auto p5 = detail::parse_double(f[6]);
        const auto p50 = detail::parse_double(f[7]);
        const auto p95 = detail::parse_double(f[8]);
        const auto cens = detail::parse_int<std::int64_t>(f[9]);
        const auto limit = detail::parse_double(f[10]);
        if (!mu || !reps || !arl || !sdrl || !p5 || !p50 || !p95 || !cens || !limit)
            throw bad();
        s.mu11 = *mu;
        s.reps = *reps;
        s.arl = *arl;
        s.sdrl = *sdrl;
        s.p5 = *p5;
        s.p50 = *p50;
        s.p95 = *p95;
        s.censored = *cens;
        s.limit = *limit;
        out.push_back(std::move(s));
    }
    return out;
}

enum class TableLayout
{
    /// One row per mu11, ARL and SDRL columns per scenario and chart.
    Wide,
    /// One row per summary (same as write_summaries).
    Long
};

/// Writes summaries as a table. The wide layout requires a complete
/// (mu11 x scenario x chart) grid; missing cells are all named in the error.
inline void emit_table(std::ostream& out, std::span<const RunLengthSummary> summaries, TableLayout layout)
{
    if (summaries.empty())
        throw Error("no summaries to tabulate");
    if (layout == TableLayout::Long) {
        write_summaries(out, summaries);
        return;
    }
    std::vector<double> mus;
    std::vector<std::pair<std::string, std::string>> columns;
    std::map<std::tuple<double, std::string, std::string>, const RunLengthSummary*> cells;
    for (const auto& s : summaries) {
        if (std::find(mus.begin(), mus.end(), s.mu11) == mus.end())
            mus.push_back(s.mu11);
        const std::pair<std::string, std::string> col{s.scenario, s.chart};
        if (std::find(columns.begin(), columns.end(), col) == columns.end())
            columns.push_back(col);
        if (!cells.emplace(std::make_tuple(s.mu11, s.scenario, s.chart), &s).second)
            throw Error("duplicate cell: mu11=" + detail::fmt("%.6g", s.mu11) + " scenario=" + s.scenario +
                        " chart=" + s.chart);
    }
    std::sort(mus.begin(), mus.end(), std::greater<>());

    std::string missing;
    for (double mu : mus)
        for (const auto& [scen, chart] : columns)
            if (!cells.count(std::make_tuple(mu, scen, chart)))
                missing += (missing.empty() ? "" : "; ") + std::string("mu11=") + detail::fmt("%.6g", mu) +
                           " scenario=" + scen + " chart=" + chart;
    if (!missing.empty())
        throw Error("ragged grid, missing cells: " + missing);

    out << "mu11";
    for (const auto& [scen, chart] : columns)
        out << ',' << scen << ':' << chart << ":arl," << scen << ':' << chart << ":sdrl";
    out << '\n';
    for (double mu : mus) {
        out << detail::fmt("%.6g", mu);
        for (const auto& [scen, chart] : columns) {
            const auto* s = cells.at(std::make_tuple(mu, scen, chart));
            out << ',' << detail::fmt("%.2f", s->arl) << ',' << detail::fmt("%.2f", s->sdrl);
        }
        out << '\n';
    }
}

struct MonitorReport
{
    std::vector<StepResult> trace;
    std::optional<std::int64_t> first_alarm;
};

/// Runs a detector over a snapshot stream, recording every step.
inline MonitorReport monitor(Detector& detector, std::span<const TransitionSnapshot> stream)
{
    MonitorReport report;
    report.trace.reserve(stream.size());
    for (const auto& snap : stream) {
        const auto r = detector.step(snap);
        report.trace.push_back(r);
        if (r.alarm && !report.first_alarm)
            report.first_alarm = r.t;
    }
    return report;
}

inline void write_trace(std::ostream& out, std::span<const StepResult> trace)
{
    out << "t,stat,alarm,spring\n";
    for (const auto& r : trace)
        out << r.t << ',' << detail::fmt("%.10g", r.stat) << ',' << (r.alarm ? 1 : 0) << ',' << r.spring << '\n';
}

} // namespace netcusum

#endif // NETCUSUM_HARNESS_HPP
