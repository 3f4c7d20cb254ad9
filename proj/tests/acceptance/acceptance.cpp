// Acceptance run: one PASS/FAIL line per criterion, with the measured values.
// Exit status is nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <map>
#include <optional>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/QR>

#include <netcusum/netcusum.hpp>

using namespace netcusum;

namespace
{

struct Outcome
{
    bool pass = false;
    std::string detail;
};

struct Settings
{
    std::size_t reps = 10000;
    int workers = 1;
    std::string cli;
    std::string work = "acceptance_work";
};

std::string f2(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

std::string g3(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

void progress(const std::string& msg)
{
    std::cerr << "  .. " << msg << std::endl;
}

MonteCarloSpec spec_for(Condition cond, ChartKind chart, std::uint64_t seed, const Settings& s)
{
    MonteCarloSpec spec;
    spec.scenario.condition = cond;
    spec.scenario.seed = seed;
    spec.chart.kind = chart;
    spec.workers = s.workers;
    return spec;
}

CalibrationResult calibrate(const MonteCarloSpec& spec, const Settings& s)
{
    CalibrationOptions opts;
    opts.reps = s.reps;
    opts.tolerance = 0.01;
    return calibrate_limit(spec, opts);
}

constexpr std::uint64_t kCalibrationSeed = 1;
constexpr std::uint64_t kFreshSeed = 2;

// 1. Each chart calibrated on Condition II then re-simulated on fresh seeds.
Outcome calibration_fidelity(const Settings& s)
{
    Outcome out{true, ""};
    for (auto kind : kAllCharts) {
        auto spec = spec_for(Condition::II, kind, kCalibrationSeed, s);
        const auto cal = calibrate(spec, s);
        spec.scenario.seed = kFreshSeed;
        const auto sum = arl_sdrl(spec, 0.45, cal.limit, s.reps);
        const bool ok = sum.arl >= 190.0 && sum.arl <= 210.0;
        out.pass = out.pass && ok;
        out.detail += std::string(out.detail.empty() ? "" : "; ") + std::string(chart_name(kind)) +
                      " limit=" + g3(cal.limit) + " ARL0=" + f2(sum.arl) + " SDRL=" + f2(sum.sdrl) +
                      (sum.censored ? " censored=" + std::to_string(sum.censored) : "");
        progress(std::string(chart_name(kind)) + " done");
    }
    return out;
}

/// Condition I results shared by criteria 2 to 5.
struct ConditionOne
{
    std::vector<RunLengthSummary> wscusum;
    RunLengthSummary tcusum_040;
    double wscusum_limit = 0.0;
    double tcusum_limit = 0.0;
};

const ConditionOne& condition_one(const Settings& s)
{
    static std::optional<ConditionOne> cache;
    if (cache)
        return *cache;
    ConditionOne r;
    auto ws = spec_for(Condition::I, ChartKind::Wscusum, kCalibrationSeed, s);
    r.wscusum_limit = calibrate(ws, s).limit;
    progress("Condition I WSCUSUM h=" + g3(r.wscusum_limit));
    ws.scenario.seed = kFreshSeed;
    const auto prepared = prepare_reps(ws, s.reps);
    for (double mu : default_mu11_grid())
        r.wscusum.push_back(arl_sdrl(ws, prepared, mu, r.wscusum_limit));
    auto tc = spec_for(Condition::I, ChartKind::Tcusum, kCalibrationSeed, s);
    r.tcusum_limit = calibrate(tc, s).limit;
    progress("Condition I TCUSUM h=" + g3(r.tcusum_limit));
    tc.scenario.seed = kFreshSeed;
    r.tcusum_040 = arl_sdrl(tc, prepared, 0.40, r.tcusum_limit);
    cache = std::move(r);
    return *cache;
}

const RunLengthSummary& at(const std::vector<RunLengthSummary>& v, double mu)
{
    for (const auto& x : v)
        if (std::abs(x.mu11 - mu) < 1e-12)
            return x;
    throw Error("shift point missing from grid");
}

// 2. Three published Condition I cells, +-20%.
Outcome table_cells(const Settings& s)
{
    const auto& c1 = condition_one(s);
    struct Cell
    {
        const char* name;
        double got;
        double paper;
    };
    const Cell cells[] = {{"WSCUSUM@0.40", at(c1.wscusum, 0.40).arl, 10.65},
                          {"WSCUSUM@0.35", at(c1.wscusum, 0.35).arl, 7.08},
                          {"TCUSUM@0.40", c1.tcusum_040.arl, 2.47}};
    Outcome out{true, ""};
    for (const auto& c : cells) {
        const bool ok = std::abs(c.got - c.paper) <= 0.2 * c.paper;
        out.pass = out.pass && ok;
        out.detail += std::string(out.detail.empty() ? "" : "; ") + c.name + " ARL=" + f2(c.got) + " vs " +
                      f2(c.paper) + (ok ? "" : " (outside 20%)");
    }
    return out;
}

// 3. Large shifts: ARL in [5, 6], SDRL <= 0.2.
Outcome large_shift_floor(const Settings& s)
{
    const auto& c1 = condition_one(s);
    Outcome out{true, ""};
    for (const auto& x : c1.wscusum) {
        if (x.mu11 > 0.15 + 1e-12)
            continue;
        const bool ok = x.arl >= 5.0 && x.arl <= 6.0 && x.sdrl <= 0.2;
        out.pass = out.pass && ok;
        out.detail += std::string(out.detail.empty() ? "" : "; ") + "mu11=" + g3(x.mu11) + " ARL=" + f2(x.arl) +
                      " SDRL=" + f2(x.sdrl);
    }
    return out;
}

// 4. ARL nonincreasing over 0.45..0.40 within 2 standard errors per pair.
Outcome monotone_small_shifts(const Settings& s)
{
    const auto& c1 = condition_one(s);
    std::vector<const RunLengthSummary*> pts;
    for (const auto& x : c1.wscusum)
        if (x.mu11 >= 0.40 - 1e-12)
            pts.push_back(&x);
    Outcome out{true, ""};
    double worst = -1e300;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        const auto& a = *pts[i];
        const auto& b = *pts[i + 1];
        const double se = std::sqrt((a.sdrl * a.sdrl + b.sdrl * b.sdrl) / static_cast<double>(a.reps));
        const double excess = (b.arl - a.arl) / se;
        worst = std::max(worst, excess);
        if (excess > 2.0) {
            out.pass = false;
            out.detail += "rise at mu11=" + g3(b.mu11) + " (" + f2(a.arl) + " -> " + f2(b.arl) + "); ";
        }
    }
    out.detail += "ARLs";
    for (const auto* p : pts)
        out.detail += " " + f2(p->arl);
    out.detail += "; largest rise " + f2(worst) + " SE";
    return out;
}

// 5. SDRL <= ARL at every Condition I shift point.
Outcome sdrl_below_arl(const Settings& s)
{
    const auto& c1 = condition_one(s);
    Outcome out{true, ""};
    int bad = 0;
    for (const auto& x : c1.wscusum)
        if (x.sdrl > x.arl) {
            out.pass = false;
            ++bad;
            out.detail += "mu11=" + g3(x.mu11) + " SDRL " + f2(x.sdrl) + " > ARL " + f2(x.arl) + "; ";
        }
    out.detail += std::to_string(bad) + " of " + std::to_string(c1.wscusum.size()) + " points violate";
    return out;
}

double lag1(const std::vector<double>& x)
{
    double mean = 0.0;
    for (double v : x)
        mean += v;
    mean /= static_cast<double>(x.size());
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        den += (x[i] - mean) * (x[i] - mean);
        if (i + 1 < x.size())
            num += (x[i] - mean) * (x[i + 1] - mean);
    }
    return num / den;
}

// 6. Lag-1 autocorrelation of raw vs decorrelated scores on Condition II IC streams.
Outcome whitening(const Settings& s)
{
    constexpr int streams = 10;
    constexpr int steps = 10000;
    auto spec = spec_for(Condition::II, ChartKind::Wscusum, 6, s);
    std::vector<double> raw_mean(2, 0.0), white_mean(2, 0.0);
    std::vector<double> white_lo(2, 1e300), white_hi(2, -1e300);
    for (int r = 0; r < streams; ++r) {
        const auto prep = prepare_rep(spec, static_cast<std::uint64_t>(r));
        auto gen = phase2_generator(spec, prep, static_cast<std::uint64_t>(r), 0.45);
        const auto& rows = prep.baseline.probability_rows;
        std::vector<GammaBlocks> blocks;
        std::vector<DeviationBuffer> bufs;
        for (const auto& b : rows) {
            blocks.push_back(build_gamma_blocks(b.gamma, b.b_max));
            bufs.emplace_back(b.b_max);
        }
        std::vector<std::vector<double>> raw(2), white(2);
        for (int t = 0; t < steps; ++t) {
            const auto snap = gen.step();
            const auto probs = to_probability(snap);
            for (std::size_t i = 0; i < 2; ++i) {
                if (!probs.row_valid[i])
                    continue;
                const Vector p = probs.row(static_cast<Index>(i));
                raw[i].push_back(raw_score(p, rows[i]));
                if (bufs[i].size() >= blocks[i].order)
                    white[i].push_back(decorrelated_score(p, bufs[i], blocks[i], rows[i]));
                bufs[i].push(p - rows[i].mu0);
            }
        }
        for (std::size_t i = 0; i < 2; ++i) {
            raw_mean[i] += lag1(raw[i]) / streams;
            const double w = lag1(white[i]);
            white_mean[i] += w / streams;
            white_lo[i] = std::min(white_lo[i], w);
            white_hi[i] = std::max(white_hi[i], w);
        }
    }
    Outcome out{true, ""};
    for (std::size_t i = 0; i < 2; ++i) {
        const bool ok = std::abs(white_mean[i]) < 0.1 && raw_mean[i] > 0.3;
        out.pass = out.pass && ok;
        out.detail += std::string(i ? "; " : "") + "row " + std::to_string(i + 1) + " raw=" + f2(raw_mean[i]) +
                      " decorrelated=" + f2(white_mean[i]) + " [" + f2(white_lo[i]) + "," + f2(white_hi[i]) + "]";
    }
    out.detail += " (means over " + std::to_string(streams) + " streams of " + std::to_string(steps) + ")";
    return out;
}

// 7. Zero lag correlations: DTCUSUM == TCUSUM and WSCUSUM == raw-score WSCUSUM, exactly.
Outcome degeneration(const Settings& s)
{
    constexpr int streams = 1000;
    auto spec = spec_for(Condition::II, ChartKind::Wscusum, 7, s);
    spec.phase1_length = 300;
    std::size_t mismatches = 0, compared = 0;
    const auto& grid = default_mu11_grid();
    for (int r = 0; r < streams; ++r) {
        auto prep = prepare_rep(spec, static_cast<std::uint64_t>(r));
        auto rows = prep.baseline.probability_rows;
        for (auto& b : rows)
            std::fill(b.gamma.begin() + 1, b.gamma.end(), 0.0);
        auto dt = make_dtcusum(rows, 4, 1e300);
        auto tc = make_tcusum(rows, 1e300);
        Wscusum white(rows, 4, 1e300);
        Wscusum raw(rows, 0, 1e300);
        auto gen = phase2_generator(spec, prep, static_cast<std::uint64_t>(r), grid[static_cast<std::size_t>(r) % grid.size()]);
        for (int t = 0; t < 200; ++t) {
            const auto x = gen.step();
            mismatches += dt.step(x).stat != tc.step(x).stat ? 1 : 0;
            mismatches += white.step(x).stat != raw.step(x).stat ? 1 : 0;
            compared += 2;
        }
    }
    return {mismatches == 0, std::to_string(compared) + " steps compared over " + std::to_string(streams) +
                                 " streams, " + std::to_string(mismatches) + " mismatches"};
}

// 8. decorrelated_score against a dense normal-equations predictor and pseudo-inverse.
Outcome oracle(const Settings&)
{
    std::mt19937_64 rng(8);
    std::normal_distribution<double> z;
    std::uniform_int_distribution<int> kdist(2, 5), bdist(1, 4);
    double worst = 0.0;
    constexpr int instances = 10000;
    for (int n = 0; n < instances; ++n) {
        const int k = kdist(rng);
        const int order = bdist(rng);
        const Matrix proj = Matrix::Identity(k, k) - Matrix::Constant(k, k, 1.0 / k);
        Matrix a = Matrix::Identity(k, k);
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j)
                a(i, j) += 0.3 * z(rng);
        auto tangent = [&](double sd) {
            Vector v(k);
            for (int i = 0; i < k; ++i)
                v(i) = sd * z(rng);
            return Vector(proj * v);
        };
        RowBaseline b;
        b.sigma = 0.01 * proj * a * a.transpose() * proj;
        b.sigma = 0.5 * (b.sigma + b.sigma.transpose());
        b.mu0 = Vector::Constant(k, 1.0 / k);
        b.mu1 = b.mu0 + tangent(0.05);
        b.metric = reduce_covariance(b.sigma);
        b.refresh_direction();
        std::vector<double> c(6);
        for (auto& x : c)
            x = z(rng);
        b.gamma.assign(5, 0.0);
        for (std::size_t q = 0; q < 5; ++q)
            for (std::size_t j = 0; j + q < c.size(); ++j)
                b.gamma[q] += c[j] * c[j + q];
        b.b_max = 4;

        DeviationBuffer buf(4);
        std::vector<Vector> hist;
        for (int i = 0; i < 4; ++i) {
            hist.push_back(tangent(0.05));
            buf.push(hist.back());
        }
        const Vector row = b.mu0 + tangent(0.05);
        const auto blocks = build_gamma_blocks(b.gamma, order);
        const double got = decorrelated_score(row, buf, blocks, b);

        Matrix gh(order, order);
        Vector sh(order);
        for (int i = 0; i < order; ++i) {
            for (int j = 0; j < order; ++j)
                gh(i, j) = b.gamma[static_cast<std::size_t>(std::abs(i - j))] / b.gamma[0];
            sh(i) = b.gamma[static_cast<std::size_t>(order - i)] / b.gamma[0];
        }
        const Vector w = gh.fullPivLu().solve(sh);
        Vector d = row - b.mu0;
        for (int i = 0; i < order; ++i)
            d -= w(i) * hist[static_cast<std::size_t>(4 - order + i)];
        const double scale = std::max(1e-6, 1.0 - sh.dot(w));
        const Matrix pinv = Eigen::CompleteOrthogonalDecomposition<Matrix>(scale * b.sigma).pseudoInverse();
        const double expect = d.dot(pinv * (b.mu1 - b.mu0));
        worst = std::max(worst, std::abs(got - expect) / std::max(1.0, std::abs(expect)));
    }
    return {worst <= 1e-10, std::to_string(instances) + " instances, largest error " + g3(worst)};
}

std::string slurp(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// 9. simulate output independent of the worker count.
Outcome determinism(const Settings& s)
{
    Outcome out{true, ""};
    // Library route.
    auto spec = spec_for(Condition::II, ChartKind::Dtcusum, 9, s);
    std::string first;
    for (int w : {1, 2, 4}) {
        spec.workers = w;
        const auto prepared = prepare_reps(spec, 300);
        std::vector<RunLengthSummary> v;
        for (double mu : {0.45, 0.42, 0.40})
            v.push_back(arl_sdrl(spec, prepared, mu, 5.0));
        std::ostringstream ss;
        write_summaries(ss, v);
        if (first.empty())
            first = ss.str();
        else if (ss.str() != first)
            out.pass = false;
    }
    out.detail = std::string("library ") + (out.pass ? "identical" : "DIFFERS") + " across 1/2/4 workers";

    // Command-line route.
    if (s.cli.empty()) {
        out.pass = false;
        out.detail += "; no CLI path given";
        return out;
    }
    std::filesystem::create_directories(s.work);
    std::string reference;
    for (int w : {1, 3}) {
        const auto path = std::filesystem::path(s.work) / ("sim_w" + std::to_string(w) + ".csv");
        const std::string cmd = "\"" + s.cli + "\" simulate --condition II --chart WSCUSUM --limit 3 --reps 300 "
                                "--mu11 0.45,0.42,0.4 --seed 9 --workers " +
                                std::to_string(w) + " -o \"" + path.string() + "\"";
        if (std::system(cmd.c_str()) != 0) {
            out.pass = false;
            out.detail += "; CLI simulate failed";
            return out;
        }
        const auto text = slurp(path);
        if (reference.empty())
            reference = text;
        else if (text != reference)
            out.pass = false;
    }
    out.detail += std::string("; CLI ") + (reference == slurp(std::filesystem::path(s.work) / "sim_w3.csv")
                                               ? "byte-identical"
                                               : "DIFFERS") +
                  " across --workers 1/3";
    return out;
}

// 10. Sample rows bucket into [18:30, 19:00) and the snapshot CSV round-trips.
Outcome ingestion(const Settings&)
{
    const char* const log_text = "user_id,timestamp,txn_type,in_station,out_station,direction,fare\n"
                                 "900125532,2012/12/31 18:27,ENT,29,29,1,0\n"
                                 "900125532,2012/12/31 18:47,USE,29,49,2,10.5\n"
                                 "900125582,2012/12/31 18:18,ENT,27,27,1,0\n"
                                 "900125582,2012/12/31 18:44,USE,27,48,2,10.5\n";
    std::istringstream in(log_text);
    const auto log = read_transaction_log(in);
    std::map<std::string, Index> ids;
    for (int i = 0; i < 100; ++i)
        ids.emplace(std::to_string(i), i);
    const AggregateOptions opts;
    const auto res = aggregate_log(log.records, StationIndex(std::move(ids)), opts);
    const auto bucket = static_cast<std::size_t>((18 * 60 + 30 - opts.window_start) / opts.bucket_minutes);
    bool ok = res.snapshots.size() > bucket;
    std::string detail;
    if (ok) {
        const auto& snap = res.snapshots[bucket];
        ok = snap.count(29, 49) == 1 && snap.count(27, 48) == 1 && snap.total() == 2 && res.counted == 2;
        std::int64_t elsewhere = 0;
        for (std::size_t t = 0; t < res.snapshots.size(); ++t)
            if (t != bucket)
                elsewhere += res.snapshots[t].total();
        ok = ok && elsewhere == 0;
        detail = "bucket 18:30 holds " + std::to_string(snap.total()) + " trips (29->49, 27->48); other buckets " +
                 std::to_string(elsewhere);
    }
    SnapshotSeries series{100, opts.bucket_minutes, res.snapshots};
    std::ostringstream first;
    write_series(first, series);
    std::istringstream back_in(first.str());
    const auto back = read_series(back_in);
    std::ostringstream second;
    write_series(second, back);
    const bool same = back.snapshots == series.snapshots && first.str() == second.str();
    detail += std::string("; round trip ") + (same ? "bit-exact" : "DIFFERS");
    return {ok && same, detail};
}

} // namespace

int main(int argc, char** argv)
{
    Settings s;
    std::vector<int> only;
    CLI::App app{"acceptance criteria"};
    app.add_option("--reps", s.reps, "Monte Carlo replications");
    app.add_option("--workers", s.workers, "worker threads");
    app.add_option("--cli", s.cli, "path of the netcusum executable");
    app.add_option("--work", s.work, "scratch directory");
    app.add_option("--only", only, "criteria to run")->delimiter(',');
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<const char*, std::function<Outcome(const Settings&)>>> criteria = {
        {"calibration fidelity", calibration_fidelity},
        {"table cells", table_cells},
        {"large-shift floor", large_shift_floor},
        {"small-shift monotonicity", monotone_small_shifts},
        {"SDRL <= ARL", sdrl_below_arl},
        {"whitening", whitening},
        {"degeneration", degeneration},
        {"predictor oracle", oracle},
        {"determinism", determinism},
        {"ingestion", ingestion}};

    const std::set<int> selected(only.begin(), only.end());
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.count(id))
            continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second(s);
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        failed += o.pass ? 0 : 1;
        std::cout << "criterion " << id << " (" << criteria[i].first << "): " << (o.pass ? "PASS" : "FAIL") << " | "
                  << o.detail << " | " << f2(secs) << "s" << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
