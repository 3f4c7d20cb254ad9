// Command-line front end: ingestion, baselines, calibration, Monte Carlo
// run-length tables, stream monitoring and report emission.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <netcusum/netcusum.hpp>

using namespace netcusum;

namespace
{

constexpr int kExitAlarm = 2;
constexpr int kExitError = 1;

std::ifstream open_in(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open " + path);
    return in;
}

/// Writes to `path`, or stdout when it is empty or "-".
template <class Fn>
void with_output(const std::string& path, Fn&& fn)
{
    if (path.empty() || path == "-") {
        fn(std::cout);
        return;
    }
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write " + path);
    fn(out);
    if (!out)
        throw Error("write failed: " + path);
}

SnapshotSeries load_series(const std::string& path)
{
    if (path.empty() || path == "-")
        return read_series(std::cin);
    auto in = open_in(path);
    return read_series(in);
}

int parse_clock(const std::string& s)
{
    const auto parts = detail::split(s, ':');
    const auto h = parts.size() == 2 ? detail::parse_int<int>(parts[0]) : std::nullopt;
    const auto m = parts.size() == 2 ? detail::parse_int<int>(parts[1]) : std::nullopt;
    if (!h || !m || *h < 0 || *h > 24 || *m < 0 || *m >= 60)
        throw Error("expected HH:MM, got " + s);
    return *h * 60 + *m;
}

/// K x K matrix from CSV rows of numbers.
Matrix read_matrix_csv(const std::string& path)
{
    auto in = open_in(path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        const auto body = detail::trim(line);
        if (body.empty() || body.front() == '#')
            continue;
        std::vector<double> row;
        for (auto f : detail::split(body)) {
            const auto v = detail::parse_double(f);
            if (!v)
                throw Error("bad number in " + path + ": " + std::string(f));
            row.push_back(*v);
        }
        rows.push_back(std::move(row));
    }
    Matrix m(static_cast<Index>(rows.size()), rows.empty() ? 0 : static_cast<Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (static_cast<Index>(rows[i].size()) != m.cols())
            throw Error("ragged matrix in " + path);
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            m(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
    }
    return m;
}

struct ScenarioFlags
{
    std::string file;
    std::string condition;
    std::vector<std::int64_t> totals;
    std::string noise_center;
    std::uint64_t seed = 1;

    void add(CLI::App& app)
    {
        app.add_option("--scenario", file, "scenario JSON file");
        app.add_option("--condition", condition, "I, II, III, Double or RowCorr (overrides the scenario file)");
        app.add_option("--totals", totals, "initial row totals n1,n2")->delimiter(',')->expected(2);
        app.add_option("--noise-center", noise_center, "previous (as written) or stationary");
        app.add_option("--seed", seed, "base random seed");
    }

    ScenarioConfig build(bool seed_given) const
    {
        ScenarioConfig s;
        if (!file.empty()) {
            auto in = open_in(file);
            s = scenario_from_json(Json::parse(in));
        }
        if (!condition.empty())
            s.condition = parse_condition(condition);
        if (!totals.empty())
            s.initial_totals = {totals[0], totals[1]};
        if (!noise_center.empty()) {
            if (noise_center != "previous" && noise_center != "stationary")
                throw Error("--noise-center must be previous or stationary");
            s.noise_center = noise_center == "previous" ? NoiseCenter::Previous : NoiseCenter::Stationary;
        }
        if (seed_given || file.empty())
            s.seed = seed;
        s.validate();
        return s;
    }
};

struct MonteCarloFlags
{
    std::size_t reps = 10000;
    std::int64_t horizon = 100000;
    int bmax = 4;
    int workers = 0;
    double lambda = 0.1;
    bool newma_count_form = false;
    bool shared_baseline = false;
    Index phase1 = 1000;

    void add(CLI::App& app)
    {
        app.add_option("--reps", reps, "Monte Carlo replications")->check(CLI::PositiveNumber);
        app.add_option("--horizon", horizon, "run-length horizon (censoring point)")->check(CLI::PositiveNumber);
        app.add_option("--bmax", bmax, "maximum spring length")->check(CLI::NonNegativeNumber);
        app.add_option("--workers", workers, "worker threads (0 = hardware concurrency)");
        app.add_option("--lambda", lambda, "NEWMA smoothing constant");
        app.add_flag("--newma-count-form", newma_count_form, "NEWMA on n_ij / (mu0_ij n_i) instead of p_ij");
        app.add_flag("--shared-baseline", shared_baseline, "estimate one Phase-I baseline for all replications");
        app.add_option("--phase1", phase1, "Phase-I sample size")->check(CLI::PositiveNumber);
    }

    MonteCarloSpec spec(const ScenarioConfig& scenario, ChartKind chart) const
    {
        MonteCarloSpec s;
        s.scenario = scenario;
        s.chart.kind = chart;
        s.chart.b_max = bmax;
        s.chart.lambda = lambda;
        s.chart.newma_count_form = newma_count_form;
        s.horizon = horizon;
        s.workers = workers > 0 ? workers : default_workers();
        s.shared_baseline = shared_baseline;
        s.phase1_length = phase1;
        return s;
    }
};

std::vector<ChartKind> parse_charts(const std::vector<std::string>& names)
{
    std::vector<ChartKind> out;
    for (const auto& n : names) {
        if (n == "all") {
            out.assign(std::begin(kAllCharts), std::end(kAllCharts));
            return out;
        }
        out.push_back(parse_chart(n));
    }
    if (out.empty())
        out.push_back(ChartKind::Wscusum);
    return out;
}

void warn_censoring(const RunLengthSummary& s)
{
    if (censoring_warning(s))
        std::cerr << "warning: " << s.chart << " mu11=" << s.mu11 << ": " << s.censored << " of " << s.reps
                  << " runs censored at the horizon\n";
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Weighted spring-length CUSUM monitoring of directed transition networks"};
    app.require_subcommand(1);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "aggregate a transaction log into snapshot CSV");
    std::string log_path, stations_path, ingest_out, window_start = "06:00", window_end = "23:30";
    int bucket = 30;
    ingest->add_option("--log", log_path, "transaction CSV")->required();
    ingest->add_option("--stations", stations_path, "station_id,matrix_index CSV")->required();
    ingest->add_option("--bucket", bucket, "bucket width in minutes");
    ingest->add_option("--window-start", window_start, "daily window start HH:MM");
    ingest->add_option("--window-end", window_end, "daily window end HH:MM (exclusive)");
    ingest->add_option("-o,--out", ingest_out, "snapshot CSV output (default stdout)");

    // baseline
    auto* base = app.add_subcommand("baseline", "estimate a baseline bundle from IC snapshots");
    std::string base_in, base_out, mu1_path, parts = "both";
    int base_bmax = 4;
    std::int64_t ic_steps = 0;
    base->add_option("--snapshots", base_in, "IC snapshot CSV (default stdin)");
    base->add_option("--mu1", mu1_path, "expected OC probability matrix CSV (default uniform rows)");
    base->add_option("--bmax", base_bmax, "maximum spring length")->check(CLI::NonNegativeNumber);
    base->add_option("--ic-steps", ic_steps, "use only the first N snapshots");
    base->add_option("--parts", parts, "probability, count or both")->check(CLI::IsMember({"probability", "count", "both"}));
    base->add_option("-o,--out", base_out, "bundle JSON output (default stdout)");

    // calibrate
    auto* cal = app.add_subcommand("calibrate", "find the control limit giving the target IC ARL");
    ScenarioFlags cal_scen;
    MonteCarloFlags cal_mc;
    std::string cal_chart = "WSCUSUM", cal_out;
    double arl0 = 200.0, tolerance = 0.02;
    cal_scen.add(*cal);
    cal_mc.add(*cal);
    cal->add_option("--chart", cal_chart, "chart name");
    cal->add_option("--arl0", arl0, "target in-control ARL");
    cal->add_option("--tolerance", tolerance, "relative tolerance on ARL0");
    cal->add_option("-o,--out", cal_out, "calibration JSON output (default stdout)");

    // simulate
    auto* sim = app.add_subcommand("simulate", "ARL/SDRL over a shift grid");
    ScenarioFlags sim_scen;
    MonteCarloFlags sim_mc;
    std::vector<std::string> sim_charts;
    std::vector<std::string> sim_cal_files;
    std::vector<double> mu_grid;
    std::optional<double> sim_limit;
    std::string sim_out;
    double sim_arl0 = 200.0, sim_tol = 0.02;
    sim_scen.add(*sim);
    sim_mc.add(*sim);
    sim->add_option("--chart", sim_charts, "chart name(s) or 'all'")->delimiter(',');
    sim->add_option("--limit", sim_limit, "control limit (single chart)");
    sim->add_option("--calibration", sim_cal_files, "calibration JSON file(s)");
    sim->add_option("--mu11", mu_grid, "shift grid (default: full table grid)")->delimiter(',');
    sim->add_option("--arl0", sim_arl0, "target ARL0 when calibrating on the fly");
    sim->add_option("--tolerance", sim_tol, "tolerance when calibrating on the fly");
    sim->add_option("-o,--out", sim_out, "summary CSV output (default stdout)");

    // monitor
    auto* mon = app.add_subcommand("monitor", "run a chart over a snapshot stream");
    std::string mon_bundle, mon_stream, mon_config, mon_chart = "WSCUSUM", mon_trace;
    std::optional<double> mon_limit;
    int mon_bmax = -1;
    double mon_lambda = 0.1;
    bool mon_count_form = false;
    mon->add_option("--bundle", mon_bundle, "baseline bundle JSON");
    mon->add_option("--snapshots", mon_stream, "snapshot CSV stream (default stdin)");
    mon->add_option("--config", mon_config, "detector configuration JSON");
    mon->add_option("--chart", mon_chart, "chart name");
    mon->add_option("--limit", mon_limit, "control limit h (or L)");
    mon->add_option("--bmax", mon_bmax, "maximum spring length (default: bundle's)");
    mon->add_option("--lambda", mon_lambda, "NEWMA smoothing constant");
    mon->add_flag("--newma-count-form", mon_count_form, "NEWMA on counts");
    mon->add_option("--trace", mon_trace, "trace CSV output (default stdout)");

    // report
    auto* rep = app.add_subcommand("report", "tabulate summary CSVs");
    std::vector<std::string> rep_in;
    std::string layout = "wide", rep_out;
    rep->add_option("summaries", rep_in, "summary CSV file(s)")->required();
    rep->add_option("--layout", layout, "wide or long")->check(CLI::IsMember({"wide", "long"}));
    rep->add_option("-o,--out", rep_out, "table output (default stdout)");

    // synth-log
    auto* synth = app.add_subcommand("synth-log", "simulate a scenario and write it as a transaction log");
    ScenarioFlags syn_scen;
    std::int64_t days = 7;
    double syn_mu11 = -1.0;
    std::string syn_log, syn_stations;
    syn_scen.add(*synth);
    synth->add_option("--days", days, "days of 06:00-23:30 traffic")->check(CLI::PositiveNumber);
    synth->add_option("--mu11", syn_mu11, "row-1 mean (default: scenario IC mean)");
    synth->add_option("--log", syn_log, "transaction CSV output")->required();
    synth->add_option("--stations", syn_stations, "station index CSV output")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest) {
            auto log_in = open_in(log_path);
            auto st_in = open_in(stations_path);
            const auto log = read_transaction_log(log_in);
            const auto stations = read_station_index(st_in);
            AggregateOptions opts;
            opts.bucket_minutes = bucket;
            opts.window_start = parse_clock(window_start);
            opts.window_end = parse_clock(window_end);
            auto agg = aggregate_log(log.records, stations, opts);
            SnapshotSeries series{stations.size(), bucket, std::move(agg.snapshots)};
            with_output(ingest_out, [&](std::ostream& o) { write_series(o, series); });
            std::cerr << "counted " << agg.counted << ", malformed rows " << log.malformed_rows
                      << ", unknown station " << agg.unknown_station << ", outside window " << agg.outside_window
                      << ", snapshots " << series.snapshots.size() << '\n';
            return 0;
        }
        if (*base) {
            auto series = load_series(base_in);
            if (ic_steps > 0 && static_cast<std::size_t>(ic_steps) < series.snapshots.size())
                series.snapshots.resize(static_cast<std::size_t>(ic_steps));
            const Index k = series.nodes;
            Matrix mu1 = mu1_path.empty() ? Matrix(Matrix::Constant(k, k, 1.0 / static_cast<double>(k)))
                                          : read_matrix_csv(mu1_path);
            const auto which = parts == "probability" ? BaselineParts::Probability
                               : parts == "count"     ? BaselineParts::Count
                                                      : BaselineParts::Both;
            const auto net = estimate_network_baseline(series.snapshots, mu1, base_bmax, which);
            with_output(base_out, [&](std::ostream& o) { write_baseline(o, net); });
            return 0;
        }
        if (*cal) {
            const auto scenario = cal_scen.build(cal->count("--seed") > 0);
            const auto spec = cal_mc.spec(scenario, parse_chart(cal_chart));
            CalibrationOptions opts;
            opts.target_arl0 = arl0;
            opts.reps = cal_mc.reps;
            opts.tolerance = tolerance;
            const auto result = calibrate_limit(spec, opts);
            with_output(cal_out, [&](std::ostream& o) { o << calibration_to_json(result).dump(2) << '\n'; });
            std::cerr << result.chart << " " << result.scenario << ": limit " << result.limit << ", ARL0 "
                      << result.achieved_arl0 << '\n';
            return 0;
        }
        if (*sim) {
            const auto scenario = sim_scen.build(sim->count("--seed") > 0);
            const auto charts = parse_charts(sim_charts);
            if (sim_limit && charts.size() != 1)
                throw Error("--limit needs exactly one chart");
            std::map<std::string, double> limits;
            for (const auto& f : sim_cal_files) {
                auto in = open_in(f);
                const auto c = calibration_from_json(Json::parse(in));
                limits[std::string(chart_name(parse_chart(c.chart)))] = c.limit;
            }
            const auto& grid = mu_grid.empty() ? default_mu11_grid() : mu_grid;
            std::vector<RunLengthSummary> out;
            for (const auto chart : charts) {
                const auto spec = sim_mc.spec(scenario, chart);
                double limit = 0.0;
                const std::string name(chart_name(chart));
                if (sim_limit) {
                    limit = *sim_limit;
                } else if (limits.count(name)) {
                    limit = limits.at(name);
                } else {
                    CalibrationOptions opts;
                    opts.target_arl0 = sim_arl0;
                    opts.reps = sim_mc.reps;
                    opts.tolerance = sim_tol;
                    limit = calibrate_limit(spec, opts).limit;
                    std::cerr << name << ": calibrated limit " << limit << '\n';
                }
                const auto prepared = prepare_reps(spec, sim_mc.reps);
                for (double mu : grid) {
                    auto s = arl_sdrl(spec, prepared, mu, limit);
                    warn_censoring(s);
                    out.push_back(std::move(s));
                }
            }
            with_output(sim_out, [&](std::ostream& o) { write_summaries(o, out); });
            return 0;
        }
        if (*mon) {
            ChartConfig chart;
            std::string bundle_path = mon_bundle;
            if (!mon_config.empty()) {
                auto in = open_in(mon_config);
                const auto dc = detector_config_from_json(Json::parse(in));
                chart = dc.chart;
                if (bundle_path.empty())
                    bundle_path = dc.bundle;
            } else {
                if (!mon_limit)
                    throw Error("monitor needs --limit or --config");
                chart.kind = parse_chart(mon_chart);
                chart.limit = *mon_limit;
                chart.lambda = mon_lambda;
                chart.newma_count_form = mon_count_form;
                chart.b_max = -1;
            }
            if (mon_limit)
                chart.limit = *mon_limit;
            if (bundle_path.empty())
                throw Error("monitor needs a baseline bundle");
            auto bin = open_in(bundle_path);
            const auto net = read_baseline(bin);
            if (mon_bmax >= 0)
                chart.b_max = mon_bmax;
            else if (chart.b_max < 0)
                chart.b_max = net.b_max;
            const auto series = load_series(mon_stream);
            if (!series.snapshots.empty() && series.nodes != net.nodes)
                throw Error("stream has K=" + std::to_string(series.nodes) + " but the bundle has K=" +
                            std::to_string(net.nodes));
            Detector detector(chart, net);
            const auto report = monitor(detector, series.snapshots);
            with_output(mon_trace, [&](std::ostream& o) { write_trace(o, report.trace); });
            if (report.first_alarm) {
                std::cerr << "alarm at t=" << *report.first_alarm << '\n';
                return kExitAlarm;
            }
            std::cerr << "no alarm (" << report.trace.size() << " steps)\n";
            return 0;
        }
        if (*rep) {
            std::vector<RunLengthSummary> all;
            for (const auto& f : rep_in) {
                auto in = open_in(f);
                auto s = read_summaries(in);
                all.insert(all.end(), s.begin(), s.end());
            }
            with_output(rep_out, [&](std::ostream& o) {
                emit_table(o, all, layout == "wide" ? TableLayout::Wide : TableLayout::Long);
            });
            return 0;
        }
        if (*synth) {
            auto scenario = syn_scen.build(synth->count("--seed") > 0);
            if (syn_mu11 > 0.0)
                scenario = inject_shift(scenario, syn_mu11);
            AggregateOptions opts;
            Generator gen(scenario, make_stream(scenario.seed, 0, 0));
            std::vector<TransitionSnapshot> snaps;
            for (std::int64_t t = 0; t < days * opts.buckets_per_day(); ++t)
                snaps.push_back(gen.step());
            const std::vector<std::string> ids = {"S01", "S02"};
            auto rng = make_stream(scenario.seed, 0, 99);
            const auto first_day = Timestamp{2019, 1, 1, 0, 0}.day_number();
            const auto records = synthesize_log(snaps, ids, opts, first_day, rng);
            with_output(syn_log, [&](std::ostream& o) { write_transaction_log(o, records); });
            with_output(syn_stations, [&](std::ostream& o) {
                write_station_index(o, StationIndex({{ids[0], 0}, {ids[1], 1}}));
            });
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitError;
    }
    return 0;
}
