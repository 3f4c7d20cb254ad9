#ifndef NETCUSUM_BUNDLE_HPP
#define NETCUSUM_BUNDLE_HPP

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "baseline.hpp"
#include "core.hpp"
#include "detectors.hpp"
#include "harness.hpp"
#include "simgen.hpp"

namespace netcusum
{

using Json = nlohmann::json;

namespace detail
{

inline Json to_json(const Vector& v)
{
    Json out = Json::array();
    for (Index i = 0; i < v.size(); ++i)
        out.push_back(v(i));
    return out;
}

inline Json to_json(const Matrix& m)
{
    Json out = Json::array();
    for (Index i = 0; i < m.rows(); ++i) {
        Json row = Json::array();
        for (Index j = 0; j < m.cols(); ++j)
            row.push_back(m(i, j));
        out.push_back(std::move(row));
    }
    return out;
}

inline Vector vector_from(const Json& j)
{
    if (!j.is_array())
        throw Error("expected a JSON array");
    Vector v(static_cast<Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i)
        v(static_cast<Index>(i)) = j[i].get<double>();
    return v;
}

inline Matrix matrix_from(const Json& j)
{
    if (!j.is_array())
        throw Error("expected a JSON array of rows");
    const auto rows = static_cast<Index>(j.size());
    const auto cols = rows == 0 ? Index{0} : static_cast<Index>(j[0].size());
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        const auto& r = j[static_cast<std::size_t>(i)];
        if (!r.is_array() || static_cast<Index>(r.size()) != cols)
            throw Error("ragged JSON matrix");
        for (Index c = 0; c < cols; ++c)
            m(i, c) = r[static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

inline Json row_to_json(const RowBaseline& b)
{
    Json red;
    red["dropped"] = b.metric.reduction.dropped ? Json(*b.metric.reduction.dropped) : Json(nullptr);
    red["ridge"] = b.metric.reduction.ridge;
    red["rank"] = b.metric.reduction.rank;
    return Json{{"kind", b.kind == RowKind::Probability ? "probability" : "count"},
                {"row", b.row},
                {"m", b.m},
                {"b_max", b.b_max},
                {"mu0", to_json(b.mu0)},
                {"mu1", to_json(b.mu1)},
                {"sigma", to_json(b.sigma)},
                {"sigma_inverse", to_json(b.metric.inverse)},
                {"reduction", red},
                {"direction", to_json(b.direction)},
                {"k_ref", b.k_ref},
                {"gamma", b.gamma}};
}

inline RowBaseline row_from_json(const Json& j)
{
    RowBaseline b;
    const auto kind = j.at("kind").get<std::string>();
    if (kind != "probability" && kind != "count")
        throw Error("unknown row kind: " + kind);
    b.kind = kind == "probability" ? RowKind::Probability : RowKind::Count;
    b.row = j.at("row").get<Index>();
    b.m = j.at("m").get<Index>();
    b.b_max = j.at("b_max").get<int>();
    b.mu0 = vector_from(j.at("mu0"));
    b.mu1 = vector_from(j.at("mu1"));
    b.sigma = matrix_from(j.at("sigma"));
    b.metric.inverse = matrix_from(j.at("sigma_inverse"));
    const auto& red = j.at("reduction");
    if (!red.at("dropped").is_null())
        b.metric.reduction.dropped = red.at("dropped").get<Index>();
    b.metric.reduction.ridge = red.at("ridge").get<double>();
    b.metric.reduction.rank = red.at("rank").get<Index>();
    b.direction = vector_from(j.at("direction"));
    b.k_ref = j.at("k_ref").get<double>();
    b.gamma = j.at("gamma").get<std::vector<double>>();
    if (b.mu0.size() != b.mu1.size() || b.sigma.rows() != b.mu0.size() || b.direction.size() != b.mu0.size() ||
        static_cast<int>(b.gamma.size()) != b.b_max + 1)
        throw Error("inconsistent row baseline in bundle");
    return b;
}

} // namespace detail

inline Json baseline_to_json(const NetworkBaseline& net)
{
    Json j;
    j["format"] = "netcusum-baseline";
    j["version"] = 1;
    j["nodes"] = net.nodes;
    j["b_max"] = net.b_max;
    j["m"] = net.m;
    j["probability_rows"] = Json::array();
    j["count_rows"] = Json::array();
    for (const auto& b : net.probability_rows)
        j["probability_rows"].push_back(detail::row_to_json(b));
    for (const auto& b : net.count_rows)
        j["count_rows"].push_back(detail::row_to_json(b));
    return j;
}

inline NetworkBaseline baseline_from_json(const Json& j)
{
    if (j.value("format", "") != "netcusum-baseline")
        throw Error("not a baseline bundle");
    NetworkBaseline net;
    net.nodes = j.at("nodes").get<Index>();
    net.b_max = j.at("b_max").get<int>();
    net.m = j.at("m").get<Index>();
    for (const auto& r : j.at("probability_rows"))
        net.probability_rows.push_back(detail::row_from_json(r));
    for (const auto& r : j.at("count_rows"))
        net.count_rows.push_back(detail::row_from_json(r));
    for (const auto* rows : {&net.probability_rows, &net.count_rows})
        for (const auto& b : *rows)
            if (b.nodes() != net.nodes)
                throw Error("bundle row dimension does not match K");
    return net;
}

inline void write_baseline(std::ostream& out, const NetworkBaseline& net)
{
    out << baseline_to_json(net).dump(2) << '\n';
}

inline NetworkBaseline read_baseline(std::istream& in)
{
    return baseline_from_json(Json::parse(in));
}

/// Chart block of a detector configuration file. `bundle` is the path of the
/// baseline bundle it refers to, if any.
struct DetectorConfig
{
    ChartConfig chart;
    std::string bundle;
};

inline Json detector_config_to_json(const DetectorConfig& c)
{
    return Json{{"chart", std::string(chart_name(c.chart.kind))},
                {"limit", c.chart.limit},
                {"lambda", c.chart.lambda},
                {"b_max", c.chart.b_max},
                {"newma_count_form", c.chart.newma_count_form},
                {"bundle", c.bundle}};
}

inline DetectorConfig detector_config_from_json(const Json& j)
{
    DetectorConfig c;
    c.chart.kind = parse_chart(j.at("chart").get<std::string>());
    c.chart.limit = j.at("limit").get<double>();
    c.chart.lambda = j.value("lambda", 0.1);
    c.chart.b_max = j.value("b_max", 4);
    c.chart.newma_count_form = j.value("newma_count_form", false);
    c.bundle = j.value("bundle", "");
    return c;
}

inline Json scenario_to_json(const ScenarioConfig& s)
{
    return Json{{"condition", std::string(condition_name(s.condition))},
                {"initial_totals", {s.initial_totals[0], s.initial_totals[1]}},
                {"ic_mean", detail::to_json(s.ic_mean())},
                {"oc_target", detail::to_json(s.oc_target())},
                {"true_mu11", s.true_mu11},
                {"true_mu22", s.true_mu22},
                {"seed", s.seed},
                {"noise_center", s.noise_center == NoiseCenter::Previous ? "previous" : "stationary"},
                {"prob_noise_var", s.prob_noise_var},
                {"count_noise_var", s.count_noise_var},
                {"total_noise_var", s.total_noise_var}};
}

/// Missing keys keep their defaults.
inline ScenarioConfig scenario_from_json(const Json& j)
{
    ScenarioConfig s;
    if (j.contains("condition"))
        s.condition = parse_condition(j.at("condition").get<std::string>());
    if (j.contains("initial_totals")) {
        const auto t = j.at("initial_totals").get<std::vector<std::int64_t>>();
        if (t.size() != 2)
            throw Error("initial_totals must have two entries");
        s.initial_totals = {t[0], t[1]};
    }
    auto read_mean = [&](const char* key, double& mu11, double& mu22) {
        if (!j.contains(key))
            return;
        const Matrix m = detail::matrix_from(j.at(key));
        if (m.rows() != 2 || m.cols() != 2 || std::abs(m.row(0).sum() - 1.0) > 1e-9 ||
            std::abs(m.row(1).sum() - 1.0) > 1e-9)
            throw Error(std::string(key) + " must be a 2x2 row-stochastic matrix");
        mu11 = m(0, 0);
        mu22 = m(1, 1);
    };
    read_mean("ic_mean", s.ic_mu11, s.ic_mu22);
    read_mean("oc_target", s.oc_mu11, s.oc_mu22);
    s.true_mu11 = j.value("true_mu11", s.ic_mu11);
    s.true_mu22 = j.value("true_mu22", s.ic_mu22);
    s.seed = j.value("seed", s.seed);
    if (j.contains("noise_center")) {
        const auto c = j.at("noise_center").get<std::string>();
        if (c != "previous" && c != "stationary")
            throw Error("noise_center must be 'previous' or 'stationary'");
        s.noise_center = c == "previous" ? NoiseCenter::Previous : NoiseCenter::Stationary;
    }
    s.prob_noise_var = j.value("prob_noise_var", s.prob_noise_var);
    s.count_noise_var = j.value("count_noise_var", s.count_noise_var);
    s.total_noise_var = j.value("total_noise_var", s.total_noise_var);
    s.validate();
    return s;
}

inline Json calibration_to_json(const CalibrationResult& r)
{
    Json hist = Json::array();
    for (const auto& h : r.history)
        hist.push_back(Json{{"limit", h.limit}, {"arl", h.arl}, {"exact", h.exact}});
    return Json{{"chart", r.chart},   {"scenario", r.scenario},   {"limit", r.limit},
                {"achieved_arl0", r.achieved_arl0}, {"reps", r.reps}, {"target", r.target},
                {"tolerance", r.tolerance}, {"history", hist}};
}

inline CalibrationResult calibration_from_json(const Json& j)
{
    CalibrationResult r;
    r.chart = j.at("chart").get<std::string>();
    r.scenario = j.value("scenario", "");
    r.limit = j.at("limit").get<double>();
    r.achieved_arl0 = j.value("achieved_arl0", 0.0);
    r.reps = j.value("reps", std::int64_t{0});
    r.target = j.value("target", 0.0);
    r.tolerance = j.value("tolerance", 0.0);
    for (const auto& h : j.value("history", Json::array()))
        r.history.push_back({h.at("limit").get<double>(), h.at("arl").get<double>(), h.at("exact").get<bool>()});
    return r;
}

} // namespace netcusum

#endif // NETCUSUM_BUNDLE_HPP
