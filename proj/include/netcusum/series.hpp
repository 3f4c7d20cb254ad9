#ifndef NETCUSUM_SERIES_HPP
#define NETCUSUM_SERIES_HPP

#include <istream>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "core.hpp"
#include "detail/text.hpp"
#include "network.hpp"

namespace netcusum
{

/// A contiguous run of snapshots t0, t0+1, ... sharing one node count.
struct SnapshotSeries
{
    Index nodes = 0;
    int bucket_minutes = 30;
    std::vector<TransitionSnapshot> snapshots;
};

/// Canonical interchange format:
///
///     # K=<nodes>,bucket_minutes=<width>,steps=<T>,t0=<first t>
///     t,i,j,count
///     <t>,<i>,<j>,<count>     (zero entries omitted, sorted by t,i,j)
inline void write_series(std::ostream& out, const SnapshotSeries& series)
{
    const std::int64_t t0 = series.snapshots.empty() ? 0 : series.snapshots.front().time();
    out << "# K=" << series.nodes << ",bucket_minutes=" << series.bucket_minutes
        << ",steps=" << series.snapshots.size() << ",t0=" << t0 << '\n';
    out << "t,i,j,count\n";
    for (std::size_t s = 0; s < series.snapshots.size(); ++s) {
        const auto& snap = series.snapshots[s];
        if (snap.time() != t0 + static_cast<std::int64_t>(s))
            throw Error("snapshot series must have contiguous time indices");
        if (snap.nodes() != series.nodes)
            throw Error("snapshot dimension does not match series K");
        for (Index i = 0; i < snap.nodes(); ++i)
            for (Index j = 0; j < snap.nodes(); ++j)
                if (const auto c = snap.count(i, j); c != 0)
                    out << snap.time() << ',' << i << ',' << j << ',' << c << '\n';
    }
}

namespace detail
{

inline Error series_error(std::size_t lineno, const std::string& what)
{
    return Error("snapshot CSV line " + std::to_string(lineno) + ": " + what);
}

} // namespace detail

inline SnapshotSeries read_series(std::istream& in)
{
    SnapshotSeries series;
    std::string line;
    std::size_t lineno = 0;
    bool have_meta = false;
    bool have_header = false;
    std::int64_t steps = -1;
    std::int64_t t0 = 0;
    std::set<std::pair<std::int64_t, std::pair<Index, Index>>> seen;

    while (std::getline(in, line)) {
        ++lineno;
        const auto body = detail::trim(line);
        if (body.empty())
            continue;
        if (!have_meta) {
            if (body.front() != '#')
                throw detail::series_error(lineno, "missing metadata line");
            for (const auto kv : detail::split(detail::trim(body.substr(1)))) {
                const auto eq = kv.find('=');
                if (eq == std::string_view::npos)
                    throw detail::series_error(lineno, "bad metadata entry");
                const auto key = detail::trim(kv.substr(0, eq));
                const auto value = detail::parse_int<std::int64_t>(kv.substr(eq + 1));
                if (!value)
                    throw detail::series_error(lineno, "bad metadata value");
                if (key == "K")
                    series.nodes = static_cast<Index>(*value);
                else if (key == "bucket_minutes")
                    series.bucket_minutes = static_cast<int>(*value);
                else if (key == "steps")
                    steps = *value;
                else if (key == "t0")
                    t0 = *value;
            }
            if (series.nodes < 2 || steps < 0)
                throw detail::series_error(lineno, "metadata needs K>=2 and steps");
            for (std::int64_t s = 0; s < steps; ++s)
                series.snapshots.push_back(TransitionSnapshot::zeros(t0 + s, series.nodes));
            have_meta = true;
            continue;
        }
        if (!have_header) {
            if (body != "t,i,j,count")
                throw detail::series_error(lineno, "expected header t,i,j,count");
            have_header = true;
            continue;
        }
        const auto f = detail::split(body);
        if (f.size() != 4)
            throw detail::series_error(lineno, "expected 4 fields");
        const auto t = detail::parse_int<std::int64_t>(f[0]);
        const auto i = detail::parse_int<Index>(f[1]);
        const auto j = detail::parse_int<Index>(f[2]);
        const auto c = detail::parse_int<std::int64_t>(f[3]);
        if (!t || !i || !j || !c)
            throw detail::series_error(lineno, "non-integer field");
        if (*t < t0 || *t >= t0 + steps)
            throw detail::series_error(lineno, "time index out of range");
        if (*i < 0 || *i >= series.nodes || *j < 0 || *j >= series.nodes)
            throw detail::series_error(lineno, "node index out of range");
        if (*c < 0)
            throw detail::series_error(lineno, "negative count");
        if (!seen.insert({*t, {*i, *j}}).second)
            throw detail::series_error(lineno, "duplicate cell");
        series.snapshots[static_cast<std::size_t>(*t - t0)].add(*i, *j, *c);
    }
    // Blank input is an empty stream (no metadata, K = 0).
    return series;
}

} // namespace netcusum

#endif // NETCUSUM_SERIES_HPP
