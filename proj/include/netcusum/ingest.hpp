#ifndef NETCUSUM_INGEST_HPP
#define NETCUSUM_INGEST_HPP

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "core.hpp"
#include "detail/text.hpp"
#include "network.hpp"

namespace netcusum
{

/// Calendar time to minute precision, as printed by the fare-collection
/// platform (`YYYY/MM/DD HH:MM`).
struct Timestamp
{
    int year = 1970;
    int month = 1;
    int day = 1;
    int hour = 0;
    int minute = 0;

    bool valid() const
    {
        using namespace std::chrono;
        const year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                                 std::chrono::day{static_cast<unsigned>(day)}};
        return month >= 1 && day >= 1 && ymd.ok() && hour >= 0 && hour < 24 && minute >= 0 &&
               minute < 60;
    }

    /// Days since 1970-01-01.
    std::int64_t day_number() const
    {
        using namespace std::chrono;
        const year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                                 std::chrono::day{static_cast<unsigned>(day)}};
        return sys_days{ymd}.time_since_epoch().count();
    }

    int clock_minutes() const { return hour * 60 + minute; }

    friend bool operator==(const Timestamp&, const Timestamp&) = default;
};

/// Parses `YYYY/MM/DD HH:MM` (single-digit hours accepted, e.g. `6:45`).
inline std::optional<Timestamp> parse_timestamp(std::string_view text)
{
    text = detail::trim(text);
    const auto space = text.find(' ');
    if (space == std::string_view::npos)
        return std::nullopt;
    const auto date = detail::split(text.substr(0, space), '/');
    const auto clock = detail::split(detail::trim(text.substr(space + 1)), ':');
    if (date.size() != 3 || clock.size() != 2)
        return std::nullopt;
    Timestamp ts;
    const auto y = detail::parse_int<int>(date[0]);
    const auto mo = detail::parse_int<int>(date[1]);
    const auto d = detail::parse_int<int>(date[2]);
    const auto h = detail::parse_int<int>(clock[0]);
    const auto mi = detail::parse_int<int>(clock[1]);
    if (!y || !mo || !d || !h || !mi)
        return std::nullopt;
    ts = Timestamp{*y, *mo, *d, *h, *mi};
    if (!ts.valid())
        return std::nullopt;
    return ts;
}

enum class TxnType
{
    Ent,
    Use
};

struct TransactionRecord
{
    std::string user_id;
    Timestamp timestamp;
    TxnType txn_type = TxnType::Use;
    std::string in_station;
    std::string out_station;
    int direction = 0;
    double fare = 0.0;
};

/// Caller-supplied bijection from station id to matrix index 0..K-1.
class StationIndex
{
public:
    StationIndex() = default;

    explicit StationIndex(std::map<std::string, Index> mapping) : map_(std::move(mapping))
    {
        std::vector<bool> seen(map_.size(), false);
        for (const auto& [id, idx] : map_) {
            if (idx < 0 || idx >= static_cast<Index>(map_.size()) || seen[static_cast<std::size_t>(idx)])
                throw Error("station index is not a bijection onto 0..K-1 (station " + id + ")");
            seen[static_cast<std::size_t>(idx)] = true;
        }
    }

    Index size() const noexcept { return static_cast<Index>(map_.size()); }

    std::optional<Index> find(const std::string& station) const
    {
        const auto it = map_.find(station);
        if (it == map_.end())
            return std::nullopt;
        return it->second;
    }

    const std::map<std::string, Index>& mapping() const noexcept { return map_; }

private:
    std::map<std::string, Index> map_;
};

/// Reads `station_id,matrix_index` lines. A leading header line is skipped.
inline StationIndex read_station_index(std::istream& in)
{
    std::map<std::string, Index> mapping;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto body = detail::trim(line);
        if (body.empty() || body.front() == '#')
            continue;
        const auto fields = detail::split(body);
        if (fields.size() != 2)
            throw Error("station index line " + std::to_string(lineno) + ": expected station_id,matrix_index");
        const auto idx = detail::parse_int<Index>(fields[1]);
        if (!idx) {
            if (lineno == 1)
                continue;
            throw Error("station index line " + std::to_string(lineno) + ": bad matrix index");
        }
        if (!mapping.emplace(std::string(fields[0]), *idx).second)
            throw Error("station index line " + std::to_string(lineno) + ": duplicate station " +
                        std::string(fields[0]));
    }
    return StationIndex(std::move(mapping));
}

inline void write_station_index(std::ostream& out, const StationIndex& index)
{
    out << "station_id,matrix_index\n";
    for (const auto& [id, idx] : index.mapping())
        out << id << ',' << idx << '\n';
}

struct TransactionLog
{
    std::vector<TransactionRecord> records;
    std::size_t malformed_rows = 0;
};

/// Reads the fare-collection export
/// (`user_id,timestamp,txn_type,in_station,out_station,direction,fare`).
/// Rows whose timestamp or fields do not parse are counted and dropped.
inline TransactionLog read_transaction_log(std::istream& in)
{
    TransactionLog log;
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        const auto body = detail::trim(line);
        if (body.empty())
            continue;
        if (!header_seen) {
            header_seen = true;
            if (body.substr(0, 7) == "user_id")
                continue;
        }
        const auto f = detail::split(body);
        if (f.size() != 7) {
            ++log.malformed_rows;
            continue;
        }
        TransactionRecord rec;
        rec.user_id = std::string(f[0]);
        const auto ts = parse_timestamp(f[1]);
        const auto dir = detail::parse_int<int>(f[5]);
        const auto fare = detail::parse_double(f[6]);
        if (!ts || !dir || !fare || (f[2] != "ENT" && f[2] != "USE")) {
            ++log.malformed_rows;
            continue;
        }
        rec.timestamp = *ts;
        rec.txn_type = f[2] == "ENT" ? TxnType::Ent : TxnType::Use;
        rec.in_station = std::string(f[3]);
        rec.out_station = std::string(f[4]);
        rec.direction = *dir;
        rec.fare = *fare;
        log.records.push_back(std::move(rec));
    }
    return log;
}

inline std::string format_timestamp(const Timestamp& ts)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d/%02d/%02d %02d:%02d", ts.year, ts.month, ts.day, ts.hour,
                  ts.minute);
    return buf;
}

inline void write_transaction_log(std::ostream& out, const std::vector<TransactionRecord>& records)
{
    out << "user_id,timestamp,txn_type,in_station,out_station,direction,fare\n";
    for (const auto& r : records) {
        out << r.user_id << ',' << format_timestamp(r.timestamp) << ','
            << (r.txn_type == TxnType::Ent ? "ENT" : "USE") << ',' << r.in_station << ','
            << r.out_station << ',' << r.direction << ',' << r.fare << '\n';
    }
}

struct AggregateOptions
{
    int bucket_minutes = 30;
    int window_start = 6 * 60;       // 06:00, inclusive
    int window_end = 23 * 60 + 30;   // 23:30, exclusive
    /// Calendar days to emit (days since epoch, inclusive). Inferred from the
    /// records when unset.
    std::optional<std::pair<std::int64_t, std::int64_t>> days;

    int buckets_per_day() const
    {
        return window_end > window_start ? (window_end - window_start) / bucket_minutes : 0;
    }
};

struct AggregateResult
{
    std::vector<TransitionSnapshot> snapshots;
    std::size_t unknown_station = 0;
    std::size_t malformed_timestamp = 0;
    std::size_t outside_window = 0;
    std::size_t counted = 0;
    std::int64_t first_day = 0;
};

/// Counts USE transactions into one K x K snapshot per bucket of the daily
/// window. Buckets are half-open [start, start + bucket_minutes); snapshot t
/// indexes (day - first_day) * buckets_per_day + bucket.
inline AggregateResult aggregate_log(const std::vector<TransactionRecord>& records,
                                     const StationIndex& stations, const AggregateOptions& opts)
{
    if (opts.bucket_minutes <= 0 || 60 % opts.bucket_minutes != 0)
        throw Error("bucket_minutes must divide 60");
    if (opts.window_start < 0 || opts.window_end > 24 * 60 || opts.window_end < opts.window_start)
        throw Error("invalid daily window");
    if ((opts.window_end - opts.window_start) % opts.bucket_minutes != 0)
        throw Error("daily window is not a whole number of buckets");
    const Index k = stations.size();
    if (k < 2)
        throw Error("station index needs at least two stations");

    AggregateResult result;
    std::int64_t first = 0;
    std::int64_t last = -1;
    if (opts.days) {
        first = opts.days->first;
        last = opts.days->second;
    } else {
        bool any = false;
        for (const auto& r : records) {
            if (!r.timestamp.valid())
                continue;
            const auto d = r.timestamp.day_number();
            first = any ? std::min(first, d) : d;
            last = any ? std::max(last, d) : d;
            any = true;
        }
        if (!any) {
            // No dated records: a single nominal day of empty buckets.
            first = 0;
            last = 0;
        }
    }
    result.first_day = first;

    const int per_day = opts.buckets_per_day();
    const std::int64_t ndays = last >= first ? last - first + 1 : 0;
    const std::int64_t steps = ndays * per_day;
    result.snapshots.reserve(static_cast<std::size_t>(steps));
    for (std::int64_t t = 0; t < steps; ++t)
        result.snapshots.push_back(TransitionSnapshot::zeros(t, k));

    for (const auto& r : records) {
        if (r.txn_type != TxnType::Use)
            continue;
        if (!r.timestamp.valid()) {
            ++result.malformed_timestamp;
            continue;
        }
        const auto from = stations.find(r.in_station);
        const auto to = stations.find(r.out_station);
        if (!from || !to) {
            ++result.unknown_station;
            continue;
        }
        const std::int64_t day = r.timestamp.day_number();
        const int minute = r.timestamp.clock_minutes();
        if (day < first || day > last || minute < opts.window_start || minute >= opts.window_end) {
            ++result.outside_window;
            continue;
        }
        const std::int64_t bucket = (minute - opts.window_start) / opts.bucket_minutes;
        const std::int64_t t = (day - first) * per_day + bucket;
        result.snapshots[static_cast<std::size_t>(t)].add(*from, *to);
        ++result.counted;
    }
    return result;
}

} // namespace netcusum

#endif // NETCUSUM_INGEST_HPP
