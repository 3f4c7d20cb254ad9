#ifndef NETCUSUM_SYNTHLOG_HPP
#define NETCUSUM_SYNTHLOG_HPP

#include <chrono>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "core.hpp"
#include "ingest.hpp"
#include "network.hpp"

namespace netcusum
{

namespace detail
{

inline Timestamp timestamp_from(std::int64_t day_number, int minute)
{
    using namespace std::chrono;
    const year_month_day ymd{sys_days{days{day_number}}};
    return Timestamp{static_cast<int>(ymd.year()), static_cast<int>(static_cast<unsigned>(ymd.month())),
                     static_cast<int>(static_cast<unsigned>(ymd.day())), minute / 60, minute % 60};
}

} // namespace detail

/// Expands snapshots into a fare-collection log: each counted transition
/// becomes an ENT record followed by a USE record at a uniformly drawn minute
/// of its bucket. `station_ids[i]` names matrix index i. Aggregating the
/// result with the same options and index reproduces the snapshots.
template <class Gen>
std::vector<TransactionRecord> synthesize_log(const std::vector<TransitionSnapshot>& snapshots,
                                              const std::vector<std::string>& station_ids,
                                              const AggregateOptions& opts, std::int64_t first_day, Gen& rng)
{
    const int per_day = opts.buckets_per_day();
    if (per_day <= 0)
        throw Error("daily window holds no buckets");
    std::vector<TransactionRecord> out;
    std::uniform_int_distribution<int> offset(0, opts.bucket_minutes - 1);
    std::int64_t user = 0;
    for (std::size_t s = 0; s < snapshots.size(); ++s) {
        const auto& snap = snapshots[s];
        if (static_cast<std::size_t>(snap.nodes()) != station_ids.size())
            throw Error("station list does not match snapshot dimension");
        const auto t = static_cast<std::int64_t>(s);
        const std::int64_t day = first_day + t / per_day;
        const int start = opts.window_start + static_cast<int>(t % per_day) * opts.bucket_minutes;
        for (Index i = 0; i < snap.nodes(); ++i) {
            for (Index j = 0; j < snap.nodes(); ++j) {
                for (std::int64_t c = 0; c < snap.count(i, j); ++c) {
                    const int minute = start + offset(rng);
                    TransactionRecord rec;
                    rec.user_id = "U" + std::to_string(user++);
                    rec.in_station = station_ids[static_cast<std::size_t>(i)];
                    rec.out_station = station_ids[static_cast<std::size_t>(j)];
                    rec.direction = i < j ? 1 : 2;
                    rec.txn_type = TxnType::Ent;
                    rec.timestamp = detail::timestamp_from(day, minute);
                    rec.fare = 0.0;
                    out.push_back(rec);
                    rec.txn_type = TxnType::Use;
                    rec.fare = 2.0;
                    out.push_back(std::move(rec));
                }
            }
        }
    }
    return out;
}

} // namespace netcusum

#endif // NETCUSUM_SYNTHLOG_HPP
