#ifndef NETCUSUM_TESTS_FIXTURES_HPP
#define NETCUSUM_TESTS_FIXTURES_HPP

#include <map>
#include <string>

#include <netcusum/ingest.hpp>

namespace fixtures
{

/// Sample rows of a fare-collection export (one trip is an ENT/USE pair).
inline const char* const kSampleLog =
    "user_id,timestamp,txn_type,in_station,out_station,direction,fare\n"
    "900125532,2012/12/31 18:27,ENT,29,29,1,0\n"
    "900125532,2012/12/31 18:47,USE,29,49,2,10.5\n"
    "900125582,2012/12/31 18:18,ENT,27,27,1,0\n"
    "900125582,2012/12/31 18:44,USE,27,48,2,10.5\n"
    "900125585,2012/12/31 6:45,ENT,49,49,1,0\n"
    "900125585,2012/12/31 7:24,USE,49,97,2,9.7\n"
    "900125600,2012/12/31 19:07,ENT,6,6,1,0\n"
    "900125600,2012/12/31 19:14,USE,6,18,2,4.9\n"
    "900125603,2012/12/31 10:52,ENT,6,6,1,0\n"
    "900125603,2012/12/31 11:02,USE,6,3,2,4.9\n";

/// Stations "0".."k-1" mapped to the matrix index of the same number.
inline netcusum::StationIndex numbered_stations(int k)
{
    std::map<std::string, netcusum::Index> m;
    for (int i = 0; i < k; ++i)
        m.emplace(std::to_string(i), i);
    return netcusum::StationIndex(std::move(m));
}

} // namespace fixtures

#endif
