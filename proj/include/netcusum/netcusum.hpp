#ifndef NETCUSUM_NETCUSUM_HPP
#define NETCUSUM_NETCUSUM_HPP

#include "baseline.hpp"
#include "bundle.hpp"
#include "core.hpp"
#include "decorrelate.hpp"
#include "detectors.hpp"
#include "harness.hpp"
#include "ingest.hpp"
#include "network.hpp"
#include "series.hpp"
#include "simgen.hpp"
#include "synthlog.hpp"

#endif // NETCUSUM_NETCUSUM_HPP
