#ifndef NETCUSUM_CORE_HPP
#define NETCUSUM_CORE_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace netcusum
{

/// Raised for every recoverable failure in the library; the message names the
/// condition (e.g. "degenerate covariance", "insufficient IC data").
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;
using CountVector = Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1>;

} // namespace netcusum

#endif // NETCUSUM_CORE_HPP
