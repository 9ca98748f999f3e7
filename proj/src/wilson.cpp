#include <boost/math/distributions/normal.hpp>
#include <cmath>

#include "blockforge/error.hpp"
#include "blockforge/validation_gate.hpp"

namespace blockforge {

std::pair<double, double> wilson_interval(std::uint64_t successes, std::uint64_t trials, double confidence) {
  if (trials == 0 || successes > trials)
    throw Error(ErrorCode::DomainError, "wilson_interval needs 0 <= successes <= trials and trials > 0");
  if (!(confidence > 0.0 && confidence < 1.0))
    throw Error(ErrorCode::DomainError, "wilson_interval needs 0 < confidence < 1");
  const double z = boost::math::quantile(boost::math::normal_distribution<double>(), 1.0 - (1.0 - confidence) / 2.0);
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double centre = (p + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  double low = std::max(0.0, centre - half);
  double high = std::min(1.0, centre + half);
  if (successes == 0) low = 0.0;
  if (successes == trials) high = 1.0;
  return {low, high};
}

}  // namespace blockforge
