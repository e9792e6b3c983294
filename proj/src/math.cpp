#include "bclr/math.hpp"

#include <boost/math/distributions/normal.hpp>

namespace bclr {

double normal_quantile(double u) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), u);
}

}  // namespace bclr
