#pragma once

#include <span>

#include "mez/status.hpp"

namespace mez {

/// Nearest-rank percentile: the ceil(p/100 * n)-th smallest sample. Errc::empty_samples on no input.
Result<double> percentile(std::span<const double> samples, double p);

}  // namespace mez
