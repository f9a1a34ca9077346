#include "mez/stats.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace mez {

Result<double> percentile(std::span<const double> samples, double p)
{
    if (samples.empty())
        return make_error(Errc::empty_samples);
    if (!(p > 0 && p <= 100))
        return make_error(Errc::invalid_argument, "percentile must be in (0, 100]");
    std::vector<double> v(samples.begin(), samples.end());
    const std::size_t n = v.size();
    // Integer arithmetic for the common integral p avoids 0.95 * 20 = 19.000000000000004.
    std::size_t rank;
    if (p == std::floor(p))
        rank = (static_cast<std::size_t>(p) * n + 99) / 100;
    else
        rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(n)));
    rank = std::clamp<std::size_t>(rank, 1, n);
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(rank - 1), v.end());
    return v[rank - 1];
}

}  // namespace mez
