#include "geoflow/array2.hpp"

#include <algorithm>

namespace geoflow {

Array2 gather_rows(const Array2& source, std::span<const std::size_t> indices)
{
    Array2 out(indices.size(), source.cols);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto src = source.row(indices[i]);
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return out;
}

} // namespace geoflow
