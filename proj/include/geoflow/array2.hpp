#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace geoflow {

// Plain row-major matrix of doubles for data that never enters the gradient tape
// (coordinates, field values, masks).
struct Array2 {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    Array2() = default;
    Array2(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}
    Array2(std::size_t r, std::size_t c, std::vector<double> v) : rows(r), cols(c), values(std::move(v)) {}

    double& operator()(std::size_t i, std::size_t j) { return values[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }

    std::span<double> row(std::size_t i) { return {values.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }

    [[nodiscard]] bool empty() const noexcept { return values.empty(); }

    bool operator==(const Array2&) const = default;
};

// Rows of `source` listed in `indices`, in that order.
Array2 gather_rows(const Array2& source, std::span<const std::size_t> indices);

} // namespace geoflow
