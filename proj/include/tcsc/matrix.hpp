#ifndef TCSC_MATRIX_HPP
#define TCSC_MATRIX_HPP

#include <cstddef>
#include <span>
#include <vector>

namespace tcsc {

// Row-major 32-bit float matrix.
struct DenseMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<float> data;

    DenseMatrix() = default;
    DenseMatrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0f) {}

    bool empty() const { return rows == 0 || cols == 0; }

    float& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    float at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    std::span<float> row(int r) { return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }
    std::span<const float> row(int r) const { return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }

    DenseMatrix transposed() const {
        DenseMatrix t(cols, rows);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) t.at(c, r) = at(r, c);
        return t;
    }

    friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;
};

} // namespace tcsc

#endif
