#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "qus/error.hpp"

namespace qus {

// Axial x lateral extent. Axial is the depth (row) index.
struct Dims {
    std::size_t axial = 0;
    std::size_t lateral = 0;

    std::size_t size() const noexcept { return axial * lateral; }
    friend bool operator==(const Dims&, const Dims&) = default;
};

// Physical or normalized distance between neighbouring samples.
struct Spacing {
    double axial = 1.0;
    double lateral = 1.0;
    friend bool operator==(const Spacing&, const Spacing&) = default;
};

// Dense 2D raster, row-major with the axial index major:
// element (a, l) lives at a * lateral + l.
template <typename T>
class Grid {
public:
    Grid() = default;
    explicit Grid(Dims dims, T fill = T{}) : dims_(dims), data_(dims.size(), fill) {}
    Grid(Dims dims, std::vector<T> data) : dims_(dims), data_(std::move(data)) {
        if (data_.size() != dims_.size()) throw ConfigError("grid data size does not match dims");
    }

    Dims dims() const noexcept { return dims_; }
    std::size_t axial() const noexcept { return dims_.axial; }
    std::size_t lateral() const noexcept { return dims_.lateral; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(std::size_t a, std::size_t l) { return data_[a * dims_.lateral + l]; }
    const T& operator()(std::size_t a, std::size_t l) const { return data_[a * dims_.lateral + l]; }

    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

private:
    Dims dims_{};
    std::vector<T> data_;
};

using Raster = Grid<double>;
using Mask = Grid<unsigned char>;

}  // namespace qus
