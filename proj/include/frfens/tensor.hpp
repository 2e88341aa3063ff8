#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "frfens/errors.hpp"

namespace frfens {

// Dense row-major tensor of doubles. Plain storage; the layer kernels work on
// raw pointers and explicit dimensions.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::initializer_list<int> dims) : shape(dims) {
        data.assign(numel(shape), 0.0);
    }
    explicit Tensor(std::vector<int> dims) : shape(std::move(dims)) {
        data.assign(numel(shape), 0.0);
    }

    static std::size_t numel(const std::vector<int>& dims) {
        std::size_t n = 1;
        for (int d : dims) {
            if (d <= 0) throw ShapeError("tensor dimension must be positive");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    std::size_t size() const { return data.size(); }
    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void require_finite(const std::string& name) const {
        if (!all_finite()) throw NumericError("non-finite values in tensor " + name);
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool operator==(const Tensor& o) const = default;
};

} // namespace frfens
