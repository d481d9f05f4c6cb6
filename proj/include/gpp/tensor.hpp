#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace gpp {

// Dense row-major tensor of doubles. Image tensors are (h, w, c).
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(static_cast<std::size_t>(count(shape)), 0.0);
    }
    Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != static_cast<std::size_t>(count(shape)))
            throw std::invalid_argument("tensor data length does not match shape");
    }

    static std::int64_t count(const std::vector<int>& shape) {
        std::int64_t n = 1;
        for (const int d : shape) {
            if (d <= 0) throw std::invalid_argument("tensor dims must be positive");
            n *= d;
        }
        return n;
    }

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }
};

}  // namespace gpp
