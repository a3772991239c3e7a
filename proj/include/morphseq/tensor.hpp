#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

namespace morphseq {

// Dense row-major tensor of 64-bit floats. Rank 0..2 in practice
// (scalars are stored as rank-1 tensors of length 1 throughout).
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor scalar(double v);
    static Tensor from_vector(std::vector<double> v);

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape[i]; }
    bool empty() const { return data.empty(); }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    // rank-2 access
    double& at2(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
    double at2(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    void fill(double v);
    bool all_finite() const;
};

std::string shape_str(const Tensor& t);

}  // namespace morphseq
