#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "linfeig/errors.hpp"

namespace linfeig {

/// Shape of the Hessian space: N components, each an n x n symmetric matrix.
struct TensorShape {
    int target_dim = 1; // N
    int dim = 1;        // n

    std::size_t hessian_size() const { return static_cast<std::size_t>(target_dim * dim * dim); }
    std::size_t gradient_size() const { return static_cast<std::size_t>(target_dim * dim); }
    std::size_t index(int k, int i, int j) const
    {
        return static_cast<std::size_t>((k * dim + i) * dim + j);
    }
    bool operator==(const TensorShape&) const = default;
};

/// Element of R^{N x n x n} with X[k][i][j] == X[k][j][i]. Stored densely so
/// that Frobenius contractions are plain dot products.
class SymTensor {
public:
    SymTensor() = default;
    explicit SymTensor(TensorShape shape) : shape_(shape), data_(shape.hessian_size(), 0.0) {}
    SymTensor(TensorShape shape, std::vector<double> data) : shape_(shape), data_(std::move(data))
    {
        if (data_.size() != shape_.hessian_size())
            throw DensityError("SymTensor: data size does not match shape");
        if (!is_symmetric())
            throw DensityError("SymTensor: entries are not symmetric in (i,j)");
    }

    const TensorShape& shape() const { return shape_; }
    double operator()(int k, int i, int j) const { return data_[shape_.index(k, i, j)]; }

    /// Sets X[k][i][j] and X[k][j][i] together.
    void set(int k, int i, int j, double v)
    {
        data_[shape_.index(k, i, j)] = v;
        data_[shape_.index(k, j, i)] = v;
    }

    std::span<const double> flat() const { return data_; }
    std::span<double> flat_mut() { return data_; }

    double norm() const
    {
        double s = 0.0;
        for (double x : data_) s += x * x;
        return std::sqrt(s);
    }

    /// Frobenius contraction X : Y.
    double contract(const SymTensor& other) const
    {
        double s = 0.0;
        for (std::size_t i = 0; i < data_.size(); ++i) s += data_[i] * other.data_[i];
        return s;
    }

    bool is_symmetric() const
    {
        for (int k = 0; k < shape_.target_dim; ++k)
            for (int i = 0; i < shape_.dim; ++i)
                for (int j = i + 1; j < shape_.dim; ++j)
                    if (data_[shape_.index(k, i, j)] != data_[shape_.index(k, j, i)]) return false;
        return true;
    }

    SymTensor scaled(double t) const
    {
        SymTensor out = *this;
        for (double& x : out.data_) x *= t;
        return out;
    }

private:
    TensorShape shape_;
    std::vector<double> data_;
};

inline double dot(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

} // namespace linfeig
