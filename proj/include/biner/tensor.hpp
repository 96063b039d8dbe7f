#pragma once

#include <initializer_list>
#include <vector>

#include "biner/common.hpp"

namespace biner {

/// Dense row-major array of `real`. Value semantics throughout; the rank is
/// whatever the shape says and strides are implicit.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape, real fill = real(0));

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, real v) { return Tensor(std::move(shape), v); }
    static Tensor from_values(std::vector<int> shape, std::vector<real> values);
    static Tensor scalar(real v) { return Tensor({1}, v); }

    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    const std::vector<int>& shape() const { return shape_; }
    int numel() const { return static_cast<int>(data_.size()); }
    bool empty() const { return data_.empty(); }

    real* data() { return data_.data(); }
    const real* data() const { return data_.data(); }
    real& operator[](int i) { return data_[static_cast<size_t>(i)]; }
    real operator[](int i) const { return data_[static_cast<size_t>(i)]; }

    // 2-D accessors; most of the graph runs on matrices.
    real& at(int r, int c) { return data_[static_cast<size_t>(r) * shape_[1] + c]; }
    real at(int r, int c) const { return data_[static_cast<size_t>(r) * shape_[1] + c]; }

    real& at3(int a, int b, int c) {
        return data_[(static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c];
    }
    real at3(int a, int b, int c) const {
        return data_[(static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c];
    }

    /// Same data, new shape (element counts must agree).
    Tensor reshaped(std::vector<int> shape) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    void fill(real v);
    bool all_finite() const;

    std::vector<real>& values() { return data_; }
    const std::vector<real>& values() const { return data_; }

private:
    std::vector<int> shape_;
    std::vector<real> data_;
};

int shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

}  // namespace biner
