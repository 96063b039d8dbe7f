#include "biner/tensor.hpp"

#include <sstream>

namespace biner {

int shape_numel(const std::vector<int>& shape) {
    int n = 1;
    for (int d : shape) {
        if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(std::vector<int> shape, real fill)
    : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), fill) {}

Tensor Tensor::from_values(std::vector<int> shape, std::vector<real> values) {
    if (shape_numel(shape) != static_cast<int>(values.size()))
        throw ShapeError("value count does not match shape " + shape_str(shape));
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(values);
    return t;
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
    if (shape_numel(shape) != numel())
        throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    return t;
}

void Tensor::fill(real v) {
    for (auto& x : data_) x = v;
}

bool Tensor::all_finite() const {
    for (real x : data_)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace biner
