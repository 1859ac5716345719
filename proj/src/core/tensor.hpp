#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace fscs {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense row-major N-d array. No strides, no views: reshapes copy.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape)
        : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), T(0)) {}

    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (shape_numel(shape_) != static_cast<int64_t>(data_.size()))
            throw std::invalid_argument("tensor: shape " + shape_str(shape_) + " does not match " +
                                        std::to_string(data_.size()) + " values");
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, T v) {
        Tensor t(std::move(shape));
        for (auto& x : t.data_) x = v;
        return t;
    }

    static Tensor scalar(T v) { return Tensor({1}, {v}); }

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int64_t dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    T& at(std::initializer_list<int64_t> idx) { return data_[static_cast<size_t>(offset(idx))]; }
    const T& at(std::initializer_list<int64_t> idx) const {
        return data_[static_cast<size_t>(offset(idx))];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const;

    Tensor reshaped(Shape shape) const {
        if (shape_numel(shape) != numel())
            throw std::invalid_argument("reshape: " + shape_str(shape_) + " -> " + shape_str(shape) +
                                        " changes element count");
        return Tensor(std::move(shape), data_);
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.size());
        for (size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return Tensor<U>(shape_, std::move(out));
    }

private:
    int64_t offset(std::initializer_list<int64_t> idx) const {
        if (static_cast<int>(idx.size()) != rank())
            throw std::invalid_argument("tensor index rank mismatch");
        int64_t off = 0;
        int i = 0;
        for (int64_t v : idx) {
            off = off * shape_[static_cast<size_t>(i)] + v;
            ++i;
        }
        return off;
    }

    Shape shape_;
    std::vector<T> data_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace fscs
