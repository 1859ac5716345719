#pragma once

#include <functional>
#include <optional>
#include <unordered_map>

#include "core/tensor.hpp"

namespace fscs {

// Handle into a Tape. Only meaningful for the tape that issued it.
struct Var {
    int32_t id = -1;
    bool valid() const { return id >= 0; }
};

template <typename T>
class Tape;

// Gradients keyed by the Var they belong to. Leaves that require gradients but
// are unreachable from the loss get an explicit zero entry.
template <typename T>
class GradientMap {
public:
    bool contains(Var v) const { return grads_.count(v.id) != 0; }

    const Tensor<T>& at(Var v) const {
        auto it = grads_.find(v.id);
        if (it == grads_.end())
            throw std::out_of_range("gradient map: no entry for var " + std::to_string(v.id));
        return it->second;
    }

    size_t size() const { return grads_.size(); }

private:
    friend class Tape<T>;
    std::unordered_map<int32_t, Tensor<T>> grads_;
};

// Reverse-mode tape. Records one node per executed op, in execution order
// (which is topological by construction). One training step owns one tape;
// a tape must not be shared across concurrent writers.
template <typename T>
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Tensor<T>&)>;

    Var leaf(Tensor<T> value, bool requires_grad = false);

    const Tensor<T>& value(Var v) const { return node(v).value; }
    bool requires_grad(Var v) const { return node(v).requires_grad; }
    size_t size() const { return nodes_.size(); }

    // Runs the reverse pass from a scalar loss. Each recorded op's backward
    // runs at most once; ops not reachable from the loss are skipped.
    GradientMap<T> backward(Var loss);

    // --- op recording interface ---
    Var record(Tensor<T> value, std::vector<Var> parents, BackwardFn fn);

    // Accumulates g into the running gradient of v (no-op when v does not
    // require gradients). Only valid inside a backward pass.
    void accumulate(Var v, const Tensor<T>& g);
    void accumulate(Var v, Tensor<T>&& g);

    // Gradient buffer for v during backward (empty tensor if untouched).
    const Tensor<T>& grad_buffer(Var v) const { return grads_[static_cast<size_t>(v.id)]; }

private:
    struct Node {
        Tensor<T> value;
        std::vector<int32_t> parents;
        BackwardFn backward;
        bool requires_grad = false;
        bool is_leaf = false;
    };

    Node& node(Var v) {
        if (!v.valid() || static_cast<size_t>(v.id) >= nodes_.size())
            throw std::out_of_range("tape: invalid var");
        return nodes_[static_cast<size_t>(v.id)];
    }
    const Node& node(Var v) const {
        if (!v.valid() || static_cast<size_t>(v.id) >= nodes_.size())
            throw std::out_of_range("tape: invalid var");
        return nodes_[static_cast<size_t>(v.id)];
    }

    std::vector<Node> nodes_;
    std::vector<Tensor<T>> grads_;  // live only during backward
};

// --- ops ---

template <typename T>
Var conv2d(Tape<T>& t, Var input, Var weight, std::optional<Var> bias, int64_t stride,
           int64_t padding);

// Adjoint of conv2d(x, weight, stride, pad=0) as a linear map in x:
// input has weight.dim(0) channels, output has weight.dim(1) channels,
// output spatial extents are (in-1)*stride + kernel.
template <typename T>
Var conv2d_transpose(Tape<T>& t, Var input, Var weight, int64_t stride);

template <typename T>
Var pixel_shuffle(Tape<T>& t, Var input, int64_t s);

template <typename T>
Var space_to_depth(Tape<T>& t, Var input, int64_t s);

template <typename T>
Var relu(Tape<T>& t, Var x);

template <typename T>
Var add(Tape<T>& t, Var a, Var b);

template <typename T>
Var sub(Tape<T>& t, Var a, Var b);

template <typename T>
Var scale(Tape<T>& t, Var x, T c);

// x * s with s a 1-element tensor (learnable scalar); grad of s is sum(g*x)
template <typename T>
Var mul_scalar(Tape<T>& t, Var x, Var s);

template <typename T>
Var mse_loss(Tape<T>& t, Var pred, Var target);

template <typename T>
Var frobenius_sq(Tape<T>& t, Var a);

// 2-d matrix product
template <typename T>
Var matmul(Tape<T>& t, Var a, Var b);

template <typename T>
Var transpose2d(Tape<T>& t, Var a);

template <typename T>
Var reshape(Tape<T>& t, Var x, Shape shape);

// scalar <x, w> with constant weights; backward seeds x with w
template <typename T>
Var inner(Tape<T>& t, Var x, Tensor<T> weights);

// --- plain (tape-free) helpers shared with the ops ---

template <typename T>
Tensor<T> pixel_shuffle_value(const Tensor<T>& in, int64_t s);

template <typename T>
Tensor<T> space_to_depth_value(const Tensor<T>& in, int64_t s);

extern template class Tape<float>;
extern template class Tape<double>;
extern template class GradientMap<float>;
extern template class GradientMap<double>;

}  // namespace fscs
