#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Tape records every operation applied to its variables. Calling
// Tape::backward() walks the record in reverse creation order, so any
// expression built from Vars of one tape is differentiable without extra
// bookkeeping. Tapes are single-threaded; use one tape per worker.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace dstf::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

class Tape;

class Var {
public:
    Var() = default;
    Var(Tape* tape, int id) : tape_(tape), id_(id) {}

    [[nodiscard]] bool valid() const { return tape_ != nullptr && id_ >= 0; }
    [[nodiscard]] Tape* tape() const { return tape_; }
    [[nodiscard]] int id() const { return id_; }

    [[nodiscard]] const Matrix& value() const;
    // Gradient after backward(); an empty matrix means "no gradient reached".
    [[nodiscard]] const Matrix& grad() const;
    [[nodiscard]] Index rows() const { return value().rows(); }
    [[nodiscard]] Index cols() const { return value().cols(); }

private:
    Tape* tape_ = nullptr;
    int id_ = -1;
};

class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Matrix& out_grad)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // A value that never receives gradient.
    Var constant(Matrix value);
    // A differentiable leaf.
    Var leaf(Matrix value);

    // Records an op. `requires_grad` should be the OR of the parents' flags;
    // when false the backward closure is dropped.
    Var record(Matrix value, bool requires_grad, BackwardFn backward);

    [[nodiscard]] const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    [[nodiscard]] const Matrix& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
    [[nodiscard]] bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

    // Adds `g` into the gradient of node `id` (no-op for constants).
    template <typename Derived>
    void accumulate(int id, const Eigen::MatrixBase<Derived>& g) {
        auto& node = nodes_[static_cast<std::size_t>(id)];
        if (!node.requires_grad) return;
        if (node.grad.size() == 0) {
            node.grad = g;
        } else {
            node.grad += g;
        }
    }

    // Seeds d(root)/d(root) with ones (root must be 1x1) and back-propagates.
    void backward(Var root);
    // Seeds with an explicit output gradient of root's shape.
    void backward(Var root, const Matrix& seed);

    void zero_grad();
    [[nodiscard]] std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool requires_grad = false;
        BackwardFn backward;
    };
    std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }
inline const Matrix& Var::grad() const { return tape_->grad(id_); }

// ---- linear algebra -------------------------------------------------------
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
// a (m x n) + row (1 x n) broadcast over rows.
Var add_row(Var a, Var row);
// a (m x n) scaled per row by col (m x 1).
Var mul_col(Var a, Var col);
// a (m x n) times a fixed matrix (no gradient into `mask`).
Var mask(Var a, const Matrix& mask);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }

// x * w + b (b may be invalid for a bias-free map).
Var affine(Var x, Var w, Var b);

// ---- nonlinearities -------------------------------------------------------
Var relu(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var softmax_rows(Var a);

// ---- shape manipulation ---------------------------------------------------
Var hconcat(std::span<const Var> parts);
Var vconcat(std::span<const Var> parts);
Var slice_rows(Var a, Index start, Index count);
Var slice_cols(Var a, Index start, Index count);
// out.row(r) = a.row(index[r]).
Var gather_rows(Var a, std::vector<Index> index);
// out(r, c) = a.data()[index[r * cols + c]] (row-major flat index).
Var gather_elements(Var a, Index rows, Index cols, std::vector<Index> index);

// ---- reductions -----------------------------------------------------------
Var sum(Var a);
// 1x1: sum over cells with weight[i,j] != 0 of |a - target|.
Var masked_abs_sum(Var a, const Matrix& target, const Matrix& weight);
// 1x1: sum of a .* weight (linear functional, used for gradient probes).
Var weighted_sum(Var a, const Matrix& weight);

// ---- attention ------------------------------------------------------------
// Scaled dot-product attention applied independently to contiguous row
// groups: group g of q spans q_group rows, of k and v spans kv_group rows.
// Returns softmax(q_g k_g^T * scale) v_g stacked. When `weights_out` is
// non-null the per-group attention matrices are appended to it.
Var grouped_attention(Var q, Var k, Var v, Index q_group, Index kv_group, double scale,
                      std::vector<Matrix>* weights_out = nullptr);

}  // namespace dstf::ad
