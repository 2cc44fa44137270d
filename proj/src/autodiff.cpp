#include "dstf/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace dstf::ad {
namespace {

void check_same_tape(Var a, Var b) {
    if (a.tape() != b.tape()) throw std::logic_error("autodiff: operands live on different tapes");
}

void check_shape(bool ok, const char* op, Var a, Var b) {
    if (!ok) {
        throw std::invalid_argument(std::string("autodiff: shape mismatch in ") + op + " (" +
                                    std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                                    std::to_string(b.rows()) + "x" + std::to_string(b.cols()) + ")");
    }
}

bool any_grad(std::initializer_list<Var> vars) {
    for (const auto& v : vars) {
        if (v.tape()->requires_grad(v.id())) return true;
    }
    return false;
}

}  // namespace

Var Tape::constant(Matrix value) {
    nodes_.push_back(Node{std::move(value), Matrix(), false, nullptr});
    return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::leaf(Matrix value) {
    nodes_.push_back(Node{std::move(value), Matrix(), true, nullptr});
    return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::record(Matrix value, bool requires_grad, BackwardFn backward) {
    nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, requires_grad ? std::move(backward) : nullptr});
    return Var(this, static_cast<int>(nodes_.size() - 1));
}

void Tape::backward(Var root) {
    if (root.rows() != 1 || root.cols() != 1) {
        throw std::invalid_argument("autodiff: backward() without seed needs a scalar root");
    }
    backward(root, Matrix::Ones(1, 1));
}

void Tape::backward(Var root, const Matrix& seed) {
    if (root.tape() != this) throw std::logic_error("autodiff: root belongs to another tape");
    if (seed.rows() != root.rows() || seed.cols() != root.cols()) {
        throw std::invalid_argument("autodiff: seed shape differs from root");
    }
    accumulate(root.id(), seed);
    for (int id = root.id(); id >= 0; --id) {
        auto& node = nodes_[static_cast<std::size_t>(id)];
        if (!node.backward || node.grad.size() == 0) continue;
        // Copy: the closure may accumulate into other nodes but never this one.
        const Matrix g = node.grad;
        node.backward(*this, g);
    }
}

void Tape::zero_grad() {
    for (auto& n : nodes_) n.grad.resize(0, 0);
}

Var matmul(Var a, Var b) {
    check_same_tape(a, b);
    check_shape(a.cols() == b.rows(), "matmul", a, b);
    Matrix out = a.value() * b.value();
    const int ia = a.id();
    const int ib = b.id();
    return a.tape()->record(std::move(out), any_grad({a, b}), [ia, ib](Tape& t, const Matrix& g) {
        if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
        if (t.requires_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
    });
}

Var transpose(Var a) {
    const int ia = a.id();
    return a.tape()->record(a.value().transpose(), any_grad({a}),
                            [ia](Tape& t, const Matrix& g) { t.accumulate(ia, g.transpose()); });
}

Var add(Var a, Var b) {
    check_same_tape(a, b);
    check_shape(a.rows() == b.rows() && a.cols() == b.cols(), "add", a, b);
    const int ia = a.id();
    const int ib = b.id();
    return a.tape()->record(a.value() + b.value(), any_grad({a, b}), [ia, ib](Tape& t, const Matrix& g) {
        t.accumulate(ia, g);
        t.accumulate(ib, g);
    });
}

Var sub(Var a, Var b) {
    check_same_tape(a, b);
    check_shape(a.rows() == b.rows() && a.cols() == b.cols(), "sub", a, b);
    const int ia = a.id();
    const int ib = b.id();
    return a.tape()->record(a.value() - b.value(), any_grad({a, b}), [ia, ib](Tape& t, const Matrix& g) {
        t.accumulate(ia, g);
        t.accumulate(ib, -g);
    });
}

Var hadamard(Var a, Var b) {
    check_same_tape(a, b);
    check_shape(a.rows() == b.rows() && a.cols() == b.cols(), "hadamard", a, b);
    const int ia = a.id();
    const int ib = b.id();
    Matrix out = a.value().cwiseProduct(b.value());
    return a.tape()->record(std::move(out), any_grad({a, b}), [ia, ib](Tape& t, const Matrix& g) {
        if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
        if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
    });
}

Var scale(Var a, double s) {
    const int ia = a.id();
    return a.tape()->record(a.value() * s, any_grad({a}),
                            [ia, s](Tape& t, const Matrix& g) { t.accumulate(ia, g * s); });
}

Var add_scalar(Var a, double s) {
    const int ia = a.id();
    Matrix out = a.value().array() + s;
    return a.tape()->record(std::move(out), any_grad({a}),
                            [ia](Tape& t, const Matrix& g) { t.accumulate(ia, g); });
}

Var add_row(Var a, Var row) {
    check_same_tape(a, row);
    check_shape(row.rows() == 1 && row.cols() == a.cols(), "add_row", a, row);
    const int ia = a.id();
    const int ir = row.id();
    Matrix out = a.value().rowwise() + row.value().row(0);
    return a.tape()->record(std::move(out), any_grad({a, row}), [ia, ir](Tape& t, const Matrix& g) {
        t.accumulate(ia, g);
        if (t.requires_grad(ir)) t.accumulate(ir, g.colwise().sum());
    });
}

Var mul_col(Var a, Var col) {
    check_same_tape(a, col);
    check_shape(col.cols() == 1 && col.rows() == a.rows(), "mul_col", a, col);
    const int ia = a.id();
    const int ic = col.id();
    Matrix out = a.value().array().colwise() * col.value().col(0).array();
    return a.tape()->record(std::move(out), any_grad({a, col}), [ia, ic](Tape& t, const Matrix& g) {
        if (t.requires_grad(ia)) {
            Matrix ga = g.array().colwise() * t.value(ic).col(0).array();
            t.accumulate(ia, ga);
        }
        if (t.requires_grad(ic)) t.accumulate(ic, g.cwiseProduct(t.value(ia)).rowwise().sum());
    });
}

Var mask(Var a, const Matrix& m) {
    if (m.rows() != a.rows() || m.cols() != a.cols()) throw std::invalid_argument("autodiff: mask shape mismatch");
    const int ia = a.id();
    return a.tape()->record(a.value().cwiseProduct(m), any_grad({a}),
                            [ia, m](Tape& t, const Matrix& g) { t.accumulate(ia, g.cwiseProduct(m)); });
}

Var affine(Var x, Var w, Var b) {
    Var y = matmul(x, w);
    return b.valid() ? add_row(y, b) : y;
}

Var relu(Var a) {
    const int ia = a.id();
    Matrix out = a.value().cwiseMax(0.0);
    return a.tape()->record(std::move(out), any_grad({a}), [ia](Tape& t, const Matrix& g) {
        Matrix ga = (t.value(ia).array() > 0.0).select(g, 0.0);
        t.accumulate(ia, ga);
    });
}

Var sigmoid(Var a) {
    const int ia = a.id();
    Matrix out = (1.0 + (-a.value().array()).exp()).inverse().matrix();
    const int iout = static_cast<int>(a.tape()->size());
    return a.tape()->record(std::move(out), any_grad({a}), [ia, iout](Tape& t, const Matrix& g) {
        const auto& y = t.value(iout).array();
        Matrix ga = g.array() * y * (1.0 - y);
        t.accumulate(ia, ga);
    });
}

Var tanh(Var a) {
    const int ia = a.id();
    Matrix out = a.value().array().tanh().matrix();
    const int iout = static_cast<int>(a.tape()->size());
    return a.tape()->record(std::move(out), any_grad({a}), [ia, iout](Tape& t, const Matrix& g) {
        const auto& y = t.value(iout).array();
        Matrix ga = g.array() * (1.0 - y.square());
        t.accumulate(ia, ga);
    });
}

namespace {

Matrix softmax_rows_value(const Matrix& a) {
    Matrix out(a.rows(), a.cols());
    for (Index r = 0; r < a.rows(); ++r) {
        const double mx = a.row(r).maxCoeff();
        out.row(r) = (a.row(r).array() - mx).exp().matrix();
        out.row(r) /= out.row(r).sum();
    }
    return out;
}

// Gradient of row-softmax given its output y and the upstream gradient g.
Matrix softmax_rows_backward(const Matrix& y, const Matrix& g) {
    const Eigen::VectorXd dots = g.cwiseProduct(y).rowwise().sum();
    return y.cwiseProduct(g - dots.replicate(1, g.cols()));
}

}  // namespace

Var softmax_rows(Var a) {
    const int ia = a.id();
    const int iout = static_cast<int>(a.tape()->size());
    return a.tape()->record(softmax_rows_value(a.value()), any_grad({a}), [ia, iout](Tape& t, const Matrix& g) {
        t.accumulate(ia, softmax_rows_backward(t.value(iout), g));
    });
}

Var hconcat(std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("autodiff: hconcat of nothing");
    Tape* tape = parts.front().tape();
    const Index rows = parts.front().rows();
    Index cols = 0;
    bool grad = false;
    std::vector<int> ids;
    std::vector<Index> widths;
    for (const auto& p : parts) {
        if (p.tape() != tape) throw std::logic_error("autodiff: hconcat across tapes");
        if (p.rows() != rows) check_shape(false, "hconcat", parts.front(), p);
        cols += p.cols();
        grad = grad || tape->requires_grad(p.id());
        ids.push_back(p.id());
        widths.push_back(p.cols());
    }
    Matrix out(rows, cols);
    Index c = 0;
    for (const auto& p : parts) {
        out.middleCols(c, p.cols()) = p.value();
        c += p.cols();
    }
    return tape->record(std::move(out), grad, [ids, widths](Tape& t, const Matrix& g) {
        Index off = 0;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (t.requires_grad(ids[i])) t.accumulate(ids[i], g.middleCols(off, widths[i]));
            off += widths[i];
        }
    });
}

Var vconcat(std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("autodiff: vconcat of nothing");
    Tape* tape = parts.front().tape();
    const Index cols = parts.front().cols();
    Index rows = 0;
    bool grad = false;
    std::vector<int> ids;
    std::vector<Index> heights;
    for (const auto& p : parts) {
        if (p.tape() != tape) throw std::logic_error("autodiff: vconcat across tapes");
        if (p.cols() != cols) check_shape(false, "vconcat", parts.front(), p);
        rows += p.rows();
        grad = grad || tape->requires_grad(p.id());
        ids.push_back(p.id());
        heights.push_back(p.rows());
    }
    Matrix out(rows, cols);
    Index r = 0;
    for (const auto& p : parts) {
        out.middleRows(r, p.rows()) = p.value();
        r += p.rows();
    }
    return tape->record(std::move(out), grad, [ids, heights](Tape& t, const Matrix& g) {
        Index off = 0;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (t.requires_grad(ids[i])) t.accumulate(ids[i], g.middleRows(off, heights[i]));
            off += heights[i];
        }
    });
}

Var slice_rows(Var a, Index start, Index count) {
    if (start < 0 || count < 0 || start + count > a.rows()) throw std::out_of_range("autodiff: slice_rows");
    const int ia = a.id();
    const Index rows = a.rows();
    const Index cols = a.cols();
    return a.tape()->record(a.value().middleRows(start, count), any_grad({a}),
                            [ia, start, count, rows, cols](Tape& t, const Matrix& g) {
                                Matrix full = Matrix::Zero(rows, cols);
                                full.middleRows(start, count) = g;
                                t.accumulate(ia, full);
                            });
}

Var slice_cols(Var a, Index start, Index count) {
    if (start < 0 || count < 0 || start + count > a.cols()) throw std::out_of_range("autodiff: slice_cols");
    const int ia = a.id();
    const Index rows = a.rows();
    const Index cols = a.cols();
    return a.tape()->record(a.value().middleCols(start, count), any_grad({a}),
                            [ia, start, count, rows, cols](Tape& t, const Matrix& g) {
                                Matrix full = Matrix::Zero(rows, cols);
                                full.middleCols(start, count) = g;
                                t.accumulate(ia, full);
                            });
}

Var gather_rows(Var a, std::vector<Index> index) {
    const Index out_rows = static_cast<Index>(index.size());
    Matrix out(out_rows, a.cols());
    for (Index r = 0; r < out_rows; ++r) {
        const Index src = index[static_cast<std::size_t>(r)];
        if (src < 0 || src >= a.rows()) throw std::out_of_range("autodiff: gather_rows index");
        out.row(r) = a.value().row(src);
    }
    const int ia = a.id();
    const Index rows = a.rows();
    return a.tape()->record(std::move(out), any_grad({a}), [ia, rows, index = std::move(index)](Tape& t, const Matrix& g) {
        Matrix full = Matrix::Zero(rows, g.cols());
        for (std::size_t r = 0; r < index.size(); ++r) full.row(index[r]) += g.row(static_cast<Index>(r));
        t.accumulate(ia, full);
    });
}

Var gather_elements(Var a, Index rows, Index cols, std::vector<Index> index) {
    if (static_cast<Index>(index.size()) != rows * cols) throw std::invalid_argument("autodiff: gather_elements size");
    Matrix out(rows, cols);
    const double* src = a.value().data();
    const Index n = a.value().size();
    double* dst = out.data();
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] < 0 || index[i] >= n) throw std::out_of_range("autodiff: gather_elements index");
        dst[i] = src[index[i]];
    }
    const int ia = a.id();
    const Index in_rows = a.rows();
    const Index in_cols = a.cols();
    return a.tape()->record(std::move(out), any_grad({a}),
                            [ia, in_rows, in_cols, index = std::move(index)](Tape& t, const Matrix& g) {
                                Matrix full = Matrix::Zero(in_rows, in_cols);
                                double* f = full.data();
                                const double* gd = g.data();
                                for (std::size_t i = 0; i < index.size(); ++i) f[index[i]] += gd[i];
                                t.accumulate(ia, full);
                            });
}

Var sum(Var a) {
    const int ia = a.id();
    const Index rows = a.rows();
    const Index cols = a.cols();
    Matrix out(1, 1);
    out(0, 0) = a.value().sum();
    return a.tape()->record(std::move(out), any_grad({a}), [ia, rows, cols](Tape& t, const Matrix& g) {
        t.accumulate(ia, Matrix::Constant(rows, cols, g(0, 0)));
    });
}

Var masked_abs_sum(Var a, const Matrix& target, const Matrix& weight) {
    if (target.rows() != a.rows() || target.cols() != a.cols() || weight.rows() != a.rows() ||
        weight.cols() != a.cols()) {
        throw std::invalid_argument("autodiff: masked_abs_sum shape mismatch");
    }
    Matrix sign = Matrix::Zero(a.rows(), a.cols());
    double total = 0.0;
    for (Index i = 0; i < a.value().size(); ++i) {
        if (weight.data()[i] == 0.0) continue;
        const double diff = a.value().data()[i] - target.data()[i];
        total += std::abs(diff);
        sign.data()[i] = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    }
    Matrix out(1, 1);
    out(0, 0) = total;
    const int ia = a.id();
    return a.tape()->record(std::move(out), any_grad({a}),
                            [ia, sign = std::move(sign)](Tape& t, const Matrix& g) { t.accumulate(ia, sign * g(0, 0)); });
}

Var weighted_sum(Var a, const Matrix& weight) {
    if (weight.rows() != a.rows() || weight.cols() != a.cols()) {
        throw std::invalid_argument("autodiff: weighted_sum shape mismatch");
    }
    Matrix out(1, 1);
    out(0, 0) = a.value().cwiseProduct(weight).sum();
    const int ia = a.id();
    return a.tape()->record(std::move(out), any_grad({a}),
                            [ia, weight](Tape& t, const Matrix& g) { t.accumulate(ia, weight * g(0, 0)); });
}

Var grouped_attention(Var q, Var k, Var v, Index q_group, Index kv_group, double scale,
                      std::vector<Matrix>* weights_out) {
    check_same_tape(q, k);
    check_same_tape(q, v);
    if (q_group <= 0 || kv_group <= 0 || q.rows() % q_group != 0 || k.rows() % kv_group != 0 ||
        q.rows() / q_group != k.rows() / kv_group || k.rows() != v.rows() || q.cols() != k.cols()) {
        throw std::invalid_argument("autodiff: grouped_attention shape mismatch");
    }
    const Index groups = q.rows() / q_group;
    std::vector<Matrix> weights;
    weights.reserve(static_cast<std::size_t>(groups));
    Matrix out(q.rows(), v.cols());
    for (Index g = 0; g < groups; ++g) {
        // Groups are small, so coefficient-based products beat the blocked GEMM path.
        const Matrix scores = q.value().middleRows(g * q_group, q_group).lazyProduct(
                                  k.value().middleRows(g * kv_group, kv_group).transpose()) *
                              scale;
        Matrix w = softmax_rows_value(scores);
        out.middleRows(g * q_group, q_group) = w.lazyProduct(v.value().middleRows(g * kv_group, kv_group));
        weights.push_back(std::move(w));
    }
    if (weights_out != nullptr) weights_out->insert(weights_out->end(), weights.begin(), weights.end());
    const int iq = q.id();
    const int ik = k.id();
    const int iv = v.id();
    return q.tape()->record(
        std::move(out), any_grad({q, k, v}),
        [iq, ik, iv, q_group, kv_group, scale, weights = std::move(weights)](Tape& t, const Matrix& g) {
            const Matrix& qv = t.value(iq);
            const Matrix& kv = t.value(ik);
            const Matrix& vv = t.value(iv);
            Matrix gq = Matrix::Zero(qv.rows(), qv.cols());
            Matrix gk = Matrix::Zero(kv.rows(), kv.cols());
            Matrix gv = Matrix::Zero(vv.rows(), vv.cols());
            for (std::size_t gi = 0; gi < weights.size(); ++gi) {
                const Index g_idx = static_cast<Index>(gi);
                const Matrix& w = weights[gi];
                const auto go = g.middleRows(g_idx * q_group, q_group);
                const auto vg = vv.middleRows(g_idx * kv_group, kv_group);
                gv.middleRows(g_idx * kv_group, kv_group) = w.transpose().lazyProduct(go);
                const Matrix gw = go.lazyProduct(vg.transpose());
                const Matrix gs = softmax_rows_backward(w, gw) * scale;
                gq.middleRows(g_idx * q_group, q_group) = gs.lazyProduct(kv.middleRows(g_idx * kv_group, kv_group));
                gk.middleRows(g_idx * kv_group, kv_group) =
                    gs.transpose().lazyProduct(qv.middleRows(g_idx * q_group, q_group));
            }
            t.accumulate(iq, gq);
            t.accumulate(ik, gk);
            t.accumulate(iv, gv);
        });
}

}  // namespace dstf::ad
