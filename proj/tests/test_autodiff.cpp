#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>

using namespace dstf;
using ad::Var;

namespace {

// Central-difference gradient of a scalar function of one matrix.
Matrix numeric_grad(Matrix x, const std::function<double(const Matrix&)>& f, double h = 1e-6) {
    Matrix g(x.rows(), x.cols());
    for (ad::Index k = 0; k < x.size(); ++k) {
        const double saved = x.data()[k];
        x.data()[k] = saved + h;
        const double up = f(x);
        x.data()[k] = saved - h;
        const double down = f(x);
        x.data()[k] = saved;
        g.data()[k] = (up - down) / (2 * h);
    }
    return g;
}

// Checks d(weighted_sum(op(x)))/dx against finite differences.
void check_unary(const std::function<Var(Var)>& op, const Matrix& x0, const Matrix& probe) {
    ad::Tape tape;
    Var x = tape.leaf(x0);
    Var y = ad::weighted_sum(op(x), probe);
    tape.backward(y);
    const Matrix analytic = x.grad();
    const Matrix numeric = numeric_grad(x0, [&](const Matrix& v) {
        ad::Tape t;
        return ad::weighted_sum(op(t.constant(v)), probe).value()(0, 0);
    });
    REQUIRE(analytic.rows() == numeric.rows());
    CHECK((analytic - numeric).norm() <= 1e-6 * std::max(1.0, numeric.norm()));
}

}  // namespace

TEST_CASE("matmul forward and gradients") {
    std::mt19937_64 rng(1);
    const Matrix a = testing::random_matrix(3, 4, rng);
    const Matrix b = testing::random_matrix(4, 2, rng);
    const Matrix probe = testing::random_matrix(3, 2, rng);
    ad::Tape tape;
    Var va = tape.leaf(a), vb = tape.leaf(b);
    Var out = ad::matmul(va, vb);
    CHECK((out.value() - a * b).norm() < 1e-12);
    tape.backward(ad::weighted_sum(out, probe));
    CHECK((va.grad() - probe * b.transpose()).norm() < 1e-12);
    CHECK((vb.grad() - a.transpose() * probe).norm() < 1e-12);
}

TEST_CASE("constants receive no gradient") {
    ad::Tape tape;
    Var c = tape.constant(Matrix::Ones(2, 2));
    Var x = tape.leaf(Matrix::Ones(2, 2));
    tape.backward(ad::sum(ad::hadamard(c, x)));
    CHECK(c.grad().size() == 0);
    CHECK(x.grad().isApprox(Matrix::Ones(2, 2)));
}

TEST_CASE("elementwise and shape ops match finite differences") {
    std::mt19937_64 rng(2);
    const Matrix x = testing::random_matrix(3, 4, rng);
    const Matrix other = testing::random_matrix(3, 4, rng);
    const Matrix row = testing::random_matrix(1, 4, rng);
    const Matrix col = testing::random_matrix(3, 1, rng);
    const Matrix sq = testing::random_matrix(4, 4, rng);

    check_unary([](Var a) { return ad::sigmoid(a); }, x, testing::random_matrix(3, 4, rng));
    check_unary([](Var a) { return ad::tanh(a); }, x, testing::random_matrix(3, 4, rng));
    check_unary([](Var a) { return ad::softmax_rows(a); }, x, testing::random_matrix(3, 4, rng));
    // Keep inputs away from the kink for relu.
    Matrix shifted = x;
    for (ad::Index i = 0; i < shifted.size(); ++i) {
        if (std::abs(shifted.data()[i]) < 0.05) shifted.data()[i] = 0.5;
    }
    check_unary([](Var a) { return ad::relu(a); }, shifted, testing::random_matrix(3, 4, rng));
    check_unary([](Var a) { return ad::transpose(a); }, x, testing::random_matrix(4, 3, rng));
    check_unary([](Var a) { return ad::scale(a, -2.5); }, x, testing::random_matrix(3, 4, rng));
    check_unary([](Var a) { return ad::add_scalar(a, 3.0); }, x, testing::random_matrix(3, 4, rng));
    check_unary([&](Var a) { return ad::hadamard(a, a.tape()->constant(other)); }, x, testing::random_matrix(3, 4, rng));
    check_unary([&](Var a) { return ad::add_row(a, a.tape()->constant(row)); }, x, testing::random_matrix(3, 4, rng));
    check_unary([&](Var a) { return ad::mul_col(a, a.tape()->constant(col)); }, x, testing::random_matrix(3, 4, rng));
    check_unary([&](Var a) { return ad::mask(a, other); }, x, testing::random_matrix(3, 4, rng));
    check_unary([](Var a) { return ad::slice_rows(a, 1, 2); }, x, testing::random_matrix(2, 4, rng));
    check_unary([](Var a) { return ad::slice_cols(a, 1, 3); }, x, testing::random_matrix(3, 3, rng));
    check_unary([](Var a) { return ad::gather_rows(a, {2, 0, 2, 1}); }, x, testing::random_matrix(4, 4, rng));
    check_unary([](Var a) { return ad::gather_elements(a, 2, 2, {0, 5, 11, 5}); }, x, testing::random_matrix(2, 2, rng));
    check_unary([&](Var a) { return ad::matmul(a, a.tape()->constant(sq)); }, x, testing::random_matrix(3, 4, rng));
    check_unary(
        [](Var a) {
            const Var parts[] = {a, ad::scale(a, 2.0)};
            return ad::hconcat(parts);
        },
        x, testing::random_matrix(3, 8, rng));
    check_unary(
        [](Var a) {
            const Var parts[] = {ad::sigmoid(a), a};
            return ad::vconcat(parts);
        },
        x, testing::random_matrix(6, 4, rng));

    // Gradient with respect to the broadcast row and the scaling column.
    check_unary([&](Var r) { return ad::add_row(r.tape()->constant(x), r); }, row, testing::random_matrix(3, 4, rng));
    check_unary([&](Var c) { return ad::mul_col(c.tape()->constant(x), c); }, col, testing::random_matrix(3, 4, rng));
}

TEST_CASE("masked absolute sum counts only weighted cells") {
    ad::Tape tape;
    Matrix a(1, 3);
    a << 1.0, 5.0, -2.0;
    Matrix target(1, 3);
    target << 2.0, 0.0, 1.0;
    Matrix weight(1, 3);
    weight << 1.0, 0.0, 1.0;
    Var x = tape.leaf(a);
    Var s = ad::masked_abs_sum(x, target, weight);
    CHECK(s.value()(0, 0) == doctest::Approx(1.0 + 3.0));
    tape.backward(s);
    CHECK(x.grad()(0, 0) == -1.0);
    CHECK(x.grad()(0, 1) == 0.0);
    CHECK(x.grad()(0, 2) == -1.0);
}

TEST_CASE("grouped attention matches a direct computation and its gradient") {
    std::mt19937_64 rng(3);
    const Matrix q = testing::random_matrix(4, 3, rng);
    const Matrix k = testing::random_matrix(6, 3, rng);
    const Matrix v = testing::random_matrix(6, 2, rng);
    const double scale = 0.7;
    ad::Tape tape;
    std::vector<Matrix> weights;
    Var out = ad::grouped_attention(tape.constant(q), tape.constant(k), tape.constant(v), 2, 3, scale, &weights);
    REQUIRE(weights.size() == 2);
    for (int g = 0; g < 2; ++g) {
        Matrix s = q.middleRows(2 * g, 2) * k.middleRows(3 * g, 3).transpose() * scale;
        for (ad::Index r = 0; r < s.rows(); ++r) {
            const double m = s.row(r).maxCoeff();
            s.row(r) = (s.row(r).array() - m).exp();
            s.row(r) /= s.row(r).sum();
        }
        CHECK((weights[static_cast<std::size_t>(g)] - s).norm() < 1e-12);
        CHECK((out.value().middleRows(2 * g, 2) - s * v.middleRows(3 * g, 3)).norm() < 1e-12);
    }
    const Matrix probe = testing::random_matrix(4, 2, rng);
    check_unary([&](Var a) { return ad::grouped_attention(a, a.tape()->constant(k), a.tape()->constant(v), 2, 3, scale); },
                q, probe);
    check_unary([&](Var a) { return ad::grouped_attention(a.tape()->constant(q), a, a.tape()->constant(v), 2, 3, scale); },
                k, probe);
    check_unary([&](Var a) { return ad::grouped_attention(a.tape()->constant(q), a.tape()->constant(k), a, 2, 3, scale); },
                v, probe);
}

TEST_CASE("reused variables accumulate gradients") {
    ad::Tape tape;
    Var x = tape.leaf(Matrix::Constant(1, 1, 3.0));
    Var y = ad::hadamard(x, x);  // x^2
    tape.backward(ad::sum(ad::add(y, x)));
    CHECK(x.grad()(0, 0) == doctest::Approx(7.0));
}

TEST_CASE("parameter store initialisation and binder modes") {
    std::mt19937_64 rng(5);
    ParameterStore store;
    const ParamId w = store.add_uniform("w", 10, 10, 4.0, rng);
    CHECK(store.value(w).cwiseAbs().maxCoeff() <= 0.5);
    CHECK(store.find("w").index == w.index);
    CHECK_FALSE(store.find("missing").valid());
    CHECK(store.scalar_count() == 100);

    ad::Tape tape;
    Binder inference(tape, store, false);
    Var c = inference(w);
    CHECK_FALSE(tape.requires_grad(c.id()));

    ad::Tape tape2;
    Binder training(tape2, store);
    Var p = training(w);
    CHECK(tape2.requires_grad(p.id()));
    CHECK(training(w).id() == p.id());
    tape2.backward(ad::sum(p));
    Gradients g = Gradients::zeros_like(store);
    training.collect(g);
    CHECK(g.grads[0].isApprox(Matrix::Ones(10, 10)));
    CHECK(g.norm() == doctest::Approx(10.0));
}
