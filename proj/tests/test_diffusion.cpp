#include "support.hpp"

#include "dstf/diffusion.hpp"
#include "dstf/graph.hpp"

#include <doctest.h>

#include <cmath>

using namespace dstf;
using ad::Var;

namespace {

Matrix swap_matrix() {
    Matrix p(2, 2);
    p << 0, 1, 1, 0;
    return p;
}

// Plain-loop power with the diagonal zeroed.
Matrix masked_power(const Matrix& p, int k) {
    const ad::Index n = p.rows();
    Matrix acc = Matrix::Identity(n, n);
    for (int s = 0; s < k; ++s) {
        Matrix next = Matrix::Zero(n, n);
        for (ad::Index i = 0; i < n; ++i)
            for (ad::Index j = 0; j < n; ++j)
                for (ad::Index l = 0; l < n; ++l) next(i, j) += acc(i, l) * p(l, j);
        acc = next;
    }
    for (ad::Index i = 0; i < n; ++i) acc(i, i) = 0.0;
    return acc;
}

double relu(double v) { return v > 0 ? v : 0; }

struct ScalarModel {
    // One transition, k_s = 1, d = 1.
    Matrix p;
    std::vector<double> lag;  // lag[j] multiplies the input j steps back
    double conv = 0, ar_w = 0, ar_b = 0;

    // Hidden state at the newest of `inputs` (each an N-vector).
    std::vector<double> step(const std::vector<std::vector<double>>& inputs) const {
        const std::size_t n = inputs.back().size();
        const Matrix pk = masked_power(p, 1);
        std::vector<double> h(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                for (std::size_t l = 0; l < lag.size(); ++l) {
                    h[i] += pk(static_cast<ad::Index>(i), static_cast<ad::Index>(j)) * relu(inputs[inputs.size() - 1 - l][j] * lag[l]) * conv;
                }
            }
        }
        return h;
    }
};

DiffusionParams make_params(ParameterStore& store, int d, int kt, int terms, int horizon, std::mt19937_64& rng,
                            double scale = 0.6) {
    DiffusionParams p;
    auto add = [&](const std::string& name, ad::Index r, ad::Index c) { return store.add(name, scale * testing::random_matrix(r, c, rng)); };
    for (int j = 0; j < kt; ++j) p.lag_proj.push_back(add("lag" + std::to_string(j), d, d));
    for (int k = 0; k < terms; ++k) p.conv.push_back(add("conv" + std::to_string(k), d, d));
    p.ar_w = add("ar.w", d, d);
    p.ar_b = add("ar.b", 1, d);
    p.direct_w = add("direct.w", d, static_cast<ad::Index>(horizon) * d);
    p.direct_b = add("direct.b", 1, static_cast<ad::Index>(horizon) * d);
    p.back_w = add("back.w", d, d);
    p.back_b = add("back.b", 1, d);
    return p;
}

}  // namespace

TEST_CASE("localized transition construction") {
    ad::Tape tape;
    SUBCASE("identity masks to zero") {
        const auto lt = build_localized_transition(tape.constant(Matrix::Identity(4, 4)), 3, 2);
        for (const auto& o : lt.orders) CHECK(o.value().isZero());
    }
    SUBCASE("two-node swap") {
        const auto lt = build_localized_transition(tape.constant(swap_matrix()), 2, 2);
        Matrix expected(2, 4);
        expected << 0, 1, 0, 1, 1, 0, 1, 0;
        CHECK(lt.orders[0].value() == expected);
        CHECK(lt.orders[1].value().isZero());  // P^2 = I
    }
    SUBCASE("zeros at every temporal copy of the diagonal") {
        std::mt19937_64 rng(1);
        for (int n : {1, 3, 6}) {
            const Matrix p = testing::random_matrix(n, n, rng, 0.0, 1.0);
            for (int kt = 1; kt <= 5; ++kt) {
                const auto lt = build_localized_transition(tape.constant(p), 5, kt);
                for (int k = 1; k <= 5; ++k) {
                    const Matrix& m = lt.orders[static_cast<std::size_t>(k - 1)].value();
                    REQUIRE(m.cols() == n * kt);
                    const Matrix expected = masked_power(p, k);
                    for (int c = 0; c < kt; ++c) CHECK((m.middleCols(c * n, n) - expected).cwiseAbs().maxCoeff() < 1e-12);
                }
            }
        }
    }
}

TEST_CASE("localized features") {
    ad::Tape tape;
    SUBCASE("scalar trace") {
        const Var steps[] = {tape.constant(Matrix::Constant(1, 1, 2.0)), tape.constant(Matrix::Constant(1, 1, 3.0))};
        const Var lags[] = {tape.constant(Matrix::Ones(1, 1)), tape.constant(Matrix::Ones(1, 1))};
        const Matrix f = build_localized_features(steps, lags).value();
        REQUIRE(f.rows() == 2);
        CHECK(f(0, 0) == 2.0);
        CHECK(f(1, 0) == 3.0);
    }
    SUBCASE("zero input gives zero features") {
        std::mt19937_64 rng(2);
        const Var steps[] = {tape.constant(Matrix::Zero(3, 2))};
        const Var lags[] = {tape.constant(testing::random_matrix(2, 2, rng))};
        CHECK(build_localized_features(steps, lags).value().isZero());
    }
    SUBCASE("the newest step uses the first lag weight") {
        const Var steps[] = {tape.constant(Matrix::Constant(1, 1, 1.0)), tape.constant(Matrix::Constant(1, 1, 1.0))};
        const Var lags[] = {tape.constant(Matrix::Constant(1, 1, 5.0)), tape.constant(Matrix::Constant(1, 1, 7.0))};
        const Matrix f = build_localized_features(steps, lags).value();
        CHECK(f(0, 0) == 7.0);
        CHECK(f(1, 0) == 5.0);
    }
}

TEST_CASE("localized convolution against a scalar expansion") {
    std::mt19937_64 rng(3);
    ad::Tape tape;
    const int n = 3, kt = 2, ks = 2, d = 2;
    const Matrix p1 = testing::random_matrix(n, n, rng, 0.0, 1.0);
    const Matrix p2 = testing::random_matrix(n, n, rng, 0.0, 1.0);
    const Matrix xlc = testing::random_matrix(kt * n, d, rng);
    std::vector<Matrix> w;
    for (int q = 0; q < ks * 2; ++q) w.push_back(testing::random_matrix(d, d, rng));
    const LocalizedTransition trs[] = {build_localized_transition(tape.constant(p1), ks, kt),
                                       build_localized_transition(tape.constant(p2), ks, kt)};
    std::vector<Var> wv;
    for (const auto& m : w) wv.push_back(tape.constant(m));
    const Matrix out = st_localized_conv(trs, tape.constant(xlc), wv).value();

    Matrix expected = Matrix::Zero(n, d);
    const Matrix* ps[] = {&p1, &p2};
    for (int k = 1; k <= ks; ++k) {
        for (int m = 0; m < 2; ++m) {
            const Matrix pk = masked_power(*ps[m], k);
            const Matrix& wk = w[static_cast<std::size_t>((k - 1) * 2 + m)];
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < kt * n; ++j)
                    for (int a = 0; a < d; ++a)
                        for (int b = 0; b < d; ++b) expected(i, b) += pk(i, j % n) * xlc(j, a) * wk(a, b);
        }
    }
    CHECK((out - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("single edge picks the neighbour rows") {
    ad::Tape tape;
    Matrix p = Matrix::Zero(2, 2);
    p(0, 1) = 1.0;
    Matrix xlc(6, 1);  // k_t = 3, N = 2
    xlc << 1, 10, 2, 20, 3, 30;
    const LocalizedTransition trs[] = {build_localized_transition(tape.constant(p), 1, 3)};
    const Var w[] = {tape.constant(Matrix::Ones(1, 1))};
    const Matrix out = st_localized_conv(trs, tape.constant(xlc), w).value();
    CHECK(out(0, 0) == 60.0);
    CHECK(out(1, 0) == 0.0);
}

TEST_CASE("degenerate transitions give zero output") {
    std::mt19937_64 rng(4);
    ad::Tape tape;
    const Var w[] = {tape.constant(testing::random_matrix(2, 2, rng))};
    const LocalizedTransition zero[] = {build_localized_transition(tape.constant(Matrix::Zero(3, 3)), 1, 2)};
    CHECK(st_localized_conv(zero, tape.constant(testing::random_matrix(6, 2, rng)), w).value().isZero());
    const LocalizedTransition single[] = {build_localized_transition(tape.constant(Matrix::Ones(1, 1)), 1, 2)};
    CHECK(st_localized_conv(single, tape.constant(testing::random_matrix(2, 2, rng)), w).value().isZero());
}

TEST_CASE("diffusion block shapes and warm-up") {
    std::mt19937_64 rng(5);
    ParameterStore store;
    const int n = 4, d = 3, kt = 3, steps = 12, horizon = 5;
    const auto params = make_params(store, d, kt, 2, horizon, rng);
    ad::Tape tape;
    Binder binder(tape, store);
    const auto w = DiffusionWeights::bind(binder, params);
    const Matrix p = row_normalize(testing::random_matrix(n, n, rng, 0.0, 1.0));
    const LocalizedTransition trs[] = {build_localized_transition(tape.constant(p), 2, kt)};
    const auto op = make_localized_operator(trs);
    const auto out = run_diffusion_block(w, op, tape.constant(testing::random_matrix(steps * n, d, rng)), steps, horizon, true);
    CHECK(out.hidden.rows() == steps * n);
    CHECK(out.forecast.rows() == horizon * n);
    CHECK(out.backcast.rows() == steps * n);
    CHECK(out.hidden.value().topRows(2 * n).isZero());
    CHECK_FALSE(out.hidden.value().row(2 * n).isZero());
    CHECK((out.backcast.value().array() >= 0.0).all());
    const auto direct = run_diffusion_block(w, op, tape.constant(testing::random_matrix(steps * n, d, rng)), steps, horizon, false);
    CHECK(direct.forecast.rows() == horizon * n);
    CHECK_THROWS(diffusion_forward(w, op, tape.constant(Matrix::Zero(2 * n, d)), 2));
}

TEST_CASE("permuting nodes permutes the hidden states") {
    std::mt19937_64 rng(6);
    ParameterStore store;
    const int n = 5, d = 2, kt = 2, steps = 4;
    const auto params = make_params(store, d, kt, 4, 1, rng);
    const Matrix p = testing::random_matrix(n, n, rng, 0.0, 1.0);
    const Matrix x = testing::random_matrix(steps * n, d, rng);
    const std::vector<int> perm{3, 0, 4, 1, 2};  // new node a is old node perm[a]
    Matrix pp(n, n), xp(steps * n, d);
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) pp(a, b) = p(perm[a], perm[b]);
        for (int t = 0; t < steps; ++t) xp.row(t * n + a) = x.row(t * n + perm[a]);
    }
    auto run = [&](const Matrix& pm, const Matrix& xm) {
        ad::Tape tape;
        Binder binder(tape, store, false);
        const auto w = DiffusionWeights::bind(binder, params);
        const LocalizedTransition trs[] = {build_localized_transition(tape.constant(pm), 2, kt),
                                           build_localized_transition(tape.constant(pm.transpose()), 2, kt)};
        return diffusion_forward(w, make_localized_operator(trs), tape.constant(xm), steps).value();
    };
    const Matrix h = run(p, x);
    const Matrix hp = run(pp, xp);
    for (int t = 0; t < steps; ++t)
        for (int a = 0; a < n; ++a) CHECK((hp.row(t * n + a) - h.row(t * n + perm[a])).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("auto-regressive unroll against a scalar oracle") {
    ScalarModel m;
    m.p = Matrix(2, 2);
    m.p << 0.0, 0.7, 0.4, 0.0;
    m.lag = {0.9, -0.5};
    m.conv = 1.3;
    m.ar_w = 0.8;
    m.ar_b = 0.2;
    const std::vector<std::vector<double>> xs{{1.0, 2.0}, {-0.5, 1.5}, {0.3, -0.2}};

    ParameterStore store;
    DiffusionParams params;
    params.lag_proj = {store.add("lag0", Matrix::Constant(1, 1, m.lag[0])), store.add("lag1", Matrix::Constant(1, 1, m.lag[1]))};
    params.conv = {store.add("conv", Matrix::Constant(1, 1, m.conv))};
    params.ar_w = store.add("ar.w", Matrix::Constant(1, 1, m.ar_w));
    params.ar_b = store.add("ar.b", Matrix::Constant(1, 1, m.ar_b));
    params.back_w = store.add("back.w", Matrix::Constant(1, 1, 1.0));
    params.back_b = store.add("back.b", Matrix::Zero(1, 1));
    ad::Tape tape;
    Binder binder(tape, store, false);
    const auto w = DiffusionWeights::bind(binder, params);
    const LocalizedTransition trs[] = {build_localized_transition(tape.constant(m.p), 1, 2)};
    const auto op = make_localized_operator(trs);
    Matrix x(6, 1);
    x << 1.0, 2.0, -0.5, 1.5, 0.3, -0.2;
    const auto out = run_diffusion_block(w, op, tape.constant(x), 3, 2, true);

    auto inputs = xs;
    std::vector<double> h = m.step(inputs);
    for (int i = 0; i < 2; ++i) CHECK(out.hidden.value()(4 + i, 0) == doctest::Approx(h[static_cast<std::size_t>(i)]).epsilon(1e-12));
    for (int s = 0; s < 2; ++s) {
        std::vector<double> pseudo(2);
        for (int i = 0; i < 2; ++i) pseudo[static_cast<std::size_t>(i)] = h[static_cast<std::size_t>(i)] * m.ar_w + m.ar_b;
        inputs.push_back(pseudo);
        h = m.step(inputs);
        for (int i = 0; i < 2; ++i) {
            CHECK(out.forecast.value()(s * 2 + i, 0) == doctest::Approx(h[static_cast<std::size_t>(i)]).epsilon(1e-12));
        }
    }
}

TEST_CASE("zero trailing state and zero parameters give a zero forecast") {
    ParameterStore store;
    std::mt19937_64 rng(7);
    auto params = make_params(store, 2, 2, 1, 3, rng);
    store.set_all_zero();
    ad::Tape tape;
    Binder binder(tape, store, false);
    const auto w = DiffusionWeights::bind(binder, params);
    const LocalizedTransition trs[] = {build_localized_transition(tape.constant(swap_matrix()), 1, 2)};
    const auto op = make_localized_operator(trs);
    const auto out = run_diffusion_block(w, op, tape.constant(testing::random_matrix(8, 2, rng)), 4, 3, true);
    CHECK(out.forecast.value().isZero());
    CHECK(out.backcast.value().isZero());
}

TEST_CASE("backcast against a scalar affine and ReLU") {
    std::mt19937_64 rng(8);
    ad::Tape tape;
    const Matrix h = testing::random_matrix(2, 2, rng);
    const Matrix w = testing::random_matrix(2, 2, rng);
    const Matrix b = testing::random_matrix(1, 2, rng);
    const Matrix out = backcast(tape.constant(h), tape.constant(w), tape.constant(b)).value();
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) CHECK(out(i, j) == doctest::Approx(relu(h(i, 0) * w(0, j) + h(i, 1) * w(1, j) + b(0, j))));
    CHECK(backcast(tape.constant(h), tape.constant(Matrix::Zero(2, 2)), tape.constant(Matrix::Zero(1, 2))).value().isZero());
    CHECK(backcast(tape.constant(h), tape.constant(Matrix::Zero(2, 2)), tape.constant(Matrix::Constant(1, 2, -1.0))).value().isZero());
}

TEST_CASE("direct forecast reshapes per horizon") {
    ad::Tape tape;
    Matrix h(2, 1);
    h << 1, 2;
    Matrix w(1, 3);
    w << 1, 10, 100;
    const Matrix out = direct_forecast(tape.constant(h), tape.constant(w), tape.constant(Matrix::Zero(1, 3)), 3).value();
    REQUIRE(out.rows() == 6);
    CHECK(out(0, 0) == 1);
    CHECK(out(1, 0) == 2);
    CHECK(out(2, 0) == 10);
    CHECK(out(5, 0) == 200);
}

TEST_CASE("diffusion block gradients") {
    std::mt19937_64 rng(9);
    ParameterStore store;
    const int n = 3, d = 2, kt = 2, steps = 4, horizon = 2;
    const auto params = make_params(store, d, kt, 4, horizon, rng);
    const ParamId transition = store.add("transition", testing::random_matrix(n, n, rng, 0.1, 1.0));
    const Matrix x = testing::random_matrix(steps * n, d, rng);
    const Matrix pf = testing::random_matrix(horizon * n, d, rng);
    const Matrix pb = testing::random_matrix(steps * n, d, rng);
    for (bool ar : {true, false}) {
        const auto errors = testing::gradient_check(store, [&](Binder& b) {
            const auto w = DiffusionWeights::bind(b, params);
            const Var p = b(transition);
            const LocalizedTransition trs[] = {build_localized_transition(p, 2, kt),
                                               build_localized_transition(ad::transpose(p), 2, kt)};
            const auto out = run_diffusion_block(w, make_localized_operator(trs), b.constant(x), steps, horizon, ar);
            return ad::add(ad::weighted_sum(out.forecast, pf), ad::weighted_sum(out.backcast, pb));
        });
        for (const auto& e : errors) {
            INFO(e.name);
            CHECK(e.relative < 1e-6);
            // only the head of the other forecast mode is unused
            CHECK((e.numeric_norm == 0.0) == (e.name.rfind(ar ? "direct." : "ar.", 0) == 0));
        }
    }
}
