#include "support.hpp"

#include "dstf/dynamic_graph.hpp"

#include <doctest.h>

#include <cmath>

using namespace dstf;
using ad::Var;

namespace {

struct Setup {
    ad::Tape tape;
    Embeddings emb;
    DynamicFeatureWeights fc;
    AttentionMaskWeights fwd, bwd;
};

void fill(Setup& s, int nodes, int steps, int hidden, int embed, std::mt19937_64& rng, double scale = 1.0) {
    auto leaf = [&](ad::Index r, ad::Index c) { return s.tape.leaf(scale * testing::random_matrix(r, c, rng)); };
    s.emb = {leaf(nodes, embed), leaf(nodes, embed), leaf(24, embed), leaf(7, embed)};
    s.fc = {leaf(static_cast<ad::Index>(steps) * hidden, hidden), leaf(1, hidden), leaf(hidden, embed), leaf(1, embed)};
    s.fwd = {leaf(4 * embed, hidden), leaf(4 * embed, hidden)};
    s.bwd = {leaf(4 * embed, hidden), leaf(4 * embed, hidden)};
}

}  // namespace

TEST_CASE("self-adaptive transition") {
    ad::Tape tape;
    SUBCASE("zero embeddings give uniform rows") {
        const Var z = tape.constant(Matrix::Zero(5, 3));
        const Matrix p = self_adaptive_transition(z, z).value();
        CHECK((p.array() - 0.2).abs().maxCoeff() < 1e-15);
    }
    SUBCASE("a single node") {
        std::mt19937_64 rng(1);
        const Var e = tape.constant(testing::random_matrix(1, 3, rng));
        CHECK(self_adaptive_transition(e, e).value()(0, 0) == 1.0);
    }
    SUBCASE("scalar softmax oracle") {
        std::mt19937_64 rng(2);
        const Matrix src = testing::random_matrix(3, 2, rng);
        const Matrix dst = testing::random_matrix(3, 2, rng);
        const Matrix p = self_adaptive_transition(tape.constant(src), tape.constant(dst)).value();
        for (int i = 0; i < 3; ++i) {
            double denom = 0.0;
            double score[3];
            for (int j = 0; j < 3; ++j) {
                double dot = 0.0;
                for (int k = 0; k < 2; ++k) dot += dst(i, k) * src(j, k);
                score[j] = std::exp(std::max(dot, 0.0));
                denom += score[j];
            }
            double row = 0.0;
            for (int j = 0; j < 3; ++j) {
                CHECK(p(i, j) == doctest::Approx(score[j] / denom).epsilon(1e-12));
                CHECK(p(i, j) > 0.0);
                row += p(i, j);
            }
            CHECK(std::abs(row - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("node history reorders time-major rows per node") {
    ad::Tape tape;
    Matrix x(6, 2);  // T=3, N=2, C=2
    for (int r = 0; r < 6; ++r) {
        x(r, 0) = r;
        x(r, 1) = 100 + r;
    }
    const Matrix h = node_history(tape.constant(x), 3).value();
    REQUIRE(h.rows() == 2);
    REQUIRE(h.cols() == 6);
    // node 1: channel 0 at t = 0,1,2 -> rows 1,3,5
    CHECK(h(1, 0) == 1);
    CHECK(h(1, 1) == 3);
    CHECK(h(1, 2) == 5);
    CHECK(h(1, 3) == 101);
    CHECK(h(1, 5) == 105);
}

TEST_CASE("dynamic features") {
    std::mt19937_64 rng(3);
    const int nodes = 4, steps = 3, hidden = 2, embed = 2;
    Setup s;
    fill(s, nodes, steps, hidden, embed, rng);
    const Var x = s.tape.constant(testing::random_matrix(steps * nodes, hidden, rng));
    const auto df = build_dynamic_features(x, steps, 5, 2, s.emb, s.fc);
    CHECK(df.source.rows() == 4);
    CHECK(df.source.cols() == 8);
    const Matrix& src = df.source.value();
    const Matrix& dst = df.target.value();
    for (int i = 0; i < nodes; ++i) {
        // time embeddings are broadcast to every row
        CHECK(src.block(i, embed, 1, embed) == s.emb.time_of_day.value().row(5));
        CHECK(src.block(i, 2 * embed, 1, embed) == s.emb.day_of_week.value().row(2));
        CHECK(src.block(i, 3 * embed, 1, embed) == s.emb.node_src.value().row(i));
        CHECK(dst.block(i, 3 * embed, 1, embed) == s.emb.node_dst.value().row(i));
        CHECK(src.block(i, 0, 1, embed) == dst.block(i, 0, 1, embed));
    }
}

TEST_CASE("zero latent input and zero biases give a zero FC slice") {
    std::mt19937_64 rng(4);
    Setup s;
    fill(s, 3, 2, 4, 2, rng);
    s.fc.fc1_b = s.tape.constant(Matrix::Zero(1, 4));
    s.fc.fc2_b = s.tape.constant(Matrix::Zero(1, 2));
    const auto df = build_dynamic_features(s.tape.constant(Matrix::Zero(6, 4)), 2, 0, 0, s.emb, s.fc);
    CHECK(df.source.value().leftCols(2).isZero());
}

TEST_CASE("dynamic transitions stay inside the static transitions") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const int nodes = 6;
        Matrix a = testing::random_matrix(nodes, nodes, rng, 0.0, 1.0);
        for (int i = 0; i < nodes; ++i) {
            for (int j = 0; j < nodes; ++j) {
                if (a(i, j) < 0.5 || i == j) a(i, j) = 0.0;
            }
        }
        const auto base = transition_matrices(a);
        Setup s;
        fill(s, nodes, 3, 4, 3, rng, 2.0);
        const auto df = build_dynamic_features(s.tape.constant(testing::random_matrix(3 * nodes, 4, rng)), 3, 1, 1,
                                               s.emb, s.fc);
        const auto dy = dynamic_transitions(df, base, s.fwd, s.bwd);
        const Matrix& f = dy.forward.value();
        const Matrix& b = dy.backward.value();
        CHECK((f.array() >= 0.0).all());
        CHECK((f.array() <= base.forward.array()).all());
        CHECK((b.array() >= 0.0).all());
        CHECK((b.array() <= base.backward.array()).all());
        CHECK(((base.forward.array() == 0.0) <= (f.array() == 0.0)).all());
    }
}

TEST_CASE("zero projections give a uniform mask") {
    std::mt19937_64 rng(6);
    const int nodes = 5;
    Matrix a = testing::random_matrix(nodes, nodes, rng, 0.0, 1.0);
    const auto base = transition_matrices(a);
    Setup s;
    fill(s, nodes, 2, 3, 2, rng);
    const Var zero = s.tape.constant(Matrix::Zero(8, 3));
    const auto df = build_dynamic_features(s.tape.constant(testing::random_matrix(2 * nodes, 3, rng)), 2, 0, 0, s.emb, s.fc);
    const auto dy = dynamic_transitions(df, base, {zero, zero}, {zero, zero});
    CHECK((dy.forward.value() - base.forward / nodes).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((dy.backward.value() - base.backward / nodes).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("attention mask rows are distributions") {
    std::mt19937_64 rng(7);
    ad::Tape tape;
    const Var f = tape.constant(testing::random_matrix(7, 8, rng, -3, 3));
    const AttentionMaskWeights w{tape.constant(testing::random_matrix(8, 4, rng)), tape.constant(testing::random_matrix(8, 4, rng))};
    const Matrix m = attention_mask(f, w).value();
    for (int i = 0; i < 7; ++i) CHECK(std::abs(m.row(i).sum() - 1.0) < 1e-12);
    CHECK((m.array() > 0.0).all());
}

TEST_CASE("gradients reach every embedding and projection") {
    std::mt19937_64 rng(8);
    const int nodes = 4, steps = 3, hidden = 3, embed = 2;
    ParameterStore store;
    const auto add = [&](const char* name, ad::Index r, ad::Index c) { return store.add(name, 0.8 * testing::random_matrix(r, c, rng)); };
    const ParamId src = add("src", nodes, embed), dst = add("dst", nodes, embed), tod = add("tod", 24, embed),
                  dow = add("dow", 7, embed), w1 = add("fc1.w", steps * hidden, hidden), b1 = add("fc1.b", 1, hidden),
                  w2 = add("fc2.w", hidden, embed), b2 = add("fc2.b", 1, embed), fq = add("fq", 4 * embed, hidden),
                  fk = add("fk", 4 * embed, hidden), bq = add("bq", 4 * embed, hidden), bk = add("bk", 4 * embed, hidden);
    const Matrix x = testing::random_matrix(steps * nodes, hidden, rng);
    Matrix a = testing::random_matrix(nodes, nodes, rng, 0.0, 1.0);
    const auto base = transition_matrices(a);
    const Matrix probe_f = testing::random_matrix(nodes, nodes, rng);
    const Matrix probe_b = testing::random_matrix(nodes, nodes, rng);
    const Matrix probe_a = testing::random_matrix(nodes, nodes, rng);
    const auto errors = testing::gradient_check(store, [&](Binder& b) {
        const Embeddings emb{b(src), b(dst), b(tod), b(dow)};
        const auto df = build_dynamic_features(b.constant(x), steps, 3, 4, emb, {b(w1), b(b1), b(w2), b(b2)});
        const auto dy = dynamic_transitions(df, base, {b(fq), b(fk)}, {b(bq), b(bk)});
        const Var adaptive = self_adaptive_transition(emb.node_src, emb.node_dst);
        const Var parts[] = {ad::weighted_sum(dy.forward, probe_f), ad::weighted_sum(dy.backward, probe_b),
                             ad::weighted_sum(adaptive, probe_a)};
        return ad::sum(ad::vconcat(parts));
    });
    for (const auto& e : errors) {
        INFO(e.name);
        CHECK(e.relative < 1e-6);
        CHECK(e.analytic_norm > 0.0);
    }
}
