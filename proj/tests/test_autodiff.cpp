#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "gcnlab/ops.hpp"
#include "gcnlab/optim.hpp"
#include "helpers/dense.hpp"
#include "helpers/fixtures.hpp"
#include "helpers/gradcheck.hpp"

using namespace gcnlab;

namespace {

constexpr double kOpTol = 1e-5; // per-op gradcheck bound
constexpr int kTrials = 20;

void fill_normal(Parameter& p, Rng& rng, bool avoid_zero = false) {
    for (auto& v : p.value.data) {
        v = rng.normal();
        if (avoid_zero && std::abs(v) < 0.05) v = (v < 0 ? -0.1 : 0.1);
    }
}

Tensor random_constant(std::size_t rows, std::size_t cols, Rng& rng) {
    Tensor c(rows, cols);
    for (auto& v : c.data) v = rng.normal();
    return c;
}

// Reduces an op output to a scalar against a fixed random cotangent so the
// incoming gradient is non-uniform.
Tensor weighted_sum(Tape* tape, const Tensor& out, const Tensor& c) {
    return sum(tape, elementwise_mul(tape, out, c));
}

} // namespace

TEST_CASE("gradcheck: matmul") {
    for (int t = 0; t < kTrials; ++t) {
        Rng rng(100 + t);
        Parameter a("a", 3, 4), b("b", 4, 2);
        fill_normal(a, rng);
        fill_normal(b, rng);
        Tensor c = random_constant(3, 2, rng);
        auto loss = [&](Tape* tape) {
            Tensor av = tape ? tape->watch(a) : a.value;
            Tensor bv = tape ? tape->watch(b) : b.value;
            return weighted_sum(tape, matmul(tape, av, bv), c);
        };
        INFO("trial " << t);
        CHECK(gradcheck::max_rel_err({&a, &b}, loss) <= kOpTol);
    }
}

TEST_CASE("gradcheck: add, add_scaled, scale") {
    for (int t = 0; t < kTrials; ++t) {
        Rng rng(200 + t);
        Parameter a("a", 2, 5), b("b", 2, 5);
        fill_normal(a, rng);
        fill_normal(b, rng);
        Tensor c = random_constant(2, 5, rng);
        double alpha = rng.normal();
        auto loss = [&](Tape* tape) {
            Tensor av = tape ? tape->watch(a) : a.value;
            Tensor bv = tape ? tape->watch(b) : b.value;
            Tensor s = add(tape, av, bv);
            s = add_scaled(tape, s, bv, alpha);
            s = scale(tape, s, 0.75);
            return weighted_sum(tape, s, c);
        };
        INFO("trial " << t);
        CHECK(gradcheck::max_rel_err({&a, &b}, loss) <= kOpTol);
    }
}

TEST_CASE("gradcheck: relu") {
    for (int t = 0; t < kTrials; ++t) {
        Rng rng(300 + t);
        Parameter a("a", 4, 3);
        fill_normal(a, rng, /*avoid_zero=*/true);
        Tensor c = random_constant(4, 3, rng);
        auto loss = [&](Tape* tape) {
            Tensor av = tape ? tape->watch(a) : a.value;
            return weighted_sum(tape, relu(tape, av), c);
        };
        INFO("trial " << t);
        CHECK(gradcheck::max_rel_err({&a}, loss) <= kOpTol);
    }
}

TEST_CASE("gradcheck: elementwise_mul") {
    for (int t = 0; t < kTrials; ++t) {
        Rng rng(400 + t);
        Parameter a("a", 3, 3), b("b", 3, 3);
        fill_normal(a, rng);
        fill_normal(b, rng);
        Tensor c = random_constant(3, 3, rng);
        auto loss = [&](Tape* tape) {
            Tensor av = tape ? tape->watch(a) : a.value;
            Tensor bv = tape ? tape->watch(b) : b.value;
            return weighted_sum(tape, elementwise_mul(tape, av, bv), c);
        };
        INFO("trial " << t);
        CHECK(gradcheck::max_rel_err({&a, &b}, loss) <= kOpTol);
    }
}

TEST_CASE("gradcheck: row broadcasts") {
    for (int t = 0; t < kTrials; ++t) {
        Rng rng(500 + t);
        Parameter x("x", 4, 3), b("b", 1, 3), r("r", 1, 3);
        fill_normal(x, rng);
        fill_normal(b, rng);
        fill_normal(r, rng);
        Tensor c = random_constant(4, 3, rng);
        auto loss = [&](Tape* tape) {
            Tensor xv = tape ? tape->watch(x) : x.value;
            Tensor bv = tape ? tape->watch(b) : b.value;
            Tensor rv = tape ? tape->watch(r) : r.value;
            Tensor o = add_row_broadcast(tape, xv, bv);
            o = mul_row_broadcast(tape, o, rv);
            return weighted_sum(tape, o, c);
        };
        INFO("trial " << t);
        CHECK(gradcheck::max_rel_err({&x, &b, &r}, loss) <= kOpTol);
    }
}

TEST_CASE("gradcheck: scale_by_entry and row") {
    for (int t = 0; t < kTrials; ++t) {
        Rng rng(600 + t);
        Parameter x("x", 3, 4), s("s", 1, 5);
        fill_normal(x, rng);
        fill_normal(s, rng);
        Tensor c = random_constant(3, 4, rng);
        Tensor c2 = random_constant(1, 4, rng);
        std::size_t k = rng.uniform_int(5);
        auto loss = [&](Tape* tape) {
            Tensor xv = tape ? tape->watch(x) : x.value;
            Tensor sv = tape ? tape->watch(s) : s.value;
            Tensor a = weighted_sum(tape, scale_by_entry(tape, xv, sv, k), c);
            Tensor b = weighted_sum(tape, row(tape, xv, 1), c2);
            return add(tape, a, b);
        };
        INFO("trial " << t);
        CHECK(gradcheck::max_rel_err({&x, &s}, loss) <= kOpTol);
    }
}

TEST_CASE("gradcheck: spmm") {
    auto fixture_set = fixtures::oracle_fixture_set();
    for (int t = 0; t < kTrials; ++t) {
        Rng rng(700 + t);
        const CsrGraph& g = fixture_set[t % fixture_set.size()];
        NormalizedAdjacency adj = symmetric_normalize(g);
        Parameter x("x", g.num_nodes, 3);
        fill_normal(x, rng);
        Tensor c = random_constant(g.num_nodes, 3, rng);
        auto loss = [&](Tape* tape) {
            Tensor xv = tape ? tape->watch(x) : x.value;
            return weighted_sum(tape, spmm(tape, adj, xv), c);
        };
        INFO("trial " << t << " on " << g.num_nodes << "-node fixture");
        CHECK(gradcheck::max_rel_err({&x}, loss) <= kOpTol);
    }
}

TEST_CASE("gradcheck: batch_norm (training mode)") {
    for (int t = 0; t < kTrials; ++t) {
        Rng rng(800 + t);
        Parameter x("x", 6, 3);
        NormParams norm("norm", 3);
        fill_normal(x, rng);
        fill_normal(norm.gamma, rng);
        fill_normal(norm.beta, rng);
        Tensor c = random_constant(6, 3, rng);
        auto loss = [&](Tape* tape) {
            Tensor xv = tape ? tape->watch(x) : x.value;
            return weighted_sum(tape, batch_norm(tape, xv, norm, true), c);
        };
        INFO("trial " << t);
        CHECK(gradcheck::max_rel_err({&x, &norm.gamma, &norm.beta}, loss) <= kOpTol);
    }
}

TEST_CASE("gradcheck: layer_norm") {
    for (int t = 0; t < kTrials; ++t) {
        Rng rng(900 + t);
        Parameter x("x", 5, 4);
        NormParams norm("norm", 4);
        fill_normal(x, rng);
        fill_normal(norm.gamma, rng);
        fill_normal(norm.beta, rng);
        Tensor c = random_constant(5, 4, rng);
        auto loss = [&](Tape* tape) {
            Tensor xv = tape ? tape->watch(x) : x.value;
            return weighted_sum(tape, layer_norm(tape, xv, norm), c);
        };
        INFO("trial " << t);
        CHECK(gradcheck::max_rel_err({&x, &norm.gamma, &norm.beta}, loss) <= kOpTol);
    }
}

TEST_CASE("gradcheck: dropout with a fixed mask") {
    for (int t = 0; t < kTrials; ++t) {
        Rng rng(1000 + t);
        Parameter x("x", 5, 5);
        fill_normal(x, rng);
        Tensor c = random_constant(5, 5, rng);
        auto loss = [&](Tape* tape) {
            Tensor xv = tape ? tape->watch(x) : x.value;
            Rng mask_rng = Rng::derive(42 + t, stream::dropout, 0, 0);
            return weighted_sum(tape, dropout(tape, xv, 0.4, true, mask_rng), c);
        };
        INFO("trial " << t);
        CHECK(gradcheck::max_rel_err({&x}, loss) <= kOpTol);
    }
}

TEST_CASE("gradcheck: softmax_vec, softmax_cols, log_softmax + nll") {
    for (int t = 0; t < kTrials; ++t) {
        Rng rng(1100 + t);
        Parameter w("w", 1, 4), x("x", 4, 3), p("p", 6, 4);
        fill_normal(w, rng);
        fill_normal(x, rng);
        fill_normal(p, rng);
        Tensor c1 = random_constant(1, 4, rng);
        Tensor c2 = random_constant(4, 3, rng);
        std::vector<std::int64_t> labels;
        for (int i = 0; i < 6; ++i)
            labels.push_back(static_cast<std::int64_t>(rng.uniform_int(4)));
        std::vector<NodeId> mask{0, 2, 3, 5};
        auto loss = [&](Tape* tape) {
            Tensor wv = tape ? tape->watch(w) : w.value;
            Tensor xv = tape ? tape->watch(x) : x.value;
            Tensor pv = tape ? tape->watch(p) : p.value;
            Tensor a = weighted_sum(tape, softmax_vec(tape, wv), c1);
            Tensor b = weighted_sum(tape, softmax_cols(tape, xv), c2);
            Tensor nll = nll_loss(tape, log_softmax_rows(tape, pv), labels, mask);
            return add(tape, add(tape, a, b), nll);
        };
        INFO("trial " << t);
        CHECK(gradcheck::max_rel_err({&w, &x, &p}, loss) <= kOpTol);
    }
}

TEST_CASE("softmax fixed point: softmax([ln 3, 0]) = (3/4, 1/4)") {
    Tensor v(1, 2);
    v.data = {std::log(3.0), 0.0};
    Tensor s = softmax_vec(nullptr, v);
    CHECK(s.data[0] == Catch::Approx(0.75).margin(1e-12));
    CHECK(s.data[1] == Catch::Approx(0.25).margin(1e-12));
}

TEST_CASE("log_softmax of a uniform row is -log(width)") {
    Tensor x(1, 4);
    Tensor lp = log_softmax_rows(nullptr, x);
    for (double v : lp.data) CHECK(v == Catch::Approx(-std::log(4.0)).margin(1e-12));
}

TEST_CASE("log_softmax is shift-invariant and stable for huge logits") {
    Tensor x(1, 3);
    x.data = {1000.0, 1001.0, 999.0};
    Tensor lp = log_softmax_rows(nullptr, x);
    Tensor y(1, 3);
    y.data = {0.0, 1.0, -1.0};
    Tensor lq = log_softmax_rows(nullptr, y);
    for (int j = 0; j < 3; ++j)
        CHECK(lp.data[j] == Catch::Approx(lq.data[j]).margin(1e-12));
}

TEST_CASE("nll_loss picks out masked label entries") {
    Tensor lp(3, 2);
    lp.data = {-0.5, -1.0, -2.0, -0.25, -4.0, -8.0};
    std::vector<std::int64_t> labels{0, 1, 1};
    Tensor l = nll_loss(nullptr, lp, labels, {0, 2});
    CHECK(l.data[0] == Catch::Approx((0.5 + 8.0) / 2.0).margin(1e-12));
    CHECK_THROWS_AS(nll_loss(nullptr, lp, labels, {}), ValueError);
    CHECK_THROWS_AS(nll_loss(nullptr, lp, {0, 1, -1}, {2}), ValueError);
}

TEST_CASE("batch_norm normalizes to hand-computed values") {
    Tensor x(2, 1);
    x.data = {-2.0, 4.0}; // mean 1, biased variance 9
    NormParams norm("n", 1);
    Tensor out = batch_norm(nullptr, x, norm, true);
    const double inv = 1.0 / std::sqrt(9.0 + 1e-5);
    CHECK(out.data[0] == Catch::Approx(-3.0 * inv).margin(1e-12));
    CHECK(out.data[1] == Catch::Approx(3.0 * inv).margin(1e-12));
    // momentum 0.9 update from initial stats (0, 1)
    CHECK(norm.running_mean[0] == Catch::Approx(0.1).margin(1e-12));
    CHECK(norm.running_var[0] == Catch::Approx(0.9 + 0.1 * 9.0).margin(1e-12));

    SECTION("inference uses running stats, not the batch") {
        norm.running_mean[0] = 1.0;
        norm.running_var[0] = 4.0;
        Tensor y(1, 1);
        y.data = {5.0};
        Tensor inf = batch_norm(nullptr, y, norm, false);
        CHECK(inf.data[0] == Catch::Approx(4.0 / std::sqrt(4.0 + 1e-5)).margin(1e-12));
    }
    SECTION("gamma and beta apply after normalization") {
        norm.gamma.value.data[0] = 2.0;
        norm.beta.value.data[0] = -1.0;
        Tensor out2 = batch_norm(nullptr, x, norm, true);
        CHECK(out2.data[0] == Catch::Approx(2.0 * (-3.0 * inv) - 1.0).margin(1e-12));
    }
}

TEST_CASE("layer_norm normalizes each row independently") {
    Tensor x(2, 2);
    x.data = {1.0, 3.0, 10.0, 10.0};
    NormParams norm("n", 2);
    Tensor out = layer_norm(nullptr, x, norm);
    const double inv = 1.0 / std::sqrt(1.0 + 1e-5);
    CHECK(out(0, 0) == Catch::Approx(-inv).margin(1e-12));
    CHECK(out(0, 1) == Catch::Approx(inv).margin(1e-12));
    // constant row: variance 0, eps keeps it finite
    CHECK(out(1, 0) == Catch::Approx(0.0).margin(1e-12));
    CHECK(out(1, 1) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("dropout semantics") {
    Tensor x(40, 25);
    for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] = 1.0;

    SECTION("rate 0 is the identity and consumes no randomness") {
        Rng rng(5);
        Tensor out = dropout(nullptr, x, 0.0, true, rng);
        CHECK(out.data == x.data);
        Rng fresh(5);
        CHECK(rng.next_u64() == fresh.next_u64());
    }
    SECTION("inference mode is the identity and consumes no randomness") {
        Rng rng(5);
        Tensor out = dropout(nullptr, x, 0.5, false, rng);
        CHECK(out.data == x.data);
        Rng fresh(5);
        CHECK(rng.next_u64() == fresh.next_u64());
    }
    SECTION("kept entries are rescaled by 1/(1-rate)") {
        Rng rng(5);
        Tensor out = dropout(nullptr, x, 0.25, true, rng);
        std::size_t dropped = 0;
        for (double v : out.data) {
            if (v == 0.0) ++dropped;
            else CHECK(v == Catch::Approx(1.0 / 0.75).margin(1e-12));
        }
        double frac = static_cast<double>(dropped) / static_cast<double>(out.data.size());
        CHECK(frac == Catch::Approx(0.25).margin(0.05));
    }
    SECTION("same rng stream reproduces the mask") {
        Rng a(9), b(9);
        Tensor oa = dropout(nullptr, x, 0.5, true, a);
        Tensor ob = dropout(nullptr, x, 0.5, true, b);
        CHECK(oa.data == ob.data);
    }
    SECTION("rate outside [0,1) rejected") {
        Rng rng(1);
        CHECK_THROWS_AS(dropout(nullptr, x, 1.0, true, rng), ValueError);
        CHECK_THROWS_AS(dropout(nullptr, x, -0.1, true, rng), ValueError);
    }
}

TEST_CASE("spmm matches the dense oracle on every fixture") {
    Rng rng(77);
    for (const auto& g : fixtures::oracle_fixture_set()) {
        NormalizedAdjacency adj = symmetric_normalize(g);
        Tensor x(g.num_nodes, 3);
        for (auto& v : x.data) v = rng.normal();
        Tensor got = spmm(nullptr, adj, x);
        auto expect = dense::matmul(dense::normalized_adjacency(g), dense::from_tensor(x));
        INFO(g.num_nodes << "-node fixture");
        CHECK(dense::max_abs_diff(dense::from_tensor(got), expect) <= 1e-12);
    }
}

TEST_CASE("tape: backward twice accumulates parameter gradients") {
    Parameter a("a", 1, 2);
    a.value.data = {2.0, 3.0};
    Tape tape;
    Tensor av = tape.watch(a);
    Tensor loss = sum(&tape, elementwise_mul(&tape, av, av));
    tape.backward(loss);
    std::vector<double> once = a.grad; // d/da sum(a*a) = 2a
    CHECK(once[0] == Catch::Approx(4.0).margin(1e-12));
    CHECK(once[1] == Catch::Approx(6.0).margin(1e-12));
    tape.backward(loss);
    CHECK(a.grad[0] == Catch::Approx(8.0).margin(1e-12));
    CHECK(a.grad[1] == Catch::Approx(12.0).margin(1e-12));
}

TEST_CASE("tape: watching a parameter twice reuses the same node") {
    Parameter a("a", 1, 1);
    a.value.data = {3.0};
    Tape tape;
    Tensor v1 = tape.watch(a);
    Tensor v2 = tape.watch(a);
    CHECK(v1.node == v2.node);
    Tensor loss = sum(&tape, elementwise_mul(&tape, v1, v2)); // a^2
    tape.backward(loss);
    CHECK(a.grad[0] == Catch::Approx(6.0).margin(1e-12));
}

TEST_CASE("tape: backward demands a scalar") {
    Parameter a("a", 2, 2);
    Tape tape;
    Tensor av = tape.watch(a);
    CHECK_THROWS_AS(tape.backward(av), ValueError);
}

TEST_CASE("non-finite forward values are rejected when checks are on") {
    Tensor x(1, 2);
    x.data = {1.0, std::numeric_limits<double>::infinity()};
    Tensor y(1, 2);
    y.data = {1.0, 1.0};

    const bool saved = finite_checks();
    finite_checks() = true;
    CHECK_THROWS_AS(add(nullptr, x, y), NumericError);
    finite_checks() = false;
    CHECK_NOTHROW(add(nullptr, x, y)); // checks are opt-in
    finite_checks() = saved;
}
