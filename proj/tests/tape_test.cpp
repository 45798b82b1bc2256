#include <cmath>
#include <vector>

#include "doctest.h"
#include "qgen/gradcheck.hpp"
#include "qgen/rng.hpp"
#include "qgen/tape.hpp"

using qgen::AttentionVars;
using qgen::GradCheckResult;
using qgen::grad_check_tape;
using qgen::init_params;
using qgen::LstmVars;
using qgen::Rng;
using qgen::Tape;
using qgen::Tensor;
using qgen::Var;

namespace {

std::vector<Tensor> random_point(const std::vector<std::vector<int>>& shapes, std::uint64_t seed,
                                 double scale = 1.0) {
    Rng rng(seed);
    std::vector<Tensor> out;
    out.reserve(shapes.size());
    for (const auto& s : shapes) out.push_back(init_params(s, scale, rng));
    return out;
}

void check_primitive(const std::function<Var(Tape&, const std::vector<Var>&)>& build,
                     const std::vector<std::vector<int>>& shapes, double scale = 1.0) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        GradCheckResult r = grad_check_tape(build, random_point(shapes, seed, scale));
        CHECK(r.max_rel_err < 1e-4);
    }
}

}  // namespace

TEST_CASE("sigmoid at zero: value 0.5, derivative 0.25") {
    Tape t;
    Var x = t.leaf(Tensor::scalar(0.0));
    Var s = t.sigmoid(x);
    CHECK(t.val(s).scalar_value() == 0.5);
    t.backward(s);
    CHECK(t.grad(x)[0] == 0.25);
}

TEST_CASE("softmax of equal logits is uniform; always a distribution") {
    Tape t;
    Var x = t.leaf(Tensor::vec({1.7, 1.7, 1.7, 1.7, 1.7}));
    const Tensor& y = t.val(t.softmax(x));
    for (int i = 0; i < 5; ++i) CHECK(y[i] == doctest::Approx(0.2).epsilon(1e-12));

    Rng rng(21);
    for (int trial = 0; trial < 50; ++trial) {
        Tape t2;
        Var z = t2.leaf(init_params({11}, 8.0, rng));
        const Tensor& p = t2.val(t2.softmax(z));
        double sum = 0.0;
        for (int i = 0; i < p.size(); ++i) {
            CHECK(p[i] > 0.0);
            sum += p[i];
        }
        CHECK(std::fabs(sum - 1.0) < 1e-9);
    }
}

TEST_CASE("lstm cell with zero parameters and unit cell state") {
    Tape t;
    LstmVars p;
    p.w_ih = t.leaf(Tensor({4, 1}));
    p.w_hh = t.leaf(Tensor({4, 1}));
    p.bias = t.leaf(Tensor({4}));
    Var x = t.leaf(Tensor::vec({0.3}));
    Var h = t.leaf(Tensor::vec({0.0}));
    Var c = t.leaf(Tensor::vec({1.0}));
    auto [h2, c2] = t.lstm_cell(x, h, c, p);
    // gates all sigmoid(0) = 0.5, candidate tanh(0) = 0
    CHECK(t.val(c2)[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(t.val(h2)[0] == doctest::Approx(0.23105857863000487).epsilon(1e-14));
}

TEST_CASE("backward basics: identity, accumulation, scalar-only loss") {
    Tape t;
    Var x = t.leaf(Tensor::scalar(3.0));
    t.backward(x);
    CHECK(t.grad(x)[0] == 1.0);

    Tape t2;
    Var y = t2.leaf(Tensor::scalar(2.0));
    Var two_paths = t2.add(y, y);
    t2.backward(two_paths);
    CHECK(t2.grad(y)[0] == 2.0);

    Tape t3;
    Var v = t3.leaf(Tensor::vec({1.0, 2.0}));
    CHECK_THROWS_AS(t3.backward(v), std::invalid_argument);
}

TEST_CASE("gradient of unused leaf is zero") {
    Tape t;
    Var a = t.leaf(Tensor::scalar(1.0));
    Var b = t.leaf(Tensor::scalar(5.0));
    t.backward(t.scale(a, 2.0));
    CHECK(t.grad(b)[0] == 0.0);
}

TEST_CASE("grad check: arithmetic ops") {
    check_primitive(
        [](Tape& t, const std::vector<Var>& v) {
            Var u = t.mul(t.add(v[0], v[1]), t.sub(v[0], t.scale(v[1], 0.7)));
            return t.add(t.sum(u), t.mean(t.mul(v[0], v[0])));
        },
        {{6}, {6}});
}

TEST_CASE("grad check: add_n, concat, slice, pick") {
    check_primitive(
        [](Tape& t, const std::vector<Var>& v) {
            Var n = t.add_n({v[0], v[1], v[0]});
            Var c = t.concat({n, t.slice(v[1], 1, 2)});
            return t.add(t.sum(t.mul(c, t.concat({v[1], t.slice(v[0], 0, 2)}))),
                         t.pick(c, 3));
        },
        {{4}, {4}});
}

TEST_CASE("grad check: softmax, log_softmax, neg_log_pick") {
    check_primitive(
        [](Tape& t, const std::vector<Var>& v) {
            Var a = t.neg_log_pick(t.softmax(v[0]), 1);
            Var b = t.sum(t.mul(t.log_softmax(v[0]), v[1]));
            return t.add(a, b);
        },
        {{7}, {7}}, 3.0);
}

TEST_CASE("grad check: linear and matvec") {
    check_primitive(
        [](Tape& t, const std::vector<Var>& v) {
            Var y = t.tanh_(t.linear(v[0], v[1], v[2]));
            Var z = t.sigmoid(t.matvec(v[1], v[0]));
            return t.add(t.sum(y), t.sum(t.mul(z, v[2])));
        },
        {{3}, {4, 3}, {4}});
}

TEST_CASE("grad check: row, rows, stack_rows") {
    check_primitive(
        [](Tape& t, const std::vector<Var>& v) {
            Var r = t.mul(t.row(v[0], 1), t.row(v[0], 0));
            Var gathered = t.rows(v[0], {2, 0, 2});  // repeated id accumulates
            Var stacked = t.stack_rows({r, t.row(gathered, 1)});
            return t.add(t.sum(t.mul(t.row(stacked, 0), t.row(stacked, 1))), t.sum(gathered));
        },
        {{3, 5}});
}

TEST_CASE("grad check: activations") {
    check_primitive(
        [](Tape& t, const std::vector<Var>& v) {
            return t.add(t.sum(t.sigmoid(v[0])),
                         t.add(t.sum(t.tanh_(v[0])), t.sum(t.mul(t.relu(v[1]), v[1]))));
        },
        // relu kink: keep inputs away from zero by offsetting below
        {{5}, {5}}, 2.0);
}

TEST_CASE("grad check: cross entropy and binary cross entropy") {
    check_primitive(
        [](Tape& t, const std::vector<Var>& v) {
            Var ce = t.cross_entropy(v[0], 2);
            Var b1 = t.binary_cross_entropy(t.sigmoid(t.pick(v[0], 0)), 1.0);
            Var b0 = t.binary_cross_entropy(t.sigmoid(t.pick(v[0], 1)), 0.0);
            return t.add(ce, t.add(b1, b0));
        },
        {{6}}, 2.0);
}

TEST_CASE("grad check: lstm cell") {
    check_primitive(
        [](Tape& t, const std::vector<Var>& v) {
            LstmVars p{v[3], v[4], v[5]};
            auto [h2, c2] = t.lstm_cell(v[0], v[1], v[2], p);
            return t.add(t.sum(t.mul(h2, v[6])), t.sum(t.mul(c2, v[7])));
        },
        {{3}, {2}, {2}, {8, 3}, {8, 2}, {8}, {2}, {2}});
}

TEST_CASE("grad check: additive attention") {
    check_primitive(
        [](Tape& t, const std::vector<Var>& v) {
            AttentionVars p{v[3], v[4], v[5], v[6]};
            auto [ctx, w] = t.additive_attention(v[0], v[1], v[2], p);
            return t.add(t.sum(t.mul(ctx, v[7])), t.sum(t.mul(w, v[8])));
        },
        {{2}, {4, 3}, {4, 5}, {3, 2}, {3, 3}, {3}, {3}, {5}, {4}});
}

TEST_CASE("grad check: precomputed attention keys match the wrapper") {
    Rng rng(5);
    std::vector<Tensor> pt = {init_params({2}, 1.0, rng),    init_params({4, 3}, 1.0, rng),
                              init_params({4, 5}, 1.0, rng), init_params({3, 2}, 1.0, rng),
                              init_params({3, 3}, 1.0, rng), init_params({3}, 1.0, rng),
                              init_params({3}, 1.0, rng)};
    Tape t;
    std::vector<Var> v;
    for (const auto& x : pt) v.push_back(t.leaf(x));
    AttentionVars p{v[3], v[4], v[5], v[6]};
    Var pk = t.attn_precompute(v[1], p);
    auto [ctx1, w1] = t.attn_step(v[0], pk, v[2], p);
    auto [ctx2, w2] = t.additive_attention(v[0], v[1], v[2], p);
    for (int i = 0; i < t.val(ctx1).size(); ++i) CHECK(t.val(ctx1)[i] == t.val(ctx2)[i]);
    for (int i = 0; i < t.val(w1).size(); ++i) CHECK(t.val(w1)[i] == t.val(w2)[i]);

    double sum = 0.0;
    for (int i = 0; i < t.val(w1).size(); ++i) {
        CHECK(t.val(w1)[i] > 0.0);
        sum += t.val(w1)[i];
    }
    CHECK(std::fabs(sum - 1.0) < 1e-9);
}

TEST_CASE("grad check: max over time and mean over span") {
    check_primitive(
        [](Tape& t, const std::vector<Var>& v) {
            std::vector<Var> seq = {v[0], v[1], v[2]};
            Var mx = t.max_over_time(seq);
            Var mn = t.mean_over_span(seq, 1, 2);
            return t.add(t.sum(t.mul(mx, v[3])), t.sum(t.mul(mn, v[4])));
        },
        {{4}, {4}, {4}, {4}, {4}});
}

TEST_CASE("max over time routes gradient to argmax positions only") {
    Tape t;
    Var a = t.leaf(Tensor::vec({1.0, 5.0}));
    Var b = t.leaf(Tensor::vec({3.0, 2.0}));
    Var m = t.max_over_time({a, b});
    CHECK(t.val(m)[0] == 3.0);
    CHECK(t.val(m)[1] == 5.0);
    t.backward(t.sum(m));
    CHECK(t.grad(a)[0] == 0.0);
    CHECK(t.grad(a)[1] == 1.0);
    CHECK(t.grad(b)[0] == 1.0);
    CHECK(t.grad(b)[1] == 0.0);
}

TEST_CASE("mean over span touches only span positions") {
    Tape t;
    Var a = t.leaf(Tensor::vec({1.0}));
    Var b = t.leaf(Tensor::vec({2.0}));
    Var c = t.leaf(Tensor::vec({3.0}));
    Var m = t.mean_over_span({a, b, c}, 0, 1);
    CHECK(t.val(m)[0] == doctest::Approx(1.5).epsilon(1e-15));
    t.backward(t.sum(m));
    CHECK(t.grad(a)[0] == 0.5);
    CHECK(t.grad(b)[0] == 0.5);
    CHECK(t.grad(c)[0] == 0.0);
}

TEST_CASE("copy mixture: hand-computed scatter") {
    Tape t;
    Var pv = t.leaf(Tensor::vec({0.5, 0.3, 0.2}));
    Var g = t.leaf(Tensor::scalar(0.6));
    Var aw = t.leaf(Tensor::vec({0.7, 0.3}));
    Var d = t.copy_mixture(pv, g, aw, {3, 1}, 4);
    const Tensor& out = t.val(d);
    CHECK(out[0] == doctest::Approx(0.30).epsilon(1e-12));
    CHECK(out[1] == doctest::Approx(0.18 + 0.4 * 0.3).epsilon(1e-12));
    CHECK(out[2] == doctest::Approx(0.12).epsilon(1e-12));
    CHECK(out[3] == doctest::Approx(0.4 * 0.7).epsilon(1e-12));
    double sum = 0.0;
    for (int i = 0; i < out.size(); ++i) sum += out[i];
    CHECK(std::fabs(sum - 1.0) < 1e-12);
}

TEST_CASE("copy mixture gate boundaries") {
    Tape t;
    Var pv = t.leaf(Tensor::vec({0.5, 0.3, 0.2}));
    Var aw = t.leaf(Tensor::vec({0.7, 0.3}));

    Var all_vocab = t.copy_mixture(pv, t.leaf(Tensor::scalar(1.0)), aw, {3, 1}, 4);
    CHECK(t.val(all_vocab)[0] == 0.5);
    CHECK(t.val(all_vocab)[3] == 0.0);

    Var all_copy = t.copy_mixture(pv, t.leaf(Tensor::scalar(0.0)), aw, {3, 1}, 4);
    CHECK(t.val(all_copy)[0] == 0.0);
    CHECK(t.val(all_copy)[2] == 0.0);
    CHECK(t.val(all_copy)[1] == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(t.val(all_copy)[3] == doctest::Approx(0.7).epsilon(1e-15));
}

TEST_CASE("grad check: copy mixture through softmax and gate") {
    check_primitive(
        [](Tape& t, const std::vector<Var>& v) {
            Var pv = t.softmax(v[0]);
            Var g = t.sigmoid(t.pick(v[1], 0));
            Var aw = t.softmax(t.slice(v[1], 1, 3));
            Var d = t.copy_mixture(pv, g, aw, {6, 2, 6}, 8);
            return t.sum(t.mul(d, v[2]));
        },
        {{5}, {4}, {8}});
}

TEST_CASE("shape errors name the operation") {
    Tape t;
    Var a = t.leaf(Tensor::vec({1.0, 2.0}));
    Var b = t.leaf(Tensor::vec({1.0, 2.0, 3.0}));
    CHECK_THROWS_AS(t.add(a, b), std::invalid_argument);
    CHECK_THROWS_AS(t.slice(a, 1, 5), std::invalid_argument);
    CHECK_THROWS_AS(t.pick(a, 7), std::invalid_argument);
    CHECK_THROWS_AS(t.linear(a, t.leaf(Tensor({3, 3})), t.leaf(Tensor({3}))),
                    std::invalid_argument);
}

TEST_CASE("grad check of a quadratic is near exact") {
    // f(x) = x^2 at x = 3: central differences are exact for quadratics
    GradCheckResult r = grad_check_tape(
        [](Tape& t, const std::vector<Var>& v) { return t.mul(v[0], v[0]); },
        {Tensor::scalar(3.0)});
    CHECK(r.max_rel_err < 1e-9);
}
