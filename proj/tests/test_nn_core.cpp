#include <doctest.h>

#include <cmath>

#include "stt/nn/adam.hpp"
#include "stt/nn/checkpoint.hpp"
#include "stt/nn/grad_check.hpp"
#include "stt/nn/graph.hpp"
#include "stt/rng.hpp"

using namespace stt;
using namespace stt::nn;

namespace {

Param make_param(const std::string& name, std::vector<int> shape, uint64_t seed, double stddev = 0.5) {
    Param p(name, Tensor::zeros(std::move(shape)));
    Rng rng(mix_seed(seed, 0x7061));
    for (auto& v : p.value.data) v = rng.normal(0.0, stddev);
    return p;
}

} // namespace

TEST_CASE("softmax: uniform logits, closed form, shift invariance") {
    Graph g;
    NodeRef x = g.input(Tensor({1, 4}, {0, 0, 0, 0}));
    NodeRef p = g.softmax_rows(x);
    for (int j = 0; j < 4; ++j) CHECK(g.value(p).at(0, j) == doctest::Approx(0.25).epsilon(1e-12));

    // [ln 2, 0] -> [2/3, 1/3]
    Graph g2;
    NodeRef y = g2.softmax_rows(g2.input(Tensor({1, 2}, {std::log(2.0), 0.0})));
    CHECK(g2.value(y).at(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(g2.value(y).at(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    // shifting all logits leaves the output unchanged
    Rng rng(7);
    Tensor logits({3, 5});
    for (auto& v : logits.data) v = rng.normal(0, 2.0);
    Tensor shifted = logits;
    for (auto& v : shifted.data) v += 100.0;
    Graph ga, gb;
    const Tensor& pa = ga.value(ga.softmax_rows(ga.input(logits)));
    const Tensor& pb = gb.value(gb.softmax_rows(gb.input(shifted)));
    for (int64_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == doctest::Approx(pb[i]).epsilon(1e-9));
}

TEST_CASE("softmax rows are normalized for random logits") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        int n = 2 + rng.below(20);
        Tensor logits({4, n});
        for (auto& v : logits.data) v = rng.normal(0, 5.0);
        Graph g;
        const Tensor& p = g.value(g.softmax_rows(g.input(logits)));
        for (int i = 0; i < 4; ++i) {
            double sum = 0.0;
            for (int j = 0; j < n; ++j) {
                CHECK(p.at(i, j) >= 0.0);
                sum += p.at(i, j);
            }
            CHECK(std::abs(sum - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("cross entropy: uniform logits over 7 classes gives ln 7") {
    Graph g;
    NodeRef logits = g.input(Tensor({1, 7}));
    NodeRef loss = g.cross_entropy_rows(logits, {3});
    CHECK(g.value(loss)[0] == doctest::Approx(1.945910149055313).epsilon(1e-12));
}

TEST_CASE("cross entropy: confident logit drives loss to zero") {
    Graph g;
    Tensor logits({1, 4});
    logits.at(0, 2) = 50.0;
    NodeRef loss = g.cross_entropy_rows(g.input(logits), {2});
    CHECK(g.value(loss)[0] < 1e-12);
    CHECK(g.value(loss)[0] >= 0.0);
}

TEST_CASE("cross entropy rejects out-of-range target") {
    Graph g;
    NodeRef logits = g.input(Tensor({1, 4}));
    CHECK_THROWS_AS((void)g.cross_entropy_rows(logits, {4}), std::out_of_range);
}

TEST_CASE("cross entropy gradient equals softmax minus one-hot") {
    Param logits = make_param("logits", {1, 5}, 3);
    auto loss_fn = [&](Graph& g) { return g.cross_entropy_rows(g.param(logits), {2}); };
    auto report = grad_check(loss_fn, {&logits}, {});
    CHECK(report.pass);
    CHECK(report.max_rel_err <= 1e-6);

    // closed form check
    logits.zero_grad();
    Graph g;
    NodeRef l = g.cross_entropy_rows(g.param(logits), {2});
    g.backward(l);
    g.flush_param_grads();
    Tensor sm = logits.value;
    softmax_row_inplace(sm.data.data(), 5);
    for (int j = 0; j < 5; ++j) {
        double expected = sm[j] - (j == 2 ? 1.0 : 0.0);
        CHECK(logits.grad[j] == doctest::Approx(expected).epsilon(1e-9));
    }
}

TEST_CASE("matmul and layer norm gradients pass finite differences") {
    Param a = make_param("a", {3, 4}, 1);
    Param b = make_param("b", {4, 2}, 2);
    Param gain = make_param("gain", {4}, 4, 0.2);
    Param bias = make_param("bias", {4}, 5, 0.2);
    for (auto& v : gain.value.data) v += 1.0;

    auto loss_fn = [&](Graph& g) {
        NodeRef x = g.layer_norm(g.param(a), g.param(gain), g.param(bias));
        NodeRef y = g.matmul(x, g.param(b));
        return g.mean(g.mul(y, y));
    };
    auto report = grad_check(loss_fn, {&a, &b, &gain, &bias}, {});
    INFO("worst ", report.worst_param, "[", report.worst_index, "] rel err ", report.max_rel_err);
    CHECK(report.pass);
}

TEST_CASE("gather/scatter/scale_rows/scalar_embed gradients") {
    Param table = make_param("table", {6, 3}, 8);
    Param w = make_param("w", {3}, 9);
    Param b = make_param("b", {3}, 10);
    Param s = make_param("s", {4}, 11);
    auto loss_fn = [&](Graph& g) {
        NodeRef rows = g.gather_rows(g.param(table), {1, 5, 0, 1});
        NodeRef emb = g.scalar_embed(g.param(w), g.param(b), {0.5, -1.0, 2.0, 0.0});
        NodeRef mix = g.add(rows, emb);
        NodeRef scaled = g.scale_rows(mix, g.param(s));
        NodeRef spread = g.scatter_rows(scaled, {2, 0, 1, 2}, 3);
        return g.mean(g.mul(spread, spread));
    };
    auto report = grad_check(loss_fn, {&table, &w, &b, &s}, {});
    INFO("worst ", report.worst_param, " rel err ", report.max_rel_err);
    CHECK(report.pass);
}

TEST_CASE("causal softmax: zero leakage from future positions") {
    Rng rng(21);
    Tensor scores({5, 5});
    for (auto& v : scores.data) v = rng.normal(0, 1.0);
    Graph g;
    const Tensor& p = g.value(g.causal_softmax(g.input(scores)));
    for (int i = 0; i < 5; ++i) {
        double sum = 0;
        for (int j = 0; j < 5; ++j) {
            if (j > i) CHECK(p.at(i, j) == 0.0);
            sum += p.at(i, j);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }

    // perturbing scores in row/col > t must not change earlier rows
    Tensor perturbed = scores;
    perturbed.at(4, 4) += 3.0;
    Graph g2;
    const Tensor& p2 = g2.value(g2.causal_softmax(g2.input(perturbed)));
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 5; ++j) CHECK(p.at(i, j) == p2.at(i, j));
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
    Param p = make_param("p", {3, 3}, 30);
    Tensor before = p.value;
    Adam adam({1e-2, 0.9, 0.999, 1e-8});
    adam.register_params({&p});
    p.zero_grad();
    adam.step();
    for (int64_t i = 0; i < p.value.size(); ++i) CHECK(p.value[i] == before[i]);
}

TEST_CASE("adam: first step with constant gradient moves by ~lr*sign(g)") {
    Param p = make_param("p", {4}, 31);
    Tensor before = p.value;
    Adam adam({1e-3, 0.9, 0.999, 1e-8});
    adam.register_params({&p});
    p.grad = Tensor({4}, {0.5, -2.0, 0.001, -3e4});
    adam.step();
    for (int i = 0; i < 4; ++i) {
        double delta = p.value[i] - before[i];
        double expected = -1e-3 * (p.grad[i] > 0 ? 1.0 : -1.0);
        CHECK(delta == doctest::Approx(expected).epsilon(1e-4));
    }
}

TEST_CASE("adam: 200 steps on a scalar quadratic decreases the loss") {
    // f(x) = (x - 3)^2, df = 2(x-3)
    Param x("x", Tensor::scalar(-5.0));
    Adam adam({0.1, 0.9, 0.999, 1e-8});
    adam.register_params({&x});
    double prev = 1e300;
    for (int step = 0; step < 200; ++step) {
        double d = x.value[0] - 3.0;
        double loss = d * d;
        if (step > 10) CHECK(loss <= prev + 1e-12);
        prev = loss;
        x.zero_grad();
        x.grad[0] = 2.0 * d;
        adam.step();
    }
    CHECK(std::abs(x.value[0] - 3.0) < 0.5);
}

TEST_CASE("training step with lr=0 is the identity on parameters") {
    Param p = make_param("p", {5}, 33);
    Tensor before = p.value;
    Adam adam({0.0, 0.9, 0.999, 1e-8});
    adam.register_params({&p});
    p.grad = Tensor({5}, {1, 2, 3, 4, 5});
    adam.step();
    for (int64_t i = 0; i < 5; ++i) CHECK(p.value[i] == before[i]);
}

TEST_CASE("grad check: dense layer + cross entropy at 1e-6") {
    Param w = make_param("w", {4, 3}, 40, 0.3);
    Param b = make_param("b", {3}, 41, 0.1);
    Rng rng(42);
    Tensor x({2, 4});
    for (auto& v : x.data) v = rng.normal(0, 1.0);
    auto loss_fn = [&](Graph& g) {
        NodeRef h = g.add_rowvec(g.matmul(g.input(x), g.param(w)), g.param(b));
        return g.cross_entropy_rows(h, {1, 2});
    };
    auto report = grad_check(loss_fn, {&w, &b}, {});
    CHECK(report.pass);
    CHECK(report.max_rel_err <= 1e-6);
}

TEST_CASE("grad check: corrupted backward rule is detected") {
    Param w = make_param("w", {3, 3}, 50, 0.4);
    Rng rng(51);
    Tensor x({2, 3});
    for (auto& v : x.data) v = rng.normal(0, 1.0);
    // tanh forward paired with a wrong derivative
    auto broken_loss = [&](Graph& g) {
        NodeRef h = g.matmul(g.input(x), g.param(w));
        NodeRef y = g.apply_unary(
            h, [](double v) { return std::tanh(v); },
            [](double v) { return 1.0 - 0.5 * std::tanh(v) * std::tanh(v); });
        return g.mean(g.mul(y, y));
    };
    auto report = grad_check(broken_loss, {&w}, {});
    CHECK_FALSE(report.pass);
    CHECK(report.worst_param == "w");
}

TEST_CASE("gelu gradient is exact") {
    Param w = make_param("w", {4, 4}, 60, 0.8);
    auto loss_fn = [&](Graph& g) { return g.mean(g.gelu(g.param(w))); };
    auto report = grad_check(loss_fn, {&w}, {});
    CHECK(report.pass);
}

TEST_CASE("checkpoint round trip and mismatch rejection") {
    Param a = make_param("layer0.w", {3, 2}, 70);
    Param b = make_param("layer0.b", {2}, 71);
    std::map<std::string, std::string> cfg{{"kind", "test"}, {"d", "2"}};
    std::string path = "ckpt_test.bin";
    save_checkpoint(path, cfg, {&a, &b});

    Param a2("layer0.w", Tensor::zeros({3, 2}));
    Param b2("layer0.b", Tensor::zeros({2}));
    auto loaded_cfg = load_checkpoint(path, {&a2, &b2});
    CHECK(loaded_cfg.at("kind") == "test");
    for (int64_t i = 0; i < a.value.size(); ++i) CHECK(a2.value[i] == a.value[i]);
    for (int64_t i = 0; i < b.value.size(); ++i) CHECK(b2.value[i] == b.value[i]);

    Param bad_shape("layer0.w", Tensor::zeros({2, 3}));
    Param b3("layer0.b", Tensor::zeros({2}));
    CHECK_THROWS_AS(load_checkpoint(path, {&bad_shape, &b3}), CheckpointError);

    Param bad_name("layer0.weights", Tensor::zeros({3, 2}));
    Param b4("layer0.b", Tensor::zeros({2}));
    CHECK_THROWS_AS(load_checkpoint(path, {&bad_name, &b4}), CheckpointError);
    std::remove(path.c_str());
}

TEST_CASE("rng determinism and chi-square sanity") {
    Rng a(12345), b(12345);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    // below(n) is roughly uniform
    Rng c(999);
    std::vector<int> counts(7, 0);
    int n = 10000;
    for (int i = 0; i < n; ++i) counts[c.below(7)]++;
    double chi2 = 0.0;
    double expect = n / 7.0;
    for (int k = 0; k < 7; ++k) chi2 += (counts[k] - expect) * (counts[k] - expect) / expect;
    CHECK(chi2 < 16.812); // chi2 critical value, 6 dof, p = 0.01
}
