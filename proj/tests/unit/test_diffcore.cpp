#include <doctest.h>

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ssmdg/data/rng.hpp"
#include "ssmdg/diff/adamw.hpp"
#include "ssmdg/diff/gradcheck.hpp"
#include "ssmdg/diff/ops.hpp"

using namespace ssmdg::diff;
using ssmdg::data::Rng;

namespace {

Tensor param(const std::string& name, Shape shape, std::vector<Real> v) {
    return Tensor::parameter(name, std::move(shape), std::move(v));
}

std::vector<Real> uniform(Rng& rng, std::size_t n, double lo, double hi) {
    std::vector<Real> v(n);
    for (auto& x : v) x = static_cast<Real>(rng.uniform(lo, hi));
    return v;
}

}  // namespace

TEST_CASE("softmax of zeros is uniform") {
    auto p = softmax_last_axis(Tensor::constant({3}, {0, 0, 0}));
    for (auto v : p.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("softmax rows sum to one for large logits") {
    Rng rng(7, "softmax");
    for (double mag : {1.0, 1e2, 1e4}) {
        auto x = Tensor::constant({5, 6}, uniform(rng, 30, -mag, mag));
        auto p = softmax_last_axis(x);
        for (std::size_t r = 0; r < 5; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < 6; ++c) {
                CHECK(p.at(r, c) >= 0.0);
                s += p.at(r, c);
            }
            CHECK(std::abs(s - 1.0) <= 1e-12);
        }
    }
    auto p = softmax_last_axis(Tensor::constant({2}, {1e4, 1e4 - 1}));
    CHECK(p.data()[0] > 0.0);
    CHECK(p.data()[1] > 0.0);
}

TEST_CASE("sq_l2_dist of a unit displacement") {
    auto d = sq_l2_dist(Tensor::constant({2}, {1, 0}), Tensor::constant({2}, {0, 0}));
    CHECK(d.item() == 1.0);
}

TEST_CASE("pow_scalar matches an extended-precision exp(q ln x)") {
    const long double expected = std::exp(0.7L * std::log(0.9L));
    auto y = pow_scalar(Tensor::constant({1}, {0.9}), 0.7);
    CHECK(std::abs(static_cast<long double>(y.item()) - expected) < 1e-15L);
}

TEST_CASE("kernel errors") {
    auto a = Tensor::constant({2, 3}, std::vector<Real>(6, 1));
    auto b = Tensor::constant({2, 3}, std::vector<Real>(6, 1));
    CHECK_THROWS_AS(matmul(a, b), ShapeError);
    CHECK_THROWS_AS(add(a, Tensor::constant({2}, {1, 1})), ShapeError);
    CHECK_THROWS_AS(log(Tensor::constant({2}, {1, 0})), DomainError);
    CHECK_THROWS_AS(softmax_last_axis(Tensor::constant({2}, {1, NAN})), NonFiniteError);
    try {
        matmul(a, b);
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2,3]") != std::string::npos);
    }
}

TEST_CASE("backward basics") {
    SUBCASE("d(x^2)/dx at 3") {
        auto x = param("x", {1}, {3});
        auto g = backward(mean_all(pow_scalar(x, 2)));
        CHECK(g.at("x").item() == doctest::Approx(6.0));
    }
    SUBCASE("gradient of a squared distance") {
        auto z = param("z", {2}, {1, 0});
        auto g = backward(sq_l2_dist(z, Tensor::constant({2}, {0, 0})));
        CHECK(g.at("z").data()[0] == doctest::Approx(2.0));
        CHECK(g.at("z").data()[1] == 0.0);
    }
    SUBCASE("graph is consumed") {
        auto x = param("x", {1}, {2});
        auto loss = mean_all(pow_scalar(x, 2));
        backward(loss);
        CHECK_THROWS_AS(backward(loss), GraphError);
    }
    SUBCASE("non-scalar loss and missing graph") {
        auto x = param("x", {2}, {1, 2});
        CHECK_THROWS(backward(relu(x)));
        CHECK_THROWS(backward(Tensor::scalar(1)));
    }
    SUBCASE("unreached parameters get zeros") {
        ParameterSet ps;
        ps.add(param("a", {2}, {1, 2}));
        ps.add(param("b", {3}, {1, 2, 3}));
        auto g = backward(sum_all(ps.at("a")), ps);
        REQUIRE(g.count("b") == 1);
        CHECK(g.at("b").shape() == Shape{3});
        for (auto v : g.at("b").data()) CHECK(v == 0.0);
    }
    SUBCASE("constants receive nothing") {
        auto c = Tensor::constant({2}, {1, 2});
        auto x = param("x", {2}, {3, 4});
        auto g = backward(sq_l2_dist(x, c));
        CHECK(g.size() == 1);
    }
    SUBCASE("no graph under NoGradGuard") {
        auto x = param("x", {2}, {3, 4});
        NoGradGuard guard;
        CHECK_FALSE(relu(x).has_graph());
    }
}

TEST_CASE("backward of a sum is the sum of backwards") {
    Rng rng(3, "sum-linearity");
    auto w = uniform(rng, 12, -1, 1);
    auto x = Tensor::constant({2, 3}, uniform(rng, 6, -1, 1));
    auto y = Tensor::constant({2, 4}, uniform(rng, 8, -1, 1));
    auto f = [&](const Tensor& W) { return mean_all(log(softmax_last_axis(matmul(x, W)))); };
    auto g = [&](const Tensor& W) { return sum_all(sq_l2_dist(matmul(x, W), y)); };
    auto g1 = backward(f(param("W", {3, 4}, w)));
    auto g2 = backward(g(param("W", {3, 4}, w)));
    const auto W = param("W", {3, 4}, w);
    auto g12 = backward(add(f(W), g(W)));
    for (std::size_t i = 0; i < 12; ++i) {
        CHECK(g12.at("W").data()[i] == doctest::Approx(g1.at("W").data()[i] + g2.at("W").data()[i]).epsilon(1e-12));
    }
}

TEST_CASE("finite_diff_check of a constant loss is zero") {
    ParameterSet ps;
    ps.add(param("x", {3}, {1, 2, 3}));
    auto loss = [](const ParameterSet& p) { return add(scale(sum_all(p.at("x")), 0), Tensor::scalar(5)); };
    CHECK(finite_diff_check(loss, ps) == 0.0);
}

TEST_CASE("finite_diff_check restores parameters and rejects non-finite losses") {
    ParameterSet ps;
    ps.add(param("x", {2}, {0.5, 0.25}));
    finite_diff_check([](const ParameterSet& p) { return sum_all(pow_scalar(p.at("x"), 3)); }, ps);
    CHECK(ps.at("x").data()[0] == 0.5);
    CHECK(ps.at("x").data()[1] == 0.25);
    ParameterSet bad;
    bad.add(param("x", {1}, {1}));
    auto nan_loss = [](const ParameterSet& p) { return scale(sum_all(p.at("x")), NAN); };
    CHECK_THROWS(finite_diff_check(nan_loss, bad));
}

TEST_CASE("adamw single step against a hand-unrolled update") {
    ParameterSet ps;
    ps.add(param("theta", {1}, {1.0}));
    GradientMap g{{"theta", Tensor::constant({1}, {0.5})}};
    AdamWState st;
    st.hyper = {1e-4, 0.9, 0.999, 1e-8, 1e-3};
    adamw_step(ps, g, st);

    const long double theta = 1.0L, grad = 0.5L, lr = 1e-4L, wd = 1e-3L, b1 = 0.9L, b2 = 0.999L, eps = 1e-8L;
    const long double m = (1 - b1) * grad, v = (1 - b2) * grad * grad;
    const long double m_hat = m / (1 - b1), v_hat = v / (1 - b2);
    const long double expected = theta - lr * (m_hat / (std::sqrt(v_hat) + eps) + wd * theta);
    CHECK(std::abs(ps.at("theta").item() - static_cast<double>(expected)) < 1e-15);
    CHECK(ps.at("theta").item() == doctest::Approx(0.99990).epsilon(1e-6));
    CHECK(st.step == 1);
}

TEST_CASE("adamw with zero gradients and no decay is the identity") {
    ParameterSet ps;
    ps.add(param("a", {2, 2}, {1, -2, 3, -4}));
    AdamWState st;
    st.hyper.weight_decay = 0.0;
    for (int i = 0; i < 5; ++i) adamw_step(ps, {{"a", Tensor::zeros({2, 2})}}, st);
    CHECK(std::vector<Real>(ps.at("a").data().begin(), ps.at("a").data().end()) == std::vector<Real>{1, -2, 3, -4});
    for (auto v : st.second_moment.at("a")) CHECK(v >= 0.0);
    CHECK(st.step == 5);
}

TEST_CASE("adamw rejects mismatched gradient keys") {
    ParameterSet ps;
    ps.add(param("a", {1}, {1}));
    AdamWState st;
    CHECK_THROWS(adamw_step(ps, {{"b", Tensor::zeros({1})}}, st));
}

// Random programs over the whole kernel set: a pool of [n, d] values grows by
// random kernel applications and every reducing kernel adds a term to the
// scalar loss. Weights are created on first use when `grow` is given.
namespace {

Tensor run_program(std::uint64_t seed, std::size_t length, const ParameterSet& ps, ParameterSet* grow) {
    Rng rng(seed, "fuzz-program");
    constexpr std::size_t n = 3;
    std::vector<Tensor> pool{ps.at("x0"), ps.at("x1")};
    std::vector<Tensor> terms;
    std::size_t fresh = 0;
    auto pick = [&]() -> const Tensor& { return pool[rng.index(pool.size())]; };
    auto weight = [&](Shape shape) {
        const std::string name = "w" + std::to_string(fresh++);
        if (!ps.contains(name)) {
            REQUIRE(grow != nullptr);
            Rng wr(seed, "fuzz-weight", fresh);
            grow->add(param(name, shape, uniform(wr, shape_size(shape), -0.8, 0.8)));
        }
        return ps.at(name);
    };
    for (std::size_t step = 0; step < length; ++step) {
        const Tensor a = pick();
        switch (rng.index(11)) {
            case 0: pool.push_back(matmul(a, weight({a.cols(), 2 + rng.index(3)}))); break;
            case 1: {
                const Tensor b = pick();
                pool.push_back(b.cols() == a.cols() ? add(a, b) : add(a, weight({a.cols()})));
                break;
            }
            case 2: pool.push_back(relu(add(a, Tensor::constant({a.cols()}, std::vector<Real>(a.cols(), Real(2.5)))))); break;
            case 3: {
                const Tensor parts[] = {a, pick()};
                pool.push_back(concat_last_axis(parts));
                break;
            }
            case 4: terms.push_back(mean_all(log(softmax_last_axis(a)))); break;
            case 5: {
                const Real q = static_cast<Real>(0.3 + 0.7 * rng.uniform());
                terms.push_back(sum_all(pow_scalar(clamp_min(softmax_last_axis(a), Real(1e-12)), q)));
                break;
            }
            case 6: pool.push_back(scale(a, static_cast<Real>(rng.uniform(-1.5, 1.5)))); break;
            case 7: {
                std::vector<std::size_t> idx(n);
                for (auto& i : idx) i = rng.index(a.cols());
                terms.push_back(mean_all(gather_index(softmax_last_axis(a), idx)));
                break;
            }
            case 8: {
                const Tensor b = pick();
                if (b.cols() == a.cols()) terms.push_back(mean_all(sq_l2_dist(a, b)));
                break;
            }
            case 9: {
                const std::vector<std::size_t> rows{rng.index(n), rng.index(n), rng.index(n)};
                pool.push_back(select_rows(a, rows));
                break;
            }
            default: terms.push_back(scale(sum_all(a), Real(0.1))); break;
        }
        if (pool.back().cols() > 12) pool.pop_back();
    }
    Tensor total = scale(sum_all(pool.back()), Real(0.05));
    for (const auto& t : terms) total = add(total, t);
    return total;
}

}  // namespace

TEST_CASE("random composite programs match finite differences") {
    std::size_t checked = 0;
    for (std::uint64_t seed = 0; seed < 120; ++seed) {
        const std::size_t length = 6 + seed % 10;
        Rng rng(seed, "fuzz-params");
        ParameterSet ps;
        ps.add(param("x0", {3, 4}, uniform(rng, 12, -1, 1)));
        ps.add(param("x1", {3, 3}, uniform(rng, 9, -1, 1)));
        run_program(seed, length, ps, &ps);
        const auto report = finite_diff_report(
            [&](const ParameterSet& p) { return run_program(seed, length, p, nullptr); }, ps);
        INFO("program " << seed << " worst parameter " << report.worst_parameter);
        CHECK(report.max_relative_error < 1e-4);
        ++checked;
    }
    CHECK(checked >= 100);
}
