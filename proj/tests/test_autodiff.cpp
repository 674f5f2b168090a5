#include <cmath>

#include "doctest.h"
#include "ispl/autodiff.hpp"
#include "ispl/rng.hpp"
#include "test_util.hpp"

using namespace ispl;
using namespace ispl::ad;
using testutil::gradcheck;
using testutil::random_tensor;

namespace {

// Independent nested-loop evaluation of the pixel-adaptive embedding:
// out(p) = sum_q tanh(<e_p, e_q>) * w_dqp * y(q), reflect padding.
Tensor pac_reference(const Tensor& y, const Tensor& w, const Tensor& e) {
    const int64_t N = y.dim(0), Ci = y.dim(1), H = y.dim(2), W = y.dim(3);
    const int64_t Co = w.dim(0), K = w.dim(2), r = K / 2;
    const int64_t D = e.dim(1);
    Tensor out({N, Co, H, W});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t co = 0; co < Co; ++co)
            for (int64_t i = 0; i < H; ++i)
                for (int64_t j = 0; j < W; ++j) {
                    double acc = 0.0;
                    for (int64_t a = 0; a < K; ++a)
                        for (int64_t b = 0; b < K; ++b) {
                            const int64_t qi = reflect_index(i + a - r, H);
                            const int64_t qj = reflect_index(j + b - r, W);
                            double s = 0.0;
                            for (int64_t d = 0; d < D; ++d)
                                s += e.at(n, d, i, j) * e.at(n, d, qi, qj);
                            const double phi = std::tanh(s);
                            for (int64_t ci = 0; ci < Ci; ++ci)
                                acc += phi * w.at(co, ci, a, b) * y.at(n, ci, qi, qj);
                        }
                    out.at(n, co, i, j) = acc;
                }
    return out;
}

// Plain reflect-padded convolution oracle (stride 1, same size).
Tensor conv_reference(const Tensor& x, const Tensor& w) {
    const int64_t N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t Co = w.dim(0), K = w.dim(2), r = K / 2;
    Tensor out({N, Co, H, W});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t co = 0; co < Co; ++co)
            for (int64_t i = 0; i < H; ++i)
                for (int64_t j = 0; j < W; ++j) {
                    double acc = 0.0;
                    for (int64_t ci = 0; ci < Ci; ++ci)
                        for (int64_t a = 0; a < K; ++a)
                            for (int64_t b = 0; b < K; ++b)
                                acc += x.at(n, ci, reflect_index(i + a - r, H),
                                            reflect_index(j + b - r, W)) *
                                       w.at(co, ci, a, b);
                    out.at(n, co, i, j) = acc;
                }
    return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    REQUIRE(a.same_shape(b));
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST_CASE("reflect_index mirrors without repeating the edge") {
    CHECK(reflect_index(-1, 5) == 1);
    CHECK(reflect_index(-2, 5) == 2);
    CHECK(reflect_index(0, 5) == 0);
    CHECK(reflect_index(4, 5) == 4);
    CHECK(reflect_index(5, 5) == 3);
    CHECK(reflect_index(6, 5) == 2);
    CHECK(reflect_index(3, 1) == 0);
}

TEST_CASE("elementwise op gradients") {
    auto rng = make_rng(7);
    auto a = leaf(random_tensor({2, 3, 4, 4}, rng), true);
    auto b = leaf(random_tensor({2, 3, 4, 4}, rng), true);

    SUBCASE("add/mul/scale chain") {
        auto build = [&] { return mean_all(mul(add(a, b), scale(sub(a, b), 1.7))); };
        CHECK(gradcheck({a, b}, build) < 1e-6);
    }
    SUBCASE("activations") {
        auto build = [&] {
            auto h = leaky_relu(a, 0.2);
            auto t = tanh_op(mul(h, b));
            return mean_all(mul(t, sigmoid(t)));
        };
        CHECK(gradcheck({a, b}, build) < 1e-6);
    }
}

TEST_CASE("conv2d matches reflect oracle and gradchecks") {
    auto rng = make_rng(11);
    auto x = leaf(random_tensor({1, 3, 6, 6}, rng), true);
    auto w = leaf(random_tensor({4, 3, 3, 3}, rng), true);

    auto out = conv2d(x, w, 1, 1, Pad::Reflect);
    CHECK(max_abs_diff(out->value, conv_reference(x->value, w->value)) < 1e-12);

    auto build = [&] { return mean_all(mul(conv2d(x, w, 1, 1, Pad::Reflect),
                                           conv2d(x, w, 1, 1, Pad::Reflect))); };
    CHECK(gradcheck({x, w}, build) < 1e-6);
}

TEST_CASE("strided zero-padded conv2d gradcheck") {
    auto rng = make_rng(13);
    auto x = leaf(random_tensor({2, 2, 8, 8}, rng), true);
    auto w = leaf(random_tensor({3, 2, 4, 4}, rng), true);
    auto b = leaf(random_tensor({3}, rng), true);
    auto build = [&] {
        auto y = add_bias(conv2d(x, w, 2, 1, Pad::Zero), b);
        return mean_all(mul(y, y));
    };
    CHECK(gradcheck({x, w, b}, build) < 1e-6);
    CHECK(conv2d(x, w, 2, 1, Pad::Zero)->value.dim(2) == 4);
}

TEST_CASE("pac_conv matches nested-loop oracle") {
    auto rng = make_rng(17);
    for (int trial = 0; trial < 5; ++trial) {
        auto y = random_tensor({1, 4, 6, 6}, rng);
        auto w = random_tensor({3, 4, 3, 3}, rng);
        auto e = random_tensor({1, 2, 6, 6}, rng);
        auto out = pac_conv(constant(y), constant(w), constant(e));
        CHECK(max_abs_diff(out->value, pac_reference(y, w, e)) < 1e-12);
    }
}

TEST_CASE("pac_conv zero embeddings give zero output") {
    auto rng = make_rng(19);
    auto y = constant(random_tensor({1, 4, 5, 5}, rng));
    auto w = constant(random_tensor({2, 4, 3, 3}, rng));
    auto e = constant(Tensor::zeros({1, 3, 5, 5}));
    auto out = pac_conv(y, w, e);
    for (int64_t i = 0; i < out->value.numel(); ++i) CHECK(out->value[i] == 0.0);
}

TEST_CASE("pac_conv with constant embedding equals scaled plain convolution") {
    auto rng = make_rng(23);
    auto y = random_tensor({1, 3, 6, 6}, rng);
    auto w = random_tensor({2, 3, 3, 3}, rng);
    Tensor e({1, 4, 6, 6});
    double norm_sq = 0.0;
    for (int64_t d = 0; d < 4; ++d) {
        const double c = 0.2 + 0.1 * static_cast<double>(d);
        norm_sq += c * c;
        for (int64_t i = 0; i < 36; ++i) e[d * 36 + i] = c;
    }
    auto out = pac_conv(constant(y), constant(w), constant(e));
    Tensor expected = conv_reference(y, w);
    const double s = std::tanh(norm_sq);
    for (int64_t i = 0; i < expected.numel(); ++i) expected[i] *= s;
    CHECK(max_abs_diff(out->value, expected) < 1e-12);
}

TEST_CASE("pac_conv gradcheck against central differences") {
    auto rng = make_rng(29);
    auto y = leaf(random_tensor({1, 4, 6, 6}, rng), true);
    auto w = leaf(random_tensor({2, 4, 3, 3}, rng), true);
    auto e = leaf(random_tensor({1, 3, 6, 6}, rng), true);
    auto build = [&] {
        auto out = pac_conv(y, w, e);
        return mean_all(mul(out, out));
    };
    CHECK(gradcheck({y, w, e}, build) < 1e-4);
}

TEST_CASE("pac_conv correlation values stay inside (-1, 1)") {
    auto rng = make_rng(31);
    auto y = constant(random_tensor({2, 3, 8, 8}, rng, -3.0, 3.0));
    auto w = constant(random_tensor({3, 3, 3, 3}, rng));
    auto e = constant(random_tensor({2, 5, 8, 8}, rng, -1.0, 1.0));
    double pmin = 0.0, pmax = 0.0;
    pac_conv(y, w, e, &pmin, &pmax);
    CHECK(pmin > -1.0);
    CHECK(pmax < 1.0);
}

TEST_CASE("bilinear_resize 2x downsample equals 2x2 average") {
    auto rng = make_rng(37);
    auto x = random_tensor({1, 2, 6, 6}, rng);
    auto out = bilinear_resize(constant(x), 3, 3);
    for (int64_t c = 0; c < 2; ++c)
        for (int64_t i = 0; i < 3; ++i)
            for (int64_t j = 0; j < 3; ++j) {
                const double avg = 0.25 * (x.at(0, c, 2 * i, 2 * j) + x.at(0, c, 2 * i, 2 * j + 1) +
                                           x.at(0, c, 2 * i + 1, 2 * j) +
                                           x.at(0, c, 2 * i + 1, 2 * j + 1));
                CHECK(out->value.at(0, c, i, j) == doctest::Approx(avg).epsilon(1e-12));
            }
}

TEST_CASE("bilinear_resize gradcheck (up and down)") {
    auto rng = make_rng(41);
    auto x = leaf(random_tensor({1, 2, 4, 4}, rng), true);
    auto build_up = [&] {
        auto u = bilinear_resize(x, 8, 8);
        return mean_all(mul(u, u));
    };
    CHECK(gradcheck({x}, build_up) < 1e-6);
    auto build_down = [&] {
        auto d = bilinear_resize(x, 2, 2);
        return mean_all(mul(d, d));
    };
    CHECK(gradcheck({x}, build_down) < 1e-6);
}

TEST_CASE("instance_norm output statistics and gradcheck") {
    auto rng = make_rng(43);
    auto x = leaf(random_tensor({2, 3, 5, 5}, rng, -2.0, 2.0), true);
    auto y = instance_norm(x, 1e-5);
    for (int64_t n = 0; n < 2; ++n)
        for (int64_t c = 0; c < 3; ++c) {
            double mean = 0.0, var = 0.0;
            for (int64_t i = 0; i < 5; ++i)
                for (int64_t j = 0; j < 5; ++j) mean += y->value.at(n, c, i, j);
            mean /= 25.0;
            for (int64_t i = 0; i < 5; ++i)
                for (int64_t j = 0; j < 5; ++j) {
                    const double d = y->value.at(n, c, i, j) - mean;
                    var += d * d;
                }
            var /= 25.0;
            CHECK(std::abs(mean) < 1e-12);
            CHECK(var == doctest::Approx(1.0).epsilon(1e-9));
        }
    auto build = [&] {
        auto z = instance_norm(x, 1e-5);
        return mean_all(mul(z, tanh_op(z)));
    };
    CHECK(gradcheck({x}, build) < 1e-5);
}

TEST_CASE("instance_norm floors the deviation on constant input") {
    auto x = constant(Tensor::full({1, 1, 4, 4}, 0.7));
    auto y = instance_norm(x, 1e-5);
    for (int64_t i = 0; i < y->value.numel(); ++i) CHECK(std::abs(y->value[i]) < 1e-9);
}

TEST_CASE("concat_channels and weighted_sum gradcheck") {
    auto rng = make_rng(47);
    auto a = leaf(random_tensor({1, 2, 3, 3}, rng), true);
    auto b = leaf(random_tensor({1, 3, 3, 3}, rng), true);
    auto c = leaf(random_tensor({1, 2, 3, 3}, rng), true);
    auto wm = leaf(random_tensor({2, 2}, rng), true);

    auto build_cat = [&] {
        auto z = concat_channels({a, b});
        return mean_all(mul(z, z));
    };
    CHECK(gradcheck({a, b}, build_cat) < 1e-6);

    auto build_ws = [&] {
        auto z = weighted_sum({a, c}, wm, 1);
        return mean_all(mul(z, z));
    };
    CHECK(gradcheck({a, c, wm}, build_ws) < 1e-6);
}

TEST_CASE("detach blocks gradient flow") {
    auto rng = make_rng(53);
    auto a = leaf(random_tensor({2, 2}, rng), true);
    auto root = mean_all(mul(detach(a), a));
    backward(root);
    a->ensure_grad();
    // d/da of mean(detach(a) * a) = detach(a)/n, not 2a/n.
    for (int64_t i = 0; i < a->value.numel(); ++i)
        CHECK(a->grad[i] == doctest::Approx(a->value[i] / 4.0).epsilon(1e-12));
}

TEST_CASE("fan-out accumulates gradients once per path") {
    auto a = leaf(Tensor::scalar(3.0), true);
    auto root = mean_all(mul(a, a));  // a^2 -> grad 2a
    backward(root);
    CHECK(a->grad[0] == doctest::Approx(6.0));
}
