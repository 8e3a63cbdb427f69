#include <doctest.h>

#include <cmath>
#include <limits>

#include "helpers.hpp"
#include "jssu/gradcheck.hpp"
#include "jssu/ops.hpp"

using namespace jssu;
using testing::random_tensor;

namespace {

std::vector<double> conv_loop(const Tensor<double>& x, const Tensor<double>& k, const Tensor<double>& b, int stride,
                              int pad) {
    const int H = x.dim(0), W = x.dim(1), cin = x.dim(2);
    const int ks = k.dim(0), cout = k.dim(3);
    const int oh = (H + 2 * pad - ks) / stride + 1, ow = (W + 2 * pad - ks) / stride + 1;
    std::vector<double> out(static_cast<std::size_t>(oh) * ow * cout, 0.0);
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
            for (int co = 0; co < cout; ++co) {
                double acc = b.defined() ? b[co] : 0.0;
                for (int ky = 0; ky < ks; ++ky)
                    for (int kx = 0; kx < ks; ++kx)
                        for (int ci = 0; ci < cin; ++ci) {
                            const int iy = oy * stride + ky - pad, ix = ox * stride + kx - pad;
                            if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                            acc += x[(iy * W + ix) * cin + ci] * k[((ky * ks + kx) * cin + ci) * cout + co];
                        }
                out[(oy * ow + ox) * cout + co] = acc;
            }
    return out;
}

double keys(double d) {
    d = std::abs(d);
    if (d <= 1) return 1.5 * d * d * d - 2.5 * d * d + 1;
    if (d < 2) return -0.5 * d * d * d + 2.5 * d * d - 4 * d + 2;
    return 0;
}

std::vector<double> bicubic_loop(const Tensor<double>& x, int oh, int ow) {
    const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
    std::vector<double> out(static_cast<std::size_t>(oh) * ow * C, 0.0);
    for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx) {
            const double sy = (y + 0.5) * H / oh - 0.5, sx = (xx + 0.5) * W / ow - 0.5;
            const int by = static_cast<int>(std::floor(sy)), bx = static_cast<int>(std::floor(sx));
            for (int c = 0; c < C; ++c) {
                double acc = 0.0;
                for (int m = by - 1; m <= by + 2; ++m)
                    for (int n = bx - 1; n <= bx + 2; ++n) {
                        const int cy = std::clamp(m, 0, H - 1), cx = std::clamp(n, 0, W - 1);
                        acc += keys(sy - m) * keys(sx - n) * x[(cy * W + cx) * C + c];
                    }
                out[(y * ow + xx) * C + c] = acc;
            }
        }
    return out;
}

}  // namespace

TEST_SUITE("tensor-core") {

TEST_CASE("tensor shape and gradient invariants") {
    Tensor<double> t({2, 3, 4}, 1.5);
    CHECK(t.size() == 24);
    CHECK(numel(t.shape()) == t.size());
    CHECK_THROWS_AS(Tensor<double>({2, 2}, std::vector<double>(3)), DimensionError);

    Rng rng(3);
    Tensor<double> a = random_tensor(rng, {3, 3, 2});
    Tensor<double> b = random_tensor(rng, {3, 3, 2});
    a.set_requires_grad(true);
    b.set_requires_grad(true);
    const Tensor<double> y = sum(mul(add(a, b), a));
    y.backward();
    REQUIRE(a.has_grad());
    REQUIRE(b.has_grad());
    CHECK(a.grad().size() == a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.grad()[i] == doctest::Approx(2 * a[i] + b[i]));
        CHECK(b.grad()[i] == doctest::Approx(a[i]));
    }
}

TEST_CASE("shared subexpressions accumulate gradient once per use") {
    Tensor<double> x({1}, std::vector<double>{3.0});
    x.set_requires_grad(true);
    const Tensor<double> y = mul(x, x);
    const Tensor<double> z = sum(add(y, y));  // 2x^2
    z.backward();
    CHECK(x.grad()[0] == doctest::Approx(12.0));
}

TEST_CASE("NoGradGuard records nothing") {
    Tensor<double> x({2}, 1.0);
    x.set_requires_grad(true);
    Tensor<double> y;
    {
        NoGradGuard guard;
        CHECK_FALSE(grad_enabled());
        y = scale(x, 2.0);
    }
    CHECK(grad_enabled());
    CHECK_FALSE(y.requires_grad());
}

TEST_CASE("conv2d identity kernel") {
    Rng rng(1);
    const Tensor<double> x = random_tensor(rng, {4, 4, 1});
    const Tensor<double> k({1, 1, 1, 1}, 1.0);
    const Tensor<double> y = conv2d(x, k, Tensor<double>(), 1, 0);
    CHECK(testing::bit_equal(x, y));
}

TEST_CASE("conv2d output shape with stride 2") {
    const Tensor<double> y = conv2d(Tensor<double>({4, 4, 1}, 1.0), Tensor<double>({3, 3, 1, 1}, 1.0), Tensor<double>(), 2, 1);
    CHECK(y.shape() == Shape{2, 2, 1});
}

TEST_CASE("conv2d matches a six-loop oracle") {
    Rng rng(11);
    for (int trial = 0; trial < 4; ++trial) {
        const Tensor<double> x = random_tensor(rng, {5, 5, 2});
        const Tensor<double> k = random_tensor(rng, {3, 3, 2, 3});
        const Tensor<double> b = random_tensor(rng, {3});
        for (int stride : {1, 2})
            for (int pad : {0, 1}) {
                const Tensor<double> y = conv2d(x, k, trial % 2 ? b : Tensor<double>(), stride, pad);
                const auto ref = conv_loop(x, k, trial % 2 ? b : Tensor<double>(), stride, pad);
                REQUIRE(y.size() == ref.size());
                CHECK(testing::max_abs_diff(y.data(), ref) < 1e-6);
            }
    }
}

TEST_CASE("conv2d channel mismatch is a dimension error") {
    CHECK_THROWS_AS(conv2d(Tensor<double>({4, 4, 2}), Tensor<double>({3, 3, 3, 1}), Tensor<double>(), 1, 1),
                    DimensionError);
    CHECK_THROWS_AS(conv2d(Tensor<double>({4, 4, 1}), Tensor<double>({2, 2, 1, 1}), Tensor<double>(), 1, 0),
                    DimensionError);
}

TEST_CASE("conv_transpose2d shape, linearity and adjointness") {
    const Tensor<double> k3({3, 3, 1, 1}, 0.25);
    CHECK(conv_transpose2d(Tensor<double>({2, 2, 1}, 1.0), k3, 2).shape() == Shape{4, 4, 1});
    const Tensor<double> zero = conv_transpose2d(Tensor<double>({2, 2, 1}), k3, 2);
    for (double v : zero.data()) CHECK(v == 0.0);

    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const int s = 1 + trial % 3;
        const int ks = 2 * s + 1 + 2 * (trial % 2);
        const Tensor<double> kernel = random_tensor(rng, {ks, ks, 2, 3});
        const Tensor<double> u = random_tensor(rng, {6 * s, 6 * s, 2});
        const Tensor<double> v = random_tensor(rng, {6, 6, 3});
        const double lhs = testing::inner(conv2d(u, kernel, Tensor<double>(), s, ks / 2), v);
        const double rhs = testing::inner(u, conv_transpose2d(v, kernel, s));
        CHECK(std::abs(lhs - rhs) <= 1e-6 * std::max(std::abs(lhs), std::abs(rhs)));
    }
}

TEST_CASE("bicubic preserves constants and has the expected shape") {
    const Tensor<double> c({8, 8, 2}, 0.37);
    for (double scale : {0.5, 2.0, 3.0, 0.25}) {
        const Tensor<double> y = bicubic_resize(c, scale);
        for (double v : y.data()) CHECK(v == doctest::Approx(0.37).epsilon(1e-12));
    }
    CHECK(bicubic_resize(c, 2.0).shape() == Shape{16, 16, 2});
}

TEST_CASE("bicubic down then up matches a scalar-loop oracle") {
    Rng rng(8);
    Tensor<double> x({12, 12, 2});
    auto xv = x.mutable_data();
    for (int y = 0; y < 12; ++y)
        for (int xx = 0; xx < 12; ++xx)
            for (int c = 0; c < 2; ++c) xv[(y * 12 + xx) * 2 + c] = std::sin(0.3 * y + c) * std::cos(0.2 * xx) + 0.1 * c;
    const Tensor<double> down = bicubic_resize(x, 6, 6);
    CHECK(testing::max_abs_diff(down.data(), bicubic_loop(x, 6, 6)) < 1e-6);
    const Tensor<double> up = bicubic_resize(down, 12, 12);
    CHECK(testing::max_abs_diff(up.data(), bicubic_loop(down, 12, 12)) < 1e-6);
    const Tensor<double> odd = random_tensor(rng, {5, 7, 3});
    CHECK(testing::max_abs_diff(bicubic_resize(odd, 9, 4).data(), bicubic_loop(odd, 9, 4)) < 1e-6);
}

TEST_CASE("softmax closed forms and formula oracle") {
    const Tensor<double> eq({1, 4}, 2.0);
    const Tensor<double> flat = softmax(eq, 1);
    for (double v : flat.data()) CHECK(v == doctest::Approx(0.25));
    const Tensor<double> two({2}, std::vector<double>{0.0, std::log(3.0)});
    const Tensor<double> p = softmax(two, 0);
    CHECK(p[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(0.75).epsilon(1e-12));

    Rng rng(4);
    const Tensor<double> x = random_tensor(rng, {3, 4, 5}, -5, 5);
    const Tensor<double> y = softmax(x, 2);
    for (int i = 0; i < 12; ++i) {
        double z = 0.0;
        for (int m = 0; m < 5; ++m) z += std::exp(x[i * 5 + m]);
        for (int m = 0; m < 5; ++m) CHECK(std::abs(y[i * 5 + m] - std::exp(x[i * 5 + m]) / z) < 1e-7);
    }
    const Tensor<double> big({1, 2}, std::vector<double>{1000.0, 1000.0});
    const Tensor<double> even = softmax(big, 1);
    for (double v : even.data()) CHECK(v == doctest::Approx(0.5));
}

TEST_CASE("gradient_check examples") {
    Rng rng(21);
    const Tensor<double> u = random_tensor(rng, {4, 4, 2});
    const auto quad = gradient_check([](const Tensor<double>& x) { return half_squared_norm(x); }, u, 1e-5, 1e-8);
    CHECK(quad.passed);
    CHECK(quad.max_rel_error < 1e-8);

    const Tensor<double> k = random_tensor(rng, {3, 3, 2, 2});
    const Tensor<double> f = random_tensor(rng, {4, 4, 2});
    const auto conv = gradient_check(
        [&](const Tensor<double>& x) { return half_squared_norm(sub(conv2d(x, k, Tensor<double>(), 1, 1), f)); }, u,
        1e-5, 1e-5);
    CHECK(conv.passed);

    const Tensor<double> logits = random_tensor(rng, {3, 4});
    Tensor<double> x = logits.detach();
    x.set_requires_grad(true);
    sum(softmax(x, 1)).backward();
    for (double g : x.grad()) CHECK(std::abs(g) < 1e-12);
}

TEST_CASE("gradient_check reports non-finite gradients") {
    const Tensor<double> u({2}, std::vector<double>{1.0, 0.0});
    const auto r = gradient_check(
        [](const Tensor<double>& x) {
            const double v = x[1];
            return Tensor<double>::scalar(v == 0.0 ? std::numeric_limits<double>::infinity() : v);
        },
        u);
    CHECK_FALSE(r.passed);
    CHECK(r.failure.find("non-finite") != std::string::npos);
}

TEST_CASE("primitives are deterministic") {
    Rng a(9), b(9);
    const Tensor<double> x1 = random_tensor(a, {6, 6, 3}), x2 = random_tensor(b, {6, 6, 3});
    const Tensor<double> k1 = random_tensor(a, {3, 3, 3, 4}), k2 = random_tensor(b, {3, 3, 3, 4});
    Tensor<double> in1 = x1.detach(), in2 = x2.detach();
    in1.set_requires_grad(true);
    in2.set_requires_grad(true);
    const Tensor<double> y1 = conv2d(bicubic_resize(in1, 2.0), k1, Tensor<double>(), 2, 1);
    const Tensor<double> y2 = conv2d(bicubic_resize(in2, 2.0), k2, Tensor<double>(), 2, 1);
    CHECK(testing::bit_equal(y1, y2));
    sum(mul(y1, y1)).backward();
    sum(mul(y2, y2)).backward();
    CHECK(std::equal(in1.grad().begin(), in1.grad().end(), in2.grad().begin()));
}

TEST_CASE("roll is inverted by the opposite roll") {
    Rng rng(2);
    const Tensor<double> x = random_tensor(rng, {5, 7, 2});
    CHECK(testing::bit_equal(roll(roll(x, 5, 5), -5, -5), x));
    const Tensor<double> r = roll(x, 1, 2);
    CHECK(r[((1 * 7) + 2) * 2 + 1] == x[1]);
}

TEST_CASE("patch_image matches a loop oracle") {
    Rng rng(6);
    const int H = 5, W = 6, C = 2, P = 3;
    const Tensor<double> x = random_tensor(rng, {H, W, C});
    const Tensor<double> X = patch_image(x, P);
    REQUIRE(X.shape() == Shape{H, W, C * P * P});
    for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx)
            for (int py = 0; py < P; ++py)
                for (int px = 0; px < P; ++px)
                    for (int c = 0; c < C; ++c) {
                        const int sy = y + py - P / 2, sx = xx + px - P / 2;
                        const double expect = (sy < 0 || sy >= H || sx < 0 || sx >= W) ? 0.0 : x[(sy * W + sx) * C + c];
                        CHECK(X[((y * W + xx) * P * P + py * P + px) * C + c] == expect);
                    }
    CHECK(testing::bit_equal(patch_image(x, 1), x));
}

TEST_CASE("patch_image corner zeros and constant interior") {
    const int P = 11, C = 2;
    const Tensor<double> x({12, 12, C}, 0.6);
    const Tensor<double> X = patch_image(x, P);
    const int half = P / 2 + 1;
    int zeros = 0;
    for (int i = 0; i < C * P * P; ++i) zeros += X[i] == 0.0;
    CHECK(zeros == (P * P - half * half) * C);
    const std::size_t centre = (6 * 12 + 6) * C * P * P;
    for (int i = 0; i < C * P * P; ++i) CHECK(X[centre + i] == 0.6);
}

}  // TEST_SUITE
