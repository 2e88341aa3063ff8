#include <doctest.h>

#include <cmath>
#include <vector>

#include "frfens/nn.hpp"
#include "frfens/nn_kernels.hpp"
#include "frfens/rng.hpp"

using namespace frfens;
using namespace frfens::nn;

namespace {

Tensor make(std::initializer_list<int> shape, std::vector<double> vals) {
    Tensor t(shape);
    if (t.size() != vals.size()) throw ShapeError("test tensor literal size mismatch");
    t.data = std::move(vals);
    return t;
}

Tensor random_tensor(std::initializer_list<int> shape, Rng& rng, double scale = 1.0) {
    Tensor t(shape);
    for (double& v : t.data) v = rng.uniform(-scale, scale);
    return t;
}

double dot(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

// Central-difference derivative of sum(f(...) * g) with respect to t[i].
template <class F>
double fd(Tensor& t, std::size_t i, const F& objective, double h = 1e-4) {
    const double keep = t.data[i];
    t.data[i] = keep + h;
    const double up = objective();
    t.data[i] = keep - h;
    const double dn = objective();
    t.data[i] = keep;
    return (up - dn) / (2.0 * h);
}

void check_close(double got, double want, double tol = 1e-6) {
    const double scale = std::max({std::abs(got), std::abs(want), 1.0});
    CHECK(std::abs(got - want) <= tol * scale);
}

} // namespace

TEST_CASE("convolution forward values") {
    SUBCASE("difference stencil") {
        const Tensor x = make({1, 4}, {1, 2, 3, 4});
        const Tensor w = make({1, 1, 3}, {1, 0, -1});
        const Tensor b = make({1}, {0});
        const Tensor y = conv1d(x, w, b);
        CHECK(y.shape == std::vector<int>{1, 2});
        CHECK(y.data == std::vector<double>{-2, -2});
    }
    SUBCASE("identity stencil with bias") {
        const Tensor x = make({1, 4}, {1, 2, 3, 4});
        const Tensor w = make({1, 1, 3}, {0, 1, 0});
        const Tensor b = make({1}, {0.5});
        CHECK(conv1d(x, w, b).data == std::vector<double>{2.5, 3.5});
    }
    SUBCASE("channels accumulate and filters stay independent") {
        const Tensor x = make({2, 3}, {1, 2, 3, 10, 20, 30});
        const Tensor w = make({2, 2, 2}, {1, 0, 1, 0,    // filter 0: x[ci][i]
                                          0, 1, 0, 1});  // filter 1: x[ci][i+1]
        const Tensor b = make({2}, {0, 0});
        const Tensor y = conv1d(x, w, b);
        CHECK(y.shape == std::vector<int>{2, 2});
        CHECK(y.data == std::vector<double>{11, 22, 22, 33});
    }
    SUBCASE("shape guards") {
        const Tensor x = make({1, 2}, {1, 2});
        const Tensor w = make({1, 1, 3}, {1, 1, 1});
        const Tensor b = make({1}, {0});
        CHECK_THROWS_AS(conv1d(x, w, b), ShapeError);                  // too short
        CHECK_THROWS_AS(conv1d(make({2, 4}, {1, 2, 3, 4, 5, 6, 7, 8}), w, b),
                        ShapeError);                                   // channel mismatch
        CHECK_THROWS_AS(conv1d(make({4}, {1, 2, 3, 4}), w, b), ShapeError); // rank
    }
}

TEST_CASE("convolution gradients match finite differences") {
    Rng rng(7);
    Tensor x = random_tensor({2, 8}, rng);
    Tensor w = random_tensor({3, 2, 3}, rng);
    Tensor b = random_tensor({3}, rng);
    const Tensor g = random_tensor({3, 6}, rng);
    auto objective = [&] { return dot(conv1d(x, w, b), g); };
    const Conv1dGrads grads = conv1d_grads(x, w, g);
    for (std::size_t i = 0; i < w.size(); ++i)
        check_close(grads.d_w.data[i], fd(w, i, objective));
    for (std::size_t i = 0; i < b.size(); ++i)
        check_close(grads.d_b.data[i], fd(b, i, objective));
    for (std::size_t i = 0; i < x.size(); ++i)
        check_close(grads.d_x.data[i], fd(x, i, objective));
}

TEST_CASE("max pooling") {
    SUBCASE("overlapping windows") {
        const Tensor x = make({1, 4}, {3, 1, 4, 1});
        std::vector<int> argmax;
        const Tensor y = maxpool1d(x, 2, &argmax);
        CHECK(y.data == std::vector<double>{3, 4, 4});
        CHECK(argmax == std::vector<int>{0, 2, 2});
    }
    SUBCASE("ties pick the earliest position") {
        std::vector<int> argmax;
        maxpool1d(make({1, 3}, {5, 5, 2}), 2, &argmax);
        CHECK(argmax == std::vector<int>{0, 1});
    }
    SUBCASE("gradient routes to the winners and accumulates") {
        const Tensor x = make({1, 4}, {3, 1, 4, 1});
        const Tensor g = make({1, 3}, {1, 10, 100});
        const Tensor d_x = maxpool1d_grad(x, 2, g);
        CHECK(d_x.data == std::vector<double>{1, 0, 110, 0});
    }
    SUBCASE("per-channel independence") {
        const Tensor x = make({2, 3}, {1, 2, 3, 9, 8, 7});
        const Tensor y = maxpool1d(x, 3);
        CHECK(y.shape == std::vector<int>{2, 1});
        CHECK(y.data == std::vector<double>{3, 9});
    }
    SUBCASE("shape guards") {
        CHECK_THROWS_AS(maxpool1d(make({1, 2}, {1, 2}), 3), ShapeError);
        CHECK_THROWS_AS(maxpool1d(make({1, 2}, {1, 2}), 0), ShapeError);
    }
}

TEST_CASE("relu") {
    const Tensor x = make({3}, {-1, 0, 2});
    CHECK(relu(x).data == std::vector<double>{0, 0, 2});
    // Subgradient at exactly zero is zero.
    const Tensor g = make({3}, {5, 7, 9});
    CHECK(relu_grad(x, g).data == std::vector<double>{0, 0, 9});
}

TEST_CASE("channel mean") {
    const Tensor x = make({2, 2}, {1, 3, 3, 5});
    CHECK(channel_mean(x).data == std::vector<double>{2, 4});
    const Tensor g = make({2}, {4, 8});
    const Tensor d_x = channel_mean_grad(2, g);
    CHECK(d_x.shape == std::vector<int>{2, 2});
    CHECK(d_x.data == std::vector<double>{2, 4, 2, 4});
}

TEST_CASE("dense layer") {
    SUBCASE("forward values") {
        const Tensor x = make({2}, {2, 3});
        const Tensor w = make({1, 2}, {1, 1});
        const Tensor b = make({1}, {0.5});
        CHECK(dense(x, w, b).data == std::vector<double>{5.5});
    }
    SUBCASE("gradients match finite differences") {
        Rng rng(11);
        Tensor x = random_tensor({5}, rng);
        Tensor w = random_tensor({3, 5}, rng);
        Tensor b = random_tensor({3}, rng);
        const Tensor g = random_tensor({3}, rng);
        auto objective = [&] { return dot(dense(x, w, b), g); };
        const DenseGrads grads = dense_grads(x, w, g);
        for (std::size_t i = 0; i < w.size(); ++i)
            check_close(grads.d_w.data[i], fd(w, i, objective));
        for (std::size_t i = 0; i < b.size(); ++i)
            check_close(grads.d_b.data[i], fd(b, i, objective));
        for (std::size_t i = 0; i < x.size(); ++i)
            check_close(grads.d_x.data[i], fd(x, i, objective));
    }
    SUBCASE("shape guards") {
        CHECK_THROWS_AS(dense(make({3}, {1, 2, 3}), make({1, 2}, {1, 1}), make({1}, {0})),
                        ShapeError);
        CHECK_THROWS_AS(dense(make({2}, {1, 2}), make({1, 2}, {1, 1}), make({2}, {0, 0})),
                        ShapeError);
    }
}

TEST_CASE("softmax cross-entropy") {
    SUBCASE("uniform logits") {
        const auto r = softmax_xent(std::vector<double>{0.0, 0.0}, 0);
        CHECK(r.probs[0] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(r.probs[1] == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(r.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
        CHECK(r.d_logits[0] == doctest::Approx(-0.5).epsilon(1e-12));
        CHECK(r.d_logits[1] == doctest::Approx(0.5).epsilon(1e-12));
    }
    SUBCASE("extreme logits stay finite") {
        const auto r = softmax_xent(std::vector<double>{1000.0, 0.0}, 0);
        CHECK(std::isfinite(r.loss));
        CHECK(r.loss >= 0.0);
        CHECK(r.probs[0] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(r.probs[1] >= 0.0);
        const auto worst = softmax_xent(std::vector<double>{1000.0, 0.0}, 1);
        CHECK(std::isfinite(worst.loss));
        CHECK(worst.loss == doctest::Approx(1000.0).epsilon(1e-9));
    }
    SUBCASE("gradient is probabilities minus one-hot") {
        const auto r = softmax_xent(std::vector<double>{0.3, -0.7, 1.1}, 2);
        double sum = 0.0;
        for (int i = 0; i < 3; ++i) {
            sum += r.probs[i];
            const double want = r.probs[i] - (i == 2 ? 1.0 : 0.0);
            CHECK(r.d_logits[i] == doctest::Approx(want).epsilon(1e-12));
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("loss matches the log-probability of the target") {
        const auto r = softmax_xent(std::vector<double>{0.2, 0.9}, 1);
        CHECK(r.loss == doctest::Approx(-std::log(r.probs[1])).epsilon(1e-9));
    }
    SUBCASE("bad target") {
        std::vector<double> probs(2), grad(2);
        const std::vector<double> logits{0.0, 0.0};
        CHECK_THROWS_AS(nn::softmax_xent(logits.data(), 2, 5, probs.data(), grad.data()),
                        ShapeError);
    }
}

TEST_CASE("network length contract from input to dense head") {
    CnnConfig c;
    REQUIRE_NOTHROW(c.validate());
    CHECK(c.input_length == 159);
    CHECK(c.conv_out_len(0) == 157);
    CHECK(c.pool_out_len(0) == 156);
    CHECK(c.conv_out_len(1) == 154);
    CHECK(c.pool_out_len(1) == 153);
    CHECK(c.conv_out_len(2) == 151);
    CHECK(c.pool_out_len(2) == 150);
    CHECK(c.fc1_in() == 150);

    CnnConfig two = c;
    two.in_channels = 2; // channel count never changes the length chain
    CHECK(two.fc1_in() == 150);

    CnnConfig bad = c;
    bad.input_length = 8;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.conv_stride = 2;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = c;
    bad.n_classes = 1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("model parameter shapes follow the length contract") {
    const CnnConfig c;
    const CnnModel m = init_model(c, 42);
    CHECK(m.conv1_w.shape == std::vector<int>{64, 1, 3});
    CHECK(m.conv2_w.shape == std::vector<int>{32, 64, 3});
    CHECK(m.conv3_w.shape == std::vector<int>{16, 32, 3});
    CHECK(m.fc1_w.shape == std::vector<int>{100, 150});
    CHECK(m.fc2_w.shape == std::vector<int>{2, 100});
    CHECK(m.param_count() ==
          64 * 1 * 3 + 64 + 32 * 64 * 3 + 32 + 16 * 32 * 3 + 16 +
          100 * 150 + 100 + 2 * 100 + 2);
    REQUIRE_NOTHROW(m.validate());
}
