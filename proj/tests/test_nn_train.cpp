#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "frfens/nn.hpp"
#include "frfens/rng.hpp"

using namespace frfens;
using namespace frfens::nn;

namespace {

namespace fs = std::filesystem;

CnnConfig tiny_config(int in_channels = 1) {
    CnnConfig c;
    c.in_channels = in_channels;
    c.input_length = 16;
    c.conv_filters = {6, 5, 4};
    c.fc1_out = 8;
    return c; // length chain: 16 -> 14 -> 13 -> 11 -> 10 -> 8 -> 7
}

// Two step-shaped classes with mild seeded jitter; trivially separable.
NnDataset toy_set(int n, std::uint64_t seed, int in_channels = 1) {
    NnDataset ds;
    ds.in_channels = in_channels;
    ds.input_length = 16;
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        const int label = i % 2;
        const double sign = label == 0 ? 1.0 : -1.0;
        for (int c = 0; c < in_channels; ++c)
            for (int j = 0; j < 16; ++j) {
                const double base = j < 8 ? sign : -sign;
                ds.x.push_back(base + 0.1 * rng.normal());
            }
        ds.y.push_back(label);
    }
    return ds;
}

fs::path tmp_file(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "frfens_nn_tests";
    fs::create_directories(dir);
    return dir / name;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& s) {
    std::ofstream f(p);
    f << s;
}

} // namespace

TEST_CASE("initialization is seeded, bounded, and zero-biased") {
    const CnnConfig cfg = tiny_config();
    const CnnModel a = init_model(cfg, 5);
    const CnnModel b = init_model(cfg, 5);
    const CnnModel c = init_model(cfg, 6);
    bool any_diff = false;
    for (int i = 0; i < CnnModel::kParamTensors; ++i) {
        CHECK(*a.params()[i] == *b.params()[i]);
        if (!(a.params()[i]->data == c.params()[i]->data)) any_diff = true;
    }
    CHECK(any_diff);

    const double bound1 = std::sqrt(6.0 / (1 * 3 + 6 * 3));
    bool all_zero = true;
    for (double v : a.conv1_w.data) {
        CHECK(std::abs(v) <= bound1);
        if (v != 0.0) all_zero = false;
    }
    CHECK_FALSE(all_zero);
    for (double v : a.conv1_b.data) CHECK(v == 0.0);
    for (double v : a.fc2_b.data) CHECK(v == 0.0);
}

TEST_CASE("adam updates") {
    const CnnConfig cfg = tiny_config();
    CnnModel m = init_model(cfg, 1);
    const TrainConfig tc;
    AdamState st = AdamState::for_model(m);

    SUBCASE("zero gradients leave the model untouched") {
        const CnnModel before = m;
        std::vector<Tensor> g = zero_grads(m);
        adam_step(m, g, st, 0.005, tc);
        for (int i = 0; i < CnnModel::kParamTensors; ++i)
            CHECK(*m.params()[i] == *before.params()[i]);
        CHECK(st.t == 1);
    }

    SUBCASE("first step matches the closed form") {
        std::vector<Tensor> g = zero_grads(m);
        g[0].data[0] = 0.1;
        const double before = m.conv1_w.data[0];
        adam_step(m, g, st, 0.005, tc);
        CHECK(st.m[0].data[0] == doctest::Approx(0.01).epsilon(1e-12));
        CHECK(st.v[0].data[0] == doctest::Approx(1e-5).epsilon(1e-12));
        const double want = before - 0.005 * 0.1 / (0.1 + 1e-8);
        CHECK(m.conv1_w.data[0] == doctest::Approx(want).epsilon(1e-9));
        CHECK(m.conv1_w.data[1] == init_model(cfg, 1).conv1_w.data[1]);
    }

    SUBCASE("two steps reproduce a scalar replay of the recurrence") {
        const double g1 = 0.1, g2 = -0.05, lr = 0.005;
        double p = m.conv1_w.data[0], mm = 0.0, vv = 0.0;
        for (int step = 1; step <= 2; ++step) {
            const double gg = step == 1 ? g1 : g2;
            std::vector<Tensor> g = zero_grads(m);
            g[0].data[0] = gg;
            adam_step(m, g, st, lr, tc);

            mm = tc.beta1 * mm + (1.0 - tc.beta1) * gg;
            vv = tc.beta2 * vv + (1.0 - tc.beta2) * gg * gg;
            const double bc1 = 1.0 - std::pow(tc.beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(tc.beta2, static_cast<double>(step));
            p -= lr * (mm / bc1) / (std::sqrt(vv / bc2) + tc.eps);
        }
        CHECK(m.conv1_w.data[0] == p);
        CHECK(st.t == 2);
    }

    SUBCASE("non-finite gradients are rejected by tensor name") {
        std::vector<Tensor> g = zero_grads(m);
        g[3].data[0] = std::nan("");
        CHECK_THROWS_WITH_AS(adam_step(m, g, st, 0.005, tc),
                             "adam: non-finite gradient in conv2_b", NumericError);
    }
}

TEST_CASE("learning-rate schedules") {
    TrainConfig tc; // lr0=0.005, factor=0.005, period=10, Drop
    CHECK(tc.learning_rate(0) == 0.005);
    CHECK(tc.learning_rate(9) == 0.005);
    CHECK(tc.learning_rate(10) == doctest::Approx(2.5e-5).epsilon(1e-12));
    CHECK(tc.learning_rate(19) == doctest::Approx(2.5e-5).epsilon(1e-12));
    CHECK(tc.learning_rate(20) == doctest::Approx(1.25e-7).epsilon(1e-12));

    tc.schedule = LrSchedule::Inverse;
    CHECK(tc.learning_rate(0) == 0.005);
    CHECK(tc.learning_rate(10) == doctest::Approx(0.005 / 1.005).epsilon(1e-12));
    CHECK(tc.learning_rate(20) == doctest::Approx(0.005 / (1.005 * 1.005)).epsilon(1e-12));

    TrainConfig bad;
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = TrainConfig{};
    bad.lr_drop_factor = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = TrainConfig{};
    bad.beta2 = 1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("training set validation") {
    NnDataset ds = toy_set(8, 1);
    CHECK_NOTHROW(ds.validate(2));
    NnDataset empty;
    empty.input_length = 16;
    CHECK_THROWS_AS(empty.validate(2), Error);
    NnDataset bad_label = ds;
    bad_label.y[0] = 7;
    CHECK_THROWS_AS(bad_label.validate(2), Error);
    NnDataset short_x = ds;
    short_x.x.pop_back();
    CHECK_THROWS_AS(short_x.validate(2), ShapeError);
    NnDataset nan_x = ds;
    nan_x.x[3] = std::nan("");
    CHECK_THROWS_AS(nan_x.validate(2), NumericError);
}

TEST_CASE("training learns a separable toy problem deterministically") {
    const CnnConfig cfg = tiny_config();
    const NnDataset ds = toy_set(64, 9);
    TrainConfig tc;
    tc.batch_size = 16;
    tc.max_epochs = 12;
    tc.seed = 3;

    CnnModel m1 = init_model(cfg, 21);
    const TrainReport r1 = train(m1, ds, tc);
    CHECK(r1.epochs_run == 12);
    REQUIRE(r1.epoch_acc.size() == 12);
    CHECK(r1.epoch_acc.back() >= 0.95);
    CHECK(r1.epoch_loss.back() < r1.epoch_loss.front());

    CnnModel m2 = init_model(cfg, 21);
    const TrainReport r2 = train(m2, ds, tc);
    for (int i = 0; i < CnnModel::kParamTensors; ++i)
        CHECK(*m1.params()[i] == *m2.params()[i]);
    CHECK(r1.epoch_loss == r2.epoch_loss);

    CnnModel m3 = init_model(cfg, 21);
    TrainConfig other = tc;
    other.seed = 4;
    train(m3, ds, other);
    bool any_diff = false;
    for (int i = 0; i < CnnModel::kParamTensors; ++i)
        if (!(m1.params()[i]->data == m3.params()[i]->data)) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("training rejects mismatched or degenerate inputs") {
    const CnnConfig cfg = tiny_config();
    CnnModel m = init_model(cfg, 2);
    TrainConfig tc;
    tc.max_epochs = 1;

    NnDataset wrong = toy_set(8, 1, 2); // two channels vs one-channel model
    CHECK_THROWS_AS(train(m, wrong, tc), ShapeError);

    NnDataset one_class = toy_set(8, 1);
    for (int& v : one_class.y) v = 0;
    CHECK_THROWS_AS(train(m, one_class, tc), Error);

    // An overflowing forward pass surfaces as a numeric error rather than
    // silently corrupting the model. All-positive huge weights and inputs
    // push every activation to +inf, so the loss goes non-finite.
    CnnModel blown = init_model(cfg, 2);
    for (Tensor* p : blown.params())
        for (double& v : p->data) v = 0.1;
    for (double& v : blown.conv1_w.data) v = 1e200;
    NnDataset huge = toy_set(8, 1);
    for (double& v : huge.x) v = 1e200;
    CHECK_THROWS_AS(train(blown, huge, tc), NumericError);
}

TEST_CASE("prediction semantics") {
    const CnnConfig cfg = tiny_config();
    const NnDataset ds = toy_set(10, 13);

    SUBCASE("rows are probability vectors matching the single-sample path") {
        const CnnModel m = init_model(cfg, 33);
        const std::vector<double> p = predict(m, ds);
        REQUIRE(p.size() == 20);
        for (int i = 0; i < 10; ++i) {
            const double sum = p[2 * i] + p[2 * i + 1];
            CHECK(std::abs(sum - 1.0) < 1e-12);
            CHECK(p[2 * i] >= 0.0);
            CHECK(p[2 * i + 1] >= 0.0);
            const std::vector<double> row = forward_probs(m, ds.sample(i));
            CHECK(p[2 * i] == row[0]);
            CHECK(p[2 * i + 1] == row[1]);
        }
    }
    SUBCASE("a zeroed output layer yields exactly uniform probabilities") {
        CnnModel m = init_model(cfg, 33);
        std::fill(m.fc2_w.data.begin(), m.fc2_w.data.end(), 0.0);
        std::fill(m.fc2_b.data.begin(), m.fc2_b.data.end(), 0.0);
        const std::vector<double> p = predict(m, ds);
        for (double v : p) CHECK(v == 0.5);
    }
    SUBCASE("dimension mismatches are rejected") {
        const CnnModel m = init_model(cfg, 33);
        CHECK_THROWS_AS(predict(m, toy_set(4, 1, 2)), ShapeError);
    }
}

TEST_CASE("analytic gradients agree with central differences") {
    for (const int channels : {1, 2}) {
        const CnnConfig cfg = tiny_config(channels);
        for (const std::uint64_t seed : {101u, 202u, 303u}) {
            const CnnModel m = init_model(cfg, seed);
            Rng rng(seed + 7);
            std::vector<double> x(static_cast<std::size_t>(channels) * 16);
            for (double& v : x) v = rng.normal();
            const double err = gradient_check(m, x.data(), seed % 2 ? 1 : 0, 1e-5);
            CHECK(err < 1e-4);
        }
        // All-zero input parks the pre-activations on the rectifier kink,
        // where central differences legitimately disagree with the chosen
        // subgradient; the check must stay finite, not small.
        const std::vector<double> zeros(static_cast<std::size_t>(channels) * 16, 0.0);
        const CnnModel m = init_model(cfg, 404);
        CHECK(std::isfinite(gradient_check(m, zeros.data(), 0, 1e-5)));
    }
    const CnnModel m = init_model(tiny_config(), 1);
    const std::vector<double> x(16, 0.1);
    CHECK_THROWS_AS(gradient_check(m, x.data(), 0, 0.0), ConfigError);
}

TEST_CASE("model files round-trip bit for bit and reject tampering") {
    const CnnConfig cfg = tiny_config();
    CnnModel m = init_model(cfg, 77);
    const NnDataset ds = toy_set(6, 5);
    TrainConfig tc;
    tc.max_epochs = 2;
    tc.batch_size = 8;
    train(m, ds, tc);

    const fs::path path = tmp_file("model_roundtrip.json");
    save_model(path, m);
    const CnnModel back = load_model(path);
    CHECK(back.config == m.config);
    CHECK(back.init_seed == m.init_seed);
    for (int i = 0; i < CnnModel::kParamTensors; ++i)
        CHECK(*back.params()[i] == *m.params()[i]);
    CHECK(predict(back, ds) == predict(m, ds));

    const std::string good = slurp(path);

    SUBCASE("truncated file") {
        const fs::path p = tmp_file("model_truncated.json");
        spit(p, good.substr(0, good.size() / 2));
        CHECK_THROWS_AS(load_model(p), ParseError);
    }
    SUBCASE("not json at all") {
        const fs::path p = tmp_file("model_garbage.json");
        spit(p, "definitely not a model\n");
        CHECK_THROWS_AS(load_model(p), ParseError);
    }
    SUBCASE("unsupported version") {
        const fs::path p = tmp_file("model_version.json");
        std::string s = good;
        const auto pos = s.find("\"version\":1");
        REQUIRE(pos != std::string::npos);
        s.replace(pos, 11, "\"version\":9");
        spit(p, s);
        CHECK_THROWS_AS(load_model(p), ParseError);
    }
    SUBCASE("config edited without updating the hash") {
        const fs::path p = tmp_file("model_tampered.json");
        std::string s = good;
        const auto pos = s.find("\"fc1_out\":8");
        REQUIRE(pos != std::string::npos);
        s.replace(pos, 11, "\"fc1_out\":9");
        spit(p, s);
        CHECK_THROWS_AS(load_model(p), ParseError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_model(tmp_file("does_not_exist.json")), Error);
    }
}
