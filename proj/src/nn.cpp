#include "frfens/nn.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>
#include <omp.h>

#include "frfens/errors.hpp"
#include "frfens/nn_kernels.hpp"
#include "frfens/numio.hpp"
#include "frfens/rng.hpp"

namespace frfens::nn {

void CnnConfig::validate() const {
    if (in_channels < 1) throw ConfigError("model: in_channels must be >= 1");
    if (conv_kernel < 1) throw ConfigError("model: conv kernel must be >= 1");
    if (conv_stride != 1 || pool_stride != 1)
        throw ConfigError("model: only unit strides are supported");
    if (pool_size < 1) throw ConfigError("model: pool size must be >= 1");
    for (int f : conv_filters)
        if (f < 1) throw ConfigError("model: conv filter counts must be >= 1");
    if (fc1_out < 1 || n_classes < 2)
        throw ConfigError("model: dense head sizes must be positive (>= 2 classes)");
    for (int s = 0; s < 3; ++s)
        if (conv_out_len(s) < 1 || pool_out_len(s) < 1)
            throw ConfigError("model: input length " + std::to_string(input_length) +
                              " is too short for the conv/pool stack");
}

int CnnConfig::conv_out_len(int stage) const {
    const int in = stage == 0 ? input_length : pool_out_len(stage - 1);
    return in - (conv_kernel - 1);
}

int CnnConfig::pool_out_len(int stage) const {
    return conv_out_len(stage) - (pool_size - 1);
}

int CnnConfig::fc1_in() const { return pool_out_len(2); }

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("training: batch size must be >= 1");
    if (max_epochs < 1) throw ConfigError("training: max epochs must be >= 1");
    if (!(lr0 > 0.0)) throw ConfigError("training: initial learning rate must be > 0");
    if (!(lr_drop_factor > 0.0 && lr_drop_factor <= 1.0))
        throw ConfigError("training: lr drop factor must lie in (0,1]");
    if (lr_drop_period < 1) throw ConfigError("training: lr drop period must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw ConfigError("training: adam betas must lie in [0,1)");
    if (!(eps > 0.0)) throw ConfigError("training: adam epsilon must be > 0");
}

double TrainConfig::learning_rate(int epoch) const {
    const int periods = epoch / lr_drop_period;
    switch (schedule) {
        case LrSchedule::Drop:
            return lr0 * std::pow(lr_drop_factor, periods);
        case LrSchedule::Inverse:
            return lr0 / std::pow(1.0 + lr_drop_factor, periods);
    }
    throw ConfigError("training: unknown learning-rate schedule");
}

const std::array<const char*, CnnModel::kParamTensors>& CnnModel::param_names() {
    static const std::array<const char*, kParamTensors> names{
        "conv1_w", "conv1_b", "conv2_w", "conv2_b", "conv3_w",
        "conv3_b", "fc1_w",   "fc1_b",   "fc2_w",   "fc2_b"};
    return names;
}

std::array<Tensor*, CnnModel::kParamTensors> CnnModel::params() {
    return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &conv3_w,
            &conv3_b, &fc1_w,   &fc1_b,   &fc2_w,   &fc2_b};
}

std::array<const Tensor*, CnnModel::kParamTensors> CnnModel::params() const {
    return {&conv1_w, &conv1_b, &conv2_w, &conv2_b, &conv3_w,
            &conv3_b, &fc1_w,   &fc1_b,   &fc2_w,   &fc2_b};
}

namespace {

std::array<std::vector<int>, CnnModel::kParamTensors> expected_shapes(const CnnConfig& c) {
    const auto& f = c.conv_filters;
    return {std::vector<int>{f[0], c.in_channels, c.conv_kernel},
            {f[0]},
            {f[1], f[0], c.conv_kernel},
            {f[1]},
            {f[2], f[1], c.conv_kernel},
            {f[2]},
            {c.fc1_out, c.fc1_in()},
            {c.fc1_out},
            {c.n_classes, c.fc1_out},
            {c.n_classes}};
}

// Index of the conv/dense stage each parameter tensor feeds, used by the
// gradient checker to resume the forward pass at the right point.
constexpr std::array<int, CnnModel::kParamTensors> kParamStage{0, 0, 1, 1, 2,
                                                               2, 3, 3, 4, 4};

} // namespace

void CnnModel::validate() const {
    config.validate();
    const auto want = expected_shapes(config);
    const auto ps = params();
    for (int i = 0; i < kParamTensors; ++i) {
        if (ps[i]->shape != want[static_cast<std::size_t>(i)])
            throw ShapeError(std::string("model: tensor ") + param_names()[i] +
                             " has an inconsistent shape");
        ps[i]->require_finite(param_names()[i]);
    }
}

std::size_t CnnModel::param_count() const {
    std::size_t n = 0;
    for (const Tensor* t : params()) n += t->size();
    return n;
}

CnnModel init_model(const CnnConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    CnnModel m;
    m.config = cfg;
    m.init_seed = seed;
    const auto shapes = expected_shapes(cfg);
    const auto ps = m.params();
    for (int i = 0; i < CnnModel::kParamTensors; ++i)
        *ps[i] = Tensor(shapes[static_cast<std::size_t>(i)]);

    Rng rng(seed);
    auto glorot = [&](Tensor& w, int fan_in, int fan_out) {
        const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (double& v : w.data) v = rng.uniform(-a, a);
    };
    const int k = cfg.conv_kernel;
    glorot(m.conv1_w, cfg.in_channels * k, cfg.conv_filters[0] * k);
    glorot(m.conv2_w, cfg.conv_filters[0] * k, cfg.conv_filters[1] * k);
    glorot(m.conv3_w, cfg.conv_filters[1] * k, cfg.conv_filters[2] * k);
    glorot(m.fc1_w, cfg.fc1_in(), cfg.fc1_out);
    glorot(m.fc2_w, cfg.fc1_out, cfg.n_classes);
    return m;
}

const double* NnDataset::sample(int i) const {
    return x.data() + static_cast<std::size_t>(i) * in_channels * input_length;
}

void NnDataset::validate(int n_classes) const {
    if (y.empty()) throw Error("training set is empty");
    if (in_channels < 1 || input_length < 1)
        throw ShapeError("training set: bad sample dimensions");
    if (x.size() != static_cast<std::size_t>(n()) * in_channels * input_length)
        throw ShapeError("training set: sample buffer size disagrees with labels");
    for (int v : y)
        if (v < 0 || v >= n_classes)
            throw Error("training set: label " + std::to_string(v) + " out of range");
    for (double v : x)
        if (!std::isfinite(v)) throw NumericError("training set: non-finite input");
}

namespace {

// Per-sample activations and backward scratch, sized once per config.
struct Workspace {
    const CnnConfig cfg;
    int lc1, lp1, lc2, lp2, lc3, lp3;
    std::vector<double> z1, a1, p1, z2, a2, p2, z3, a3, p3;
    std::vector<int> i1, i2, i3;
    std::vector<double> g, z4, a4, z5, probs;
    // backward buffers (d_x of each stage)
    std::vector<double> d5, d_a4, d_z4, d_g, d_p3, d_a3, d_z3, d_p2, d_a2, d_z2,
        d_p1, d_a1, d_z1, d_x;

    explicit Workspace(const CnnConfig& c)
        : cfg(c),
          lc1(c.conv_out_len(0)),
          lp1(c.pool_out_len(0)),
          lc2(c.conv_out_len(1)),
          lp2(c.pool_out_len(1)),
          lc3(c.conv_out_len(2)),
          lp3(c.pool_out_len(2)) {
        const auto& f = c.conv_filters;
        z1.resize(static_cast<std::size_t>(f[0]) * lc1);
        a1.resize(z1.size());
        p1.resize(static_cast<std::size_t>(f[0]) * lp1);
        i1.resize(p1.size());
        z2.resize(static_cast<std::size_t>(f[1]) * lc2);
        a2.resize(z2.size());
        p2.resize(static_cast<std::size_t>(f[1]) * lp2);
        i2.resize(p2.size());
        z3.resize(static_cast<std::size_t>(f[2]) * lc3);
        a3.resize(z3.size());
        p3.resize(static_cast<std::size_t>(f[2]) * lp3);
        i3.resize(p3.size());
        g.resize(static_cast<std::size_t>(lp3));
        z4.resize(static_cast<std::size_t>(c.fc1_out));
        a4.resize(z4.size());
        z5.resize(static_cast<std::size_t>(c.n_classes));
        probs.resize(z5.size());
        d5.resize(z5.size());
        d_a4.resize(a4.size());
        d_z4.resize(z4.size());
        d_g.resize(g.size());
        d_p3.resize(p3.size());
        d_a3.resize(a3.size());
        d_z3.resize(z3.size());
        d_p2.resize(p2.size());
        d_a2.resize(a2.size());
        d_z2.resize(z2.size());
        d_p1.resize(p1.size());
        d_a1.resize(a1.size());
        d_z1.resize(z1.size());
        d_x.resize(static_cast<std::size_t>(c.in_channels) * c.input_length);
    }
};

void forward_sample(const CnnModel& m, const double* x, Workspace& ws) {
    const CnnConfig& c = m.config;
    const auto& f = c.conv_filters;
    const int k = c.conv_kernel, p = c.pool_size;

    conv1d_forward(x, c.in_channels, c.input_length, m.conv1_w.ptr(), m.conv1_b.ptr(),
                   f[0], k, ws.z1.data());
    relu_forward(ws.z1.data(), static_cast<int>(ws.z1.size()), ws.a1.data());
    maxpool1d_forward(ws.a1.data(), f[0], ws.lc1, p, ws.p1.data(), ws.i1.data());

    conv1d_forward(ws.p1.data(), f[0], ws.lp1, m.conv2_w.ptr(), m.conv2_b.ptr(), f[1],
                   k, ws.z2.data());
    relu_forward(ws.z2.data(), static_cast<int>(ws.z2.size()), ws.a2.data());
    maxpool1d_forward(ws.a2.data(), f[1], ws.lc2, p, ws.p2.data(), ws.i2.data());

    conv1d_forward(ws.p2.data(), f[1], ws.lp2, m.conv3_w.ptr(), m.conv3_b.ptr(), f[2],
                   k, ws.z3.data());
    relu_forward(ws.z3.data(), static_cast<int>(ws.z3.size()), ws.a3.data());
    maxpool1d_forward(ws.a3.data(), f[2], ws.lc3, p, ws.p3.data(), ws.i3.data());

    channel_mean_forward(ws.p3.data(), f[2], ws.lp3, ws.g.data());
    dense_forward(ws.g.data(), ws.lp3, m.fc1_w.ptr(), m.fc1_b.ptr(), c.fc1_out,
                  ws.z4.data());
    relu_forward(ws.z4.data(), c.fc1_out, ws.a4.data());
    dense_forward(ws.a4.data(), c.fc1_out, m.fc2_w.ptr(), m.fc2_b.ptr(), c.n_classes,
                  ws.z5.data());
}

void backward_sample(const CnnModel& m, const double* x, Workspace& ws,
                     std::vector<Tensor>& grads) {
    const CnnConfig& c = m.config;
    const auto& f = c.conv_filters;
    const int k = c.conv_kernel;
    auto zero = [](std::vector<double>& v) { std::fill(v.begin(), v.end(), 0.0); };

    zero(ws.d_a4);
    dense_backward(ws.a4.data(), c.fc1_out, m.fc2_w.ptr(), c.n_classes, ws.d5.data(),
                   ws.d_a4.data(), grads[8].data.data(), grads[9].data.data());
    zero(ws.d_z4);
    relu_backward(ws.z4.data(), ws.d_a4.data(), c.fc1_out, ws.d_z4.data());
    zero(ws.d_g);
    dense_backward(ws.g.data(), ws.lp3, m.fc1_w.ptr(), c.fc1_out, ws.d_z4.data(),
                   ws.d_g.data(), grads[6].data.data(), grads[7].data.data());
    zero(ws.d_p3);
    channel_mean_backward(ws.d_g.data(), f[2], ws.lp3, ws.d_p3.data());

    zero(ws.d_a3);
    maxpool1d_backward(ws.i3.data(), ws.d_p3.data(), f[2], ws.lp3, ws.lc3,
                       ws.d_a3.data());
    zero(ws.d_z3);
    relu_backward(ws.z3.data(), ws.d_a3.data(), static_cast<int>(ws.z3.size()),
                  ws.d_z3.data());
    zero(ws.d_p2);
    conv1d_backward(ws.p2.data(), f[1], ws.lp2, m.conv3_w.ptr(), f[2], k,
                    ws.d_z3.data(), ws.d_p2.data(), grads[4].data.data(),
                    grads[5].data.data());

    zero(ws.d_a2);
    maxpool1d_backward(ws.i2.data(), ws.d_p2.data(), f[1], ws.lp2, ws.lc2,
                       ws.d_a2.data());
    zero(ws.d_z2);
    relu_backward(ws.z2.data(), ws.d_a2.data(), static_cast<int>(ws.z2.size()),
                  ws.d_z2.data());
    zero(ws.d_p1);
    conv1d_backward(ws.p1.data(), f[0], ws.lp1, m.conv2_w.ptr(), f[1], k,
                    ws.d_z2.data(), ws.d_p1.data(), grads[2].data.data(),
                    grads[3].data.data());

    zero(ws.d_a1);
    maxpool1d_backward(ws.i1.data(), ws.d_p1.data(), f[0], ws.lp1, ws.lc1,
                       ws.d_a1.data());
    zero(ws.d_z1);
    relu_backward(ws.z1.data(), ws.d_a1.data(), static_cast<int>(ws.z1.size()),
                  ws.d_z1.data());
    zero(ws.d_x);
    conv1d_backward(x, c.in_channels, c.input_length, m.conv1_w.ptr(), f[0], k,
                    ws.d_z1.data(), ws.d_x.data(), grads[0].data.data(),
                    grads[1].data.data());
}

// Loss recomputed from the conv/dense stage that consumed the perturbed
// parameter onward; earlier activations come from the unperturbed cache.
double loss_from_stage(const CnnModel& m, int stage, const double* x,
                       const Workspace& cache, int label, Workspace& ws) {
    const CnnConfig& c = m.config;
    const auto& f = c.conv_filters;
    const int k = c.conv_kernel, p = c.pool_size;

    if (stage <= 0) {
        conv1d_forward(x, c.in_channels, c.input_length, m.conv1_w.ptr(),
                       m.conv1_b.ptr(), f[0], k, ws.z1.data());
        relu_forward(ws.z1.data(), static_cast<int>(ws.z1.size()), ws.a1.data());
        maxpool1d_forward(ws.a1.data(), f[0], ws.lc1, p, ws.p1.data(), ws.i1.data());
    }
    if (stage <= 1) {
        const double* in = stage <= 0 ? ws.p1.data() : cache.p1.data();
        conv1d_forward(in, f[0], ws.lp1, m.conv2_w.ptr(), m.conv2_b.ptr(), f[1], k,
                       ws.z2.data());
        relu_forward(ws.z2.data(), static_cast<int>(ws.z2.size()), ws.a2.data());
        maxpool1d_forward(ws.a2.data(), f[1], ws.lc2, p, ws.p2.data(), ws.i2.data());
    }
    if (stage <= 2) {
        const double* in = stage <= 1 ? ws.p2.data() : cache.p2.data();
        conv1d_forward(in, f[1], ws.lp2, m.conv3_w.ptr(), m.conv3_b.ptr(), f[2], k,
                       ws.z3.data());
        relu_forward(ws.z3.data(), static_cast<int>(ws.z3.size()), ws.a3.data());
        maxpool1d_forward(ws.a3.data(), f[2], ws.lc3, p, ws.p3.data(), ws.i3.data());
        channel_mean_forward(ws.p3.data(), f[2], ws.lp3, ws.g.data());
    }
    if (stage <= 3) {
        const double* in = stage <= 2 ? ws.g.data() : cache.g.data();
        dense_forward(in, ws.lp3, m.fc1_w.ptr(), m.fc1_b.ptr(), c.fc1_out,
                      ws.z4.data());
        relu_forward(ws.z4.data(), c.fc1_out, ws.a4.data());
    }
    const double* in = stage <= 3 ? ws.a4.data() : cache.a4.data();
    dense_forward(in, c.fc1_out, m.fc2_w.ptr(), m.fc2_b.ptr(), c.n_classes,
                  ws.z5.data());
    return softmax_xent(ws.z5.data(), c.n_classes, label, ws.probs.data(), nullptr);
}

int argmax_row(const double* p, int n) {
    int best = 0;
    for (int i = 1; i < n; ++i)
        if (p[i] > p[best]) best = i;
    return best;
}

// True when the perturbed forward kept every rectifier sign and pool argmax
// of the base pass. Only the stages loss_from_stage recomputed are compared;
// earlier buffers in `ws` are stale. A flip means the perturbation stepped
// across a nondifferentiable boundary.
bool states_match(const Workspace& ws, const Workspace& cache, int stage) {
    const auto relu_same = [](const std::vector<double>& a,
                              const std::vector<double>& b) {
        for (std::size_t i = 0; i < a.size(); ++i)
            if ((a[i] > 0.0) != (b[i] > 0.0)) return false;
        return true;
    };
    if (stage <= 0 && (!relu_same(ws.z1, cache.z1) || ws.i1 != cache.i1)) return false;
    if (stage <= 1 && (!relu_same(ws.z2, cache.z2) || ws.i2 != cache.i2)) return false;
    if (stage <= 2 && (!relu_same(ws.z3, cache.z3) || ws.i3 != cache.i3)) return false;
    if (stage <= 3 && !relu_same(ws.z4, cache.z4)) return false;
    return true;
}

} // namespace

std::vector<Tensor> zero_grads(const CnnModel& model) {
    std::vector<Tensor> g;
    g.reserve(CnnModel::kParamTensors);
    for (const Tensor* t : model.params()) g.emplace_back(t->shape);
    return g;
}

std::vector<double> forward_probs(const CnnModel& model, const double* x) {
    Workspace ws(model.config);
    forward_sample(model, x, ws);
    softmax(ws.z5.data(), model.config.n_classes, ws.probs.data());
    return ws.probs;
}

double loss_and_gradients(const CnnModel& model, const double* x, int label,
                          std::vector<Tensor>& grads) {
    if (grads.size() != CnnModel::kParamTensors)
        throw ShapeError("gradient buffer has the wrong tensor count");
    Workspace ws(model.config);
    forward_sample(model, x, ws);
    const double loss = softmax_xent(ws.z5.data(), model.config.n_classes, label,
                                     ws.probs.data(), ws.d5.data());
    backward_sample(model, x, ws, grads);
    return loss;
}

std::vector<double> predict(const CnnModel& model, const NnDataset& ds) {
    model.validate();
    ds.validate(model.config.n_classes);
    if (ds.in_channels != model.config.in_channels ||
        ds.input_length != model.config.input_length)
        throw ShapeError("prediction: sample dimensions disagree with the model");

    const int n = ds.n();
    const int nc = model.config.n_classes;
    std::vector<double> probs(static_cast<std::size_t>(n) * nc);
    const int nthreads = omp_get_max_threads();
    std::vector<Workspace> wss(static_cast<std::size_t>(nthreads),
                               Workspace(model.config));
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        Workspace& ws = wss[static_cast<std::size_t>(omp_get_thread_num())];
        forward_sample(model, ds.sample(i), ws);
        softmax(ws.z5.data(), nc, probs.data() + static_cast<std::size_t>(i) * nc);
    }
    return probs;
}

AdamState AdamState::for_model(const CnnModel& model) {
    AdamState st;
    st.m.reserve(CnnModel::kParamTensors);
    st.v.reserve(CnnModel::kParamTensors);
    for (const Tensor* t : model.params()) {
        st.m.emplace_back(t->shape);
        st.v.emplace_back(t->shape);
    }
    return st;
}

void adam_step(CnnModel& model, const std::vector<Tensor>& grads, AdamState& state,
               double lr, const TrainConfig& cfg) {
    if (grads.size() != CnnModel::kParamTensors ||
        state.m.size() != CnnModel::kParamTensors)
        throw ShapeError("adam: gradient or state tensor count mismatch");
    auto ps = model.params();
    for (int i = 0; i < CnnModel::kParamTensors; ++i) {
        if (grads[static_cast<std::size_t>(i)].shape != ps[i]->shape)
            throw ShapeError(std::string("adam: gradient shape mismatch on ") +
                             CnnModel::param_names()[i]);
        if (!grads[static_cast<std::size_t>(i)].all_finite())
            throw NumericError(std::string("adam: non-finite gradient in ") +
                               CnnModel::param_names()[i]);
    }

    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (int i = 0; i < CnnModel::kParamTensors; ++i) {
        double* p = ps[i]->data.data();
        const double* g = grads[static_cast<std::size_t>(i)].ptr();
        double* m = state.m[static_cast<std::size_t>(i)].data.data();
        double* v = state.v[static_cast<std::size_t>(i)].data.data();
        const std::size_t n = ps[i]->size();
        for (std::size_t j = 0; j < n; ++j) {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

TrainReport train(CnnModel& model, const NnDataset& train_set, const TrainConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    cfg.validate();
    model.validate();
    train_set.validate(model.config.n_classes);
    if (train_set.in_channels != model.config.in_channels ||
        train_set.input_length != model.config.input_length)
        throw ShapeError("training: sample dimensions disagree with the model");
    {
        std::vector<int> present(static_cast<std::size_t>(model.config.n_classes), 0);
        for (int v : train_set.y) present[static_cast<std::size_t>(v)] = 1;
        if (std::accumulate(present.begin(), present.end(), 0) < 2)
            throw Error("training: need samples from at least 2 classes");
    }

    const int n = train_set.n();
    const int nc = model.config.n_classes;
    Rng shuffle_rng(cfg.seed);
    AdamState state = AdamState::for_model(model);

    const int max_batch = std::min(cfg.batch_size, n);
    std::vector<std::vector<Tensor>> sample_grads(static_cast<std::size_t>(max_batch));
    for (auto& g : sample_grads) g = zero_grads(model);
    std::vector<Tensor> batch_grads = zero_grads(model);
    std::vector<double> losses(static_cast<std::size_t>(max_batch));
    std::vector<char> correct(static_cast<std::size_t>(max_batch));

    const int nthreads = omp_get_max_threads();
    std::vector<Workspace> wss(static_cast<std::size_t>(nthreads),
                               Workspace(model.config));

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    TrainReport report;
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const double lr = cfg.learning_rate(epoch);
        shuffle_rng.shuffle(order);

        double loss_sum = 0.0;
        int hits = 0;
        for (int start = 0; start < n; start += cfg.batch_size) {
            const int bs = std::min(cfg.batch_size, n - start);
#pragma omp parallel for schedule(static)
            for (int s = 0; s < bs; ++s) {
                Workspace& ws = wss[static_cast<std::size_t>(omp_get_thread_num())];
                auto& g = sample_grads[static_cast<std::size_t>(s)];
                for (Tensor& t : g) std::fill(t.data.begin(), t.data.end(), 0.0);
                const int idx = order[static_cast<std::size_t>(start + s)];
                const double* x = train_set.sample(idx);
                const int label = train_set.y[static_cast<std::size_t>(idx)];
                forward_sample(model, x, ws);
                losses[static_cast<std::size_t>(s)] = softmax_xent(
                    ws.z5.data(), nc, label, ws.probs.data(), ws.d5.data());
                correct[static_cast<std::size_t>(s)] =
                    argmax_row(ws.probs.data(), nc) == label;
                backward_sample(model, x, ws, g);
            }

            // Reduce in sample order so the result is thread-count invariant.
            for (Tensor& t : batch_grads) std::fill(t.data.begin(), t.data.end(), 0.0);
            for (int s = 0; s < bs; ++s) {
                const auto& g = sample_grads[static_cast<std::size_t>(s)];
                for (int t = 0; t < CnnModel::kParamTensors; ++t) {
                    double* acc = batch_grads[static_cast<std::size_t>(t)].data.data();
                    const double* src = g[static_cast<std::size_t>(t)].ptr();
                    const std::size_t len = g[static_cast<std::size_t>(t)].size();
                    for (std::size_t j = 0; j < len; ++j) acc[j] += src[j];
                }
                loss_sum += losses[static_cast<std::size_t>(s)];
                hits += correct[static_cast<std::size_t>(s)];
            }
            const double inv_bs = 1.0 / static_cast<double>(bs);
            for (Tensor& t : batch_grads)
                for (double& v : t.data) v *= inv_bs;

            adam_step(model, batch_grads, state, lr, cfg);
        }

        const double epoch_loss = loss_sum / static_cast<double>(n);
        if (!std::isfinite(epoch_loss))
            throw NumericError("training diverged at epoch " + std::to_string(epoch));
        report.epoch_loss.push_back(epoch_loss);
        report.epoch_acc.push_back(static_cast<double>(hits) / static_cast<double>(n));
        report.epochs_run = epoch + 1;
    }

    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

double gradient_check(const CnnModel& model, const double* x, int label, double step) {
    if (!(step > 0.0)) throw ConfigError("gradient check: step must be > 0");
    model.validate();

    std::vector<Tensor> analytic = zero_grads(model);
    loss_and_gradients(model, x, label, analytic);

    Workspace cache(model.config);
    forward_sample(model, x, cache);

    // Flatten the parameter list so one loop covers every scalar.
    std::array<std::size_t, CnnModel::kParamTensors + 1> offset{};
    {
        const auto ps = model.params();
        for (int t = 0; t < CnnModel::kParamTensors; ++t)
            offset[static_cast<std::size_t>(t) + 1] =
                offset[static_cast<std::size_t>(t)] + ps[t]->size();
    }
    const long long total = static_cast<long long>(offset.back());

    double max_rel = 0.0;
#pragma omp parallel reduction(max : max_rel)
    {
        CnnModel local = model;
        Workspace ws(model.config);
        auto ps = local.params();
#pragma omp for schedule(static)
        for (long long pi = 0; pi < total; ++pi) {
            int t = 0;
            while (offset[static_cast<std::size_t>(t) + 1] <=
                   static_cast<std::size_t>(pi))
                ++t;
            const std::size_t j = static_cast<std::size_t>(pi) -
                                  offset[static_cast<std::size_t>(t)];
            const int stage = kParamStage[static_cast<std::size_t>(t)];
            double& pv = ps[t]->data[j];
            const double saved = pv;

            pv = saved + step;
            const double lp = loss_from_stage(local, stage, x, cache, label, ws);
            const bool plus_ok = states_match(ws, cache, stage);
            pv = saved - step;
            const double lm = loss_from_stage(local, stage, x, cache, label, ws);
            const bool minus_ok = states_match(ws, cache, stage);
            pv = saved;

            // Central differences are invalid across a rectifier or pool
            // boundary; such coordinates say nothing about the backward pass.
            if (!plus_ok || !minus_ok) continue;

            const double fd = (lp - lm) / (2.0 * step);
            const double an = analytic[static_cast<std::size_t>(t)].data[j];
            const double denom = std::max({std::abs(an), std::abs(fd), 1e-6});
            max_rel = std::max(max_rel, std::abs(an - fd) / denom);
        }
    }
    return max_rel;
}

std::string config_hash(const CnnConfig& cfg) {
    std::string s = "in=" + std::to_string(cfg.in_channels) +
                    ";len=" + std::to_string(cfg.input_length) + ";f=" +
                    std::to_string(cfg.conv_filters[0]) + "," +
                    std::to_string(cfg.conv_filters[1]) + "," +
                    std::to_string(cfg.conv_filters[2]) +
                    ";k=" + std::to_string(cfg.conv_kernel) +
                    ";cs=" + std::to_string(cfg.conv_stride) +
                    ";p=" + std::to_string(cfg.pool_size) +
                    ";ps=" + std::to_string(cfg.pool_stride) +
                    ";fc1=" + std::to_string(cfg.fc1_out) +
                    ";nc=" + std::to_string(cfg.n_classes);
    return to_hex(fnv1a64(s));
}

namespace {

nlohmann::json config_to_json(const CnnConfig& c) {
    return {{"in_channels", c.in_channels},
            {"input_length", c.input_length},
            {"conv_filters", c.conv_filters},
            {"conv_kernel", c.conv_kernel},
            {"conv_stride", c.conv_stride},
            {"pool_size", c.pool_size},
            {"pool_stride", c.pool_stride},
            {"fc1_out", c.fc1_out},
            {"n_classes", c.n_classes}};
}

CnnConfig config_from_json(const nlohmann::json& j) {
    CnnConfig c;
    c.in_channels = j.at("in_channels").get<int>();
    c.input_length = j.at("input_length").get<int>();
    c.conv_filters = j.at("conv_filters").get<std::array<int, 3>>();
    c.conv_kernel = j.at("conv_kernel").get<int>();
    c.conv_stride = j.at("conv_stride").get<int>();
    c.pool_size = j.at("pool_size").get<int>();
    c.pool_stride = j.at("pool_stride").get<int>();
    c.fc1_out = j.at("fc1_out").get<int>();
    c.n_classes = j.at("n_classes").get<int>();
    return c;
}

constexpr const char* kModelFormat = "frfens-model";
constexpr int kModelVersion = 1;

} // namespace

void save_model(const std::filesystem::path& path, const CnnModel& model) {
    model.validate();
    nlohmann::json j;
    j["format"] = kModelFormat;
    j["version"] = kModelVersion;
    j["config"] = config_to_json(model.config);
    j["config_hash"] = config_hash(model.config);
    j["init_seed"] = model.init_seed;
    nlohmann::json params = nlohmann::json::object();
    const auto ps = model.params();
    for (int i = 0; i < CnnModel::kParamTensors; ++i) {
        params[CnnModel::param_names()[i]] = {{"shape", ps[i]->shape},
                                              {"data", ps[i]->data}};
    }
    j["params"] = std::move(params);

    std::ofstream f(path);
    if (!f) throw Error("cannot open '" + path.string() + "' for writing");
    f << j.dump() << '\n';
    if (!f) throw Error("write failure on '" + path.string() + "'");
}

CnnModel load_model(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open '" + path.string() + "' for reading");
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("'" + path.string() + "' is not a valid model file: " + e.what());
    }

    try {
        if (j.at("format").get<std::string>() != kModelFormat)
            throw ParseError("'" + path.string() + "': unrecognized model format");
        if (j.at("version").get<int>() != kModelVersion)
            throw ParseError("'" + path.string() + "': unsupported model version " +
                             j.at("version").dump());

        CnnModel m;
        m.config = config_from_json(j.at("config"));
        m.config.validate();
        if (j.at("config_hash").get<std::string>() != config_hash(m.config))
            throw ParseError("'" + path.string() +
                             "': config hash disagrees with the stored config");
        m.init_seed = j.at("init_seed").get<std::uint64_t>();

        const auto want = expected_shapes(m.config);
        const auto ps = m.params();
        const auto& params = j.at("params");
        for (int i = 0; i < CnnModel::kParamTensors; ++i) {
            const auto& pj = params.at(CnnModel::param_names()[i]);
            Tensor t(pj.at("shape").get<std::vector<int>>());
            if (t.shape != want[static_cast<std::size_t>(i)])
                throw ParseError("'" + path.string() + "': tensor " +
                                 CnnModel::param_names()[i] +
                                 " disagrees with the stored config");
            auto data = pj.at("data").get<std::vector<double>>();
            if (data.size() != t.size())
                throw ParseError("'" + path.string() + "': tensor " +
                                 CnnModel::param_names()[i] + " is truncated");
            t.data = std::move(data);
            *ps[i] = std::move(t);
        }
        m.validate();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("'" + path.string() + "' is missing model fields: " + e.what());
    }
}

} // namespace frfens::nn
