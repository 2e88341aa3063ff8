#include "frfens/reference.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "frfens/errors.hpp"
#include "frfens/rng.hpp"

namespace frfens::ref {

std::vector<double> synth_frf(const data::ModalModel& model,
                              const data::FrequencyGrid& grid, std::uint64_t seed) {
    model.validate();
    grid.validate();
    const int nb = grid.n_bins;
    std::vector<double> out(static_cast<std::size_t>(data::kSensors) * nb, 0.0);

    std::vector<double> noise;
    if (model.noise_level > 0.0) {
        Rng rng(seed);
        noise.resize(out.size());
        for (double& z : noise) z = std::exp(model.noise_level * rng.normal());
    }

    constexpr double two_pi = 2.0 * std::numbers::pi;
    for (int s = 0; s < data::kSensors; ++s) {
        for (int b = 0; b < nb; ++b) {
            const double w = two_pi * grid.frequency(b);
            double re = 0.0, im = 0.0;
            for (const data::Mode& m : model.modes) {
                const double wk = two_pi * m.natural_khz;
                const double dr = wk * wk - w * w;
                const double di = 2.0 * m.damping * wk * w;
                const double inv = 1.0 / (dr * dr + di * di);
                const double r = m.residue[static_cast<std::size_t>(s)];
                re += r * dr * inv;
                im -= r * di * inv;
            }
            double v = std::sqrt(re * re + im * im);
            if (!noise.empty()) v *= noise[static_cast<std::size_t>(s) * nb + b];
            out[static_cast<std::size_t>(s) * nb + b] = v;
        }
    }
    return out;
}

namespace {

std::vector<double> naive_conv(const std::vector<double>& x, int c_in, int len,
                               const Tensor& w, const Tensor& b, int c_out, int k) {
    const int lo = len - k + 1;
    std::vector<double> y(static_cast<std::size_t>(c_out) * lo);
    for (int co = 0; co < c_out; ++co)
        for (int i = 0; i < lo; ++i) {
            double s = b.data[static_cast<std::size_t>(co)];
            for (int ci = 0; ci < c_in; ++ci)
                for (int j = 0; j < k; ++j)
                    s += w.data[(static_cast<std::size_t>(co) * c_in + ci) * k + j] *
                         x[static_cast<std::size_t>(ci) * len + i + j];
            y[static_cast<std::size_t>(co) * lo + i] = s;
        }
    return y;
}

std::vector<double> naive_relu(const std::vector<double>& x) {
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
    return y;
}

std::vector<double> naive_pool(const std::vector<double>& x, int c, int len, int p) {
    const int lo = len - p + 1;
    std::vector<double> y(static_cast<std::size_t>(c) * lo);
    for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < lo; ++i) {
            double m = x[static_cast<std::size_t>(ch) * len + i];
            for (int j = 1; j < p; ++j)
                m = std::max(m, x[static_cast<std::size_t>(ch) * len + i + j]);
            y[static_cast<std::size_t>(ch) * lo + i] = m;
        }
    return y;
}

std::vector<double> naive_mean(const std::vector<double>& x, int c, int len) {
    std::vector<double> y(static_cast<std::size_t>(len));
    const double inv = 1.0 / static_cast<double>(c);
    for (int i = 0; i < len; ++i) {
        double s = 0.0;
        for (int ch = 0; ch < c; ++ch) s += x[static_cast<std::size_t>(ch) * len + i];
        y[static_cast<std::size_t>(i)] = s * inv;
    }
    return y;
}

std::vector<double> naive_dense(const std::vector<double>& x, const Tensor& w,
                                const Tensor& b) {
    const int n_out = w.shape[0], n_in = w.shape[1];
    std::vector<double> y(static_cast<std::size_t>(n_out));
    for (int o = 0; o < n_out; ++o) {
        double s = b.data[static_cast<std::size_t>(o)];
        for (int i = 0; i < n_in; ++i)
            s += w.data[static_cast<std::size_t>(o) * n_in + i] *
                 x[static_cast<std::size_t>(i)];
        y[static_cast<std::size_t>(o)] = s;
    }
    return y;
}

} // namespace

std::vector<double> forward_probs(const nn::CnnModel& m, const double* x) {
    const nn::CnnConfig& c = m.config;
    const int k = c.conv_kernel, p = c.pool_size;
    std::vector<double> cur(x, x + static_cast<std::size_t>(c.in_channels) *
                                       c.input_length);

    cur = naive_conv(cur, c.in_channels, c.input_length, m.conv1_w, m.conv1_b,
                     c.conv_filters[0], k);
    cur = naive_relu(cur);
    cur = naive_pool(cur, c.conv_filters[0], c.conv_out_len(0), p);

    cur = naive_conv(cur, c.conv_filters[0], c.pool_out_len(0), m.conv2_w, m.conv2_b,
                     c.conv_filters[1], k);
    cur = naive_relu(cur);
    cur = naive_pool(cur, c.conv_filters[1], c.conv_out_len(1), p);

    cur = naive_conv(cur, c.conv_filters[1], c.pool_out_len(1), m.conv3_w, m.conv3_b,
                     c.conv_filters[2], k);
    cur = naive_relu(cur);
    cur = naive_pool(cur, c.conv_filters[2], c.conv_out_len(2), p);

    cur = naive_mean(cur, c.conv_filters[2], c.fc1_in());
    cur = naive_dense(cur, m.fc1_w, m.fc1_b);
    cur = naive_relu(cur);
    cur = naive_dense(cur, m.fc2_w, m.fc2_b);

    double mx = cur[0];
    for (double v : cur) mx = std::max(mx, v);
    double sum = 0.0;
    std::vector<double> probs(cur.size());
    for (std::size_t i = 0; i < cur.size(); ++i) {
        probs[i] = std::exp(cur[i] - mx);
        sum += probs[i];
    }
    const double inv = 1.0 / sum;
    for (double& v : probs) v *= inv;
    return probs;
}

std::vector<double> predict(const nn::CnnModel& model, const nn::NnDataset& ds) {
    const int nc = model.config.n_classes;
    std::vector<double> out(static_cast<std::size_t>(ds.n()) * nc);
    for (int i = 0; i < ds.n(); ++i) {
        const auto probs = ref::forward_probs(model, ds.sample(i));
        std::copy(probs.begin(), probs.end(),
                  out.begin() + static_cast<std::size_t>(i) * nc);
    }
    return out;
}

std::vector<Tensor> batch_gradients(const nn::CnnModel& model,
                                    const nn::NnDataset& ds, std::span<const int> idx,
                                    std::vector<double>* losses) {
    std::vector<Tensor> grads = nn::zero_grads(model);
    if (losses) losses->clear();
    for (int i : idx) {
        const double loss = nn::loss_and_gradients(
            model, ds.sample(i), ds.y[static_cast<std::size_t>(i)], grads);
        if (losses) losses->push_back(loss);
    }
    return grads;
}

void adam_step(nn::CnnModel& model, const std::vector<Tensor>& grads,
               nn::AdamState& state, double lr, const nn::TrainConfig& cfg) {
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    auto ps = model.params();
    for (int t = 0; t < nn::CnnModel::kParamTensors; ++t) {
        auto& m = state.m[static_cast<std::size_t>(t)].data;
        auto& v = state.v[static_cast<std::size_t>(t)].data;
        const auto& g = grads[static_cast<std::size_t>(t)].data;
        auto& p = ps[t]->data;
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            p[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg.eps);
        }
    }
}

} // namespace frfens::ref
