#include "frfens/nn_kernels.hpp"

#include <algorithm>
#include <cmath>

#include "frfens/errors.hpp"

namespace frfens::nn {

void conv1d_forward(const double* x, int c_in, int len, const double* w,
                    const double* b, int c_out, int k, double* y) {
    const int lo = len - k + 1;
    for (int co = 0; co < c_out; ++co) {
        double* yr = y + static_cast<std::size_t>(co) * lo;
        for (int i = 0; i < lo; ++i) yr[i] = b[co];
        for (int ci = 0; ci < c_in; ++ci) {
            const double* xr = x + static_cast<std::size_t>(ci) * len;
            const double* wr = w + (static_cast<std::size_t>(co) * c_in + ci) * k;
            for (int j = 0; j < k; ++j) {
                const double wj = wr[j];
                const double* xs = xr + j;
                for (int i = 0; i < lo; ++i) yr[i] += wj * xs[i];
            }
        }
    }
}

void conv1d_backward(const double* x, int c_in, int len, const double* w,
                     int c_out, int k, const double* d_y, double* d_x,
                     double* d_w, double* d_b) {
    const int lo = len - k + 1;
    for (int co = 0; co < c_out; ++co) {
        const double* gr = d_y + static_cast<std::size_t>(co) * lo;
        double db = 0.0;
        for (int i = 0; i < lo; ++i) db += gr[i];
        d_b[co] += db;
        for (int ci = 0; ci < c_in; ++ci) {
            const double* xr = x + static_cast<std::size_t>(ci) * len;
            double* dxr = d_x + static_cast<std::size_t>(ci) * len;
            const std::size_t woff = (static_cast<std::size_t>(co) * c_in + ci) * k;
            for (int j = 0; j < k; ++j) {
                const double wj = w[woff + j];
                double dw = 0.0;
                const double* xs = xr + j;
                double* dxs = dxr + j;
                for (int i = 0; i < lo; ++i) {
                    dw += xs[i] * gr[i];
                    dxs[i] += wj * gr[i];
                }
                d_w[woff + j] += dw;
            }
        }
    }
}

void relu_forward(const double* x, int n, double* y) {
    for (int i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(const double* x_pre, const double* d_y, int n, double* d_x) {
    for (int i = 0; i < n; ++i)
        if (x_pre[i] > 0.0) d_x[i] += d_y[i];
}

void maxpool1d_forward(const double* x, int c, int len, int pool, double* y,
                       int* argmax) {
    const int lo = len - pool + 1;
    for (int ch = 0; ch < c; ++ch) {
        const double* xr = x + static_cast<std::size_t>(ch) * len;
        double* yr = y + static_cast<std::size_t>(ch) * lo;
        int* ar = argmax + static_cast<std::size_t>(ch) * lo;
        for (int i = 0; i < lo; ++i) {
            int best = i;
            for (int j = 1; j < pool; ++j)
                if (xr[i + j] > xr[best]) best = i + j;
            yr[i] = xr[best];
            ar[i] = best;
        }
    }
}

void maxpool1d_backward(const int* argmax, const double* d_y, int c, int len_out,
                        int len_in, double* d_x) {
    for (int ch = 0; ch < c; ++ch) {
        const double* gr = d_y + static_cast<std::size_t>(ch) * len_out;
        const int* ar = argmax + static_cast<std::size_t>(ch) * len_out;
        double* dxr = d_x + static_cast<std::size_t>(ch) * len_in;
        for (int i = 0; i < len_out; ++i) dxr[ar[i]] += gr[i];
    }
}

void channel_mean_forward(const double* x, int c, int len, double* y) {
    const double inv = 1.0 / static_cast<double>(c);
    for (int i = 0; i < len; ++i) y[i] = x[i];
    for (int ch = 1; ch < c; ++ch) {
        const double* xr = x + static_cast<std::size_t>(ch) * len;
        for (int i = 0; i < len; ++i) y[i] += xr[i];
    }
    for (int i = 0; i < len; ++i) y[i] *= inv;
}

void channel_mean_backward(const double* d_y, int c, int len, double* d_x) {
    const double inv = 1.0 / static_cast<double>(c);
    for (int ch = 0; ch < c; ++ch) {
        double* dxr = d_x + static_cast<std::size_t>(ch) * len;
        for (int i = 0; i < len; ++i) dxr[i] += inv * d_y[i];
    }
}

void dense_forward(const double* x, int n_in, const double* w, const double* b,
                   int n_out, double* y) {
    for (int o = 0; o < n_out; ++o) {
        const double* wr = w + static_cast<std::size_t>(o) * n_in;
        double s = b[o];
        for (int i = 0; i < n_in; ++i) s += wr[i] * x[i];
        y[o] = s;
    }
}

void dense_backward(const double* x, int n_in, const double* w, int n_out,
                    const double* d_y, double* d_x, double* d_w, double* d_b) {
    for (int o = 0; o < n_out; ++o) {
        const double g = d_y[o];
        d_b[o] += g;
        const double* wr = w + static_cast<std::size_t>(o) * n_in;
        double* dwr = d_w + static_cast<std::size_t>(o) * n_in;
        for (int i = 0; i < n_in; ++i) {
            dwr[i] += g * x[i];
            d_x[i] += g * wr[i];
        }
    }
}

void softmax(const double* logits, int n, double* probs) {
    double mx = logits[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        probs[i] = std::exp(logits[i] - mx);
        sum += probs[i];
    }
    const double inv = 1.0 / sum;
    for (int i = 0; i < n; ++i) probs[i] *= inv;
}

double softmax_xent(const double* logits, int n, int target, double* probs,
                    double* d_logits) {
    if (target < 0 || target >= n) throw ShapeError("cross-entropy target out of range");
    double mx = logits[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        probs[i] = std::exp(logits[i] - mx);
        sum += probs[i];
    }
    const double inv = 1.0 / sum;
    for (int i = 0; i < n; ++i) probs[i] *= inv;
    const double loss = std::log(sum) - (logits[target] - mx);
    if (d_logits) {
        for (int i = 0; i < n; ++i) d_logits[i] = probs[i];
        d_logits[target] -= 1.0;
    }
    return loss;
}

// ---- Tensor wrappers -------------------------------------------------

namespace {

void require_rank(const Tensor& t, int rank, const char* what) {
    if (static_cast<int>(t.shape.size()) != rank)
        throw ShapeError(std::string(what) + ": wrong tensor rank");
}

} // namespace

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b) {
    require_rank(x, 2, "conv input");
    require_rank(w, 3, "conv weights");
    require_rank(b, 1, "conv bias");
    const int c_in = x.shape[0], len = x.shape[1];
    const int c_out = w.shape[0], k = w.shape[2];
    if (w.shape[1] != c_in) throw ShapeError("conv weights disagree with input channels");
    if (b.shape[0] != c_out) throw ShapeError("conv bias disagrees with output channels");
    if (len < k) throw ShapeError("conv input shorter than the kernel");
    Tensor y({c_out, len - k + 1});
    conv1d_forward(x.ptr(), c_in, len, w.ptr(), b.ptr(), c_out, k, y.data.data());
    return y;
}

Conv1dGrads conv1d_grads(const Tensor& x, const Tensor& w, const Tensor& d_y) {
    const int c_in = x.shape[0], len = x.shape[1];
    const int c_out = w.shape[0], k = w.shape[2];
    if (d_y.shape != std::vector<int>{c_out, len - k + 1})
        throw ShapeError("conv upstream gradient has the wrong shape");
    Conv1dGrads g{Tensor(x.shape), Tensor(w.shape), Tensor({c_out})};
    conv1d_backward(x.ptr(), c_in, len, w.ptr(), c_out, k, d_y.ptr(),
                    g.d_x.data.data(), g.d_w.data.data(), g.d_b.data.data());
    return g;
}

Tensor relu(const Tensor& x) {
    Tensor y(x.shape);
    relu_forward(x.ptr(), static_cast<int>(x.size()), y.data.data());
    return y;
}

Tensor relu_grad(const Tensor& x_pre, const Tensor& d_y) {
    if (x_pre.shape != d_y.shape) throw ShapeError("relu gradient shape mismatch");
    Tensor d_x(x_pre.shape);
    relu_backward(x_pre.ptr(), d_y.ptr(), static_cast<int>(x_pre.size()),
                  d_x.data.data());
    return d_x;
}

Tensor maxpool1d(const Tensor& x, int pool, std::vector<int>* argmax) {
    require_rank(x, 2, "pool input");
    const int c = x.shape[0], len = x.shape[1];
    if (pool < 1) throw ShapeError("pool size must be >= 1");
    if (len < pool) throw ShapeError("pool input shorter than the window");
    Tensor y({c, len - pool + 1});
    std::vector<int> idx(y.size());
    maxpool1d_forward(x.ptr(), c, len, pool, y.data.data(), idx.data());
    if (argmax) *argmax = std::move(idx);
    return y;
}

Tensor maxpool1d_grad(const Tensor& x, int pool, const Tensor& d_y) {
    std::vector<int> idx;
    Tensor y = maxpool1d(x, pool, &idx);
    if (d_y.shape != y.shape) throw ShapeError("pool upstream gradient shape mismatch");
    Tensor d_x(x.shape);
    maxpool1d_backward(idx.data(), d_y.ptr(), x.shape[0], y.shape[1], x.shape[1],
                       d_x.data.data());
    return d_x;
}

Tensor channel_mean(const Tensor& x) {
    require_rank(x, 2, "channel mean input");
    Tensor y({x.shape[1]});
    channel_mean_forward(x.ptr(), x.shape[0], x.shape[1], y.data.data());
    return y;
}

Tensor channel_mean_grad(int channels, const Tensor& d_y) {
    require_rank(d_y, 1, "channel mean gradient");
    if (channels < 1) throw ShapeError("channel mean needs at least 1 channel");
    Tensor d_x({channels, d_y.shape[0]});
    channel_mean_backward(d_y.ptr(), channels, d_y.shape[0], d_x.data.data());
    return d_x;
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
    require_rank(x, 1, "dense input");
    require_rank(w, 2, "dense weights");
    require_rank(b, 1, "dense bias");
    if (w.shape[1] != x.shape[0]) throw ShapeError("dense weights disagree with input");
    if (b.shape[0] != w.shape[0]) throw ShapeError("dense bias disagrees with weights");
    Tensor y({w.shape[0]});
    dense_forward(x.ptr(), x.shape[0], w.ptr(), b.ptr(), w.shape[0], y.data.data());
    return y;
}

DenseGrads dense_grads(const Tensor& x, const Tensor& w, const Tensor& d_y) {
    if (d_y.shape != std::vector<int>{w.shape[0]})
        throw ShapeError("dense upstream gradient shape mismatch");
    DenseGrads g{Tensor(x.shape), Tensor(w.shape), Tensor({w.shape[0]})};
    dense_backward(x.ptr(), x.shape[0], w.ptr(), w.shape[0], d_y.ptr(),
                   g.d_x.data.data(), g.d_w.data.data(), g.d_b.data.data());
    return g;
}

SoftmaxXentResult softmax_xent(std::span<const double> logits, int target) {
    SoftmaxXentResult r;
    r.probs.resize(logits.size());
    r.d_logits.resize(logits.size());
    r.loss = softmax_xent(logits.data(), static_cast<int>(logits.size()), target,
                          r.probs.data(), r.d_logits.data());
    return r;
}

} // namespace frfens::nn
