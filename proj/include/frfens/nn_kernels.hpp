#pragma once

#include <span>
#include <vector>

#include "frfens/tensor.hpp"

// Layer primitives for the 1-D CNN. The raw-pointer forms are the hot path
// shared by training, prediction, and the gradient checker; the Tensor
// wrappers exist for tests and one-off use. Rows are channel-major: a
// C x L signal stores channel c at offset c*L. All backward functions
// accumulate into their d_* outputs, which the caller zero-initializes.
namespace frfens::nn {

// Valid cross-correlation, stride 1. y: c_out x (len - k + 1).
// w layout: [c_out][c_in][k].
void conv1d_forward(const double* x, int c_in, int len, const double* w,
                    const double* b, int c_out, int k, double* y);
void conv1d_backward(const double* x, int c_in, int len, const double* w,
                     int c_out, int k, const double* d_y, double* d_x,
                     double* d_w, double* d_b);

void relu_forward(const double* x, int n, double* y);
// Mask comes from the pre-activation values; the subgradient at 0 is 0.
void relu_backward(const double* x_pre, const double* d_y, int n, double* d_x);

// Window max, stride 1. y: c x (len - pool + 1); argmax stores the winning
// in-row index per output (ties go to the earliest position).
void maxpool1d_forward(const double* x, int c, int len, int pool, double* y,
                       int* argmax);
void maxpool1d_backward(const int* argmax, const double* d_y, int c, int len_out,
                        int len_in, double* d_x);

// Mean over channels: y[i] = (1/c) sum_ch x[ch][i].
void channel_mean_forward(const double* x, int c, int len, double* y);
void channel_mean_backward(const double* d_y, int c, int len, double* d_x);

// y = W x + b. w layout: [n_out][n_in].
void dense_forward(const double* x, int n_in, const double* w, const double* b,
                   int n_out, double* y);
void dense_backward(const double* x, int n_in, const double* w, int n_out,
                    const double* d_y, double* d_x, double* d_w, double* d_b);

// Max-subtracted softmax; probs may alias nothing. Returns nothing.
void softmax(const double* logits, int n, double* probs);

// Softmax + cross-entropy against a single target class. Fills probs and,
// when d_logits is non-null, the gradient probs - onehot(target).
double softmax_xent(const double* logits, int n, int target, double* probs,
                    double* d_logits);

// ---- Tensor wrappers -------------------------------------------------

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b);

struct Conv1dGrads {
    Tensor d_x, d_w, d_b;
};
Conv1dGrads conv1d_grads(const Tensor& x, const Tensor& w, const Tensor& d_y);

Tensor relu(const Tensor& x);
Tensor relu_grad(const Tensor& x_pre, const Tensor& d_y);

Tensor maxpool1d(const Tensor& x, int pool, std::vector<int>* argmax = nullptr);
Tensor maxpool1d_grad(const Tensor& x, int pool, const Tensor& d_y);

Tensor channel_mean(const Tensor& x);
Tensor channel_mean_grad(int channels, const Tensor& d_y);

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b);

struct DenseGrads {
    Tensor d_x, d_w, d_b;
};
DenseGrads dense_grads(const Tensor& x, const Tensor& w, const Tensor& d_y);

struct SoftmaxXentResult {
    double loss;
    std::vector<double> probs;
    std::vector<double> d_logits;
};
SoftmaxXentResult softmax_xent(std::span<const double> logits, int target);

} // namespace frfens::nn
