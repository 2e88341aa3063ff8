#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "frfens/tensor.hpp"

// A small deterministic 1-D CNN: three conv/relu/maxpool stages, a channel
// average bridging the last conv block to the dense head, two dense layers,
// and a softmax output. Everything runs in 64-bit precision and every source
// of randomness is seeded, so a (seed, data, config) triple fixes the trained
// model bit for bit.
namespace frfens::nn {

struct CnnConfig {
    int in_channels = 1;
    int input_length = 159;
    std::array<int, 3> conv_filters{64, 32, 16};
    int conv_kernel = 3;
    int conv_stride = 1; // only unit stride is supported
    int pool_size = 2;
    int pool_stride = 1; // only unit stride is supported
    int fc1_out = 100;
    int n_classes = 2;

    void validate() const;
    // Signal lengths after each stage: conv trims kernel-1, pool trims
    // pool_size-1. len0 is the raw input length.
    int conv_out_len(int stage) const;
    int pool_out_len(int stage) const;
    int fc1_in() const; // pool_out_len(2): the channel-averaged vector length
    bool operator==(const CnnConfig&) const = default;
};

enum class LrSchedule {
    Drop,    // lr0 * drop_factor^(epoch / period): aggressive two-phase decay
    Inverse, // lr0 / (1 + drop_factor)^(epoch / period): gentle decay
};

struct TrainConfig {
    int batch_size = 128;
    int max_epochs = 200;
    double lr0 = 0.005;
    double lr_drop_factor = 0.005;
    int lr_drop_period = 10;
    LrSchedule schedule = LrSchedule::Drop;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 0;

    void validate() const;
    double learning_rate(int epoch) const;
};

// Parameter tensors in canonical order (see param_names): conv weights are
// [filters, in_channels, kernel], dense weights are [out, in].
struct CnnModel {
    CnnConfig config;
    std::uint64_t init_seed = 0;
    Tensor conv1_w, conv1_b;
    Tensor conv2_w, conv2_b;
    Tensor conv3_w, conv3_b;
    Tensor fc1_w, fc1_b;
    Tensor fc2_w, fc2_b;

    static constexpr int kParamTensors = 10;
    static const std::array<const char*, kParamTensors>& param_names();
    std::array<Tensor*, kParamTensors> params();
    std::array<const Tensor*, kParamTensors> params() const;

    void validate() const;
    std::size_t param_count() const;
};

// Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases, drawn
// from a single stream in canonical parameter order.
CnnModel init_model(const CnnConfig& cfg, std::uint64_t seed);

// Sample-major training view: sample i occupies x[i*c*L .. (i+1)*c*L).
struct NnDataset {
    int in_channels = 1;
    int input_length = 0;
    std::vector<double> x;
    std::vector<int> y;

    int n() const { return static_cast<int>(y.size()); }
    const double* sample(int i) const;
    void validate(int n_classes) const;
};

struct TrainReport {
    std::vector<double> epoch_loss; // mean per-sample loss, evaluated in-pass
    std::vector<double> epoch_acc;  // training accuracy, evaluated in-pass
    int epochs_run = 0;
    double final_val_acc = -1.0; // filled by callers that hold out data
    double wall_seconds = 0.0;
};

struct AdamState {
    std::vector<Tensor> m, v; // canonical parameter order
    long long t = 0;

    static AdamState for_model(const CnnModel& model);
};

// One Adam update from accumulated gradients (canonical order). Rejects
// non-finite gradients with the offending tensor's name.
void adam_step(CnnModel& model, const std::vector<Tensor>& grads, AdamState& state,
               double lr, const TrainConfig& cfg);

// Mini-batch training: seeded shuffle per epoch, batch-mean gradients, Adam
// with the configured schedule. Deterministic for a fixed seed and thread
// count independent (per-sample gradients are reduced in sample order).
TrainReport train(CnnModel& model, const NnDataset& train_set, const TrainConfig& cfg);

// Softmax probabilities for every sample, row-major n x n_classes.
std::vector<double> predict(const CnnModel& model, const NnDataset& ds);

// Probabilities for one sample (x: in_channels * input_length doubles).
std::vector<double> forward_probs(const CnnModel& model, const double* x);

// Loss of one labeled sample plus parameter gradients in canonical order
// (accumulated into grads, which must be zeroed model-shaped tensors).
double loss_and_gradients(const CnnModel& model, const double* x, int label,
                          std::vector<Tensor>& grads);

std::vector<Tensor> zero_grads(const CnnModel& model);

// Central-difference check of the full backward pass on one labeled sample.
// Returns the max relative error across every parameter; reuses cached
// stage activations so only the perturbed layer onwards is recomputed.
// Coordinates whose perturbation flips a rectifier sign or pool argmax are
// excluded: the loss is not differentiable across those boundaries, so the
// comparison would measure the kink, not the backward pass.
double gradient_check(const CnnModel& model, const double* x, int label, double step);

// Versioned JSON container with the config, its hash, the init seed, and all
// parameter tensors. Round-trips bit-exactly.
void save_model(const std::filesystem::path& path, const CnnModel& model);
CnnModel load_model(const std::filesystem::path& path);

// Canonical config fingerprint stored inside model files.
std::string config_hash(const CnnConfig& cfg);

} // namespace frfens::nn
