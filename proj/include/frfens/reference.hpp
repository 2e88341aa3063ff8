#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "frfens/frf_data.hpp"
#include "frfens/nn.hpp"

// Plain serial re-implementations of the parallel kernels. They exist as
// test oracles and benchmark baselines: the layer math is written out naive
// and the batch/sample orchestration runs on one thread, so any disagreement
// points at the optimized path.
namespace frfens::ref {

// Serial counterpart of data::synth_frf (same formula, plain bin loop).
std::vector<double> synth_frf(const data::ModalModel& model,
                              const data::FrequencyGrid& grid, std::uint64_t seed);

// Naive whole-network forward pass built from fresh per-stage buffers.
std::vector<double> forward_probs(const nn::CnnModel& model, const double* x);

// Serial per-sample loop over forward_probs.
std::vector<double> predict(const nn::CnnModel& model, const nn::NnDataset& ds);

// Streaming batch gradient: one shared accumulator, samples in index order.
// Matches the parallel per-sample-buffer reduction bit for bit.
std::vector<Tensor> batch_gradients(const nn::CnnModel& model,
                                    const nn::NnDataset& ds, std::span<const int> idx,
                                    std::vector<double>* losses = nullptr);

// Textbook Adam update, one flat loop per tensor.
void adam_step(nn::CnnModel& model, const std::vector<Tensor>& grads,
               nn::AdamState& state, double lr, const nn::TrainConfig& cfg);

} // namespace frfens::ref
