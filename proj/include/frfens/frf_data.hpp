#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "frfens/errors.hpp"

namespace frfens::data {

inline constexpr int kSensors = 2;

// Uniform frequency axis in kHz. Bin k sits at f_min + k*(f_max-f_min)/(n_bins-1).
struct FrequencyGrid {
    double f_min_khz = 3.0;
    double f_max_khz = 38.0;
    int n_bins = 11253;

    double frequency(int bin) const {
        return f_min_khz + static_cast<double>(bin) * (f_max_khz - f_min_khz) /
                               static_cast<double>(n_bins - 1);
    }
    void validate() const;
    bool operator==(const FrequencyGrid&) const = default;
};

enum class Label : int { Healthy = 0, Defect = 1 };

inline char label_char(Label l) { return l == Label::Healthy ? 'H' : 'D'; }

// One specimen: |FRF| magnitude per sensor per bin, stored sensor-major
// (response[s*n_bins + b]).
struct FrfSample {
    int id = 0;
    Label label = Label::Healthy;
    int n_bins = 0;
    std::vector<double> response; // kSensors * n_bins

    std::span<const double> sensor(int s) const {
        return {response.data() + static_cast<std::size_t>(s) * n_bins,
                static_cast<std::size_t>(n_bins)};
    }
    std::span<double> sensor(int s) {
        return {response.data() + static_cast<std::size_t>(s) * n_bins,
                static_cast<std::size_t>(n_bins)};
    }
    bool operator==(const FrfSample&) const = default;
};

struct FrfDataset {
    FrequencyGrid grid;
    std::vector<FrfSample> samples;

    // require_nonneg distinguishes raw |FRF| data (nonnegative by definition)
    // from standardized data, which is signed.
    void validate(bool require_nonneg = true) const;
    int count(Label l) const;
    bool operator==(const FrfDataset&) const = default;
};

// Single vibration mode of the synthetic specimen model.
struct Mode {
    double natural_khz = 0.0;
    double damping = 0.01;                 // in (0,1)
    std::array<double, kSensors> residue{}; // one residue per sensor
};

struct ModalModel {
    std::vector<Mode> modes;
    double noise_level = 0.0; // log-normal sigma on the magnitude
    void validate() const;
};

struct SynthesisConfig {
    int n_healthy = 150;
    int n_defect = 79;
    ModalModel base_model;
    double defect_shift_pct = 1.5;   // downward shift of defect-mode frequencies
    double per_sample_jitter_pct = 0.4;
    double noise_level = 0.02;
    std::vector<int> defect_modes{2, 4}; // indices into base_model.modes
    std::uint64_t seed = 0;
    void validate() const;
};

// Modal superposition magnitude, one row per sensor:
//   |sum_k r_k / (w_k^2 - w^2 + 2 i zeta_k w_k w)| * exp(noise_level * z)
// with w = 2*pi*f and z drawn per (sensor, bin) from Rng(seed).
std::vector<double> synth_frf(const ModalModel& model, const FrequencyGrid& grid,
                              std::uint64_t seed);

FrfDataset generate_dataset(const SynthesisConfig& cfg, const FrequencyGrid& grid);

// Stratified random split; per class, round(train_frac * n) samples go to
// train, clamped so both sides keep at least one sample per class.
std::pair<FrfDataset, FrfDataset> split_dataset(const FrfDataset& ds, double train_frac,
                                                std::uint64_t seed);

struct SectionSpec {
    int index = 0;
    int bin_start = 0;
    int bin_end = 0; // exclusive
    int length() const { return bin_end - bin_start; }
    bool operator==(const SectionSpec&) const = default;
};

// Contiguous partition of [0, n_bins); the n_bins % n_sections leftover bins
// go one each to the earliest sections.
std::vector<SectionSpec> slice_sections(int n_bins, int n_sections);
std::vector<SectionSpec> slice_sections(const FrfDataset& ds, int n_sections);

struct NormStats {
    int n_bins = 0;
    std::vector<double> mean;   // kSensors * n_bins
    std::vector<double> stddev; // kSensors * n_bins, floored at kStdFloor
    static constexpr double kStdFloor = 1e-8;
};

NormStats normalize_fit(const FrfDataset& train);
void normalize_apply(const NormStats& stats, FrfDataset& ds);
// Fits on train, applies to train and every dataset in others.
NormStats normalize_fit_apply(FrfDataset& train, std::vector<FrfDataset*> others);

// Text format: line 1 "f_min,f_max,n_bins"; per sample two lines
// "id,label,sensor,v0,...,v{n-1}" with sensor 1 then 2, label H or D.
// Doubles round-trip bit-exactly.
void save_dataset(const std::filesystem::path& path, const FrfDataset& ds);
FrfDataset load_dataset(const std::filesystem::path& path);

void save_norm_stats(const std::filesystem::path& path, const NormStats& stats);

// Piecewise-linear resampling of a signal to out_len points (endpoints map to
// endpoints). When out_len equals the input length the copy is exact.
std::vector<double> resample_linear(std::span<const double> src, int out_len);

} // namespace frfens::data
