#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "frfens/frf_data.hpp"
#include "frfens/nn.hpp"

namespace frfens {

// Every knob of the experiment in one place. Loadable from a flat
// `key = value` config file (unknown keys are rejected); command-line flags
// override file values. Defaults are the reference experiment: 229 samples,
// 70/30 split, 8 sections, batch 128, 200 epochs, lr 0.005 dropping by
// 0.005 every 10 epochs, 20 repetitions.
struct RunConfig {
    // synthesis
    int n_healthy = 150;
    int n_defect = 79;
    double f_min_khz = 3.0;
    double f_max_khz = 38.0;
    int n_bins = 11253;
    double defect_shift_pct = 1.5;
    double jitter_pct = 0.4;
    double noise_level = 0.02;
    std::vector<int> defect_modes{2, 4};

    // split / sectioning
    double train_frac = 0.7;
    int n_sections = 8;

    // model / training
    int input_length = 159;
    int batch_size = 128;
    int max_epochs = 200;
    double lr0 = 0.005;
    double lr_drop_factor = 0.005;
    int lr_drop_period = 10;
    nn::LrSchedule lr_schedule = nn::LrSchedule::Drop;

    // fusion
    double clamp_eps = 1e-6;
    double divergence_floor = 1e-12;

    // experiment
    std::uint64_t seed = 0;
    int n_reps = 20;
    bool resplit_per_rep = true;

    void validate() const;

    data::FrequencyGrid grid() const;
    data::SynthesisConfig synthesis_config(std::uint64_t synth_seed) const;
    nn::CnnConfig cnn_config(int in_channels) const;
    nn::TrainConfig train_config(std::uint64_t member_seed) const;

    // Canonical key=value echo of every field, one per line, for reports.
    std::string echo() const;
};

// The modal plant both classes are synthesized from. Seven modes spread over
// the 3-38 kHz band with distinct residues per sensor; a defect shifts the
// configured subset of natural frequencies down by defect_shift_pct.
data::ModalModel default_modal_model(double noise_level);

// Flat config-file support. Lines are `key = value`; blank lines and lines
// starting with # are ignored.
RunConfig load_run_config(const std::filesystem::path& path);
void apply_config_line(RunConfig& cfg, std::string_view key, std::string_view value,
                       const std::string& where);

} // namespace frfens
