#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "frfens/dst.hpp"
#include "frfens/frf_data.hpp"
#include "frfens/mi.hpp"
#include "frfens/nn.hpp"
#include "frfens/run_config.hpp"

// End-to-end experiment: pool of one model per (frequency section, sensor
// set), MI ranking, ranked-prefix ensemble growth with divergence-weighted
// fusion, the full-signal baseline, and the repetition study.
namespace frfens::pipeline {

enum class SensorSet { X1 = 0, X2 = 1, Both = 2 };
const char* sensor_set_name(SensorSet s);
int sensor_channels(SensorSet s);

// Section index used by the full-signal baseline members.
constexpr int kFullSignal = -1;

struct PoolMember {
    int index = 0;
    data::SectionSpec section; // index kFullSignal means the whole band
    SensorSet sensors = SensorSet::X1;
    nn::CnnModel model;
    nn::TrainReport train_report;
    double val_accuracy = -1.0;
    double mi = -1.0;
    int rank = 0;
};

struct Pool {
    std::vector<PoolMember> members;
    std::vector<data::SectionSpec> sections;
};

// Extracts one member's input view: the section's bins from the selected
// sensor rows, each resampled to input_length. Channel order for Both is
// sensor 1 then sensor 2.
nn::NnDataset member_view(const data::FrfDataset& ds, const data::SectionSpec& section,
                          SensorSet sensors, int input_length);

// Trains 3 * n_sections members (X1, X2, Both per section) on the training
// split. Member index is 3*section + sensor set; member seed is
// base_seed + index, with independent derived streams for parameter
// initialization and batch shuffling.
Pool build_pool(const data::FrfDataset& train, int n_sections, const RunConfig& cfg,
                std::uint64_t base_seed);

struct PoolEvaluation {
    std::vector<std::vector<double>> probs; // per member: n_val x 2 row-major
    std::vector<mi::LabelSeq> preds;        // per member: argmax labels
    mi::LabelSeq truth;
    std::vector<std::string> tie_log;
};

// Fills val_accuracy, mi, and rank on every member and returns the per-member
// validation outputs the fusion stages reuse.
PoolEvaluation evaluate_pool(Pool& pool, const data::FrfDataset& val,
                             const RunConfig& cfg);

// Highest validation accuracy; exact ties fall back to higher MI, then lower
// member index. Returns the member index.
int select_bim(const Pool& pool, std::vector<std::string>* tie_log = nullptr);

// MI ranking over an evaluated pool: fills each member's mi and rank fields
// and returns the member indices best-first. Tie events append to
// eval.tie_log.
std::vector<int> rank_pool(Pool& pool, PoolEvaluation& eval);

struct GrowthCurve {
    std::vector<double> accuracies; // fused accuracy of each ranked prefix
    int bem_k = 0;                  // smallest prefix attaining the maximum
    double bem_accuracy = 0.0;
};

// Fuses every ranked prefix and scores it against the validation truth.
GrowthCurve grow_pool(const PoolEvaluation& eval, const std::vector<int>& order,
                      double clamp_eps);

// Per-sample fusion of the chosen members' probability rows: each member's
// row becomes a clamped singleton-mass assignment, the set is fused, and the
// argmax class is returned per sample. A single member decides directly.
std::vector<int> fuse_decide(const std::vector<std::vector<double>>& member_probs,
                             std::span<const int> members, int n_samples,
                             double clamp_eps);

struct SampleFusionDiag {
    int sample = 0;
    std::vector<double> abjs, sd, cd, conflict_trace;
};

// Same fusion but also returns the per-sample diagnostics (empty for a
// single-member set, which involves no combination).
std::vector<int> fuse_decide_diag(const std::vector<std::vector<double>>& member_probs,
                                  std::span<const int> members, int n_samples,
                                  double clamp_eps,
                                  std::vector<SampleFusionDiag>& diags);

struct MemberSummary {
    int index = 0;
    int section_index = 0;
    int bin_start = 0, bin_end = 0;
    double f_start_khz = 0.0, f_end_khz = 0.0;
    SensorSet sensors = SensorSet::X1;
    double val_accuracy = 0.0;
    double mi = 0.0;
    int rank = 0;
};

// Flattened member record for tables and reports; frequency endpoints come
// from the dataset grid.
MemberSummary summarize(const PoolMember& m, const data::FrequencyGrid& grid);

struct ExperimentReport {
    std::uint64_t seed = 0;
    std::string config_echo;
    int n_train = 0, n_val = 0;

    std::vector<MemberSummary> pool;
    std::vector<int> ranked_order;           // member indices, best first
    std::vector<double> accuracy_curve;      // fused accuracy per prefix size
    int bim_index = 0;
    double bim_accuracy = 0.0;
    int bem_k = 0;                           // smallest prefix at the curve max
    std::vector<int> bem_members;
    double bem_accuracy = 0.0;

    std::vector<MemberSummary> baseline;     // full-signal members
    std::vector<int> baseline_ranked_order;
    std::vector<double> baseline_curve;
    int baseline_bem_k = 0;
    double baseline_bem_accuracy = 0.0;

    // per-sample provenance: every accuracy above is recomputable from these
    std::vector<int> val_truth;
    std::vector<std::vector<int>> member_val_preds;
    std::vector<int> bem_val_preds;
    std::vector<SampleFusionDiag> bem_diag;

    std::vector<std::string> tie_log;
    double wall_seconds = 0.0; // never serialized: reports stay byte-stable
};

// Seeds for the independent random streams of one experiment.
struct SeedPlan {
    std::uint64_t synth = 0, split = 0, pool = 0, baseline = 0;
};
SeedPlan default_seed_plan(std::uint64_t seed);

// The whole experiment: synthesize, split, normalize, section, train the
// pool, rank, grow the fused ensemble, pick BIM/BEM, and run the
// full-signal baseline. Deterministic per (cfg, plan).
ExperimentReport run_experiment(const RunConfig& cfg);
ExperimentReport run_experiment(const RunConfig& cfg, const SeedPlan& plan);

struct BaselineResult {
    std::vector<PoolMember> members; // X1, X2, Both on the full band
    std::vector<MemberSummary> summaries;
    std::vector<int> ranked_order;
    std::vector<double> curve;
    int bem_k = 0;
    double bem_accuracy = 0.0;
    std::vector<std::string> tie_log;
};

// Full-signal comparison: 3 models on the whole band (resampled to
// input_length), ranked and fused by the identical machinery.
BaselineResult full_frf_baseline(const data::FrfDataset& train,
                                 const data::FrfDataset& val, const RunConfig& cfg,
                                 std::uint64_t base_seed);

struct RepetitionSummary {
    std::vector<double> bim_acc, bem_acc; // one entry per repetition
    double mean_bim = 0.0, mean_bem = 0.0;
};

// Runs the experiment n_reps times with seeds base+0 .. base+n_reps-1.
// With cfg.resplit_per_rep false, the dataset and split stay fixed at the
// base seed and only model initialization/shuffling varies.
RepetitionSummary repetition_study(const RunConfig& cfg, int n_reps);

} // namespace frfens::pipeline
