#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "frfens/pipeline.hpp"

// Serialization of experiment results: a lossless JSON report plus
// plot-ready CSV views (pool table, growth curve, baseline table, fusion
// diagnostics, repetition series) and a content-hash manifest. Wall-clock
// time goes to a separate timing sidecar so the report files are
// byte-identical across reruns of the same seed.
namespace frfens::report {

struct ManifestEntry {
    std::string name;
    std::string hash_hex; // fnv1a64 of the file bytes
    std::uint64_t bytes = 0;
};

// Writes report.json, pool_table.csv, rank_table.csv, growth_curve.csv,
// baseline.csv, fusion_diagnostics.csv into dir and returns their manifest.
std::vector<ManifestEntry> write_reports(const pipeline::ExperimentReport& rep,
                                         const std::filesystem::path& dir);

// Writes repetitions.csv (one row per repetition plus a mean row).
std::vector<ManifestEntry> write_repetitions(const pipeline::RepetitionSummary& sum,
                                             const std::filesystem::path& dir);

// Writes manifest.txt listing every entry as name,hash,bytes.
void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::filesystem::path& dir);

// Wall-clock sidecar, excluded from the manifest on purpose.
void write_timing(double seconds, const std::filesystem::path& dir);

// Lossless JSON round-trip of the full report (minus wall time).
std::string render_report_json(const pipeline::ExperimentReport& rep);
pipeline::ExperimentReport load_report(const std::filesystem::path& file);

// Individual CSV renderers, also used by the partial CLI stages.
std::string render_pool_table(const std::vector<pipeline::MemberSummary>& pool);
std::string render_rank_table(const std::vector<pipeline::MemberSummary>& pool);
std::string render_growth_curve(const std::vector<int>& order,
                                const std::vector<double>& curve);
std::string render_baseline(const std::vector<pipeline::MemberSummary>& members,
                            double bem_accuracy);
std::string render_fusion_diagnostics(
    const std::vector<int>& members,
    const std::vector<pipeline::SampleFusionDiag>& diags);

// Writes one file and returns its manifest row.
ManifestEntry write_text_file(const std::filesystem::path& dir, const std::string& name,
                              const std::string& content);

} // namespace frfens::report
