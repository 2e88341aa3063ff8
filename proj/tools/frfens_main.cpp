#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <omp.h>

#include <CLI11.hpp>

#include "frfens/errors.hpp"
#include "frfens/frf_data.hpp"
#include "frfens/nn.hpp"
#include "frfens/pipeline.hpp"
#include "frfens/report_io.hpp"
#include "frfens/run_config.hpp"

namespace fs = std::filesystem;
using namespace frfens;

namespace {

bool verbose() {
    const char* v = std::getenv("FRFENS_VERBOSE");
    return v != nullptr && *v != '\0' && std::string_view(v) != "0";
}

void note(const std::string& msg) {
    if (verbose()) std::cerr << "[frfens] " << msg << std::endl;
}

std::string pct(double frac) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f%%", frac * 100.0);
    return buf;
}

struct PreparedData {
    data::FrfDataset train, val;
    pipeline::SeedPlan plan;
};

// Mirrors the experiment's data stage so every subcommand that re-derives the
// dataset from (config, seed) sees the identical split.
PreparedData prepare(const RunConfig& cfg) {
    PreparedData p;
    p.plan = pipeline::default_seed_plan(cfg.seed);
    const data::FrfDataset ds =
        data::generate_dataset(cfg.synthesis_config(p.plan.synth), cfg.grid());
    std::tie(p.train, p.val) = data::split_dataset(ds, cfg.train_frac, p.plan.split);
    data::normalize_fit_apply(p.train, {&p.val});
    note("data ready: " + std::to_string(p.train.samples.size()) + " train / " +
         std::to_string(p.val.samples.size()) + " val");
    return p;
}

std::string member_file(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "member_%02d.json", index);
    return buf;
}

void save_pool(const pipeline::Pool& pool, const fs::path& out) {
    const fs::path dir = out / "models";
    fs::create_directories(dir);
    for (const pipeline::PoolMember& m : pool.members)
        nn::save_model(dir / member_file(m.index), m.model);
}

// Rebuilds the pool from saved models; member index i maps to section i/3 and
// sensor set i%3, matching the training layout.
pipeline::Pool load_pool(const RunConfig& cfg, const data::FrfDataset& train,
                         const fs::path& out) {
    pipeline::Pool pool;
    pool.sections = data::slice_sections(train.grid.n_bins, cfg.n_sections);
    const int n = cfg.n_sections * 3;
    pool.members.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        pipeline::PoolMember m;
        m.index = i;
        m.section = pool.sections[static_cast<std::size_t>(i / 3)];
        m.sensors = static_cast<pipeline::SensorSet>(i % 3);
        const fs::path path = out / "models" / member_file(i);
        if (!fs::exists(path))
            throw ConfigError("missing model file '" + path.string() +
                              "'; run train-pool first");
        m.model = nn::load_model(path);
        const nn::CnnConfig want = cfg.cnn_config(pipeline::sensor_channels(m.sensors));
        if (!(m.model.config == want))
            throw ConfigError("'" + path.string() +
                              "' was trained with a different model configuration");
        pool.members.push_back(std::move(m));
    }
    return pool;
}

void cmd_generate(const RunConfig& cfg, const fs::path& out) {
    const pipeline::SeedPlan plan = pipeline::default_seed_plan(cfg.seed);
    const data::FrfDataset ds =
        data::generate_dataset(cfg.synthesis_config(plan.synth), cfg.grid());
    auto [train, val] = data::split_dataset(ds, cfg.train_frac, plan.split);
    const data::NormStats stats = data::normalize_fit(train);

    fs::create_directories(out);
    data::save_dataset(out / "dataset.csv", ds);
    data::save_dataset(out / "train.csv", train);
    data::save_dataset(out / "val.csv", val);
    data::save_norm_stats(out / "norm_stats.csv", stats);
    std::cout << "wrote " << ds.samples.size() << " samples ("
              << ds.count(data::Label::Healthy) << " healthy / "
              << ds.count(data::Label::Defect) << " defect), split "
              << train.samples.size() << "/" << val.samples.size() << ", to "
              << out.string() << "\n";
}

void cmd_train_pool(const RunConfig& cfg, const fs::path& out) {
    const PreparedData p = prepare(cfg);
    const pipeline::Pool pool =
        pipeline::build_pool(p.train, cfg.n_sections, cfg, p.plan.pool);
    save_pool(pool, out);
    std::cout << "trained " << pool.members.size() << " pool members; models in "
              << (out / "models").string() << "\n";
}

void cmd_rank(const RunConfig& cfg, const fs::path& out) {
    const PreparedData p = prepare(cfg);
    pipeline::Pool pool = load_pool(cfg, p.train, out);
    pipeline::PoolEvaluation eval = pipeline::evaluate_pool(pool, p.val, cfg);
    const std::vector<int> order = pipeline::rank_pool(pool, eval);

    std::vector<pipeline::MemberSummary> summaries;
    summaries.reserve(pool.members.size());
    for (const pipeline::PoolMember& m : pool.members)
        summaries.push_back(pipeline::summarize(m, p.train.grid));

    fs::create_directories(out);
    report::write_text_file(out, "pool_table.csv", report::render_pool_table(summaries));
    report::write_text_file(out, "rank_table.csv", report::render_rank_table(summaries));
    const pipeline::PoolMember& top = pool.members[static_cast<std::size_t>(order[0])];
    std::cout << "ranked " << pool.members.size() << " members; best: member "
              << top.index << " (" << pipeline::sensor_set_name(top.sensors)
              << ", section " << top.section.index << ", "
              << pct(top.val_accuracy) << ")\n";
}

void cmd_fuse(const RunConfig& cfg, const fs::path& out) {
    const PreparedData p = prepare(cfg);
    pipeline::Pool pool = load_pool(cfg, p.train, out);
    pipeline::PoolEvaluation eval = pipeline::evaluate_pool(pool, p.val, cfg);
    const std::vector<int> order = pipeline::rank_pool(pool, eval);
    const pipeline::GrowthCurve gc = pipeline::grow_pool(eval, order, cfg.clamp_eps);

    const std::vector<int> bem(order.begin(), order.begin() + gc.bem_k);
    std::vector<pipeline::SampleFusionDiag> diags;
    pipeline::fuse_decide_diag(eval.probs, bem,
                               static_cast<int>(eval.truth.values.size()),
                               cfg.clamp_eps, diags);

    fs::create_directories(out);
    report::write_text_file(out, "growth_curve.csv",
                            report::render_growth_curve(order, gc.accuracies));
    report::write_text_file(out, "fusion_diagnostics.csv",
                            report::render_fusion_diagnostics(bem, diags));
    std::cout << "fused ensemble: k=" << gc.bem_k << " of " << order.size()
              << " members, accuracy " << pct(gc.bem_accuracy) << "\n";
}

void cmd_run(const RunConfig& cfg, const fs::path& out) {
    const pipeline::ExperimentReport rep = pipeline::run_experiment(cfg);
    const std::vector<report::ManifestEntry> manifest = report::write_reports(rep, out);
    report::write_manifest(manifest, out);
    report::write_timing(rep.wall_seconds, out);
    std::cout << "BIM: member " << rep.bim_index << " at " << pct(rep.bim_accuracy)
              << "; BEM: k=" << rep.bem_k << " at " << pct(rep.bem_accuracy)
              << "; baseline BEM " << pct(rep.baseline_bem_accuracy) << "; wrote "
              << manifest.size() << " files to " << out.string() << "\n";
}

void cmd_baseline_full(const RunConfig& cfg, const fs::path& out) {
    const PreparedData p = prepare(cfg);
    const pipeline::BaselineResult base =
        pipeline::full_frf_baseline(p.train, p.val, cfg, p.plan.baseline);
    fs::create_directories(out);
    report::write_text_file(out, "baseline.csv",
                            report::render_baseline(base.summaries, base.bem_accuracy));
    std::cout << "full-signal baseline: BEM k=" << base.bem_k << " at "
              << pct(base.bem_accuracy) << "\n";
}

void cmd_repeat(const RunConfig& cfg, const fs::path& out) {
    const pipeline::RepetitionSummary sum =
        pipeline::repetition_study(cfg, cfg.n_reps);
    report::write_repetitions(sum, out);
    std::cout << cfg.n_reps << " repetitions: mean BIM " << pct(sum.mean_bim)
              << ", mean BEM " << pct(sum.mean_bem) << "\n";
}

void cmd_report(const fs::path& out) {
    const fs::path file = out / "report.json";
    if (!fs::exists(file))
        throw ConfigError("missing '" + file.string() + "'; run the run subcommand first");
    const pipeline::ExperimentReport rep = report::load_report(file);
    const std::vector<report::ManifestEntry> manifest = report::write_reports(rep, out);
    report::write_manifest(manifest, out);
    std::cout << "re-rendered " << manifest.size() << " files from "
              << file.string() << "\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-sensor FRF condition monitoring: sectioned CNN pool, "
                 "mutual-information ranking, divergence-weighted evidence fusion"};
    app.require_subcommand(1);

    std::optional<std::string> config_path, out_flag;
    std::optional<std::uint64_t> seed_flag;
    std::optional<int> jobs_flag, reps_flag, sections_flag;

    const auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "config file (flat key = value)");
        cmd->add_option("--seed", seed_flag, "master seed for all randomness");
        cmd->add_option("--out", out_flag, "output directory (default: out)");
        cmd->add_option("--jobs", jobs_flag, "max worker threads");
        cmd->add_option("--reps", reps_flag, "repetitions for the repeat subcommand");
        cmd->add_option("--sections", sections_flag, "number of frequency sections");
    };
    add_common(&app);
    add_common(app.add_subcommand("generate", "synthesize a dataset and its split"));
    add_common(app.add_subcommand("train-pool", "train one model per section and sensor set"));
    add_common(app.add_subcommand("rank", "evaluate and rank a trained pool"));
    add_common(app.add_subcommand("fuse", "grow the ranked ensemble and fuse its evidence"));
    add_common(app.add_subcommand("run", "end-to-end experiment with full reports"));
    add_common(app.add_subcommand("baseline-full", "train the unsectioned baseline models"));
    add_common(app.add_subcommand("repeat", "repeat the experiment across seeds"));
    add_common(app.add_subcommand("report", "re-render report files from report.json"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e); // --help and friends
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        RunConfig cfg = config_path ? load_run_config(*config_path) : RunConfig{};
        if (seed_flag) cfg.seed = *seed_flag;
        if (reps_flag) cfg.n_reps = *reps_flag;
        if (sections_flag) cfg.n_sections = *sections_flag;
        cfg.validate();
        if (jobs_flag) {
            if (*jobs_flag < 1) throw ConfigError("--jobs must be >= 1");
            omp_set_num_threads(*jobs_flag);
        }
        const fs::path out = out_flag ? fs::path(*out_flag) : fs::path("out");

        if (app.got_subcommand("generate")) cmd_generate(cfg, out);
        else if (app.got_subcommand("train-pool")) cmd_train_pool(cfg, out);
        else if (app.got_subcommand("rank")) cmd_rank(cfg, out);
        else if (app.got_subcommand("fuse")) cmd_fuse(cfg, out);
        else if (app.got_subcommand("run")) cmd_run(cfg, out);
        else if (app.got_subcommand("baseline-full")) cmd_baseline_full(cfg, out);
        else if (app.got_subcommand("repeat")) cmd_repeat(cfg, out);
        else if (app.got_subcommand("report")) cmd_report(out);
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
