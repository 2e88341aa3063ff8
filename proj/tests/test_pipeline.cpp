#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include "frfens/pipeline.hpp"
#include "frfens/report_io.hpp"

using namespace frfens;
using namespace frfens::pipeline;

namespace {

namespace fs = std::filesystem;

RunConfig micro_cfg() {
    RunConfig c;
    c.n_healthy = 12;
    c.n_defect = 9;
    c.n_bins = 96;
    c.defect_shift_pct = 6.0;
    c.jitter_pct = 0.3;
    c.noise_level = 0.01;
    c.n_sections = 2;
    c.input_length = 16;
    c.batch_size = 8;
    c.max_epochs = 4;
    c.n_reps = 1;
    c.seed = 11;
    return c;
}

struct MicroData {
    data::FrfDataset train, val;
};

MicroData micro_data(const RunConfig& cfg, const SeedPlan& plan) {
    MicroData d;
    const data::FrfDataset ds =
        data::generate_dataset(cfg.synthesis_config(plan.synth), cfg.grid());
    std::tie(d.train, d.val) = data::split_dataset(ds, cfg.train_frac, plan.split);
    data::normalize_fit_apply(d.train, {&d.val});
    return d;
}

// Two hand-built samples with distinct per-sensor ramps.
data::FrfDataset toy_frf() {
    data::FrfDataset ds;
    ds.grid = {3.0, 38.0, 8};
    for (int i = 0; i < 2; ++i) {
        data::FrfSample s;
        s.id = i;
        s.label = i == 0 ? data::Label::Healthy : data::Label::Defect;
        s.n_bins = 8;
        for (int sensor = 0; sensor < 2; ++sensor)
            for (int b = 0; b < 8; ++b)
                s.response.push_back(20.0 * i + 10.0 * sensor + b);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

double accuracy_of(const std::vector<int>& preds, const std::vector<int>& truth) {
    int hits = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (preds[i] == truth[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

} // namespace

TEST_CASE("member views slice sensors and sections") {
    const data::FrfDataset ds = toy_frf();
    const data::SectionSpec sec{0, 2, 6};

    SUBCASE("single sensors") {
        const nn::NnDataset v1 = member_view(ds, sec, SensorSet::X1, 4);
        CHECK(v1.in_channels == 1);
        CHECK(v1.y == std::vector<int>{0, 1});
        CHECK(v1.x == std::vector<double>{2, 3, 4, 5, 22, 23, 24, 25});
        const nn::NnDataset v2 = member_view(ds, sec, SensorSet::X2, 4);
        CHECK(v2.x == std::vector<double>{12, 13, 14, 15, 32, 33, 34, 35});
    }
    SUBCASE("both sensors stack channels in sensor order") {
        const nn::NnDataset v = member_view(ds, sec, SensorSet::Both, 4);
        CHECK(v.in_channels == 2);
        CHECK(v.x == std::vector<double>{2, 3, 4, 5, 12, 13, 14, 15,
                                         22, 23, 24, 25, 32, 33, 34, 35});
    }
    SUBCASE("sections are resampled to the model input length") {
        const nn::NnDataset v = member_view(ds, sec, SensorSet::X1, 3);
        CHECK(v.x == std::vector<double>{2, 3.5, 5, 22, 23.5, 25});
    }
    SUBCASE("the full band is a section too") {
        const nn::NnDataset v =
            member_view(ds, data::SectionSpec{kFullSignal, 0, 8}, SensorSet::X1, 8);
        CHECK(v.x[0] == 0.0);
        CHECK(v.x[7] == 7.0);
    }
    SUBCASE("sections outside the grid are rejected") {
        CHECK_THROWS_AS(member_view(ds, data::SectionSpec{0, 4, 12}, SensorSet::X1, 4),
                        ShapeError);
    }
}

TEST_CASE("sensor set naming") {
    CHECK(std::string(sensor_set_name(SensorSet::X1)) == "X1");
    CHECK(std::string(sensor_set_name(SensorSet::X2)) == "X2");
    CHECK(std::string(sensor_set_name(SensorSet::Both)) == "X1+X2");
    CHECK(sensor_channels(SensorSet::X1) == 1);
    CHECK(sensor_channels(SensorSet::X2) == 1);
    CHECK(sensor_channels(SensorSet::Both) == 2);
}

TEST_CASE("pool construction covers every section and sensor set") {
    const RunConfig cfg = micro_cfg();
    const SeedPlan plan = default_seed_plan(cfg.seed);
    const MicroData d = micro_data(cfg, plan);

    SUBCASE("one section trains three members") {
        const Pool pool = build_pool(d.train, 1, cfg, plan.pool);
        REQUIRE(pool.members.size() == 3);
        CHECK(pool.sections.size() == 1);
        for (int i = 0; i < 3; ++i) {
            const PoolMember& m = pool.members[static_cast<std::size_t>(i)];
            CHECK(m.index == i);
            CHECK(m.section.index == 0);
            CHECK(m.sensors == static_cast<SensorSet>(i));
            CHECK(m.train_report.epochs_run == cfg.max_epochs);
        }
        CHECK(pool.members[0].model.config.in_channels == 1);
        CHECK(pool.members[2].model.config.in_channels == 2);
        // Same section, same sensor count, but independent member streams.
        CHECK(pool.members[0].model.init_seed != pool.members[1].model.init_seed);
        CHECK_FALSE(pool.members[0].model.conv1_w.data ==
                    pool.members[1].model.conv1_w.data);
    }
    SUBCASE("two sections train six members indexed 3*section + sensors") {
        const Pool pool = build_pool(d.train, 2, cfg, plan.pool);
        REQUIRE(pool.members.size() == 6);
        for (int i = 0; i < 6; ++i) {
            CHECK(pool.members[static_cast<std::size_t>(i)].section.index == i / 3);
            CHECK(pool.members[static_cast<std::size_t>(i)].sensors ==
                  static_cast<SensorSet>(i % 3));
        }
        CHECK(pool.members[0].section.bin_start == 0);
        CHECK(pool.members[0].section.bin_end == 48);
        CHECK(pool.members[3].section.bin_start == 48);
        CHECK(pool.members[3].section.bin_end == 96);
    }
}

TEST_CASE("pool evaluation, ranking, and growth") {
    const RunConfig cfg = micro_cfg();
    const SeedPlan plan = default_seed_plan(cfg.seed);
    const MicroData d = micro_data(cfg, plan);
    Pool pool = build_pool(d.train, cfg.n_sections, cfg, plan.pool);
    PoolEvaluation eval = evaluate_pool(pool, d.val, cfg);

    const int n_val = static_cast<int>(d.val.samples.size());
    REQUIRE(n_val == 7);
    REQUIRE(eval.probs.size() == 6);
    REQUIRE(eval.preds.size() == 6);
    CHECK(eval.truth.size() == static_cast<std::size_t>(n_val));
    for (int i = 0; i < n_val; ++i)
        CHECK(eval.truth.values[static_cast<std::size_t>(i)] ==
              static_cast<int>(d.val.samples[static_cast<std::size_t>(i)].label));

    for (std::size_t m = 0; m < 6; ++m) {
        REQUIRE(eval.probs[m].size() == static_cast<std::size_t>(n_val) * 2);
        for (int i = 0; i < n_val; ++i) {
            const double p0 = eval.probs[m][static_cast<std::size_t>(i) * 2];
            const double p1 = eval.probs[m][static_cast<std::size_t>(i) * 2 + 1];
            CHECK(std::abs(p0 + p1 - 1.0) < 1e-12);
            const int pred = p1 > p0 ? 1 : 0;
            CHECK(eval.preds[m].values[static_cast<std::size_t>(i)] == pred);
        }
        const PoolMember& mem = pool.members[m];
        CHECK(mem.val_accuracy ==
              accuracy_of(eval.preds[m].values, eval.truth.values));
    }

    const std::vector<int> order = rank_pool(pool, eval);
    std::vector<int> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> iota6(6);
    std::iota(iota6.begin(), iota6.end(), 0);
    CHECK(sorted == iota6);

    std::vector<int> ranks;
    for (const PoolMember& m : pool.members) ranks.push_back(m.rank);
    std::sort(ranks.begin(), ranks.end());
    CHECK(ranks == std::vector<int>{1, 2, 3, 4, 5, 6});
    CHECK(pool.members[static_cast<std::size_t>(order[0])].rank == 1);
    for (int idx : order)
        CHECK(pool.members[static_cast<std::size_t>(order[0])].mi >=
              pool.members[static_cast<std::size_t>(idx)].mi);

    const GrowthCurve gc = grow_pool(eval, order, cfg.clamp_eps);
    REQUIRE(gc.accuracies.size() == 6);
    CHECK(gc.bem_accuracy == *std::max_element(gc.accuracies.begin(), gc.accuracies.end()));
    CHECK(gc.bem_accuracy >= gc.accuracies[0]);
    CHECK(gc.accuracies[static_cast<std::size_t>(gc.bem_k) - 1] == gc.bem_accuracy);
    for (int k = 1; k < gc.bem_k; ++k)
        CHECK(gc.accuracies[static_cast<std::size_t>(k) - 1] < gc.bem_accuracy);
}

TEST_CASE("best individual member selection breaks ties in order") {
    Pool pool;
    auto add = [&](double acc, double mi_val) {
        PoolMember m;
        m.index = static_cast<int>(pool.members.size());
        m.val_accuracy = acc;
        m.mi = mi_val;
        pool.members.push_back(std::move(m));
    };
    add(0.8, 0.5);
    add(0.9, 0.1);
    add(0.9, 0.3); // same accuracy, higher MI -> wins
    add(0.5, 0.9);
    std::vector<std::string> log;
    CHECK(select_bim(pool, &log) == 2);
    CHECK(log.empty());

    add(0.9, 0.3); // exact tie with the current best -> logged, lower index kept
    CHECK(select_bim(pool, &log) == 2);
    REQUIRE(log.size() == 1);
    CHECK(log[0].find("members 2 and 4") != std::string::npos);

    CHECK_THROWS_AS(select_bim(Pool{}), Error);
}

TEST_CASE("per-sample fusion of member probability rows") {
    // Two members, three samples.
    const std::vector<std::vector<double>> probs{
        {0.9, 0.1, 0.2, 0.8, 0.6, 0.4},
        {0.8, 0.2, 0.3, 0.7, 0.1, 0.9},
    };
    SUBCASE("a single member decides directly") {
        const std::vector<int> idx{0};
        CHECK(fuse_decide(probs, idx, 3, 1e-6) == std::vector<int>{0, 1, 0});
        std::vector<SampleFusionDiag> diags;
        CHECK(fuse_decide_diag(probs, idx, 3, 1e-6, diags) == std::vector<int>{0, 1, 0});
        REQUIRE(diags.size() == 3);
        for (const auto& d : diags) {
            CHECK(d.abjs.empty());
            CHECK(d.conflict_trace.empty());
        }
    }
    SUBCASE("agreeing members reinforce the shared argmax") {
        const std::vector<int> idx{0, 1};
        std::vector<SampleFusionDiag> diags;
        const std::vector<int> got = fuse_decide_diag(probs, idx, 3, 1e-6, diags);
        CHECK(got[0] == 0);
        CHECK(got[1] == 1);
        REQUIRE(diags.size() == 3);
        for (int i = 0; i < 3; ++i) {
            CHECK(diags[static_cast<std::size_t>(i)].sample == i);
            CHECK(diags[static_cast<std::size_t>(i)].abjs.size() == 2);
            CHECK(diags[static_cast<std::size_t>(i)].conflict_trace.size() == 1);
        }
    }
    SUBCASE("bad member sets are rejected") {
        std::vector<SampleFusionDiag> diags;
        CHECK_THROWS_AS(fuse_decide(probs, std::vector<int>{}, 3, 1e-6), Error);
        CHECK_THROWS_AS(fuse_decide(probs, std::vector<int>{5}, 3, 1e-6), Error);
        CHECK_THROWS_AS(fuse_decide(probs, std::vector<int>{0}, 4, 1e-6), ShapeError);
    }
}

TEST_CASE("experiments are deterministic and internally consistent") {
    const RunConfig cfg = micro_cfg();
    const ExperimentReport rep = run_experiment(cfg);

    CHECK(rep.seed == cfg.seed);
    CHECK(rep.config_echo.find("n_healthy") != std::string::npos);
    CHECK(rep.n_train == 14);
    CHECK(rep.n_val == 7);
    REQUIRE(rep.pool.size() == 6);
    for (int i = 0; i < 6; ++i)
        CHECK(rep.pool[static_cast<std::size_t>(i)].index == i);
    REQUIRE(rep.ranked_order.size() == 6);
    REQUIRE(rep.accuracy_curve.size() == 6);

    CHECK(rep.bem_accuracy >= rep.accuracy_curve[0]);
    CHECK(rep.bem_accuracy ==
          *std::max_element(rep.accuracy_curve.begin(), rep.accuracy_curve.end()));
    CHECK(rep.accuracy_curve[static_cast<std::size_t>(rep.bem_k) - 1] ==
          rep.bem_accuracy);
    REQUIRE(rep.bem_members.size() == static_cast<std::size_t>(rep.bem_k));
    for (std::size_t i = 0; i < rep.bem_members.size(); ++i)
        CHECK(rep.bem_members[i] == rep.ranked_order[i]);

    CHECK(rep.bim_index >= 0);
    CHECK(rep.bim_index < 6);
    CHECK(rep.bim_accuracy ==
          rep.pool[static_cast<std::size_t>(rep.bim_index)].val_accuracy);

    REQUIRE(rep.val_truth.size() == 7);
    REQUIRE(rep.member_val_preds.size() == 6);
    for (const auto& p : rep.member_val_preds) REQUIRE(p.size() == 7);
    REQUIRE(rep.bem_val_preds.size() == 7);
    CHECK(accuracy_of(rep.bem_val_preds, rep.val_truth) == rep.bem_accuracy);
    for (int m = 0; m < 6; ++m)
        CHECK(accuracy_of(rep.member_val_preds[static_cast<std::size_t>(m)],
                          rep.val_truth) ==
              rep.pool[static_cast<std::size_t>(m)].val_accuracy);

    REQUIRE(rep.baseline.size() == 3);
    CHECK(rep.baseline_curve.size() == 3);
    for (const MemberSummary& b : rep.baseline) {
        CHECK(b.section_index == kFullSignal);
        CHECK(b.bin_start == 0);
        CHECK(b.bin_end == cfg.n_bins);
    }
    CHECK(rep.baseline_bem_accuracy ==
          rep.baseline_curve[static_cast<std::size_t>(rep.baseline_bem_k) - 1]);
    CHECK(rep.wall_seconds > 0.0);

    const ExperimentReport rep2 = run_experiment(cfg);
    CHECK(report::render_report_json(rep) == report::render_report_json(rep2));
}

TEST_CASE("repetition study aggregates per-seed experiments") {
    RunConfig cfg = micro_cfg();
    SUBCASE("a single repetition reproduces the base experiment") {
        const RepetitionSummary sum = repetition_study(cfg, 1);
        REQUIRE(sum.bim_acc.size() == 1);
        REQUIRE(sum.bem_acc.size() == 1);
        const ExperimentReport rep = run_experiment(cfg);
        CHECK(sum.bim_acc[0] == rep.bim_accuracy);
        CHECK(sum.bem_acc[0] == rep.bem_accuracy);
        CHECK(sum.mean_bim == sum.bim_acc[0]);
        CHECK(sum.mean_bem == sum.bem_acc[0]);
    }
    SUBCASE("means average the repetitions") {
        cfg.max_epochs = 2;
        cfg.n_sections = 1;
        const RepetitionSummary sum = repetition_study(cfg, 2);
        REQUIRE(sum.bim_acc.size() == 2);
        CHECK(sum.mean_bim ==
              doctest::Approx((sum.bim_acc[0] + sum.bim_acc[1]) / 2.0).epsilon(1e-15));
        CHECK(sum.mean_bem ==
              doctest::Approx((sum.bem_acc[0] + sum.bem_acc[1]) / 2.0).epsilon(1e-15));
    }
    SUBCASE("shared-split mode still varies member training") {
        cfg.max_epochs = 2;
        cfg.n_sections = 1;
        cfg.resplit_per_rep = false;
        const RepetitionSummary sum = repetition_study(cfg, 2);
        REQUIRE(sum.bim_acc.size() == 2);
    }
    SUBCASE("at least one repetition is required") {
        CHECK_THROWS_AS(repetition_study(cfg, 0), ConfigError);
    }
}

TEST_CASE("reports round-trip losslessly through json") {
    RunConfig cfg = micro_cfg();
    cfg.n_sections = 1;
    cfg.max_epochs = 2;
    const ExperimentReport rep = run_experiment(cfg);
    const std::string rendered = report::render_report_json(rep);

    const fs::path dir = fs::temp_directory_path() / "frfens_pipeline_tests";
    fs::create_directories(dir);
    const fs::path file = dir / "report.json";
    {
        std::ofstream f(file, std::ios::binary);
        f << rendered;
    }
    const ExperimentReport back = report::load_report(file);
    CHECK(report::render_report_json(back) == rendered);
    CHECK(back.seed == rep.seed);
    CHECK(back.bem_k == rep.bem_k);
    CHECK(back.accuracy_curve == rep.accuracy_curve);
    CHECK(back.val_truth == rep.val_truth);
    CHECK(back.wall_seconds == 0.0); // wall time never travels through reports

    const fs::path bad = dir / "bad.json";
    {
        std::ofstream f(bad, std::ios::binary);
        f << "{\"format\":\"something-else\",\"version\":1}";
    }
    CHECK_THROWS_AS(report::load_report(bad), ParseError);
}
