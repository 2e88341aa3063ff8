#include "frfens/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <omp.h>

#include "frfens/errors.hpp"
#include "frfens/rng.hpp"

namespace frfens::pipeline {

const char* sensor_set_name(SensorSet s) {
    switch (s) {
        case SensorSet::X1: return "X1";
        case SensorSet::X2: return "X2";
        case SensorSet::Both: return "X1+X2";
    }
    return "?";
}

int sensor_channels(SensorSet s) { return s == SensorSet::Both ? 2 : 1; }

nn::NnDataset member_view(const data::FrfDataset& ds, const data::SectionSpec& section,
                          SensorSet sensors, int input_length) {
    if (section.bin_start < 0 || section.bin_end > ds.grid.n_bins ||
        section.length() < 1)
        throw ShapeError("member view: section outside the grid");

    const int channels = sensor_channels(sensors);
    const int n = static_cast<int>(ds.samples.size());
    nn::NnDataset view;
    view.in_channels = channels;
    view.input_length = input_length;
    view.x.resize(static_cast<std::size_t>(n) * channels * input_length);
    view.y.resize(static_cast<std::size_t>(n));

    for (int i = 0; i < n; ++i) {
        const data::FrfSample& s = ds.samples[static_cast<std::size_t>(i)];
        view.y[static_cast<std::size_t>(i)] = static_cast<int>(s.label);
        for (int ch = 0; ch < channels; ++ch) {
            const int sensor = (sensors == SensorSet::X2) ? 1 : ch;
            const auto row = s.sensor(sensor);
            const auto slice = row.subspan(static_cast<std::size_t>(section.bin_start),
                                           static_cast<std::size_t>(section.length()));
            const std::vector<double> res = data::resample_linear(slice, input_length);
            std::copy(res.begin(), res.end(),
                      view.x.begin() +
                          (static_cast<std::size_t>(i) * channels + ch) * input_length);
        }
    }
    return view;
}

namespace {

struct MemberSpec {
    data::SectionSpec section;
    SensorSet sensors;
};

std::vector<PoolMember> train_members(const data::FrfDataset& train,
                                      const std::vector<MemberSpec>& specs,
                                      const RunConfig& cfg, std::uint64_t base_seed,
                                      const char* what) {
    const int n = static_cast<int>(specs.size());
    std::vector<PoolMember> members(static_cast<std::size_t>(n));
    std::vector<std::string> errors(static_cast<std::size_t>(n));

#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) {
        PoolMember& m = members[static_cast<std::size_t>(i)];
        const MemberSpec& spec = specs[static_cast<std::size_t>(i)];
        try {
            m.index = i;
            m.section = spec.section;
            m.sensors = spec.sensors;
            const std::uint64_t member_seed = base_seed + static_cast<std::uint64_t>(i);
            const nn::NnDataset view =
                member_view(train, spec.section, spec.sensors, cfg.input_length);
            m.model = nn::init_model(cfg.cnn_config(sensor_channels(spec.sensors)),
                                     Rng::derive(member_seed, 0));
            nn::TrainConfig tcfg = cfg.train_config(Rng::derive(member_seed, 1));
            m.train_report = nn::train(m.model, view, tcfg);
        } catch (const std::exception& e) {
            errors[static_cast<std::size_t>(i)] =
                std::string(what) + " member " + std::to_string(i) + " (section " +
                std::to_string(spec.section.index) + ", sensors " +
                sensor_set_name(spec.sensors) + "): " + e.what();
        }
    }
    for (const std::string& e : errors)
        if (!e.empty()) throw Error(e);
    return members;
}

mi::LabelSeq argmax_labels(const std::vector<double>& probs, int n, int nc) {
    mi::LabelSeq seq;
    seq.n_classes = nc;
    seq.values.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double* row = probs.data() + static_cast<std::size_t>(i) * nc;
        int best = 0;
        for (int c = 1; c < nc; ++c)
            if (row[c] > row[best]) best = c;
        seq.values[static_cast<std::size_t>(i)] = best;
    }
    return seq;
}

double label_accuracy(const mi::LabelSeq& pred, const mi::LabelSeq& truth) {
    int hits = 0;
    for (std::size_t i = 0; i < truth.values.size(); ++i)
        hits += pred.values[i] == truth.values[i];
    return static_cast<double>(hits) / static_cast<double>(truth.values.size());
}

const dst::Frame& binary_frame() {
    static const dst::Frame frame{{"H", "D"}};
    return frame;
}

} // namespace

MemberSummary summarize(const PoolMember& m, const data::FrequencyGrid& grid) {
    MemberSummary s;
    s.index = m.index;
    s.section_index = m.section.index;
    s.bin_start = m.section.bin_start;
    s.bin_end = m.section.bin_end;
    s.f_start_khz = grid.frequency(m.section.bin_start);
    s.f_end_khz = grid.frequency(m.section.bin_end - 1);
    s.sensors = m.sensors;
    s.val_accuracy = m.val_accuracy;
    s.mi = m.mi;
    s.rank = m.rank;
    return s;
}

std::vector<int> rank_pool(Pool& pool, PoolEvaluation& eval) {
    std::vector<double> accs(pool.members.size());
    for (std::size_t i = 0; i < pool.members.size(); ++i)
        accs[i] = pool.members[i].val_accuracy;

    mi::RankResult rr = mi::rank_classifiers(eval.preds, eval.truth, accs);
    for (std::size_t i = 0; i < pool.members.size(); ++i)
        pool.members[i].mi = rr.mi[i];
    for (std::size_t k = 0; k < rr.order.size(); ++k)
        pool.members[static_cast<std::size_t>(rr.order[k])].rank =
            static_cast<int>(k) + 1;
    for (std::string& t : rr.tie_log) eval.tie_log.push_back(std::move(t));
    return rr.order;
}

GrowthCurve grow_pool(const PoolEvaluation& eval, const std::vector<int>& order,
                      double clamp_eps) {
    const int n_val = static_cast<int>(eval.truth.values.size());
    auto fuse_prefix = [&](std::span<const int> prefix) {
        return fuse_decide(eval.probs, prefix, n_val, clamp_eps);
    };
    mi::GrowthResult gr = mi::grow_ensemble(order, fuse_prefix, eval.truth);

    GrowthCurve out;
    out.accuracies = std::move(gr.accuracy_curve);
    out.bem_k = gr.best_k;
    out.bem_accuracy = out.accuracies[static_cast<std::size_t>(gr.best_k) - 1];
    return out;
}

Pool build_pool(const data::FrfDataset& train, int n_sections, const RunConfig& cfg,
                std::uint64_t base_seed) {
    Pool pool;
    pool.sections = data::slice_sections(train.grid.n_bins, n_sections);
    std::vector<MemberSpec> specs;
    specs.reserve(static_cast<std::size_t>(n_sections) * 3);
    for (const data::SectionSpec& sec : pool.sections)
        for (SensorSet ss : {SensorSet::X1, SensorSet::X2, SensorSet::Both})
            specs.push_back({sec, ss});
    pool.members = train_members(train, specs, cfg, base_seed, "pool");
    return pool;
}

PoolEvaluation evaluate_pool(Pool& pool, const data::FrfDataset& val,
                             const RunConfig& cfg) {
    if (pool.members.empty()) throw Error("evaluating an empty pool");
    const int n_val = static_cast<int>(val.samples.size());
    const int nc = pool.members.front().model.config.n_classes;

    PoolEvaluation eval;
    eval.truth.n_classes = nc;
    eval.truth.values.resize(static_cast<std::size_t>(n_val));
    for (int i = 0; i < n_val; ++i)
        eval.truth.values[static_cast<std::size_t>(i)] =
            static_cast<int>(val.samples[static_cast<std::size_t>(i)].label);

    eval.probs.resize(pool.members.size());
    eval.preds.resize(pool.members.size());
    for (std::size_t m = 0; m < pool.members.size(); ++m) {
        PoolMember& member = pool.members[m];
        const nn::NnDataset view =
            member_view(val, member.section, member.sensors, cfg.input_length);
        eval.probs[m] = nn::predict(member.model, view);
        eval.preds[m] = argmax_labels(eval.probs[m], n_val, nc);
        member.val_accuracy = label_accuracy(eval.preds[m], eval.truth);
    }
    return eval;
}

int select_bim(const Pool& pool, std::vector<std::string>* tie_log) {
    if (pool.members.empty()) throw Error("selecting from an empty pool");
    int best = 0;
    for (int i = 1; i < static_cast<int>(pool.members.size()); ++i) {
        const PoolMember& a = pool.members[static_cast<std::size_t>(i)];
        const PoolMember& b = pool.members[static_cast<std::size_t>(best)];
        if (a.val_accuracy > b.val_accuracy ||
            (a.val_accuracy == b.val_accuracy && a.mi > b.mi)) {
            best = i;
        } else if (tie_log && a.val_accuracy == b.val_accuracy && a.mi == b.mi) {
            tie_log->push_back("members " + std::to_string(best) + " and " +
                               std::to_string(i) +
                               " tie on accuracy and MI; kept lower index");
        }
    }
    return best;
}

std::vector<int> fuse_decide(const std::vector<std::vector<double>>& member_probs,
                             std::span<const int> members, int n_samples,
                             double clamp_eps) {
    std::vector<SampleFusionDiag> unused;
    return fuse_decide_diag(member_probs, members, n_samples, clamp_eps, unused);
}

std::vector<int> fuse_decide_diag(const std::vector<std::vector<double>>& member_probs,
                                  std::span<const int> members, int n_samples,
                                  double clamp_eps,
                                  std::vector<SampleFusionDiag>& diags) {
    if (members.empty()) throw Error("fusing an empty member set");
    const dst::Frame& frame = binary_frame();
    const int nc = frame.size();
    for (int m : members) {
        if (m < 0 || m >= static_cast<int>(member_probs.size()))
            throw Error("fusion member index out of range");
        if (member_probs[static_cast<std::size_t>(m)].size() !=
            static_cast<std::size_t>(n_samples) * nc)
            throw ShapeError("fusion: member probability matrix has the wrong size");
    }

    std::vector<int> decided(static_cast<std::size_t>(n_samples));
    diags.assign(static_cast<std::size_t>(n_samples), {});
    std::vector<std::string> errors(static_cast<std::size_t>(n_samples));

#pragma omp parallel for schedule(static)
    for (int i = 0; i < n_samples; ++i) {
        try {
            dst::EvidenceSet ev;
            ev.reserve(members.size());
            for (int m : members) {
                const double* row = member_probs[static_cast<std::size_t>(m)].data() +
                                    static_cast<std::size_t>(i) * nc;
                ev.push_back(dst::bba_from_probs(frame, {row, static_cast<std::size_t>(nc)},
                                                 clamp_eps));
            }
            if (ev.size() == 1) {
                decided[static_cast<std::size_t>(i)] = dst::decide(ev[0]).cls;
            } else {
                dst::FusionResult r = dst::improved_fuse(ev);
                decided[static_cast<std::size_t>(i)] = dst::decide(r.fused).cls;
                SampleFusionDiag& d = diags[static_cast<std::size_t>(i)];
                d.sample = i;
                d.abjs = std::move(r.diag.abjs);
                d.sd = std::move(r.diag.sd);
                d.cd = std::move(r.diag.cd);
                d.conflict_trace = std::move(r.diag.conflict_trace);
            }
        } catch (const std::exception& e) {
            errors[static_cast<std::size_t>(i)] =
                "sample " + std::to_string(i) + ": " + e.what();
        }
    }
    for (const std::string& e : errors)
        if (!e.empty()) throw Error("fusion failed on " + e);
    return decided;
}

SeedPlan default_seed_plan(std::uint64_t seed) {
    return {Rng::derive(seed, 1), Rng::derive(seed, 2), Rng::derive(seed, 3),
            Rng::derive(seed, 4)};
}

BaselineResult full_frf_baseline(const data::FrfDataset& train,
                                 const data::FrfDataset& val, const RunConfig& cfg,
                                 std::uint64_t base_seed) {
    const data::SectionSpec full{kFullSignal, 0, train.grid.n_bins};
    std::vector<MemberSpec> specs{{full, SensorSet::X1},
                                  {full, SensorSet::X2},
                                  {full, SensorSet::Both}};

    BaselineResult r;
    r.members = train_members(train, specs, cfg, base_seed, "baseline");

    Pool tmp;
    tmp.members = std::move(r.members);
    PoolEvaluation eval = evaluate_pool(tmp, val, cfg);
    r.ranked_order = rank_pool(tmp, eval);
    GrowthCurve gc = grow_pool(eval, r.ranked_order, cfg.clamp_eps);
    r.members = std::move(tmp.members);

    r.summaries.reserve(r.members.size());
    for (const PoolMember& m : r.members) r.summaries.push_back(summarize(m, train.grid));
    r.curve = std::move(gc.accuracies);
    r.bem_k = gc.bem_k;
    r.bem_accuracy = gc.bem_accuracy;
    r.tie_log = std::move(eval.tie_log);
    return r;
}

ExperimentReport run_experiment(const RunConfig& cfg) {
    return run_experiment(cfg, default_seed_plan(cfg.seed));
}

ExperimentReport run_experiment(const RunConfig& cfg, const SeedPlan& plan) {
    const auto t0 = std::chrono::steady_clock::now();
    cfg.validate();

    ExperimentReport rep;
    rep.seed = cfg.seed;
    rep.config_echo = cfg.echo();

    data::FrfDataset train, val;
    try {
        const data::FrfDataset ds =
            data::generate_dataset(cfg.synthesis_config(plan.synth), cfg.grid());
        std::tie(train, val) = data::split_dataset(ds, cfg.train_frac, plan.split);
        data::normalize_fit_apply(train, {&val});
    } catch (const std::exception& e) {
        throw Error(std::string("data stage: ") + e.what());
    }
    rep.n_train = static_cast<int>(train.samples.size());
    rep.n_val = static_cast<int>(val.samples.size());

    Pool pool = build_pool(train, cfg.n_sections, cfg, plan.pool);
    PoolEvaluation eval = evaluate_pool(pool, val, cfg);
    GrowthCurve gc;
    try {
        rep.ranked_order = rank_pool(pool, eval);
        gc = grow_pool(eval, rep.ranked_order, cfg.clamp_eps);
    } catch (const std::exception& e) {
        throw Error(std::string("ranking stage: ") + e.what());
    }

    rep.pool.reserve(pool.members.size());
    for (const PoolMember& m : pool.members) rep.pool.push_back(summarize(m, train.grid));
    rep.accuracy_curve = gc.accuracies;
    rep.bem_k = gc.bem_k;
    rep.bem_members.assign(rep.ranked_order.begin(),
                           rep.ranked_order.begin() + gc.bem_k);
    rep.bem_accuracy = gc.bem_accuracy;

    rep.bim_index = select_bim(pool, &eval.tie_log);
    rep.bim_accuracy = pool.members[static_cast<std::size_t>(rep.bim_index)].val_accuracy;

    try {
        rep.bem_val_preds = fuse_decide_diag(eval.probs, rep.bem_members, rep.n_val,
                                             cfg.clamp_eps, rep.bem_diag);
    } catch (const std::exception& e) {
        throw Error(std::string("fusion stage: ") + e.what());
    }

    rep.val_truth = eval.truth.values;
    rep.member_val_preds.reserve(eval.preds.size());
    for (const mi::LabelSeq& p : eval.preds) rep.member_val_preds.push_back(p.values);
    rep.tie_log = std::move(eval.tie_log);

    BaselineResult base = full_frf_baseline(train, val, cfg, plan.baseline);
    rep.baseline = std::move(base.summaries);
    rep.baseline_ranked_order = std::move(base.ranked_order);
    rep.baseline_curve = std::move(base.curve);
    rep.baseline_bem_k = base.bem_k;
    rep.baseline_bem_accuracy = base.bem_accuracy;
    for (std::string& t : base.tie_log)
        rep.tie_log.push_back("baseline: " + std::move(t));

    rep.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

RepetitionSummary repetition_study(const RunConfig& cfg, int n_reps) {
    if (n_reps < 1) throw ConfigError("repetition study needs n_reps >= 1");
    const SeedPlan base_plan = default_seed_plan(cfg.seed);

    RepetitionSummary sum;
    sum.bim_acc.reserve(static_cast<std::size_t>(n_reps));
    sum.bem_acc.reserve(static_cast<std::size_t>(n_reps));
    for (int r = 0; r < n_reps; ++r) {
        RunConfig rep_cfg = cfg;
        rep_cfg.seed = cfg.seed + static_cast<std::uint64_t>(r);
        SeedPlan plan = default_seed_plan(rep_cfg.seed);
        if (!cfg.resplit_per_rep) {
            plan.synth = base_plan.synth;
            plan.split = base_plan.split;
        }
        try {
            const ExperimentReport rep = run_experiment(rep_cfg, plan);
            sum.bim_acc.push_back(rep.bim_accuracy);
            sum.bem_acc.push_back(rep.bem_accuracy);
        } catch (const std::exception& e) {
            throw Error("repetition " + std::to_string(r) + ": " + e.what());
        }
    }

    double sb = 0.0, se = 0.0;
    for (int r = 0; r < n_reps; ++r) {
        sb += sum.bim_acc[static_cast<std::size_t>(r)];
        se += sum.bem_acc[static_cast<std::size_t>(r)];
    }
    sum.mean_bim = sb / static_cast<double>(n_reps);
    sum.mean_bem = se / static_cast<double>(n_reps);
    return sum;
}

} // namespace frfens::pipeline
