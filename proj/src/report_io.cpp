#include "frfens/report_io.hpp"

#include <cstdio>
#include <fstream>
#include <map>

#include <json.hpp>

#include "frfens/errors.hpp"
#include "frfens/numio.hpp"

namespace frfens::report {

using pipeline::ExperimentReport;
using pipeline::MemberSummary;
using pipeline::SensorSet;

namespace {

std::string pct(double frac) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", frac * 100.0);
    return buf;
}

SensorSet sensors_from_string(const std::string& s, const std::string& where) {
    if (s == "X1") return SensorSet::X1;
    if (s == "X2") return SensorSet::X2;
    if (s == "X1+X2") return SensorSet::Both;
    throw ParseError(where + ": unknown sensor set '" + s + "'");
}

nlohmann::json summary_to_json(const MemberSummary& m) {
    return {{"index", m.index},
            {"section_index", m.section_index},
            {"bin_start", m.bin_start},
            {"bin_end", m.bin_end},
            {"f_start_khz", m.f_start_khz},
            {"f_end_khz", m.f_end_khz},
            {"sensors", pipeline::sensor_set_name(m.sensors)},
            {"val_accuracy", m.val_accuracy},
            {"mi", m.mi},
            {"rank", m.rank}};
}

MemberSummary summary_from_json(const nlohmann::json& j, const std::string& where) {
    MemberSummary m;
    m.index = j.at("index").get<int>();
    m.section_index = j.at("section_index").get<int>();
    m.bin_start = j.at("bin_start").get<int>();
    m.bin_end = j.at("bin_end").get<int>();
    m.f_start_khz = j.at("f_start_khz").get<double>();
    m.f_end_khz = j.at("f_end_khz").get<double>();
    m.sensors = sensors_from_string(j.at("sensors").get<std::string>(), where);
    m.val_accuracy = j.at("val_accuracy").get<double>();
    m.mi = j.at("mi").get<double>();
    m.rank = j.at("rank").get<int>();
    return m;
}

constexpr const char* kReportFormat = "frfens-report";
constexpr int kReportVersion = 1;

} // namespace

ManifestEntry write_text_file(const std::filesystem::path& dir, const std::string& name,
                              const std::string& content) {
    const std::filesystem::path path = dir / name;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open '" + path.string() + "' for writing");
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw Error("write failure on '" + path.string() + "'");
    return {name, to_hex(fnv1a64(content)), content.size()};
}

std::string render_pool_table(const std::vector<MemberSummary>& pool) {
    // Mirrors the pool accuracy table: one row per sensor set, one column
    // per frequency section, each cell "accuracy% (rank)".
    std::map<int, std::pair<double, double>> section_range;
    for (const MemberSummary& m : pool)
        section_range[m.section_index] = {m.f_start_khz, m.f_end_khz};

    std::string out = "sensors";
    for (const auto& [idx, range] : section_range) {
        char buf[64];
        std::snprintf(buf, sizeof buf, ",%.2f-%.2fkHz", range.first, range.second);
        out += buf;
    }
    out += '\n';

    for (SensorSet ss : {SensorSet::X1, SensorSet::X2, SensorSet::Both}) {
        out += pipeline::sensor_set_name(ss);
        for (const auto& [idx, range] : section_range) {
            const MemberSummary* cell = nullptr;
            for (const MemberSummary& m : pool)
                if (m.section_index == idx && m.sensors == ss) cell = &m;
            out += ',';
            if (cell)
                out += pct(cell->val_accuracy) + " (" + std::to_string(cell->rank) + ")";
        }
        out += '\n';
    }
    return out;
}

std::string render_rank_table(const std::vector<MemberSummary>& pool) {
    std::string out =
        "model_id,section_index,bin_start,bin_end,f_start_khz,f_end_khz,sensors,"
        "val_accuracy,mi,rank\n";
    for (const MemberSummary& m : pool) {
        out += std::to_string(m.index) + ',' + std::to_string(m.section_index) + ',' +
               std::to_string(m.bin_start) + ',' + std::to_string(m.bin_end) + ',' +
               format_double(m.f_start_khz) + ',' + format_double(m.f_end_khz) + ',' +
               pipeline::sensor_set_name(m.sensors) + ',' +
               format_double(m.val_accuracy) + ',' + format_double(m.mi) + ',' +
               std::to_string(m.rank) + '\n';
    }
    return out;
}

std::string render_growth_curve(const std::vector<int>& order,
                                const std::vector<double>& curve) {
    std::string out = "k,member_added,accuracy\n";
    for (std::size_t k = 0; k < curve.size(); ++k)
        out += std::to_string(k + 1) + ',' + std::to_string(order[k]) + ',' +
               format_double(curve[k]) + '\n';
    return out;
}

std::string render_baseline(const std::vector<MemberSummary>& members,
                            double bem_accuracy) {
    std::string out = "sensors,val_accuracy_pct,rank\n";
    for (const MemberSummary& m : members)
        out += std::string(pipeline::sensor_set_name(m.sensors)) + ',' +
               pct(m.val_accuracy) + ',' + std::to_string(m.rank) + '\n';
    out += "BEM," + pct(bem_accuracy) + ",-\n";
    return out;
}

std::string render_fusion_diagnostics(
    const std::vector<int>& members,
    const std::vector<pipeline::SampleFusionDiag>& diags) {
    // One row per (sample, fused member); row j >= 1 carries the conflict of
    // self-combination step j, so the trace aligns with the member list.
    std::string out = "sample,member,abjs,sd,cd,conflict_after_step\n";
    for (const pipeline::SampleFusionDiag& d : diags) {
        for (std::size_t j = 0; j < d.abjs.size(); ++j) {
            out += std::to_string(d.sample) + ',' + std::to_string(members[j]) + ',' +
                   format_double(d.abjs[j]) + ',' + format_double(d.sd[j]) + ',' +
                   format_double(d.cd[j]) + ',';
            if (j >= 1 && j - 1 < d.conflict_trace.size())
                out += format_double(d.conflict_trace[j - 1]);
            out += '\n';
        }
    }
    return out;
}

std::string render_report_json(const ExperimentReport& rep) {
    nlohmann::json j;
    j["format"] = kReportFormat;
    j["version"] = kReportVersion;
    j["seed"] = rep.seed;
    j["config_echo"] = rep.config_echo;
    j["n_train"] = rep.n_train;
    j["n_val"] = rep.n_val;

    j["pool"] = nlohmann::json::array();
    for (const MemberSummary& m : rep.pool) j["pool"].push_back(summary_to_json(m));
    j["ranked_order"] = rep.ranked_order;
    j["accuracy_curve"] = rep.accuracy_curve;
    j["bim"] = {{"index", rep.bim_index}, {"accuracy", rep.bim_accuracy}};
    j["bem"] = {{"k", rep.bem_k},
                {"members", rep.bem_members},
                {"accuracy", rep.bem_accuracy}};

    nlohmann::json base;
    base["members"] = nlohmann::json::array();
    for (const MemberSummary& m : rep.baseline)
        base["members"].push_back(summary_to_json(m));
    base["ranked_order"] = rep.baseline_ranked_order;
    base["curve"] = rep.baseline_curve;
    base["bem_k"] = rep.baseline_bem_k;
    base["bem_accuracy"] = rep.baseline_bem_accuracy;
    j["baseline"] = std::move(base);

    j["val_truth"] = rep.val_truth;
    j["member_val_preds"] = rep.member_val_preds;
    j["bem_val_preds"] = rep.bem_val_preds;

    j["bem_diag"] = nlohmann::json::array();
    for (const pipeline::SampleFusionDiag& d : rep.bem_diag)
        j["bem_diag"].push_back({{"sample", d.sample},
                                 {"abjs", d.abjs},
                                 {"sd", d.sd},
                                 {"cd", d.cd},
                                 {"conflict_trace", d.conflict_trace}});

    j["tie_log"] = rep.tie_log;
    return j.dump() + "\n";
}

ExperimentReport load_report(const std::filesystem::path& file) {
    std::ifstream f(file);
    if (!f) throw Error("cannot open '" + file.string() + "' for reading");
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("'" + file.string() + "' is not a valid report: " + e.what());
    }

    const std::string where = file.string();
    try {
        if (j.at("format").get<std::string>() != kReportFormat)
            throw ParseError(where + ": unrecognized report format");
        if (j.at("version").get<int>() != kReportVersion)
            throw ParseError(where + ": unsupported report version");

        ExperimentReport rep;
        rep.seed = j.at("seed").get<std::uint64_t>();
        rep.config_echo = j.at("config_echo").get<std::string>();
        rep.n_train = j.at("n_train").get<int>();
        rep.n_val = j.at("n_val").get<int>();
        for (const auto& m : j.at("pool")) rep.pool.push_back(summary_from_json(m, where));
        rep.ranked_order = j.at("ranked_order").get<std::vector<int>>();
        rep.accuracy_curve = j.at("accuracy_curve").get<std::vector<double>>();
        rep.bim_index = j.at("bim").at("index").get<int>();
        rep.bim_accuracy = j.at("bim").at("accuracy").get<double>();
        rep.bem_k = j.at("bem").at("k").get<int>();
        rep.bem_members = j.at("bem").at("members").get<std::vector<int>>();
        rep.bem_accuracy = j.at("bem").at("accuracy").get<double>();

        const auto& base = j.at("baseline");
        for (const auto& m : base.at("members"))
            rep.baseline.push_back(summary_from_json(m, where));
        rep.baseline_ranked_order = base.at("ranked_order").get<std::vector<int>>();
        rep.baseline_curve = base.at("curve").get<std::vector<double>>();
        rep.baseline_bem_k = base.at("bem_k").get<int>();
        rep.baseline_bem_accuracy = base.at("bem_accuracy").get<double>();

        rep.val_truth = j.at("val_truth").get<std::vector<int>>();
        rep.member_val_preds =
            j.at("member_val_preds").get<std::vector<std::vector<int>>>();
        rep.bem_val_preds = j.at("bem_val_preds").get<std::vector<int>>();

        for (const auto& d : j.at("bem_diag")) {
            pipeline::SampleFusionDiag s;
            s.sample = d.at("sample").get<int>();
            s.abjs = d.at("abjs").get<std::vector<double>>();
            s.sd = d.at("sd").get<std::vector<double>>();
            s.cd = d.at("cd").get<std::vector<double>>();
            s.conflict_trace = d.at("conflict_trace").get<std::vector<double>>();
            rep.bem_diag.push_back(std::move(s));
        }
        rep.tie_log = j.at("tie_log").get<std::vector<std::string>>();
        return rep;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(where + ": missing report fields: " + e.what());
    }
}

std::vector<ManifestEntry> write_reports(const ExperimentReport& rep,
                                         const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<ManifestEntry> manifest;
    manifest.push_back(write_text_file(dir, "report.json", render_report_json(rep)));
    manifest.push_back(
        write_text_file(dir, "pool_table.csv", render_pool_table(rep.pool)));
    manifest.push_back(
        write_text_file(dir, "rank_table.csv", render_rank_table(rep.pool)));
    manifest.push_back(write_text_file(
        dir, "growth_curve.csv", render_growth_curve(rep.ranked_order, rep.accuracy_curve)));
    manifest.push_back(write_text_file(
        dir, "baseline.csv", render_baseline(rep.baseline, rep.baseline_bem_accuracy)));
    manifest.push_back(write_text_file(
        dir, "fusion_diagnostics.csv",
        render_fusion_diagnostics(rep.bem_members, rep.bem_diag)));
    return manifest;
}

std::vector<ManifestEntry> write_repetitions(const pipeline::RepetitionSummary& sum,
                                             const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::string out = "rep,bim_accuracy,bem_accuracy\n";
    for (std::size_t r = 0; r < sum.bim_acc.size(); ++r)
        out += std::to_string(r) + ',' + format_double(sum.bim_acc[r]) + ',' +
               format_double(sum.bem_acc[r]) + '\n';
    out += "mean," + format_double(sum.mean_bim) + ',' + format_double(sum.mean_bem) +
           '\n';
    return {write_text_file(dir, "repetitions.csv", out)};
}

void write_manifest(const std::vector<ManifestEntry>& entries,
                    const std::filesystem::path& dir) {
    std::string out = "name,fnv1a64,bytes\n";
    for (const ManifestEntry& e : entries)
        out += e.name + ',' + e.hash_hex + ',' + std::to_string(e.bytes) + '\n';
    write_text_file(dir, "manifest.txt", out);
}

void write_timing(double seconds, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    char buf[64];
    std::snprintf(buf, sizeof buf, "wall_seconds=%.3f\n", seconds);
    write_text_file(dir, "timing.txt", buf);
}

} // namespace frfens::report
