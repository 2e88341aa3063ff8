#include "frfens/frf_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include <omp.h>

#include "frfens/numio.hpp"
#include "frfens/rng.hpp"

namespace frfens::data {

void FrequencyGrid::validate() const {
    if (!(f_min_khz < f_max_khz))
        throw ConfigError("frequency grid: f_min must be < f_max");
    if (n_bins < 2) throw ConfigError("frequency grid: n_bins must be >= 2");
    if (!std::isfinite(f_min_khz) || !std::isfinite(f_max_khz))
        throw ConfigError("frequency grid: bounds must be finite");
}

void FrfDataset::validate(bool require_nonneg) const {
    grid.validate();
    std::vector<int> seen;
    seen.reserve(samples.size());
    for (const auto& s : samples) {
        if (s.n_bins != grid.n_bins)
            throw ShapeError("sample " + std::to_string(s.id) +
                             ": bin count does not match the grid");
        if (s.response.size() != static_cast<std::size_t>(kSensors) * s.n_bins)
            throw ShapeError("sample " + std::to_string(s.id) +
                             ": response must hold exactly 2 sensor rows");
        for (double v : s.response) {
            if (!std::isfinite(v))
                throw NumericError("sample " + std::to_string(s.id) +
                                   ": non-finite response value");
            if (require_nonneg && v < 0.0)
                throw NumericError("sample " + std::to_string(s.id) +
                                   ": negative |FRF| magnitude");
        }
        seen.push_back(s.id);
    }
    std::sort(seen.begin(), seen.end());
    if (std::adjacent_find(seen.begin(), seen.end()) != seen.end())
        throw ShapeError("duplicate sample ids in dataset");
}

int FrfDataset::count(Label l) const {
    int n = 0;
    for (const auto& s : samples)
        if (s.label == l) ++n;
    return n;
}

void ModalModel::validate() const {
    for (const auto& m : modes) {
        if (!(m.damping > 0.0 && m.damping < 1.0))
            throw ConfigError("modal model: damping ratio must lie in (0,1)");
        if (!(m.natural_khz > 0.0) || !std::isfinite(m.natural_khz))
            throw ConfigError("modal model: natural frequency must be positive");
    }
    if (noise_level < 0.0) throw ConfigError("modal model: noise level must be >= 0");
}

void SynthesisConfig::validate() const {
    if (n_healthy < 1 || n_defect < 1)
        throw ConfigError("synthesis: class counts must be >= 1");
    if (defect_shift_pct < 0.0 || per_sample_jitter_pct < 0.0 || noise_level < 0.0)
        throw ConfigError("synthesis: percentages and noise level must be >= 0");
    base_model.validate();
    for (int k : defect_modes)
        if (k < 0 || k >= static_cast<int>(base_model.modes.size()))
            throw ConfigError("synthesis: defect mode index " + std::to_string(k) +
                              " out of range");
}

std::vector<double> synth_frf(const ModalModel& model, const FrequencyGrid& grid,
                              std::uint64_t seed) {
    model.validate();
    grid.validate();
    const int nb = grid.n_bins;
    std::vector<double> out(static_cast<std::size_t>(kSensors) * nb, 0.0);

    // Noise factors are drawn serially in a fixed (sensor, bin) order so the
    // result does not depend on how the bin loop below is scheduled.
    std::vector<double> noise;
    if (model.noise_level > 0.0) {
        Rng rng(seed);
        noise.resize(out.size());
        for (double& z : noise) z = std::exp(model.noise_level * rng.normal());
    }

    constexpr double two_pi = 2.0 * std::numbers::pi;
    const int n_modes = static_cast<int>(model.modes.size());

    for (int s = 0; s < kSensors; ++s) {
        double* row = out.data() + static_cast<std::size_t>(s) * nb;
#pragma omp parallel for schedule(static)
        for (int b = 0; b < nb; ++b) {
            const double w = two_pi * grid.frequency(b);
            double re = 0.0, im = 0.0;
            for (int k = 0; k < n_modes; ++k) {
                const Mode& m = model.modes[k];
                const double wk = two_pi * m.natural_khz;
                const double dr = wk * wk - w * w;
                const double di = 2.0 * m.damping * wk * w;
                const double inv = 1.0 / (dr * dr + di * di);
                const double r = m.residue[static_cast<std::size_t>(s)];
                re += r * dr * inv;
                im -= r * di * inv;
            }
            row[b] = std::sqrt(re * re + im * im);
        }
        if (!noise.empty()) {
            const double* nz = noise.data() + static_cast<std::size_t>(s) * nb;
            for (int b = 0; b < nb; ++b) row[b] *= nz[b];
        }
    }
    return out;
}

namespace {

ModalModel perturbed_model(const SynthesisConfig& cfg, bool defect, Rng& rng) {
    ModalModel m = cfg.base_model;
    if (defect) {
        const double shift = 1.0 - cfg.defect_shift_pct / 100.0;
        for (int k : cfg.defect_modes) m.modes[static_cast<std::size_t>(k)].natural_khz *= shift;
    }
    const double j = cfg.per_sample_jitter_pct / 100.0;
    for (auto& mode : m.modes) {
        mode.natural_khz *= 1.0 + j * rng.uniform(-1.0, 1.0);
        mode.damping = std::clamp(mode.damping * (1.0 + j * rng.uniform(-1.0, 1.0)),
                                  1e-6, 0.999);
        for (double& r : mode.residue) r *= 1.0 + j * rng.uniform(-1.0, 1.0);
    }
    m.noise_level = cfg.noise_level;
    return m;
}

} // namespace

FrfDataset generate_dataset(const SynthesisConfig& cfg, const FrequencyGrid& grid) {
    cfg.validate();
    grid.validate();
    const int n = cfg.n_healthy + cfg.n_defect;
    FrfDataset ds;
    ds.grid = grid;
    ds.samples.resize(static_cast<std::size_t>(n));

    // Each sample owns an independent derived stream, so the loop order (and
    // any parallel schedule) cannot change the output.
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        const bool defect = i >= cfg.n_healthy;
        Rng rng(Rng::derive(cfg.seed, static_cast<std::uint64_t>(i)));
        ModalModel m = perturbed_model(cfg, defect, rng);
        const std::uint64_t synth_seed = rng.next_u64();
        FrfSample& s = ds.samples[static_cast<std::size_t>(i)];
        s.id = i;
        s.label = defect ? Label::Defect : Label::Healthy;
        s.n_bins = grid.n_bins;
        s.response = synth_frf(m, grid, synth_seed);
    }
    return ds;
}

std::pair<FrfDataset, FrfDataset> split_dataset(const FrfDataset& ds, double train_frac,
                                                std::uint64_t seed) {
    if (!(train_frac > 0.0 && train_frac < 1.0))
        throw ConfigError("split: train fraction must lie in (0,1)");

    std::array<std::vector<int>, 2> by_class; // indices into ds.samples
    for (int i = 0; i < static_cast<int>(ds.samples.size()); ++i)
        by_class[static_cast<std::size_t>(ds.samples[static_cast<std::size_t>(i)].label)]
            .push_back(i);
    for (const auto& cls : by_class)
        if (cls.size() < 2)
            throw Error("split: every class needs at least 2 samples to stratify");

    Rng rng(seed);
    std::vector<char> in_train(ds.samples.size(), 0);
    for (auto& cls : by_class) {
        rng.shuffle(cls);
        const int nc = static_cast<int>(cls.size());
        int nt = static_cast<int>(std::lround(train_frac * nc));
        nt = std::clamp(nt, 1, nc - 1); // both sides keep >= 1 per class
        for (int i = 0; i < nt; ++i) in_train[static_cast<std::size_t>(cls[static_cast<std::size_t>(i)])] = 1;
    }

    FrfDataset train, val;
    train.grid = val.grid = ds.grid;
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
        (in_train[i] ? train : val).samples.push_back(ds.samples[i]);
    return {std::move(train), std::move(val)};
}

std::vector<SectionSpec> slice_sections(int n_bins, int n_sections) {
    if (n_sections < 1) throw ConfigError("sections: count must be >= 1");
    if (n_sections > n_bins)
        throw ConfigError("sections: count " + std::to_string(n_sections) +
                          " exceeds bin count " + std::to_string(n_bins));
    const int base = n_bins / n_sections;
    const int rem = n_bins % n_sections;
    std::vector<SectionSpec> out;
    out.reserve(static_cast<std::size_t>(n_sections));
    int start = 0;
    for (int i = 0; i < n_sections; ++i) {
        const int len = base + (i < rem ? 1 : 0);
        out.push_back({i, start, start + len});
        start += len;
    }
    return out;
}

std::vector<SectionSpec> slice_sections(const FrfDataset& ds, int n_sections) {
    return slice_sections(ds.grid.n_bins, n_sections);
}

NormStats normalize_fit(const FrfDataset& train) {
    if (train.samples.empty()) throw Error("normalize: training set is empty");
    const std::size_t cells = static_cast<std::size_t>(kSensors) * train.grid.n_bins;
    NormStats st;
    st.n_bins = train.grid.n_bins;
    st.mean.assign(cells, 0.0);
    st.stddev.assign(cells, 0.0);

    const double inv_n = 1.0 / static_cast<double>(train.samples.size());
    for (const auto& s : train.samples)
        for (std::size_t c = 0; c < cells; ++c) st.mean[c] += s.response[c];
    for (double& m : st.mean) m *= inv_n;

    for (const auto& s : train.samples)
        for (std::size_t c = 0; c < cells; ++c) {
            const double d = s.response[c] - st.mean[c];
            st.stddev[c] += d * d;
        }
    for (double& v : st.stddev) v = std::max(std::sqrt(v * inv_n), NormStats::kStdFloor);
    return st;
}

void normalize_apply(const NormStats& stats, FrfDataset& ds) {
    if (stats.n_bins != ds.grid.n_bins)
        throw ShapeError("normalize: stats were fitted on a different grid");
    const std::size_t cells = stats.mean.size();
    const int n = static_cast<int>(ds.samples.size());
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        auto& r = ds.samples[static_cast<std::size_t>(i)].response;
        for (std::size_t c = 0; c < cells; ++c)
            r[c] = (r[c] - stats.mean[c]) / stats.stddev[c];
    }
}

NormStats normalize_fit_apply(FrfDataset& train, std::vector<FrfDataset*> others) {
    NormStats st = normalize_fit(train);
    normalize_apply(st, train);
    for (FrfDataset* d : others) normalize_apply(st, *d);
    return st;
}

void save_dataset(const std::filesystem::path& path, const FrfDataset& ds) {
    ds.validate();
    std::ofstream f(path);
    if (!f) throw Error("cannot open '" + path.string() + "' for writing");
    f << format_double(ds.grid.f_min_khz) << ',' << format_double(ds.grid.f_max_khz)
      << ',' << ds.grid.n_bins << '\n';
    std::string line;
    for (const auto& s : ds.samples) {
        for (int sensor = 0; sensor < kSensors; ++sensor) {
            line.clear();
            line += std::to_string(s.id);
            line += ',';
            line += label_char(s.label);
            line += ',';
            line += static_cast<char>('1' + sensor);
            for (double v : s.sensor(sensor)) {
                line += ',';
                line += format_double(v);
            }
            line += '\n';
            f << line;
        }
    }
    if (!f) throw Error("write failure on '" + path.string() + "'");
}

namespace {

Label parse_label(std::string_view s, const std::string& where) {
    if (s == "H") return Label::Healthy;
    if (s == "D") return Label::Defect;
    throw ParseError(where + ": label must be H or D, got '" + std::string(s) + "'");
}

} // namespace

FrfDataset load_dataset(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open '" + path.string() + "' for reading");

    std::string line;
    if (!std::getline(f, line))
        throw ParseError("'" + path.string() + "' is empty");
    auto header = split_view(trim_view(line), ',');
    if (header.size() != 3)
        throw ParseError(path.string() + " line 1: header must be f_min,f_max,n_bins");
    FrfDataset ds;
    ds.grid.f_min_khz = parse_double(header[0], path.string() + " line 1");
    ds.grid.f_max_khz = parse_double(header[1], path.string() + " line 1");
    ds.grid.n_bins = static_cast<int>(parse_int(header[2], path.string() + " line 1"));
    ds.grid.validate();

    int line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        std::string_view lv = trim_view(line);
        if (lv.empty()) continue;

        FrfSample sample;
        sample.n_bins = ds.grid.n_bins;
        sample.response.resize(static_cast<std::size_t>(kSensors) * ds.grid.n_bins);

        for (int sensor = 0; sensor < kSensors; ++sensor) {
            if (sensor > 0) {
                if (!std::getline(f, line))
                    throw ParseError(path.string() + " line " + std::to_string(line_no) +
                                     ": sample record truncated (missing sensor 2 row)");
                ++line_no;
                lv = trim_view(line);
            }
            const std::string where = path.string() + " line " + std::to_string(line_no);
            auto fields = split_view(lv, ',');
            if (static_cast<int>(fields.size()) != 3 + ds.grid.n_bins)
                throw ParseError(where + ": expected " + std::to_string(3 + ds.grid.n_bins) +
                                 " fields, got " + std::to_string(fields.size()));
            const int id = static_cast<int>(parse_int(fields[0], where));
            const Label lab = parse_label(fields[1], where);
            const long long sensor_no = parse_int(fields[2], where);
            if (sensor_no != sensor + 1)
                throw ParseError(where + ": expected sensor " + std::to_string(sensor + 1) +
                                 " row of sample " + std::to_string(id) + ", got sensor " +
                                 std::to_string(sensor_no));
            if (sensor == 0) {
                sample.id = id;
                sample.label = lab;
            } else if (id != sample.id || lab != sample.label) {
                throw ParseError(where + ": sensor rows of sample " +
                                 std::to_string(sample.id) + " disagree on id or label");
            }
            double* row = sample.response.data() +
                          static_cast<std::size_t>(sensor) * ds.grid.n_bins;
            for (int b = 0; b < ds.grid.n_bins; ++b)
                row[b] = parse_double(fields[static_cast<std::size_t>(b) + 3], where);
        }
        ds.samples.push_back(std::move(sample));
    }
    if (ds.samples.empty())
        throw ParseError("'" + path.string() + "' holds a header but no samples");
    ds.validate();
    return ds;
}

void save_norm_stats(const std::filesystem::path& path, const NormStats& stats) {
    std::ofstream f(path);
    if (!f) throw Error("cannot open '" + path.string() + "' for writing");
    f << "bin,mean,std\n";
    // Flattened cell index: sensor-major, bin = s*n_bins + b.
    for (std::size_t c = 0; c < stats.mean.size(); ++c)
        f << c << ',' << format_double(stats.mean[c]) << ','
          << format_double(stats.stddev[c]) << '\n';
    if (!f) throw Error("write failure on '" + path.string() + "'");
}

std::vector<double> resample_linear(std::span<const double> src, int out_len) {
    if (src.empty()) throw ShapeError("resample: empty input");
    if (out_len < 1) throw ShapeError("resample: output length must be >= 1");
    const int n = static_cast<int>(src.size());
    std::vector<double> out(static_cast<std::size_t>(out_len));
    if (n == static_cast<int>(out_len)) {
        std::copy(src.begin(), src.end(), out.begin());
        return out;
    }
    if (n == 1 || out_len == 1) {
        std::fill(out.begin(), out.end(), src[0]);
        return out;
    }
    const double scale = static_cast<double>(n - 1) / static_cast<double>(out_len - 1);
    for (int i = 0; i < out_len; ++i) {
        const double pos = scale * static_cast<double>(i);
        int lo = static_cast<int>(pos);
        if (lo >= n - 1) lo = n - 2;
        const double frac = pos - static_cast<double>(lo);
        out[static_cast<std::size_t>(i)] =
            src[static_cast<std::size_t>(lo)] +
            frac * (src[static_cast<std::size_t>(lo) + 1] - src[static_cast<std::size_t>(lo)]);
    }
    return out;
}

} // namespace frfens::data
