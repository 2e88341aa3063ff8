#include "frfens/run_config.hpp"

#include <fstream>
#include <sstream>

#include "frfens/errors.hpp"
#include "frfens/numio.hpp"

namespace frfens {

data::ModalModel default_modal_model(double noise_level) {
    data::ModalModel m;
    m.modes = {
        {5.1, 0.012, {1.00, 0.55}},  {8.9, 0.015, {0.78, 0.95}},
        {13.7, 0.011, {0.62, 0.80}}, {18.4, 0.018, {0.90, 0.42}},
        {23.6, 0.014, {0.50, 0.88}}, {28.9, 0.016, {0.72, 0.60}},
        {34.2, 0.013, {0.58, 0.70}},
    };
    m.noise_level = noise_level;
    return m;
}

void RunConfig::validate() const {
    grid().validate();
    synthesis_config(0).validate();
    if (!(train_frac > 0.0 && train_frac < 1.0))
        throw ConfigError("config: train_frac must lie in (0,1)");
    if (n_sections < 1) throw ConfigError("config: n_sections must be >= 1");
    if (n_sections > n_bins)
        throw ConfigError("config: n_sections exceeds the bin count");
    cnn_config(1).validate();
    cnn_config(2).validate();
    train_config(0).validate();
    if (!(clamp_eps > 0.0 && clamp_eps < 0.5))
        throw ConfigError("config: clamp_eps must lie in (0, 0.5)");
    if (!(divergence_floor > 0.0))
        throw ConfigError("config: divergence_floor must be > 0");
    if (n_reps < 1) throw ConfigError("config: n_reps must be >= 1");
}

data::FrequencyGrid RunConfig::grid() const { return {f_min_khz, f_max_khz, n_bins}; }

data::SynthesisConfig RunConfig::synthesis_config(std::uint64_t synth_seed) const {
    data::SynthesisConfig s;
    s.n_healthy = n_healthy;
    s.n_defect = n_defect;
    s.base_model = default_modal_model(noise_level);
    s.defect_shift_pct = defect_shift_pct;
    s.per_sample_jitter_pct = jitter_pct;
    s.noise_level = noise_level;
    s.defect_modes = defect_modes;
    s.seed = synth_seed;
    return s;
}

nn::CnnConfig RunConfig::cnn_config(int in_channels) const {
    nn::CnnConfig c;
    c.in_channels = in_channels;
    c.input_length = input_length;
    return c;
}

nn::TrainConfig RunConfig::train_config(std::uint64_t member_seed) const {
    nn::TrainConfig t;
    t.batch_size = batch_size;
    t.max_epochs = max_epochs;
    t.lr0 = lr0;
    t.lr_drop_factor = lr_drop_factor;
    t.lr_drop_period = lr_drop_period;
    t.schedule = lr_schedule;
    t.seed = member_seed;
    return t;
}

namespace {

std::string join_ints(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(v[i]);
    }
    return s;
}

std::vector<int> parse_int_list(std::string_view s, const std::string& where) {
    std::vector<int> out;
    for (std::string_view part : split_view(s, ','))
        out.push_back(static_cast<int>(parse_int(trim_view(part), where)));
    return out;
}

bool parse_bool(std::string_view s, const std::string& where) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError(where + ": expected true or false, got '" + std::string(s) + "'");
}

} // namespace

std::string RunConfig::echo() const {
    std::ostringstream o;
    o << "n_healthy = " << n_healthy << '\n'
      << "n_defect = " << n_defect << '\n'
      << "f_min_khz = " << format_double(f_min_khz) << '\n'
      << "f_max_khz = " << format_double(f_max_khz) << '\n'
      << "n_bins = " << n_bins << '\n'
      << "defect_shift_pct = " << format_double(defect_shift_pct) << '\n'
      << "jitter_pct = " << format_double(jitter_pct) << '\n'
      << "noise_level = " << format_double(noise_level) << '\n'
      << "defect_modes = " << join_ints(defect_modes) << '\n'
      << "train_frac = " << format_double(train_frac) << '\n'
      << "n_sections = " << n_sections << '\n'
      << "input_length = " << input_length << '\n'
      << "batch_size = " << batch_size << '\n'
      << "max_epochs = " << max_epochs << '\n'
      << "lr0 = " << format_double(lr0) << '\n'
      << "lr_drop_factor = " << format_double(lr_drop_factor) << '\n'
      << "lr_drop_period = " << lr_drop_period << '\n'
      << "lr_schedule = " << (lr_schedule == nn::LrSchedule::Drop ? "drop" : "inverse")
      << '\n'
      << "clamp_eps = " << format_double(clamp_eps) << '\n'
      << "divergence_floor = " << format_double(divergence_floor) << '\n'
      << "seed = " << seed << '\n'
      << "n_reps = " << n_reps << '\n'
      << "resplit_per_rep = " << (resplit_per_rep ? "true" : "false") << '\n';
    return o.str();
}

void apply_config_line(RunConfig& cfg, std::string_view key, std::string_view value,
                       const std::string& where) {
    try {
        if (key == "n_healthy") cfg.n_healthy = static_cast<int>(parse_int(value, where));
        else if (key == "n_defect") cfg.n_defect = static_cast<int>(parse_int(value, where));
        else if (key == "f_min_khz") cfg.f_min_khz = parse_double(value, where);
        else if (key == "f_max_khz") cfg.f_max_khz = parse_double(value, where);
        else if (key == "n_bins") cfg.n_bins = static_cast<int>(parse_int(value, where));
        else if (key == "defect_shift_pct") cfg.defect_shift_pct = parse_double(value, where);
        else if (key == "jitter_pct") cfg.jitter_pct = parse_double(value, where);
        else if (key == "noise_level") cfg.noise_level = parse_double(value, where);
        else if (key == "defect_modes") cfg.defect_modes = parse_int_list(value, where);
        else if (key == "train_frac") cfg.train_frac = parse_double(value, where);
        else if (key == "n_sections") cfg.n_sections = static_cast<int>(parse_int(value, where));
        else if (key == "input_length") cfg.input_length = static_cast<int>(parse_int(value, where));
        else if (key == "batch_size") cfg.batch_size = static_cast<int>(parse_int(value, where));
        else if (key == "max_epochs") cfg.max_epochs = static_cast<int>(parse_int(value, where));
        else if (key == "lr0") cfg.lr0 = parse_double(value, where);
        else if (key == "lr_drop_factor") cfg.lr_drop_factor = parse_double(value, where);
        else if (key == "lr_drop_period") cfg.lr_drop_period = static_cast<int>(parse_int(value, where));
        else if (key == "lr_schedule") {
            if (value == "drop") cfg.lr_schedule = nn::LrSchedule::Drop;
            else if (value == "inverse") cfg.lr_schedule = nn::LrSchedule::Inverse;
            else throw ConfigError(where + ": lr_schedule must be drop or inverse");
        }
        else if (key == "clamp_eps") cfg.clamp_eps = parse_double(value, where);
        else if (key == "divergence_floor") cfg.divergence_floor = parse_double(value, where);
        else if (key == "seed") cfg.seed = parse_u64(value, where);
        else if (key == "n_reps") cfg.n_reps = static_cast<int>(parse_int(value, where));
        else if (key == "resplit_per_rep") cfg.resplit_per_rep = parse_bool(value, where);
        else throw ConfigError(where + ": unknown key '" + std::string(key) + "'");
    } catch (const ParseError& e) {
        throw ConfigError(e.what());
    }
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file '" + path.string() + "'");
    RunConfig cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        std::string_view lv = trim_view(line);
        if (lv.empty() || lv.front() == '#') continue;
        const std::size_t eq = lv.find('=');
        const std::string where = path.string() + " line " + std::to_string(line_no);
        if (eq == std::string_view::npos)
            throw ConfigError(where + ": expected 'key = value'");
        const std::string_view key = trim_view(lv.substr(0, eq));
        const std::string_view value = trim_view(lv.substr(eq + 1));
        if (key.empty()) throw ConfigError(where + ": empty key");
        apply_config_line(cfg, key, value, where);
    }
    return cfg;
}

} // namespace frfens
