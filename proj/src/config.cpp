#include "mapnet/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "mapnet/pose_io.hpp"

namespace mapnet {

namespace {

std::string trim_ws(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

double parse_double(const std::string& s) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw BadConfig("not a number: " + s);
    }
}

long long parse_int(const std::string& s) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw BadConfig("not an integer: " + s);
    }
}

bool parse_bool(const std::string& s) {
    if (s == "true") return true;
    if (s == "false") return false;
    throw BadConfig("not a bool: " + s);
}

struct Field {
    std::string key;  // "section.name"
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&)> set;
};

std::string join_doubles(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ", ";
        out += format_double(v[i]);
    }
    return out;
}

std::string join_strings(const std::vector<std::string>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ", ";
        out += v[i];
    }
    return out;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim_ws(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

#define DBL_FIELD(key, expr)                                                    \
    {key, [](const ExperimentConfig& c) { return format_double(c.expr); },      \
     [](ExperimentConfig& c, const std::string& v) { c.expr = parse_double(v); }}
#define INT_FIELD(key, expr)                                                    \
    {key, [](const ExperimentConfig& c) { return std::to_string(c.expr); },     \
     [](ExperimentConfig& c, const std::string& v) {                            \
         c.expr = static_cast<int>(parse_int(v));                               \
     }}
#define U64_FIELD(key, expr)                                                    \
    {key, [](const ExperimentConfig& c) { return std::to_string(c.expr); },     \
     [](ExperimentConfig& c, const std::string& v) {                            \
         c.expr = static_cast<std::uint64_t>(parse_int(v));                     \
     }}
#define BOOL_FIELD(key, expr)                                                   \
    {key, [](const ExperimentConfig& c) { return c.expr ? "true" : "false"; },  \
     [](ExperimentConfig& c, const std::string& v) { c.expr = parse_bool(v); }}

const std::vector<Field>& fields() {
    static const std::vector<Field> kFields = {
        DBL_FIELD("data.window_s", data.window.window_s),
        DBL_FIELD("data.hop_s", data.window.hop_s),
        {"data.taus",
         [](const ExperimentConfig& c) { return join_doubles(c.data.taus); },
         [](ExperimentConfig& c, const std::string& v) {
             c.data.taus.clear();
             for (const auto& item : split_list(v)) c.data.taus.push_back(parse_double(item));
         }},
        INT_FIELD("data.synth_trials", data.synth_trials),
        DBL_FIELD("data.synth_duration_s", data.synth_duration_s),
        DBL_FIELD("data.bow_freq_min_hz", data.synth.bow_freq_min_hz),
        DBL_FIELD("data.bow_freq_max_hz", data.synth.bow_freq_max_hz),
        DBL_FIELD("data.bow_amp_min_mm", data.synth.bow_amp_min_mm),
        DBL_FIELD("data.bow_amp_max_mm", data.synth.bow_amp_max_mm),
        DBL_FIELD("data.segment_min_s", data.synth.segment_min_s),
        DBL_FIELD("data.segment_max_s", data.synth.segment_max_s),
        DBL_FIELD("data.tone_hz", data.synth.tone_hz),
        DBL_FIELD("data.sway_amp_mm", data.synth.sway_amp_mm),

        DBL_FIELD("noise.jitter_std_mm", noise.jitter_std_mm),
        DBL_FIELD("noise.swap_rate_per_min", noise.swap_rate_per_min),
        DBL_FIELD("noise.swap_dur_min_s", noise.swap_dur_min_s),
        DBL_FIELD("noise.swap_dur_max_s", noise.swap_dur_max_s),
        INT_FIELD("noise.n_variants", noise.n_variants),
        U64_FIELD("noise.base_seed", noise.base_seed),

        INT_FIELD("audio.n_fft", audio.n_fft),
        INT_FIELD("audio.hop_samples", audio.hop_samples),
        INT_FIELD("audio.n_mels", audio.n_mels),
        INT_FIELD("audio.cens_smooth_frames", audio.cens_smooth_frames),
        INT_FIELD("audio.peak_local_radius", audio.peak_local_radius),
        INT_FIELD("audio.peak_mean_radius", audio.peak_mean_radius),
        DBL_FIELD("audio.peak_delta_frac", audio.peak_delta_frac),

        INT_FIELD("model.h1", model.h1),
        INT_FIELD("model.h2", model.h2),
        INT_FIELD("model.pose_audio_layers", model.pose_audio_layers),
        INT_FIELD("model.fusion_layers", model.fusion_layers),
        INT_FIELD("model.heads", model.heads),
        INT_FIELD("model.ff_dim", model.ff_dim),
        DBL_FIELD("model.tau", model.tau),
        INT_FIELD("model.t_out", model.t_out),
        INT_FIELD("model.decode_hidden", model.decode_hidden),
        DBL_FIELD("model.dropout", model.dropout),
        BOOL_FIELD("model.use_audio", model.use_audio),
        BOOL_FIELD("model.use_rebalance", model.use_rebalance),

        INT_FIELD("train.batch_size", train.batch_size),
        DBL_FIELD("train.lr", train.adam.lr),
        DBL_FIELD("train.beta1", train.adam.beta1),
        DBL_FIELD("train.beta2", train.adam.beta2),
        INT_FIELD("train.epochs", train.epochs),
        U64_FIELD("train.seed", train.seed),
        INT_FIELD("train.patience", train.patience),
        INT_FIELD("train.max_train_samples", train.max_train_samples),

        {"eval.methods",
         [](const ExperimentConfig& c) { return join_strings(c.eval.methods); },
         [](ExperimentConfig& c, const std::string& v) { c.eval.methods = split_list(v); }},
        DBL_FIELD("eval.theta", eval.theta),
        INT_FIELD("eval.sma_window", eval.sma_window),
        INT_FIELD("eval.lstm_hidden", eval.lstm_hidden),
        INT_FIELD("eval.lstm_layers", eval.lstm_layers),
    };
    return kFields;
}

#undef DBL_FIELD
#undef INT_FIELD
#undef U64_FIELD
#undef BOOL_FIELD

const Field& find_field(const std::string& key) {
    for (const auto& f : fields()) {
        if (f.key == key) return f;
    }
    throw BadConfig("unknown config key: " + key);
}

}  // namespace

void ExperimentConfig::set(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw BadConfig("expected section.key=value: " + assignment);
    const std::string key = trim_ws(assignment.substr(0, eq));
    const std::string value = trim_ws(assignment.substr(eq + 1));
    find_field(key).set(*this, value);
}

std::string ExperimentConfig::serialize() const {
    std::ostringstream out;
    std::string section;
    for (const auto& f : fields()) {
        const std::string sec = f.key.substr(0, f.key.find('.'));
        if (sec != section) {
            if (!section.empty()) out << '\n';
            out << '[' << sec << "]\n";
            section = sec;
        }
        out << f.key.substr(sec.size() + 1) << " = " << f.get(*this) << '\n';
    }
    return out.str();
}

ExperimentConfig ExperimentConfig::parse(std::istream& in) {
    ExperimentConfig cfg;
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim_ws(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw BadConfig("bad section header at line " + std::to_string(line_no));
            }
            section = trim_ws(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw BadConfig("expected key = value at line " + std::to_string(line_no));
        }
        const std::string key = section + "." + trim_ws(line.substr(0, eq));
        find_field(key).set(cfg, trim_ws(line.substr(eq + 1)));
    }
    return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw BadConfig("cannot open config file: " + path.string());
    return parse(in);
}

void ExperimentConfig::validate() const {
    model.validate();
    noise.validate();
    if (data.window.window_s <= 0 || data.window.hop_s <= 0) {
        throw BadConfig("window and hop must be positive");
    }
    if (data.taus.empty()) throw BadConfig("need at least one tau");
    for (double tau : data.taus) stride_for_tau(tau);  // throws UnsupportedTau
    if (train.batch_size < 1) throw BadConfig("batch_size must be >= 1");
    if (eval.sma_window < 1 || eval.sma_window % 2 == 0) {
        throw BadConfig("sma_window must be odd >= 1");
    }
    for (const auto& m : eval.methods) {
        if (m != "mapnet" && m != "pot" && m != "lstm_po" && m != "lstm_pa" && m != "sma") {
            throw BadConfig("unknown method: " + m);
        }
    }
}

}  // namespace mapnet
