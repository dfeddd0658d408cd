#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "orl/error.hpp"
#include "orl/experiment.hpp"

namespace orl::exp {
namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

bool valid_key(std::string_view key) {
    if (key.empty() || key.front() == '.' || key.back() == '.') return false;
    return std::all_of(key.begin(), key.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-';
    });
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* kind) {
    throw UsageError("config key '" + key + "': expected " + kind + ", got '" + value + "'");
}

}  // namespace

Config Config::parse(std::string_view text, std::string_view source) {
    Config cfg;
    std::string section;
    std::size_t line_no = 0;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view s = line;
        if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
        s = trim(s);
        if (s.empty()) continue;
        const std::string where = std::string(source) + ":" + std::to_string(line_no);
        if (s.front() == '[') {
            if (s.back() != ']') throw UsageError(where + ": unterminated section header");
            section = std::string(trim(s.substr(1, s.size() - 2)));
            if (!section.empty() && !valid_key(section)) throw UsageError(where + ": bad section name '" + section + "'");
            continue;
        }
        const auto eq = s.find('=');
        if (eq == std::string_view::npos) throw UsageError(where + ": expected 'key = value'");
        const std::string key = std::string(trim(s.substr(0, eq)));
        const std::string value = std::string(trim(s.substr(eq + 1)));
        if (!valid_key(key)) throw UsageError(where + ": bad key '" + key + "'");
        const std::string full = section.empty() ? key : section + "." + key;
        if (cfg.has(full)) throw UsageError(where + ": duplicate key '" + full + "'");
        cfg.values_[full] = value;
    }
    return cfg;
}

Config Config::defaults() {
    static const char* const kDefaults = R"(
seed = 0

[env]
n_rooms = 4
max_steps = 6
n_distractor_actions = 2
shared_feature_weight = 0.5
feature_dim = 8
seed = 0
aliased_observations = false
random_start = false

[train]
group_size = 8
tasks_per_epoch = 8
learning_rate = 0.05
epochs = 200
gcd_enabled = false
gcd_weight = 1
gcd_judge_samples = 4
epsilon_std = 1e-8
correction_enabled = false
correction_threshold = 0.5
correction_label = bad
correction_target = 0.2
hidden_dim = 8
cold_start = true
cold_start_target = 0.5
cold_start_lr = 0.1
consistency_trials = 10
coupling_probe_steps = 64
probe_groups = 16
checkpoint_every = 0
seeds = 1
compare_gcd = false

[lemma1]
grid = 20

[theorem1]
scenarios = 1000
steps = 1000
step_const = 1e-4
trace_scenarios = 1

[danger]
risk = 0.2
push = 0.01
step_const = 0.5
steps = 20000
sweep_points = 19

[coupled]
q1 = 0.6
q2 = 0.7
r2 = 0.2
xi = 4
delta = 0.5
step_const = 0.5
steps = 100000
trace_steps = 2000

[influence]
learning_rate = 0.1

[correction]
room = 1
action = 1
flawed_prob = 0.85
epochs = 50
push_groups = 2000

[mc]
groups = 5000
group_size = 8
observation = 0
action = 1
room_probs = 0.7,0.3,0.0001;0.8,0.1,0.1;0.85,0.1,0.05
)";
    return parse(kDefaults, "<defaults>");
}

void Config::set(const std::string& key, std::string value) {
    if (!valid_key(key)) throw UsageError("bad config key '" + key + "'");
    values_[key] = std::move(value);
}

void Config::merge_known(const Config& other, std::string_view source) {
    for (const auto& [key, value] : other.values_) {
        if (!has(key)) throw UsageError(std::string(source) + ": unknown config key '" + key + "'");
        values_[key] = value;
    }
}

void Config::apply_override(std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) throw UsageError("--set expects key=value, got '" + std::string(assignment) + "'");
    const std::string key = std::string(trim(assignment.substr(0, eq)));
    if (!has(key)) throw UsageError("--set: unknown config key '" + key + "'");
    values_[key] = std::string(trim(assignment.substr(eq + 1)));
}

const std::string& Config::raw(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw UsageError("missing config key '" + key + "'");
    return it->second;
}

double Config::get_double(const std::string& key) const {
    const std::string& v = raw(key);
    double out = 0.0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out)) bad_value(key, v, "a finite number");
    return out;
}

int Config::get_int(const std::string& key) const {
    const std::string& v = raw(key);
    int out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) bad_value(key, v, "an integer");
    return out;
}

std::uint64_t Config::get_u64(const std::string& key) const {
    const std::string& v = raw(key);
    std::uint64_t out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) bad_value(key, v, "an unsigned 64-bit integer");
    return out;
}

bool Config::get_bool(const std::string& key) const {
    const std::string& v = raw(key);
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    bad_value(key, v, "true or false");
}

std::string Config::dump() const {
    std::ostringstream out;
    for (const auto& [key, value] : values_) out << key << " = " << value << '\n';
    return out.str();
}

env::EnvConfig env_config_from(const Config& cfg) {
    env::EnvConfig e;
    e.n_rooms = cfg.get_int("env.n_rooms");
    e.max_steps = cfg.get_int("env.max_steps");
    e.n_distractor_actions = cfg.get_int("env.n_distractor_actions");
    e.shared_feature_weight = cfg.get_double("env.shared_feature_weight");
    e.feature_dim = cfg.get_int("env.feature_dim");
    e.seed = cfg.get_u64("env.seed");
    e.aliased_observations = cfg.get_bool("env.aliased_observations");
    e.random_start = cfg.get_bool("env.random_start");
    return e;
}

train::TrainConfig train_config_from(const Config& cfg) {
    train::TrainConfig t;
    t.group_size = cfg.get_int("train.group_size");
    t.tasks_per_epoch = cfg.get_int("train.tasks_per_epoch");
    t.learning_rate = cfg.get_double("train.learning_rate");
    t.epochs = cfg.get_int("train.epochs");
    t.gcd_enabled = cfg.get_bool("train.gcd_enabled");
    t.gcd_weight = cfg.get_double("train.gcd_weight");
    t.gcd_judge_samples = cfg.get_int("train.gcd_judge_samples");
    t.epsilon_std = cfg.get_double("train.epsilon_std");
    t.correction_enabled = cfg.get_bool("train.correction_enabled");
    t.correction_threshold = cfg.get_double("train.correction_threshold");
    const std::string label = cfg.get_string("train.correction_label");
    if (label == "bad")
        t.correction_label = env::Label::Bad;
    else if (label == "good")
        t.correction_label = env::Label::Good;
    else
        throw UsageError("config key 'train.correction_label': expected good or bad, got '" + label + "'");
    t.correction_target = cfg.get_double("train.correction_target");
    t.seed = cfg.get_u64("seed");
    t.hidden_dim = cfg.get_int("train.hidden_dim");
    t.cold_start = cfg.get_bool("train.cold_start");
    t.cold_start_target = cfg.get_double("train.cold_start_target");
    t.cold_start_lr = cfg.get_double("train.cold_start_lr");
    t.consistency_trials = cfg.get_int("train.consistency_trials");
    t.coupling_probe_steps = cfg.get_int("train.coupling_probe_steps");
    return t;
}

Config effective_config(const RunOptions& opts) {
    if (!is_preset(opts.preset)) throw UsageError("unknown preset '" + opts.preset + "' (see list-presets)");
    Config cfg = preset_config(opts.preset);
    if (!opts.config_path.empty()) {
        std::ifstream in(opts.config_path);
        if (!in) throw UsageError("cannot read config file '" + opts.config_path + "'");
        std::ostringstream text;
        text << in.rdbuf();
        cfg.merge_known(Config::parse(text.str(), opts.config_path), opts.config_path);
    }
    for (const auto& o : opts.overrides) cfg.apply_override(o);
    if (opts.seed) cfg.set("seed", std::to_string(*opts.seed));
    // Surface malformed values before any computation starts. Each key must
    // keep the kind (bool or number) of its default.
    const Config base = Config::defaults();
    for (const auto& [key, fallback] : base.values()) {
        if (fallback == "true" || fallback == "false") {
            cfg.get_bool(key);
            continue;
        }
        double probe = 0.0;
        const auto res = std::from_chars(fallback.data(), fallback.data() + fallback.size(), probe);
        if (res.ec == std::errc() && res.ptr == fallback.data() + fallback.size()) cfg.get_double(key);
    }
    try {
        env_config_from(cfg).validate();
        train_config_from(cfg).validate();
    } catch (const InvalidInput& e) {
        throw UsageError(std::string("invalid configuration: ") + e.what());
    }
    return cfg;
}

std::vector<std::vector<double>> parse_prob_table(std::string_view text) {
    std::vector<std::vector<double>> rows;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto end = std::min(text.find(';', start), text.size());
        std::string_view row = trim(text.substr(start, end - start));
        std::vector<double> vals;
        std::size_t s = 0;
        while (s <= row.size()) {
            const auto e = std::min(row.find(',', s), row.size());
            const std::string_view tok = trim(row.substr(s, e - s));
            double v = 0.0;
            const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (tok.empty() || res.ec != std::errc() || res.ptr != tok.data() + tok.size())
                throw UsageError("probability table: bad number '" + std::string(tok) + "'");
            vals.push_back(v);
            s = e + 1;
        }
        rows.push_back(std::move(vals));
        start = end + 1;
    }
    return rows;
}

}  // namespace orl::exp
