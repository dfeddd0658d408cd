#pragma once

// Experiment runner: layered key-value configs, named presets that write CSV
// artifacts plus a hashed manifest, and the verification suite.

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "orl/grpo_trainer.hpp"
#include "orl/risk_model.hpp"
#include "orl/rng.hpp"
#include "orl/toy_env.hpp"

namespace orl::exp {

/// Bad command-line usage: unknown preset, unknown key, malformed value.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Failure inside a named stage of a run.
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& message)
        : std::runtime_error(stage + ": " + message), stage_(std::move(stage)) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

/// Flat map of dotted keys to string values.
///
/// Text form:
///   # comment
///   seed = 3
///   [train]
///   learning_rate = 0.05     -> key "train.learning_rate"
class Config {
public:
    static Config parse(std::string_view text, std::string_view source = "<config>");
    static Config defaults();

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    void set(const std::string& key, std::string value);
    /// Applies every entry of `other`; each key must already exist here.
    void merge_known(const Config& other, std::string_view source);
    /// "key=value" from the command line; the key must already exist.
    void apply_override(std::string_view assignment);

    const std::string& raw(const std::string& key) const;
    std::string get_string(const std::string& key) const { return raw(key); }
    double get_double(const std::string& key) const;
    int get_int(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    bool get_bool(const std::string& key) const;

    /// Sorted "key = value" lines; parse(dump()) reproduces the config.
    std::string dump() const;
    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

env::EnvConfig env_config_from(const Config& cfg);
train::TrainConfig train_config_from(const Config& cfg);

struct PresetInfo {
    std::string name;
    std::string description;
};

const std::vector<PresetInfo>& presets();
bool is_preset(std::string_view name);
/// Defaults with the preset's own values applied.
Config preset_config(std::string_view name);

enum class Fault { None, AdvantageSign };
Fault parse_fault(std::string_view name);

struct RunOptions {
    std::string preset;
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> overrides;
    int jobs = 1;
    Fault fault = Fault::None;
};

/// defaults < preset < config file < --set overrides < --seed.
Config effective_config(const RunOptions& opts);

struct RunResult {
    std::vector<std::string> files;  // relative to out_dir, manifest excluded
    std::string config_hash;
    std::string manifest_path;
};

/// Validates everything first, then computes, then writes outputs.
RunResult run_preset(const RunOptions& opts);

/// File name -> content for a validated config, without touching the disk.
std::map<std::string, std::string> compute_preset_outputs(const std::string& preset, const Config& cfg, int jobs,
                                                          Fault fault);

std::string sha256_hex(std::string_view data);

/// manifest_version, tool_version, preset, seed, config_hash, file.<name> = sha256.
std::string render_manifest(const std::string& preset, std::uint64_t seed, const std::string& config_hash,
                            const std::map<std::string, std::string>& files);

struct CheckResult {
    std::string module;
    std::string property;
    bool passed = false;
    std::string inputs;
    std::string observed;
    std::string expected;
};

struct VerifyReport {
    std::vector<CheckResult> checks;
    bool passed() const;
    std::string to_json() const;
};

VerifyReport verify(std::uint64_t seed, Fault fault = Fault::None);

/// Uniformly drawn three-action scenario with r, r_hat > 0 (rejection sampled
/// until validate() accepts it).
risk::ThreeActionScenario sample_three_action(Rng& rng);

/// Expected-advantage grid: p, q in {i/(n-1)}, r = j/(n-1) * (1 - p).
struct AdvantageGridRow {
    double p, q, r, analytic, oracle, abs_diff;
};
std::vector<AdvantageGridRow> advantage_grid(int n, Fault fault = Fault::None);

/// Policy with a zeroed action read-out whose action probabilities come from
/// the bias table: room k plays probs[k].
train::Policy fixed_probability_policy(const env::EnvConfig& env_cfg, const std::vector<std::vector<double>>& probs,
                                       std::uint64_t seed);

/// "a,b,c;d,e,f" -> {{a,b,c},{d,e,f}}.
std::vector<std::vector<double>> parse_prob_table(std::string_view text);

}  // namespace orl::exp
