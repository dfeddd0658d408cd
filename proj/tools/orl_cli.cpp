// orl: experiment runner.
//
//   orl list-presets
//   orl run --preset NAME --out DIR [--config FILE] [--seed N] [--set key=value]... [--jobs N]
//   orl verify [--seed N] [--out FILE] [--fault-inject NAME]
//
// Exit status: 0 success, 1 failed stage or failed verification, 2 usage error.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "orl/experiment.hpp"

namespace {

int run_command(const orl::exp::RunOptions& opts) {
    const auto result = orl::exp::run_preset(opts);
    std::cout << "preset " << opts.preset << ": wrote " << result.files.size() << " files to " << opts.out_dir << '\n';
    std::cout << "config_hash " << result.config_hash << '\n';
    std::cout << "manifest " << result.manifest_path << '\n';
    return 0;
}

int verify_command(std::uint64_t seed, const std::string& out, orl::exp::Fault fault) {
    const auto report = orl::exp::verify(seed, fault);
    const std::string json = report.to_json();
    if (!out.empty()) {
        std::ofstream f(out, std::ios::binary);
        f << json;
        if (!f) throw orl::exp::StageError("verify", "cannot write " + out);
    }
    std::cout << json;
    for (const auto& c : report.checks)
        if (!c.passed)
            std::cerr << "FAIL " << c.module << "/" << c.property << ": observed " << c.observed << ", expected "
                      << c.expected << " (" << c.inputs << ")\n";
    return report.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Outcome-based RL analysis toolkit: presets, artifacts and verification"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(ORL_VERSION));

    auto* list = app.add_subcommand("list-presets", "List the named experiment presets");

    orl::exp::RunOptions opts;
    std::uint64_t seed = 0;
    std::string fault_name;
    auto* run = app.add_subcommand("run", "Run a preset and write CSV artifacts plus a manifest");
    run->add_option("--preset", opts.preset, "Preset name")->required();
    run->add_option("--config", opts.config_path, "Config file (key = value, [section] headers)");
    run->add_option("--out", opts.out_dir, "Output directory")->required();
    auto* seed_opt = run->add_option("--seed", seed, "Root seed");
    run->add_option("--set", opts.overrides, "Override key=value (repeatable)")->take_all();
    run->add_option("--jobs", opts.jobs, "Worker threads for independent cells")->check(CLI::PositiveNumber);
    run->add_option("--fault-inject", fault_name, "Deliberate fault for harness testing");

    std::uint64_t verify_seed = 0;
    std::string verify_out, verify_fault;
    auto* ver = app.add_subcommand("verify", "Run the invariant and oracle suite");
    ver->add_option("--seed", verify_seed, "Root seed");
    ver->add_option("--out", verify_out, "Also write the JSON report to this file");
    ver->add_option("--fault-inject", verify_fault, "Deliberate fault (advantage-sign)");
    ver->add_option("--jobs", opts.jobs, "Accepted for symmetry; checks run sequentially");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (*list) {
            for (const auto& p : orl::exp::presets()) std::cout << p.name << "\t" << p.description << '\n';
            return 0;
        }
        if (*run) {
            if (*seed_opt) opts.seed = seed;
            opts.fault = orl::exp::parse_fault(fault_name);
            return run_command(opts);
        }
        return verify_command(verify_seed, verify_out, orl::exp::parse_fault(verify_fault));
    } catch (const orl::exp::UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const orl::exp::StageError& e) {
        std::cerr << "error: stage=" << e.stage() << ": " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
