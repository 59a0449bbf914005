// Command-line front end: run scenario files, print value curves or dual
// bounds, and execute the built-in acceptance suite.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "wbsde/acceptance.hpp"
#include "wbsde/scenario.hpp"

namespace {

struct Common {
    std::string out;
    std::optional<std::uint64_t> seed;
    bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c, bool with_out = true) {
    if (with_out) cmd->add_option("--out", c.out, "Output directory (overrides WEAKBSDE_OUT and the config)");
    cmd->add_option("--seed", c.seed, "Seed for the randomized checks");
    cmd->add_flag("--quiet", c.quiet, "Only print failures and the summary");
}

int cmd_run(const std::string& path, const Common& c) {
    const auto sc = wbsde::parse_scenario_file(path);
    wbsde::RunOptions opts;
    opts.out_dir = c.out;
    opts.seed = c.seed;
    const auto report = wbsde::run_scenario(sc, opts, c.quiet ? nullptr : &std::cout);
    if (c.quiet) {
        for (const auto& chk : report.checks) {
            if (chk.status == wbsde::Status::fail) {
                std::cout << fmt::format("[FAIL] {}: {} (value {:.6g}, threshold {:.6g})\n", chk.name,
                                         chk.message, chk.value, chk.threshold);
            }
        }
    }
    return report.any_fail() ? 1 : 0;
}

int cmd_curve(const std::string& path, const Common& c) {
    const auto sc = wbsde::parse_scenario_file(path);
    wbsde::RunOptions opts;
    opts.seed = c.seed;
    opts.write_files = false;
    opts.run_checks = false;
    opts.run_dual = false;
    const auto report = wbsde::run_scenario(sc, opts);
    std::cout << "m,primal\n";
    for (const auto& row : report.curve) std::cout << fmt::format("{:.17g},{:.17g}\n", row.m, row.primal);
    return 0;
}

int cmd_dual(const std::string& path) {
    const auto sc = wbsde::parse_scenario_file(path);
    std::cout << "m,l_star,bound\n";
    for (const auto& b : wbsde::run_dual_only(sc)) {
        std::cout << fmt::format("{:.17g},{:.17g},{:.17g}\n", b.m, b.l_star, b.bound);
    }
    return 0;
}

int cmd_verify(const std::string& filter, const Common& c) {
    wbsde::VerifyOptions opts;
    opts.filter = filter;
    opts.out_dir = c.out;
    opts.quiet = c.quiet;
    if (c.seed) opts.seed = *c.seed;
    return wbsde::verify_all(opts, std::cout).any_fail() ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Lattice solver for BSDEs with a nonlinear weak terminal constraint"};
    app.require_subcommand(1);

    Common common;
    std::string config;
    std::string filter;

    auto* run = app.add_subcommand("run", "Solve a scenario, run its checks and write outputs");
    run->add_option("config", config, "Scenario JSON file")->required();
    add_common(run, common);

    auto* curve = app.add_subcommand("curve", "Print the primal value curve m -> Y0(m)");
    curve->add_option("config", config, "Scenario JSON file")->required();
    add_common(curve, common, false);

    auto* dual = app.add_subcommand("dual", "Print the dual bound for each m");
    dual->add_option("config", config, "Scenario JSON file")->required();

    auto* verify = app.add_subcommand("verify", "Run the built-in acceptance suite");
    verify->add_option("--filter", filter, "Only criteria whose 'NN name' contains this text");
    add_common(verify, common);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return cmd_run(config, common);
        if (*curve) return cmd_curve(config, common);
        if (*dual) return cmd_dual(config);
        if (*verify) return cmd_verify(filter, common);
    } catch (const wbsde::ScenarioError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
