// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0
//
// triplane-mimic <fit|render|mesh|eval|gradcheck> [--config PATH] [--seed N]
//                [--threads N] [--print-config] [key=value ...]
//
// Settings resolve as defaults < config file < flags < key=value overrides.

#include "commands.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

int main(int argc, char** argv) {
    CLI::App app{"Fit a tri-plane student to an analytic multiview teacher, then render, mesh and evaluate it."};
    std::string command, config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::vector<std::string> overrides;
    bool print_config = false;
    app.add_option("command", command, "fit, render, mesh, eval or gradcheck")
        ->check(CLI::IsMember({"fit", "render", "mesh", "eval", "gradcheck"}));
    app.add_option("overrides", overrides, "key=value settings applied last");
    app.add_option("--config", config_path, "key=value config file");
    app.add_option("--seed", seed, "master seed (key 'seed')");
    app.add_option("--threads", threads, "worker threads (key 'threads')");
    app.add_flag("--print-config", print_config, "print the resolved configuration and exit");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : mimic::cli::kExitUsage;
    }

    mimic::RunConfig config;
    try {
        if (!config_path.empty()) config.load_file(config_path);
        if (seed) config.set("seed", std::to_string(*seed));
        if (threads) config.set("threads", std::to_string(*threads));
        for (const auto& o : overrides) config.apply_override(o);
    } catch (const mimic::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return mimic::cli::kExitUsage;
    }
    if (print_config) {
        std::cout << config.dump();
        return mimic::cli::kExitOk;
    }
    if (command.empty()) {
        std::cerr << "error: a command is required\n" << app.help();
        return mimic::cli::kExitUsage;
    }
    return mimic::cli::run_command(command, config, std::cout, std::cerr);
}
