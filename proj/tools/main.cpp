#include "experiments.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv)
{
    using namespace ldet::cli;
    CLI::App app{"ldet_cli: batch experiments for log-determinant functionals on T^4"};
    app.require_subcommand(1);

    struct Opts {
        std::string config;
        std::string out;
        long long seed = -1;
        int threads = 0;
    };
    std::map<std::string, Opts> opts;
    std::map<std::string, CLI::App*> subs;
    for (const auto& name : experiment_names()) {
        auto* sub = app.add_subcommand(name, "run the '" + name + "' experiment");
        sub->footer("CSV output: " + csv_help(name));
        auto& o = opts[name];
        sub->add_option("--config", o.config, "TOML or JSON experiment file")->check(CLI::ExistingFile);
        sub->add_option("--out", o.out, "output directory (overrides the config)");
        sub->add_option("--seed", o.seed, "RNG seed (overrides the config)")->check(CLI::NonNegativeNumber);
        sub->add_option("--threads", o.threads, "worker threads (overrides the config)")->check(CLI::PositiveNumber);
        subs[name] = sub;
    }
    std::string report_dir;
    auto* rep = app.add_subcommand("report", "print the assertion table of a finished run");
    rep->add_option("dir", report_dir, "output directory of a run")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    if (rep->parsed()) {
        try {
            std::cout << report(report_dir);
            return 0;
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << '\n';
            return 2;
        }
    }

    for (const auto& [name, sub] : subs) {
        if (!sub->parsed())
            continue;
        const Opts& o = opts[name];
        try {
            nlohmann::json doc = o.config.empty() ? nlohmann::json::object() : read_config_file(o.config);
            if (o.seed >= 0)
                doc["seed"] = o.seed;
            if (!o.out.empty())
                doc["out"] = o.out;
            if (o.threads > 0)
                doc["threads"] = o.threads;
            const ExperimentConfig cfg = make_config(name, doc);
            return run_and_write(cfg, std::cout, std::cerr);
        } catch (const ConfigError& e) {
            std::cerr << "config error: " << e.what() << '\n';
            return 2;
        } catch (const std::invalid_argument& e) {
            std::cerr << "invalid input: " << e.what() << '\n';
            return 2;
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << '\n';
            return 1;
        }
    }
    return 2;
}
