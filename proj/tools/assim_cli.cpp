// Twin-experiment driver. Verbs run one experiment each; `all` composes the
// four with shared seed. Exit status: 0 all criteria pass, 1 a criterion
// failed (or a warning under --strict), 2 configuration or usage error.
#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "assim/harness.hpp"

namespace {

struct Options {
    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 20260823;
    bool seed_set = false;
    int threads = 1;
    bool strict = false;
};

void add_common_flags(CLI::App* cmd, Options& opt) {
    cmd->add_option("--config", opt.config_path, "JSON config file")
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", opt.out_dir, "output directory");
    cmd->add_option("--seed", opt.seed, "master seed")
        ->each([&opt](const std::string&) { opt.seed_set = true; });
    cmd->add_option("--threads", opt.threads, "worker threads")
        ->check(CLI::PositiveNumber);
    cmd->add_flag("--strict", opt.strict, "treat warnings as failures");
}

nlohmann::json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config: " + path);
    return nlohmann::json::parse(in);
}

int finish(const assim::ExperimentReport& report, const Options& opt,
           const nlohmann::json& config_echo) {
    assim::emit(report, opt.out_dir, config_echo);
    bool warned = report.summary.contains("warnings") &&
                  !report.summary.at("warnings").empty();
    if (warned)
        for (const auto& w : report.summary.at("warnings"))
            std::cerr << "warning: " << w.get<std::string>() << "\n";
    if (!report.all_pass) {
        std::cerr << "criteria failed; see " << opt.out_dir << "/summary.json\n";
        return 1;
    }
    if (opt.strict && warned) return 1;
    std::cout << "ok: " << report.rows.size() << " rows -> " << opt.out_dir
              << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"particle-filter twin experiments"};
    app.require_subcommand(1);

    Options opt;
    std::string verb;
    for (const char* name :
         {"identities", "consistency", "accuracy", "ergodicity", "all"}) {
        CLI::App* cmd = app.add_subcommand(name);
        add_common_flags(cmd, opt);
        cmd->callback([&verb, name]() { verb = name; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (verb == "all") {
            std::optional<nlohmann::json> overrides;
            if (!opt.config_path.empty()) overrides = load_json(opt.config_path);
            assim::ExperimentReport report = assim::run_all(
                opt.seed, opt.threads, overrides ? &*overrides : nullptr);
            nlohmann::json echo = overrides
                                      ? *overrides
                                      : nlohmann::json{{"experiment", "all"},
                                                       {"seed", opt.seed}};
            return finish(report, opt, echo);
        }

        assim::ExperimentConfig cfg;
        if (!opt.config_path.empty()) {
            cfg = assim::config_from_json(load_json(opt.config_path));
            if (cfg.experiment != verb)
                throw std::invalid_argument("config is for experiment '" +
                                            cfg.experiment + "', verb is '" +
                                            verb + "'");
            if (opt.seed_set) cfg.master_seed = opt.seed;
        } else {
            cfg = assim::default_config(verb, opt.seed);
        }
        cfg.threads = opt.threads;
        cfg.out_dir = opt.out_dir;
        assim::ExperimentReport report = assim::run_experiment(cfg);
        return finish(report, opt, assim::config_to_json(cfg));
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
