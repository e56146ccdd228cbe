#include <CLI11.hpp>

#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "mfsg/commands.hpp"

namespace {

std::vector<int> parse_agent_list(const std::string& csv) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(std::stoi(item));
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"decentralized strategy synthesis and Monte Carlo verification "
                 "for a leader-follower mean-field game with common noise"};
    app.require_subcommand(1);

    mfsg::CommandOptions opt;
    std::string agents_csv;
    int agents_single = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opt.config_path, "configuration file")->required();
        sub->add_option("--out", opt.out_dir, "output directory");
        sub->add_option("--steps", [&](const std::vector<std::string>& v) {
            opt.steps = std::stoi(v[0]);
            return true;
        }, "time steps override");
        sub->add_option("--seed", [&](const std::vector<std::string>& v) {
            opt.seed = std::strtoull(v[0].c_str(), nullptr, 10);
            return true;
        }, "seed override");
        sub->add_option("--paths", [&](const std::vector<std::string>& v) {
            opt.paths = std::stoi(v[0]);
            return true;
        }, "Monte Carlo path count override");
        sub->add_option("--threads", opt.threads, "worker threads (results are identical)");
        sub->add_flag("--euler", opt.euler, "integrate deterministic equations with Euler");
        sub->add_flag("--faithful-typos", opt.faithful_typos,
                      "use the printed coefficient variants of the stacked system");
    };

    CLI::App* check = app.add_subcommand("check", "evaluate the standing conditions");
    add_common(check);
    CLI::App* synth = app.add_subcommand("synthesize", "write Riccati and mean-profile CSVs");
    add_common(synth);
    CLI::App* simulate = app.add_subcommand("simulate", "Monte Carlo closed-loop run");
    add_common(simulate);
    simulate->add_option("--agents", agents_single, "population size override");
    CLI::App* sweep = app.add_subcommand("sweep", "epsilon ladder, decay fit, gap trials");
    add_common(sweep);
    sweep->add_option("--agents", agents_csv, "comma-separated population ladder");

    CLI11_PARSE(app, argc, argv);

    if (check->parsed()) return mfsg::cmd_check(opt);
    if (synth->parsed()) return mfsg::cmd_synthesize(opt);
    if (simulate->parsed()) {
        if (agents_single > 0) opt.agents = agents_single;
        return mfsg::cmd_simulate(opt);
    }
    if (sweep->parsed()) {
        if (!agents_csv.empty()) opt.agent_list = parse_agent_list(agents_csv);
        return mfsg::cmd_sweep(opt);
    }
    return mfsg::exit_config;
}
