#include <cmath>
#include <cstdint>
#include <exception>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "gwspeed/electrical.hpp"
#include "gwspeed/engine.hpp"
#include "gwspeed/tree.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::optional<std::string> out_dir;
};

void add_common(CLI::App* cmd, CommonFlags& flags, bool config_required = true) {
    auto* config = cmd->add_option("--config", flags.config_path, "experiment config (JSON)");
    if (config_required) config->required();
    cmd->add_option("--seed", flags.seed, "override the master seed");
    cmd->add_option("--workers", flags.workers, "worker thread count");
    cmd->add_option("--out", flags.out_dir, "output directory");
}

int run_experiment(const std::string& experiment, const CommonFlags& flags) {
    gwspeed::ExperimentConfig cfg = gwspeed::load_config(flags.config_path);
    cfg.experiment = experiment;
    if (flags.seed) cfg.master_seed = *flags.seed;
    if (flags.workers) cfg.workers = *flags.workers;
    if (flags.out_dir) cfg.out_dir = *flags.out_dir;
    const gwspeed::RunRecord record = gwspeed::run(cfg);
    gwspeed::persist(record, cfg);
    std::cout << record.to_json().dump(2) << std::endl;
    return record.gate_pass ? 0 : 2;
}

int run_oracle(const std::string& tree_path, std::int32_t level) {
    std::ifstream in(tree_path);
    if (!in) throw std::invalid_argument("cannot open tree file: " + tree_path);
    gwspeed::WeightedTree tree = gwspeed::read_tree(in);
    const double recursion = gwspeed::conductance_to_level(tree, level);
    const double solve = gwspeed::brute_force_conductance(
        tree, gwspeed::generation(tree, level));
    std::cout << std::setprecision(17) << "recursion " << recursion << "\n"
              << "linear_solve " << solve << "\n"
              << "abs_diff " << std::abs(recursion - solve) << std::endl;
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"random-walk speed experiments on weighted Galton-Watson trees"};
    app.require_subcommand(1);

    const char* experiments[] = {"speed",        "sweep-epsilon", "limit-check",
                                 "stationarity", "continuity",    "bounds"};
    const char* descriptions[] = {
        "estimate the speed with all three estimators",
        "LLN speed along an epsilon grid",
        "vanishing-conductance limit against the survival-weighted target",
        "invariance and symmetry checks for the root-environment measure",
        "speed continuity along a conductance-law sequence",
        "resistance moment bounds"};
    CommonFlags flags[6];
    CLI::App* cmds[6];
    for (int i = 0; i < 6; ++i) {
        cmds[i] = app.add_subcommand(experiments[i], descriptions[i]);
        add_common(cmds[i], flags[i]);
    }

    auto* oracle = app.add_subcommand("oracle", "independent cross-checks");
    auto* conductance = oracle->add_subcommand(
        "conductance", "compare the conductance recursion against a linear solve");
    std::string tree_path;
    std::int32_t level = 1;
    conductance->add_option("--tree", tree_path, "tree file")->required();
    conductance->add_option("--level", level, "boundary level")->required();
    oracle->require_subcommand(1);

    CLI11_PARSE(app, argc, argv);

    try {
        for (int i = 0; i < 6; ++i)
            if (cmds[i]->parsed()) return run_experiment(experiments[i], flags[i]);
        if (conductance->parsed()) return run_oracle(tree_path, level);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 1;
}
