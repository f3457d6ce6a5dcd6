#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "nclab/cli.hpp"

int main(int argc, char** argv) {
    using namespace nclab::cli;
    CLI::App app{"nclab: unconstrained feature model and neural collapse lab"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    std::optional<std::uint64_t> seed;
    auto add_seed = [&](CLI::App* sub) {
        sub->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& s) { seed = s; },
                                                "RNG seed (overrides NC_LAB_SEED and config)");
    };

    SolveOptions solve;
    auto* s_solve = app.add_subcommand("solve", "Closed-form global minimizer of a vanilla config");
    s_solve->add_option("--config", solve.config_path, "Problem config JSON")->required();
    s_solve->add_option("--out", solve.out_dir, "Output directory");

    TrainOptions tr;
    auto* s_train = app.add_subcommand("train", "Train with gd, momentum or pgd");
    s_train->add_option("--config", tr.config_path, "Problem config JSON")->required();
    s_train->add_option("--train", tr.train_path, "Training config JSON")->required();
    s_train->add_option("--out", tr.out_dir, "Output directory");
    add_seed(s_train);

    ProbeOptions pr;
    auto* s_probe = app.add_subcommand("probe", "Classify a critical point");
    s_probe->add_option("--config", pr.config_path, "Problem config JSON")->required();
    auto* p_params = s_probe->add_option("--params", pr.params_path, "Params JSON");
    auto* p_zero = s_probe->add_flag("--zero-saddle", pr.zero_saddle, "Probe the (0, 0, b0) saddle");
    p_params->excludes(p_zero);
    s_probe->add_option("--trials", pr.trials, "Random probe directions")->check(CLI::PositiveNumber);
    s_probe->add_option("--out", pr.out_dir, "Output directory");
    add_seed(s_probe);

    MetricsOptions me;
    auto* s_metrics = app.add_subcommand("metrics", "Neural-collapse metrics of a params file");
    s_metrics->add_option("--config", me.config_path, "Problem config JSON")->required();
    s_metrics->add_option("--params", me.params_path, "Params JSON")->required();
    s_metrics->add_option("--out", me.out_dir, "Output directory");

    LandscapeOptions la;
    auto* s_land = app.add_subcommand("landscape", "Rescaled-loss landscape on the 2D slice");
    s_land->add_option("--K", la.K, "Number of classes (>= 3)");
    s_land->add_option("--alpha", la.alpha, "True-class weight");
    s_land->add_option("--M", la.M, "Target scale");
    s_land->add_option("--s-min", la.s_min, "Smallest feature norm s");
    s_land->add_option("--s-max", la.s_max, "Largest feature norm s");
    s_land->add_option("--theta-min", la.theta_min, "Smallest angle theta (radians)");
    s_land->add_option("--theta-max", la.theta_max, "Largest angle theta (radians, <= pi)");
    s_land->add_option("--s-res", la.s_resolution, "Grid points along s");
    s_land->add_option("--theta-res", la.theta_resolution, "Grid points along theta");
    s_land->add_flag("--limit", la.limit, "Use the K -> infinity gradient fields");
    s_land->add_option("--out", la.out_dir, "Output directory");

    SweepOptions sw;
    auto* s_sweep = app.add_subcommand("sweep", "One-axis parameter sweep");
    s_sweep->add_option("--config", sw.config_path, "Base problem config JSON")->required();
    s_sweep->add_option("--sweep", sw.sweep_path, "Sweep spec JSON")->required();
    s_sweep->add_option("--train", sw.train_path, "Training config JSON");
    s_sweep->add_option("--out", sw.out_dir, "Output directory");
    add_seed(s_sweep);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kUsage;
    }

    try {
        if (s_solve->parsed())
            return cmd_solve(solve);
        if (s_train->parsed()) {
            tr.seed = seed;
            return cmd_train(tr);
        }
        if (s_probe->parsed()) {
            pr.seed = seed;
            return cmd_probe(pr);
        }
        if (s_metrics->parsed())
            return cmd_metrics(me);
        if (s_land->parsed())
            return cmd_landscape(la);
        if (s_sweep->parsed()) {
            sw.seed = seed;
            return cmd_sweep(sw);
        }
    } catch (const nclab::DivergenceError& e) {
        std::cerr << "nclab: " << e.what() << "\n";
        return kNumerical;
    } catch (const nclab::ConfigError& e) {
        std::cerr << "nclab: " << e.what() << "\n";
        return kUsage;
    } catch (const nclab::InvalidInput& e) {
        std::cerr << "nclab: " << e.what() << "\n";
        return kUsage;
    } catch (const nclab::Error& e) {
        std::cerr << "nclab: " << e.what() << "\n";
        return kNumerical;
    }
    return kUsage;
}
