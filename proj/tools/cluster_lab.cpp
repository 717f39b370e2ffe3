// Command-line front end for the clustered-data / ReLU-net laboratory.
// Every subcommand reads a JSON experiment config and writes deterministic
// JSON/CSV/SVG outputs keyed by seed and config hash.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "clusterlab/harness.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot read config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"clustered-data / two-layer ReLU network laboratory"};
    app.require_subcommand(1);

    std::string config_path;
    std::string output_dir_override;
    std::uint64_t seed_override = 0;
    bool seed_set = false;
    int parallelism = 1;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", config_path, "JSON experiment config")->required();
        sub->add_option("-o,--output-dir", output_dir_override,
                        "override output directory (also via CLUSTER_LAB_OUTPUT_DIR)");
        sub->add_option("--seed", seed_override, "override the master seed")
            ->each([&](const std::string&) { seed_set = true; });
    };

    CLI::App* gen = app.add_subcommand("gen-data", "sample and save a dataset");
    CLI::App* chk = app.add_subcommand("check-assumption", "evaluate the distributional assumption");
    CLI::App* trn = app.add_subcommand("train", "train by discretized gradient flow");
    CLI::App* kkt = app.add_subcommand("kkt-report", "train and diagnose KKT proximity");
    CLI::App* atk = app.add_subcommand("attack", "build the universal perturbation and measure flips");
    CLI::App* rob = app.add_subcommand("robust-baseline", "robust construction and linear baseline");
    CLI::App* e2e = app.add_subcommand("e2e", "full end-to-end run");
    CLI::App* swp = app.add_subcommand("sweep", "grid of e2e runs");
    for (CLI::App* sub : {gen, chk, trn, kkt, atk, rob, e2e}) add_common(sub);
    swp->add_option("-c,--config", config_path, "JSON sweep config {base, grid}")->required();
    swp->add_option("-o,--output-dir", output_dir_override, "override output directory");
    swp->add_option("-j,--parallelism", parallelism, "worker threads");

    CLI11_PARSE(app, argc, argv);

    try {
        std::string text = read_file(config_path);

        if (swp->parsed()) {
            std::vector<clusterlab::ExperimentConfig> grid = clusterlab::expand_sweep_config(text);
            const nlohmann::json j = nlohmann::json::parse(text);
            if (j.contains("parallelism") && parallelism == 1)
                parallelism = j.at("parallelism").get<int>();
            std::string base_dir = output_dir_override;
            for (std::size_t i = 0; i < grid.size(); ++i) {
                if (!base_dir.empty()) grid[i].output_dir = base_dir;
                grid[i].output_dir += "/sweep-" + std::to_string(i);
            }
            const std::string csv = clusterlab::sweep(grid, parallelism);
            const std::filesystem::path out_dir =
                base_dir.empty() ? std::filesystem::path("out") : std::filesystem::path(base_dir);
            std::filesystem::create_directories(out_dir);
            std::ofstream out(out_dir / "sweep.csv");
            out << csv;
            std::cout << csv;
            return clusterlab::kExitOk;
        }

        clusterlab::ExperimentConfig config = clusterlab::experiment_config_from_json(text);
        if (const char* env = std::getenv("CLUSTER_LAB_OUTPUT_DIR")) config.output_dir = env;
        if (!output_dir_override.empty()) config.output_dir = output_dir_override;
        if (seed_set) config.seed = seed_override;

        int code = clusterlab::kExitOk;
        if (gen->parsed()) code = clusterlab::cmd_gen_data(config);
        else if (chk->parsed()) code = clusterlab::cmd_check_assumption(config);
        else if (trn->parsed()) code = clusterlab::cmd_train(config);
        else if (kkt->parsed()) code = clusterlab::cmd_kkt_report(config);
        else if (atk->parsed()) code = clusterlab::cmd_attack(config);
        else if (rob->parsed()) code = clusterlab::cmd_robust_baseline(config);
        else if (e2e->parsed()) code = clusterlab::cmd_e2e(config);

        if (code == clusterlab::kExitInfeasibleSpec)
            std::cerr << "spec infeasible for this subcommand (see assumption.json)\n";
        if (code == clusterlab::kExitDivergence)
            std::cerr << "training diverged (see trajectory.csv)\n";
        return code;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return clusterlab::kExitBadConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
