#ifndef CLUSTERLAB_HARNESS_HPP
#define CLUSTERLAB_HARNESS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "clusterlab/clusters.hpp"
#include "clusterlab/flow.hpp"
#include "clusterlab/kkt.hpp"
#include "clusterlab/robustness.hpp"

namespace clusterlab {

// Exit codes shared by the CLI subcommands.
inline constexpr int kExitOk = 0;
inline constexpr int kExitBadConfig = 2;
inline constexpr int kExitInfeasibleSpec = 3;
inline constexpr int kExitDivergence = 4;

struct ExperimentConfig {
    int d = 1024;
    int k = 10;
    double sigma = 0.01;
    std::string means_mode = "orthogonal";    // orthogonal | uniform_sphere
    std::string labels_pattern = "balanced";  // balanced | alternating
    int n = 480;
    FlowConfig flow;
    int test_set_size = 10000;
    double active_tol = 1e-2;
    double aggregate_slack = 2.0;
    std::string output_dir = "out";
    std::uint64_t seed = 1;

    void validate() const;
    std::vector<int> make_labels() const;
};

// Parses an experiment config; unknown keys are rejected (fail-closed).
// Throws std::invalid_argument on any schema violation.
ExperimentConfig experiment_config_from_json(const std::string& text);
std::string experiment_config_to_json(const ExperimentConfig& config);

// FNV-1a over the canonical JSON dump, hex encoded.
std::string config_hash(const ExperimentConfig& config);

struct RunRecord {
    std::string run_id;
    std::string config_hash;
    int exit_code = kExitOk;
    AssumptionReport assumption;
    NicenessReport niceness;
    bool reached_target = false;
    int t0_step = -1;
    double final_loss = 0.0;
    double final_min_margin = 0.0;
    double test_error = 0.0;
    KKTReport kkt;
    RobustnessReport robustness;
    double norm_z = 0.0;
    double train_seconds = 0.0;
    double total_seconds = 0.0;
};

std::string run_record_to_json(const ExperimentConfig& config, const RunRecord& record);

// Minimal hand-emitted SVG line chart; CSV is the canonical output.
std::string svg_line_chart(const std::vector<double>& xs, const std::vector<double>& ys,
                           const std::string& title, bool log_y = false);

// Derived streams for the stages of one run, all rooted at config.seed.
struct SeedPlan {
    Rng means, train_data, init, test_data, probes;
    explicit SeedPlan(std::uint64_t seed);
};

ClusterSpec build_spec(const ExperimentConfig& config, Rng& means_rng);

// Full pipeline: data, assumption and niceness checks, training, KKT
// diagnosis, both robustness constructions.  Writes reports, CSVs, and SVG
// plots under config.output_dir.  Never throws on infeasible or diverging
// runs; the record carries the exit code instead.
RunRecord run_e2e(const ExperimentConfig& config);

// Subcommand bodies used by the CLI (each writes files and returns an exit code).
int cmd_gen_data(const ExperimentConfig& config);
int cmd_check_assumption(const ExperimentConfig& config);
int cmd_train(const ExperimentConfig& config);
int cmd_kkt_report(const ExperimentConfig& config);
int cmd_attack(const ExperimentConfig& config);
int cmd_robust_baseline(const ExperimentConfig& config);
int cmd_e2e(const ExperimentConfig& config);

// Grid sweep: one run per config, rows independent of execution order,
// per-row failures recorded without aborting the sweep.
std::string sweep(const std::vector<ExperimentConfig>& grid, int parallelism);

// Expands {"base": {...}, "grid": {"k": [4, 6], ...}} into the cross product.
std::vector<ExperimentConfig> expand_sweep_config(const std::string& text);

}  // namespace clusterlab

#endif
