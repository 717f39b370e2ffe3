#ifndef CLUSTERLAB_FLOW_HPP
#define CLUSTERLAB_FLOW_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "clusterlab/clusters.hpp"
#include "clusterlab/relu2.hpp"
#include "clusterlab/rng.hpp"

namespace clusterlab {

enum class LossKind { exponential, logistic };

// exponential: l(q) = e^{-q}.  logistic: l(q) = log2(1 + e^{-q}).
double loss_value(LossKind kind, double q);
double loss_derivative(LossKind kind, double q);

enum class StepSchedule { fixed, loss_normalized };

struct FlowConfig {
    int width = 64;
    double init_scale = 0.1;
    double step = 1e-3;
    StepSchedule schedule = StepSchedule::loss_normalized;
    int max_steps = 100000;
    double target_loss = -1.0;  // <= 0 means 1/n
    int post_target_steps = 0;
    int snapshot_every = 1000;
    double kink_convention = 1.0;
    std::uint64_t seed = 0;

    void validate() const;  // throws std::invalid_argument
};

struct Snapshot {
    int step = 0;
    double loss = 0.0;
    double min_margin = 0.0;
    double theta_norm = 0.0;
    double direction_distance_to_final = 0.0;
    Params theta;
};

struct Trajectory {
    std::vector<Snapshot> snapshots;
    Params final_theta;
    bool reached_target = false;
    int t0_step = -1;  // first step with loss < target, -1 if never
    bool diverged = false;
};

double empirical_loss(const Params& theta, const Dataset& dataset, LossKind kind);

// Gaussian w entries of std init_scale/sqrt(d), zero biases, alternating
// +-init_scale/sqrt(m) output weights.
Params init_params(int d, const FlowConfig& config, Rng& rng);

// Discretized gradient flow: full-batch descent with closed-form gradients.
// The loss_normalized schedule takes eta_t = step / L(theta), a time
// reparameterization that leaves the directional limit unchanged.  On
// divergence the trajectory is returned with diverged = true and a final
// diagnostic snapshot.
Trajectory train(const Dataset& dataset, const FlowConfig& config, Rng& rng,
                 LossKind kind = LossKind::exponential);

// || a/||a|| - b/||b|| || over flattened parameters; throws on zero norm.
double direction_distance(const Params& a, const Params& b);

std::string trajectory_to_csv(const Trajectory& traj);

}  // namespace clusterlab

#endif
