#ifndef CLUSTERLAB_RELU2_HPP
#define CLUSTERLAB_RELU2_HPP

#include <Eigen/Dense>
#include <string>
#include <utility>

#include "clusterlab/clusters.hpp"

namespace clusterlab {

// Depth-2 ReLU network N(x) = sum_j v_j relu(w_j^T x + b_j), trained in both
// layers.  theta is the concatenation [w_1..w_m, b, v]; homogeneous with L=2.
struct Params {
    int d = 0;
    Eigen::MatrixXd w;  // m x d
    Eigen::VectorXd b;  // m
    Eigen::VectorXd v;  // m

    int m() const { return static_cast<int>(v.size()); }
    int flat_size() const { return m() * d + 2 * m(); }

    // Flatten order: w row-major, then b, then v.
    Eigen::VectorXd flatten() const;
    static Params from_flat(const Eigen::VectorXd& flat, int m, int d);

    double norm() const { return flatten().norm(); }
    void check_finite() const;  // throws on non-finite entries
};

// Subgradient of relu at z, with the configurable value at the kink.
inline double relu_subgradient(double z, double convention) {
    if (z > 0.0) return 1.0;
    if (z < 0.0) return 0.0;
    return convention;
}

Eigen::VectorXd preactivations(const Params& theta, const Eigen::VectorXd& x);

// phi'_j per neuron for input x.
Eigen::VectorXd activation_pattern(const Params& theta, const Eigen::VectorXd& x,
                                   double convention = 1.0);

// Sequential accumulation over neurons and coordinates for cross-run
// determinism.
double forward(const Params& theta, const Eigen::VectorXd& x);

// Batched outputs via matrix products (same values as forward up to fp
// reassociation; see tests for the consistency tolerance).
Eigen::VectorXd forward_batch(const Params& theta, const Eigen::MatrixXd& x);

// Gradient of y * N(x) in theta, with the given kink convention in [0, 1].
Params grad_params(const Params& theta, const Eigen::VectorXd& x, int y,
                   double convention = 1.0);

// Gradient of N in the input: sum_j v_j phi'_j w_j.
Eigen::VectorXd grad_input(const Params& theta, const Eigen::VectorXd& x,
                           double convention = 1.0);

Params scale(const Params& theta, double alpha);

// (forward(alpha * theta, x), alpha^2 * forward(theta, x)).
std::pair<double, double> homogeneity_check(const Params& theta,
                                            const Eigen::VectorXd& x, double alpha);

// q_i = y_i * N(x_i).
Eigen::VectorXd margins(const Params& theta, const Dataset& dataset);

// Divides theta by (min margin)^(1/2); throws if the minimum margin is not
// positive (theta infeasible for the unit-margin problem).
Params normalize_to_unit_margin(const Params& theta, const Dataset& dataset);

std::string params_to_json(const Params& theta);
Params params_from_json(const std::string& text);
void save_params_binary(const Params& theta, const std::string& path);
Params load_params_binary(const std::string& path);

}  // namespace clusterlab

#endif
