#ifndef CLUSTERLAB_ROBUSTNESS_HPP
#define CLUSTERLAB_ROBUSTNESS_HPP

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "clusterlab/clusters.hpp"
#include "clusterlab/relu2.hpp"
#include "clusterlab/rng.hpp"

namespace clusterlab {

// Universal perturbation z = (eta1 + eta2) sum_q y^(q) mu^(q), applied as
// x - y z.
struct Perturbation {
    Eigen::VectorXd z;
    double eta1 = 0.0;
    double eta2 = 0.0;
    double norm = 0.0;
    double c_used = 0.0;
    // Pre-asymptotic norm bound: sqrt((eta1 + eta2)^2 (kd + k^2 p)).
    double norm_bound = 0.0;
};

struct CertifyResult {
    int active_count = 0;
    double margin = 0.0;
    bool certified = false;
};

struct LinearBaseline {
    Eigen::VectorXd w;  // sum_q y^(q) mu^(q) / d
    double accuracy = 0.0;
    double gradient_norm = 0.0;
    double median_flip_norm = 0.0;
};

struct RobustnessReport {
    double flip_rate = 0.0;
    double norm_z = 0.0;
    double norm_bound = 0.0;
    double eta1 = 0.0;
    double eta2 = 0.0;
    double minimal_flip_norm_median = 0.0;
    double certified_fraction = 0.0;
};

// Throws std::runtime_error when the perturbation denominator is not positive
// or c' >= 1/3 (eta2's formula would extrapolate past its guarantee).
Perturbation universal_perturbation(const ClusterSpec& spec, const AssumptionReport& report);

// Fraction of test points with sign(N(x)) != sign(N(x - y z)).
double flip_rate(const Params& theta, const Perturbation& pert, const Dataset& testset);

// Smallest s in (0, s_max] flipping the sign along x - y s direction/||direction||,
// coarse 64-point scan then bisection to relative 1e-3; returns the first
// crossing, nullopt if the sign never flips by s_max.
std::optional<double> minimal_flip_norm(const Params& theta, const Eigen::VectorXd& x,
                                        int y, const Eigen::VectorXd& direction,
                                        double s_max);

// The explicit robust construction: v_j = y^(j), w_j = 4 mu^(j) / d,
// b_j = -2; widths beyond k are realized by zero-weight neurons.
Params build_robust_network(const ClusterSpec& spec, int width = -1);

// Certified iff the top neuron's preactivation >= 1 and all others <= -1;
// then each ||w_j|| = 4/sqrt(d) caps the preactivation drift at 1/2 for any
// perturbation of norm at most sqrt(d)/8.
CertifyResult certify_robust_point(const Params& theta_rob, const Eigen::VectorXd& x, int y);

// Linear model x -> w^T x with w = sum_q y^(q) mu^(q) / d.
LinearBaseline linear_baseline(const ClusterSpec& spec, const Dataset& testset);

// Uniform point on the sphere of the given radius.
Eigen::VectorXd random_sphere_point(int d, double radius, Rng& rng);

std::string robustness_report_to_json(const RobustnessReport& r);
std::string perturbation_to_json(const Perturbation& p);

}  // namespace clusterlab

#endif
