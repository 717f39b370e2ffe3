#ifndef CLUSTERLAB_KKT_HPP
#define CLUSTERLAB_KKT_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "clusterlab/clusters.hpp"
#include "clusterlab/relu2.hpp"

namespace clusterlab {

struct KKTReport {
    Eigen::VectorXd lambda;        // length n, zero off the active set
    std::vector<int> active_set;   // indices with margin <= 1 + active_tol
    double stationarity_abs = 0.0; // || theta - sum_i lambda_i grad_i ||
    double stationarity_rel = 0.0; // stationarity_abs / || theta ||
    double slackness_violation = 0.0;  // max_i lambda_i |q_i - 1|
    double min_margin = 0.0;
    bool feasible = false;         // min_margin >= 1 - 1e-6
};

struct ClusterAggregates {
    // Per cluster q: sum over i in I^(q), j with v_j > 0 (resp. < 0) of
    // lambda_i v_j^2 phi'_{i,j}.
    Eigen::VectorXd a_plus;
    Eigen::VectorXd a_minus;
};

struct AggregateBoundCheck {
    double upper = 0.0;  // 1 / ((1 - 2c')(d - Delta + 1))
    double lower = 0.0;  // (1 - c'/(1 - 2c')) / (3d + Delta + 1)
    std::vector<bool> pass;  // per cluster
};

// Deterministic nonnegative least squares min ||a x - b||, x >= 0
// (Lawson-Hanson active-set iteration on the normal equations; ties in the
// pivot choice broken toward the smallest index).
Eigen::VectorXd nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b);

// Fits multipliers for a unit-margin-normalized theta: minimizes
// || theta - sum_i lambda_i grad_theta(y_i N(x_i)) || over lambda >= 0
// supported on the active set.  Throws if no point lies near margin 1.
std::pair<Eigen::VectorXd, double> fit_multipliers(const Params& theta,
                                                   const Dataset& dataset,
                                                   double active_tol,
                                                   double kink_convention = 1.0);

// Normalizes theta to unit margin, fits multipliers, fills every field.
KKTReport kkt_report(const Params& theta, const Dataset& dataset,
                     double active_tol, double kink_convention = 1.0);

ClusterAggregates cluster_aggregates(const Params& theta, const Eigen::VectorXd& lambda,
                                     const Dataset& dataset, double kink_convention = 1.0);

// Per-cluster check against the structural bounds; the lower bound applies to
// the aggregate matching the cluster's label sign.
AggregateBoundCheck check_aggregate_bounds(const ClusterAggregates& agg,
                                           const AssumptionReport& report,
                                           const ClusterSpec& spec, double slack);

// Fraction of test points with |N(x)| <= 2.
double output_magnitude_check(const Params& theta,
                              const std::vector<Eigen::VectorXd>& testpoints);

std::string kkt_report_to_json(const KKTReport& r);
std::string cluster_aggregates_to_json(const ClusterAggregates& agg);

}  // namespace clusterlab

#endif
