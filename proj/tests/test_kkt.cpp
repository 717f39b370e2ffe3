#include <cmath>

#include "doctest.h"

#include "clusterlab/kkt.hpp"

using namespace clusterlab;

namespace {

// One-point instance with a closed-form KKT point: dataset {(x, +1)}, m = 1.
// Stationarity gives v = (||x||^2 + 1)^{-1/4}, w = v^3 x, b = v^3,
// lambda = 1 / sqrt(||x||^2 + 1), and the margin is exactly 1.
struct OnePointInstance {
    Dataset ds;
    Params theta;
    double lambda = 0.0;
};

OnePointInstance make_one_point_instance() {
    OnePointInstance inst;
    const int d = 6;
    Eigen::VectorXd x(d);
    x << 1.0, -2.0, 0.5, 0.0, 1.5, -1.0;

    ClusterSpec spec;
    spec.d = d;
    spec.k = 2;
    spec.sigma = 1e-6;
    spec.labels = {1, -1};
    spec.means = Eigen::MatrixXd::Zero(2, d);
    const double root_d = std::sqrt(static_cast<double>(d));
    spec.means(0, 0) = root_d;
    spec.means(1, 1) = root_d;

    inst.ds.spec = spec;
    inst.ds.n = 1;
    inst.ds.x = x.transpose();
    inst.ds.xi = (x - spec.means.row(0).transpose()).transpose();
    inst.ds.y = {1};
    inst.ds.cluster = {0};

    const double s = x.squaredNorm() + 1.0;
    const double v = std::pow(s, -0.25);
    inst.theta.d = d;
    inst.theta.w = (v * v * v * x).transpose();
    inst.theta.b = Eigen::VectorXd::Constant(1, v * v * v);
    inst.theta.v = Eigen::VectorXd::Constant(1, v);
    inst.lambda = 1.0 / std::sqrt(s);
    return inst;
}

}  // namespace

TEST_CASE("nnls solves a separable positive system exactly") {
    Eigen::MatrixXd a(3, 2);
    a << 1, 0, 0, 1, 0, 0;
    Eigen::VectorXd b(3);
    b << 2.0, 3.0, 0.0;
    const Eigen::VectorXd x = nnls(a, b);
    CHECK(x(0) == doctest::Approx(2.0));
    CHECK(x(1) == doctest::Approx(3.0));
}

TEST_CASE("nnls clips negative-only directions to zero") {
    Eigen::MatrixXd a(2, 1);
    a << 1, 1;
    Eigen::VectorXd b(2);
    b << -1.0, -2.0;
    const Eigen::VectorXd x = nnls(a, b);
    CHECK(x(0) == 0.0);
}

TEST_CASE("nnls matches the unconstrained solution when it is nonnegative") {
    Eigen::MatrixXd a(4, 2);
    a << 1, 0.2, 0.1, 1, 0.3, 0.4, 0.2, 0.1;
    Eigen::VectorXd b = a * (Eigen::VectorXd(2) << 1.5, 0.7).finished();
    const Eigen::VectorXd x = nnls(a, b);
    CHECK(x(0) == doctest::Approx(1.5).epsilon(1e-9));
    CHECK(x(1) == doctest::Approx(0.7).epsilon(1e-9));
}

TEST_CASE("analytic one-point instance: margin exactly 1 and fitted lambda matches") {
    const OnePointInstance inst = make_one_point_instance();
    CHECK(margins(inst.theta, inst.ds)(0) == doctest::Approx(1.0).epsilon(1e-12));

    const auto [lambda, residual] = fit_multipliers(inst.theta, inst.ds, 1e-2);
    CHECK(residual <= 1e-8);
    CHECK(lambda(0) == doctest::Approx(inst.lambda).epsilon(1e-8));
}

TEST_CASE("analytic one-point instance: full report matches the closed form") {
    const OnePointInstance inst = make_one_point_instance();
    const KKTReport r = kkt_report(inst.theta, inst.ds, 1e-2);
    CHECK(r.feasible);
    CHECK(r.min_margin == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(r.active_set == std::vector<int>{0});
    CHECK(r.stationarity_abs <= 1e-8);
    CHECK(r.slackness_violation <= 1e-8);
    CHECK(r.lambda(0) == doctest::Approx(inst.lambda).epsilon(1e-8));
}

TEST_CASE("local-optimality probe: single-coordinate perturbations cannot improve") {
    const OnePointInstance inst = make_one_point_instance();
    const auto [lambda, residual] = fit_multipliers(inst.theta, inst.ds, 1e-2);
    const Eigen::VectorXd theta_flat = inst.theta.flatten();
    const Eigen::VectorXd g =
        grad_params(inst.theta, inst.ds.x.row(0).transpose(), 1).flatten();
    for (double eps : {1e-4, -1e-4}) {
        const double lam = std::max(0.0, lambda(0) + eps);
        const double perturbed = (theta_flat - lam * g).norm();
        CHECK(perturbed >= residual - 1e-8);
    }
}

TEST_CASE("random feasible theta yields a large residual (negative control)") {
    const OnePointInstance inst = make_one_point_instance();
    // Feasible but far from stationarity: a wide random-ish net normalized to
    // unit margin.
    Params theta;
    theta.d = inst.ds.spec.d;
    theta.w = Eigen::MatrixXd::Zero(3, theta.d);
    theta.w(0, 0) = 1.0;
    theta.w(1, 2) = -0.5;
    theta.w(2, 4) = 2.0;
    theta.b = Eigen::VectorXd::Constant(3, 0.5);
    theta.v = (Eigen::VectorXd(3) << 1.0, 0.7, 0.4).finished();
    const Params normalized = normalize_to_unit_margin(theta, inst.ds);
    const auto [lambda, residual] = fit_multipliers(normalized, inst.ds, 1e-2);
    CHECK(residual > 1e-3);
}

TEST_CASE("fit_multipliers rejects infeasible theta and empty active sets") {
    const OnePointInstance inst = make_one_point_instance();
    CHECK_THROWS_AS(fit_multipliers(scale(inst.theta, 0.5), inst.ds, 1e-2),
                    std::runtime_error);
    // Margin far above 1 everywhere: empty active set.
    CHECK_THROWS_AS(fit_multipliers(scale(inst.theta, 10.0), inst.ds, 1e-2),
                    std::runtime_error);
}

TEST_CASE("kkt_report normalizes a scaled network back to unit margin") {
    const OnePointInstance inst = make_one_point_instance();
    const KKTReport r = kkt_report(scale(inst.theta, std::sqrt(0.5)), inst.ds, 1e-2);
    CHECK(r.min_margin == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(r.feasible);
}

TEST_CASE("cluster aggregates: zero lambda gives zero aggregates") {
    const OnePointInstance inst = make_one_point_instance();
    const Eigen::VectorXd lambda = Eigen::VectorXd::Zero(1);
    const ClusterAggregates agg = cluster_aggregates(inst.theta, lambda, inst.ds);
    CHECK(agg.a_plus.norm() == 0.0);
    CHECK(agg.a_minus.norm() == 0.0);
}

TEST_CASE("cluster aggregates on the analytic instance") {
    const OnePointInstance inst = make_one_point_instance();
    const auto [lambda, residual] = fit_multipliers(inst.theta, inst.ds, 1e-2);
    const ClusterAggregates agg = cluster_aggregates(inst.theta, lambda, inst.ds);
    // Single positive neuron, active at the single point: lambda v^2.
    const double expected = inst.lambda * inst.theta.v(0) * inst.theta.v(0);
    CHECK(agg.a_plus(0) == doctest::Approx(expected).epsilon(1e-6));
    CHECK(agg.a_minus(0) == 0.0);
    CHECK(agg.a_plus(1) == 0.0);  // no sample in cluster 1
}

TEST_CASE("aggregates are invariant under permuting examples within a cluster") {
    // Two identical points in one cluster; swapping them leaves sums unchanged.
    OnePointInstance inst = make_one_point_instance();
    Dataset ds = inst.ds;
    ds.n = 2;
    Eigen::MatrixXd x2(2, ds.spec.d);
    x2.row(0) = inst.ds.x.row(0);
    x2.row(1) = inst.ds.x.row(0);
    ds.x = x2;
    ds.xi = x2;  // xi content does not enter the aggregates
    ds.y = {1, 1};
    ds.cluster = {0, 0};
    Eigen::VectorXd lambda(2);
    lambda << 0.3, 0.6;
    const ClusterAggregates a = cluster_aggregates(inst.theta, lambda, ds);
    Eigen::VectorXd lambda_swapped(2);
    lambda_swapped << 0.6, 0.3;
    const ClusterAggregates b = cluster_aggregates(inst.theta, lambda_swapped, ds);
    CHECK(a.a_plus(0) == doctest::Approx(b.a_plus(0)).epsilon(1e-12));
}

TEST_CASE("aggregate bound check: lambda = 0 fails the lower bound only") {
    const OnePointInstance inst = make_one_point_instance();
    const AssumptionReport report = check_assumption(inst.ds.spec);
    ClusterAggregates agg;
    agg.a_plus = Eigen::VectorXd::Zero(2);
    agg.a_minus = Eigen::VectorXd::Zero(2);
    const AggregateBoundCheck chk =
        check_aggregate_bounds(agg, report, inst.ds.spec, 2.0);
    CHECK(chk.upper > 0.0);
    CHECK(chk.lower > 0.0);
    for (bool ok : chk.pass) CHECK_FALSE(ok);  // zero aggregate: below the lower bound
}

TEST_CASE("aggregate bound check evaluates the closed-form constants") {
    const OnePointInstance inst = make_one_point_instance();
    const AssumptionReport report = check_assumption(inst.ds.spec);
    ClusterAggregates agg;
    agg.a_plus = Eigen::VectorXd::Zero(2);
    agg.a_minus = Eigen::VectorXd::Zero(2);
    const AggregateBoundCheck chk = check_aggregate_bounds(agg, report, inst.ds.spec, 1.0);
    const double d = inst.ds.spec.d;
    const double cp = report.c_prime;
    CHECK(chk.upper ==
          doctest::Approx(1.0 / ((1.0 - 2.0 * cp) * (d - report.delta + 1.0))).epsilon(1e-12));
    CHECK(chk.lower ==
          doctest::Approx((1.0 - cp / (1.0 - 2.0 * cp)) / (3.0 * d + report.delta + 1.0))
              .epsilon(1e-12));
}

TEST_CASE("output magnitude check") {
    const OnePointInstance inst = make_one_point_instance();
    Params zero;
    zero.d = inst.ds.spec.d;
    zero.w = Eigen::MatrixXd::Zero(1, zero.d);
    zero.b = Eigen::VectorXd::Zero(1);
    zero.v = Eigen::VectorXd::Zero(1);
    std::vector<Eigen::VectorXd> pts{inst.ds.x.row(0).transpose()};
    CHECK(output_magnitude_check(zero, pts) == 1.0);  // |N| = 0 <= 2

    // Scaling by 10 lifts |N| to 100 at the sample: fraction 0.
    CHECK(output_magnitude_check(scale(inst.theta, 10.0), pts) == 0.0);
    CHECK(output_magnitude_check(inst.theta, pts) == 1.0);
}
