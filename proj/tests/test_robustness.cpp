#include <cmath>

#include "doctest.h"

#include "clusterlab/robustness.hpp"

using namespace clusterlab;

namespace {

ClusterSpec desk_spec(std::uint64_t seed = 1) {
    Rng rng(seed);
    return make_cluster_spec(MeansMode::orthogonal, 1024, 10, 0.01,
                             {1, 1, 1, 1, 1, -1, -1, -1, -1, -1}, rng);
}

// Scalar-arithmetic route for eta1/eta2, written independently of the module.
std::pair<double, double> eta_oracle(int d_i, int k_i, double sigma, double p, double c) {
    const double d = d_i, k = k_i;
    const double delta = 4.0 * sigma * std::sqrt(d) * std::log(d);
    const double denom = d - delta - k * p - k * delta;
    const double cp = k * (p + delta + 1.0) / (d - delta + 1.0);
    const double eta1 = (2.0 * delta + p + 1.0) / denom;
    const double eta2 =
        3.0 * (3.0 * d + delta + 1.0) * (1.0 - 2.0 * cp) / (denom * (1.0 - 3.0 * cp) * c * k);
    return {eta1, eta2};
}

}  // namespace

TEST_CASE("universal perturbation on orthogonal desk-scale means") {
    const ClusterSpec spec = desk_spec();
    const AssumptionReport report = check_assumption(spec);
    REQUIRE(report.assumption_holds);
    const Perturbation pert = universal_perturbation(spec, report);

    CHECK(pert.eta1 > 0.0);
    CHECK(pert.eta2 > 0.0);
    const auto [e1, e2] = eta_oracle(1024, 10, 0.01, 0.0, 0.5);
    CHECK(pert.eta1 == doctest::Approx(e1).epsilon(1e-12));
    CHECK(pert.eta2 == doctest::Approx(e2).epsilon(1e-12));

    // Orthogonality: ||sum y mu|| = sqrt(k d) exactly.
    const double u_norm = std::sqrt(10.0 * 1024.0);
    CHECK(pert.norm == doctest::Approx((pert.eta1 + pert.eta2) * u_norm).epsilon(1e-12));
    CHECK(pert.norm <= pert.norm_bound * (1.0 + 1e-12));

    // z is exactly (eta1 + eta2) sum_q y mu_q.
    const Eigen::VectorXd expected_z =
        (pert.eta1 + pert.eta2) * spec.label_weighted_mean_sum();
    CHECK((pert.z - expected_z).norm() == 0.0);
}

TEST_CASE("universal perturbation refuses infeasible specs") {
    Rng rng(0);
    const int d = 16;
    Eigen::MatrixXd means(2, d);
    means.setZero();
    means(0, 0) = 4.0;
    means(1, 0) = 4.0;  // p = d, denominator negative
    const ClusterSpec bad = make_cluster_spec(MeansMode::custom, d, 2, 0.5, {1, -1}, rng, means);
    const AssumptionReport report = check_assumption(bad);
    CHECK_THROWS_AS(universal_perturbation(bad, report), std::runtime_error);
}

TEST_CASE("zero perturbation flips nothing") {
    const ClusterSpec spec = desk_spec();
    Rng rng(5);
    const Dataset testset = sample_dataset(spec, 200, rng);
    const Params theta_rob = build_robust_network(spec);
    Perturbation zero;
    zero.z = Eigen::VectorXd::Zero(spec.d);
    CHECK(flip_rate(theta_rob, zero, testset) == 0.0);
}

TEST_CASE("flip rate is invariant under scaling theta") {
    const ClusterSpec spec = desk_spec();
    const AssumptionReport report = check_assumption(spec);
    const Perturbation pert = universal_perturbation(spec, report);
    Rng rng(7);
    const Dataset testset = sample_dataset(spec, 500, rng);
    const Params theta_rob = build_robust_network(spec);
    const double base = flip_rate(theta_rob, pert, testset);
    CHECK(flip_rate(scale(theta_rob, 0.25), pert, testset) == base);
    CHECK(flip_rate(scale(theta_rob, 8.0), pert, testset) == base);
}

TEST_CASE("robust construction has the prescribed entries and outputs") {
    const ClusterSpec spec = desk_spec();
    const Params theta = build_robust_network(spec);
    REQUIRE(theta.m() == spec.k);
    for (int j = 0; j < spec.k; ++j) {
        CHECK(theta.v(j) == static_cast<double>(spec.labels[static_cast<std::size_t>(j)]));
        CHECK(theta.b(j) == -2.0);
        CHECK((theta.w.row(j) - 4.0 * spec.means.row(j) / 1024.0).norm() == 0.0);
    }
    // At x = mu_q with orthogonal means: preactivation 2 for neuron q, -2
    // elsewhere, so N(x) = 2 y_q.
    for (int q = 0; q < spec.k; ++q) {
        const double out = forward(theta, spec.means.row(q).transpose());
        CHECK(out == doctest::Approx(2.0 * spec.labels[static_cast<std::size_t>(q)]).epsilon(1e-12));
    }
}

TEST_CASE("robust construction pads wider networks with inert neurons") {
    const ClusterSpec spec = desk_spec();
    const Params wide = build_robust_network(spec, 16);
    CHECK(wide.m() == 16);
    for (int q = 0; q < spec.k; ++q) {
        const double narrow_out = forward(build_robust_network(spec), spec.means.row(q).transpose());
        CHECK(forward(wide, spec.means.row(q).transpose()) == doctest::Approx(narrow_out));
    }
    CHECK_THROWS_AS(build_robust_network(spec, 5), std::invalid_argument);
}

TEST_CASE("grad_input norm of the robust net with one active neuron is 4/sqrt(d)") {
    const ClusterSpec spec = desk_spec();
    const Params theta = build_robust_network(spec);
    const Eigen::VectorXd g = grad_input(theta, spec.means.row(0).transpose());
    CHECK(g.norm() == doctest::Approx(4.0 / std::sqrt(1024.0)).epsilon(1e-12));
}

TEST_CASE("certification at the means and at a pathological midpoint") {
    const ClusterSpec spec = desk_spec();
    const Params theta = build_robust_network(spec);
    for (int q = 0; q < spec.k; ++q) {
        const CertifyResult res =
            certify_robust_point(theta, spec.means.row(q).transpose(),
                                 spec.labels[static_cast<std::size_t>(q)]);
        CHECK(res.certified);
        CHECK(res.active_count == 1);
        CHECK(res.margin == doctest::Approx(2.0).epsilon(1e-12));
    }
    // Equidistant point activating two neurons: not certified, report only.
    const Eigen::VectorXd mid =
        0.75 * (spec.means.row(0) + spec.means.row(1)).transpose();
    const CertifyResult res = certify_robust_point(theta, mid, 1);
    CHECK(res.active_count == 2);
    CHECK_FALSE(res.certified);
}

TEST_CASE("certificate soundness: random sqrt(d)/8 perturbations never flip") {
    const ClusterSpec spec = desk_spec();
    const Params theta = build_robust_network(spec);
    Rng rng(11);
    const double radius = std::sqrt(1024.0) / 8.0;
    for (int q = 0; q < 3; ++q) {
        const Eigen::VectorXd x = spec.means.row(q).transpose();
        REQUIRE(certify_robust_point(theta, x, spec.labels[static_cast<std::size_t>(q)]).certified);
        const int base = sign_of(forward(theta, x));
        for (int t = 0; t < 100; ++t) {
            const Eigen::VectorXd perturbed = x + random_sphere_point(1024, radius, rng);
            CHECK(sign_of(forward(theta, perturbed)) == base);
        }
    }
}

TEST_CASE("minimal flip norm closed form on a linear-like network") {
    // Two neurons realizing v w^T x exactly (relu(t) - relu(-t) = t).
    const int d = 8;
    Eigen::VectorXd w(d);
    w << 1, 2, 0, -1, 0.5, 0, 0, 3;
    Params theta;
    theta.d = d;
    theta.w.resize(2, d);
    theta.w.row(0) = w.transpose();
    theta.w.row(1) = -w.transpose();
    theta.b = Eigen::VectorXd::Zero(2);
    theta.v.resize(2);
    theta.v << 1.0, -1.0;

    Eigen::VectorXd x = Eigen::VectorXd::Ones(d);
    const double a = w.dot(x);
    REQUIRE(a > 0.0);
    const auto s = minimal_flip_norm(theta, x, 1, w, 2.0 * a / w.norm());
    REQUIRE(s.has_value());
    CHECK(*s == doctest::Approx(a / w.norm()).epsilon(2e-3));
}

TEST_CASE("minimal flip norm returns nullopt when no flip occurs") {
    const ClusterSpec spec = desk_spec();
    const Params theta = build_robust_network(spec);
    const Eigen::VectorXd x = spec.means.row(0).transpose();
    const Eigen::VectorXd dir = spec.means.row(1).transpose();
    const auto s = minimal_flip_norm(theta, x, 1, dir, std::sqrt(1024.0) / 8.0);
    CHECK_FALSE(s.has_value());
    CHECK_THROWS_AS(minimal_flip_norm(theta, x, 1, Eigen::VectorXd::Zero(1024), 1.0),
                    std::invalid_argument);
}

TEST_CASE("linear baseline exact values on orthogonal means") {
    const ClusterSpec spec = desk_spec();
    Rng rng(13);
    const Dataset testset = sample_dataset(spec, 2000, rng);
    const LinearBaseline lin = linear_baseline(spec, testset);
    CHECK(lin.gradient_norm == doctest::Approx(std::sqrt(10.0 / 1024.0)).epsilon(1e-12));
    CHECK(lin.accuracy >= 0.999);
    // sigma small: |w^T x| ~ 1, flip norm ~ sqrt(d/k).
    CHECK(lin.median_flip_norm ==
          doctest::Approx(std::sqrt(1024.0 / 10.0)).epsilon(0.05));
}

TEST_CASE("linear baseline under degenerate noise gives flip norm sqrt(d/k)") {
    Rng rng(17);
    const ClusterSpec spec = make_cluster_spec(MeansMode::orthogonal, 64, 4, 1e-15,
                                               {1, 1, -1, -1}, rng);
    Rng data_rng(19);
    const Dataset testset = sample_dataset(spec, 100, data_rng);
    const LinearBaseline lin = linear_baseline(spec, testset);
    CHECK(lin.accuracy == 1.0);
    CHECK(lin.median_flip_norm == doctest::Approx(std::sqrt(64.0 / 4.0)).epsilon(1e-9));
}
