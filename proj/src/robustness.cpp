#include "clusterlab/robustness.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace clusterlab {

Perturbation universal_perturbation(const ClusterSpec& spec, const AssumptionReport& report) {
    if (!(report.perturbation_denominator > 0.0))
        throw std::runtime_error("universal_perturbation: assumption violated, perturbation undefined");
    if (report.c_prime >= 1.0 / 3.0)
        throw std::runtime_error("universal_perturbation: c' >= 1/3, eta2 undefined");
    if (!(report.c > 0.0))
        throw std::runtime_error("universal_perturbation: both label signs required");

    const double d = static_cast<double>(spec.d);
    const double k = static_cast<double>(spec.k);
    const double denom = report.perturbation_denominator;  // d - Delta - kp - kDelta
    const double cp = report.c_prime;

    Perturbation p;
    p.c_used = report.c;
    p.eta1 = (2.0 * report.delta + report.p + 1.0) / denom;
    p.eta2 = 3.0 * (3.0 * d + report.delta + 1.0) * (1.0 - 2.0 * cp) /
             (denom * (1.0 - 3.0 * cp) * report.c * k);
    p.z = (p.eta1 + p.eta2) * spec.label_weighted_mean_sum();
    p.norm = p.z.norm();
    const double eta_sum = p.eta1 + p.eta2;
    p.norm_bound = std::sqrt(eta_sum * eta_sum * (k * d + k * k * report.p));
    return p;
}

double flip_rate(const Params& theta, const Perturbation& pert, const Dataset& testset) {
    const Eigen::VectorXd clean = forward_batch(theta, testset.x);
    Eigen::MatrixXd shifted = testset.x;
    for (int i = 0; i < testset.n; ++i)
        shifted.row(i) -= static_cast<double>(testset.y[static_cast<std::size_t>(i)]) *
                          pert.z.transpose();
    const Eigen::VectorXd perturbed = forward_batch(theta, shifted);
    int flips = 0;
    for (int i = 0; i < testset.n; ++i)
        if (sign_of(clean(i)) != sign_of(perturbed(i))) ++flips;
    return static_cast<double>(flips) / static_cast<double>(testset.n);
}

std::optional<double> minimal_flip_norm(const Params& theta, const Eigen::VectorXd& x,
                                        int y, const Eigen::VectorXd& direction,
                                        double s_max) {
    const double dir_norm = direction.norm();
    if (!(dir_norm > 0.0)) throw std::invalid_argument("minimal_flip_norm: zero direction");
    if (!(s_max > 0.0)) throw std::invalid_argument("minimal_flip_norm: s_max must be positive");

    const Eigen::VectorXd unit = direction / dir_norm;
    const int base_sign = sign_of(forward(theta, x));
    auto flipped = [&](double s) {
        return sign_of(forward(theta, x - static_cast<double>(y) * s * unit)) != base_sign;
    };

    constexpr int kScanPoints = 64;
    double lo = 0.0, hi = -1.0;
    for (int i = 1; i <= kScanPoints; ++i) {
        const double s = s_max * static_cast<double>(i) / kScanPoints;
        if (flipped(s)) {
            hi = s;
            break;
        }
        lo = s;
    }
    if (hi < 0.0) return std::nullopt;

    // The flip boundary of a piecewise-linear net can have several crossings;
    // this returns the first one found by the scan.
    while (hi - lo > 1e-3 * hi) {
        const double mid = 0.5 * (lo + hi);
        if (flipped(mid)) hi = mid;
        else lo = mid;
    }
    return hi;
}

Params build_robust_network(const ClusterSpec& spec, int width) {
    spec.validate();
    const int m = width < 0 ? spec.k : width;
    if (m < spec.k)
        throw std::invalid_argument("build_robust_network: width must be at least k");
    Params theta;
    theta.d = spec.d;
    theta.w = Eigen::MatrixXd::Zero(m, spec.d);
    theta.b = Eigen::VectorXd::Constant(m, -2.0);
    theta.v = Eigen::VectorXd::Zero(m);
    for (int j = 0; j < spec.k; ++j) {
        theta.v(j) = static_cast<double>(spec.labels[static_cast<std::size_t>(j)]);
        theta.w.row(j) = 4.0 * spec.means.row(j) / static_cast<double>(spec.d);
    }
    return theta;
}

CertifyResult certify_robust_point(const Params& theta_rob, const Eigen::VectorXd& x, int y) {
    const Eigen::VectorXd pre = preactivations(theta_rob, x);
    CertifyResult res;
    int top = 0;
    for (int j = 0; j < theta_rob.m(); ++j) {
        if (pre(j) > 0.0) ++res.active_count;
        if (pre(j) > pre(top)) top = j;
    }
    res.margin = static_cast<double>(y) * forward(theta_rob, x);
    res.certified = pre(top) >= 1.0;
    for (int j = 0; j < theta_rob.m(); ++j)
        if (j != top && pre(j) > -1.0) res.certified = false;
    return res;
}

LinearBaseline linear_baseline(const ClusterSpec& spec, const Dataset& testset) {
    LinearBaseline out;
    out.w = spec.label_weighted_mean_sum() / static_cast<double>(spec.d);
    out.gradient_norm = out.w.norm();
    int correct = 0;
    std::vector<double> flip_norms;
    flip_norms.reserve(static_cast<std::size_t>(testset.n));
    for (int i = 0; i < testset.n; ++i) {
        const double score = out.w.dot(testset.x.row(i));
        if (sign_of(score) == testset.y[static_cast<std::size_t>(i)]) ++correct;
        flip_norms.push_back(std::abs(score) / out.gradient_norm);
    }
    out.accuracy = static_cast<double>(correct) / static_cast<double>(testset.n);
    std::sort(flip_norms.begin(), flip_norms.end());
    const std::size_t mid = flip_norms.size() / 2;
    out.median_flip_norm = flip_norms.size() % 2 == 1
                               ? flip_norms[mid]
                               : 0.5 * (flip_norms[mid - 1] + flip_norms[mid]);
    return out;
}

Eigen::VectorXd random_sphere_point(int d, double radius, Rng& rng) {
    Eigen::VectorXd g(d);
    for (int j = 0; j < d; ++j) g(j) = rng.gaussian();
    return (radius / g.norm()) * g;
}

using nlohmann::json;

std::string robustness_report_to_json(const RobustnessReport& r) {
    json j{{"flip_rate", r.flip_rate},
           {"norm_z", r.norm_z},
           {"norm_bound", r.norm_bound},
           {"eta1", r.eta1},
           {"eta2", r.eta2},
           {"minimal_flip_norm_median", r.minimal_flip_norm_median},
           {"certified_fraction", r.certified_fraction}};
    return j.dump(2);
}

std::string perturbation_to_json(const Perturbation& p) {
    json z = json::array();
    for (Eigen::Index i = 0; i < p.z.size(); ++i) z.push_back(p.z(i));
    json j{{"z", std::move(z)},
           {"eta1", p.eta1},
           {"eta2", p.eta2},
           {"norm", p.norm},
           {"c_used", p.c_used},
           {"norm_bound", p.norm_bound}};
    return j.dump();
}

}  // namespace clusterlab
