#include "clusterlab/kkt.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace clusterlab {

namespace {

constexpr double kFeasibilityTol = 1e-6;

}  // namespace

Eigen::VectorXd nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b) {
    const int ncols = static_cast<int>(a.cols());
    if (a.rows() != b.size()) throw std::invalid_argument("nnls: shape mismatch");

    const Eigen::MatrixXd gram = a.transpose() * a;
    const Eigen::VectorXd atb = a.transpose() * b;

    Eigen::VectorXd x = Eigen::VectorXd::Zero(ncols);
    std::vector<bool> passive(static_cast<std::size_t>(ncols), false);
    int passive_count = 0;

    const double grad_tol = 1e-12 * std::max(1.0, atb.cwiseAbs().maxCoeff());
    const int max_outer = 3 * ncols + 30;

    auto solve_passive = [&](Eigen::VectorXd& z) {
        std::vector<int> idx;
        for (int i = 0; i < ncols; ++i)
            if (passive[static_cast<std::size_t>(i)]) idx.push_back(i);
        const int np = static_cast<int>(idx.size());
        Eigen::MatrixXd gp(np, np);
        Eigen::VectorXd bp(np);
        for (int r = 0; r < np; ++r) {
            bp(r) = atb(idx[static_cast<std::size_t>(r)]);
            for (int c = 0; c < np; ++c)
                gp(r, c) = gram(idx[static_cast<std::size_t>(r)], idx[static_cast<std::size_t>(c)]);
        }
        const Eigen::VectorXd zp = gp.ldlt().solve(bp);
        z.setZero(ncols);
        for (int r = 0; r < np; ++r) z(idx[static_cast<std::size_t>(r)]) = zp(r);
    };

    for (int outer = 0; outer < max_outer; ++outer) {
        // Negative gradient of 0.5||ax - b||^2: pick the most positive
        // component in the zero set, smallest index on ties.
        const Eigen::VectorXd w = atb - gram * x;
        int best = -1;
        double best_val = grad_tol;
        for (int i = 0; i < ncols; ++i) {
            if (passive[static_cast<std::size_t>(i)]) continue;
            if (w(i) > best_val) {
                best_val = w(i);
                best = i;
            }
        }
        if (best < 0) break;
        passive[static_cast<std::size_t>(best)] = true;
        ++passive_count;

        int inner_guard = 2 * ncols + 2;
        while (inner_guard-- > 0) {
            Eigen::VectorXd z(ncols);
            solve_passive(z);

            double min_passive = 1.0;
            for (int i = 0; i < ncols; ++i)
                if (passive[static_cast<std::size_t>(i)])
                    min_passive = std::min(min_passive, z(i));
            if (min_passive > 0.0) {
                x = z;
                break;
            }

            // Step toward z until the first passive coordinate hits zero,
            // then drop the zeroed coordinates.
            double alpha = 1.0;
            for (int i = 0; i < ncols; ++i) {
                if (!passive[static_cast<std::size_t>(i)] || z(i) > 0.0) continue;
                const double denom = x(i) - z(i);
                if (denom > 0.0) alpha = std::min(alpha, x(i) / denom);
            }
            x += alpha * (z - x);
            for (int i = 0; i < ncols; ++i) {
                if (passive[static_cast<std::size_t>(i)] && x(i) <= 1e-14) {
                    passive[static_cast<std::size_t>(i)] = false;
                    --passive_count;
                }
                if (!passive[static_cast<std::size_t>(i)]) x(i) = 0.0;
            }
            if (passive_count == 0) break;
        }
    }
    return x;
}

std::pair<Eigen::VectorXd, double> fit_multipliers(const Params& theta,
                                                   const Dataset& ds,
                                                   double active_tol,
                                                   double kink_convention) {
    if (!(active_tol > 0.0)) throw std::invalid_argument("fit_multipliers: active_tol must be positive");
    const Eigen::VectorXd q = margins(theta, ds);
    if (q.minCoeff() < 1.0 - kFeasibilityTol)
        throw std::runtime_error("fit_multipliers: theta not feasible at unit margin");

    std::vector<int> active;
    for (int i = 0; i < ds.n; ++i)
        if (q(i) <= 1.0 + active_tol) active.push_back(i);
    if (active.empty())
        throw std::runtime_error("fit_multipliers: empty active set, not near any KKT point");

    const int flat = theta.flat_size();
    Eigen::MatrixXd g(flat, static_cast<int>(active.size()));
    for (std::size_t col = 0; col < active.size(); ++col) {
        const int i = active[col];
        const Params gi = grad_params(theta, ds.x.row(i).transpose(),
                                      ds.y[static_cast<std::size_t>(i)], kink_convention);
        g.col(static_cast<Eigen::Index>(col)) = gi.flatten();
    }

    const Eigen::VectorXd theta_flat = theta.flatten();
    const Eigen::VectorXd lam_active = nnls(g, theta_flat);

    Eigen::VectorXd lambda = Eigen::VectorXd::Zero(ds.n);
    for (std::size_t col = 0; col < active.size(); ++col)
        lambda(active[col]) = lam_active(static_cast<Eigen::Index>(col));
    const double residual = (theta_flat - g * lam_active).norm();
    return {lambda, residual};
}

KKTReport kkt_report(const Params& theta, const Dataset& ds, double active_tol,
                     double kink_convention) {
    const Params normalized = normalize_to_unit_margin(theta, ds);
    KKTReport r;
    const Eigen::VectorXd q = margins(normalized, ds);
    r.min_margin = q.minCoeff();
    r.feasible = r.min_margin >= 1.0 - kFeasibilityTol;

    auto [lambda, residual] = fit_multipliers(normalized, ds, active_tol, kink_convention);
    r.lambda = lambda;
    r.stationarity_abs = residual;
    const double theta_norm = normalized.norm();
    r.stationarity_rel = theta_norm > 0.0 ? residual / theta_norm : residual;
    for (int i = 0; i < ds.n; ++i) {
        if (q(i) <= 1.0 + active_tol) r.active_set.push_back(i);
        r.slackness_violation = std::max(r.slackness_violation,
                                         lambda(i) * std::abs(q(i) - 1.0));
    }
    return r;
}

ClusterAggregates cluster_aggregates(const Params& theta, const Eigen::VectorXd& lambda,
                                     const Dataset& ds, double kink_convention) {
    ClusterAggregates agg;
    agg.a_plus = Eigen::VectorXd::Zero(ds.spec.k);
    agg.a_minus = Eigen::VectorXd::Zero(ds.spec.k);
    for (int i = 0; i < ds.n; ++i) {
        if (lambda(i) == 0.0) continue;
        const Eigen::VectorXd phi =
            activation_pattern(theta, ds.x.row(i).transpose(), kink_convention);
        const int q = ds.cluster[static_cast<std::size_t>(i)];
        for (int j = 0; j < theta.m(); ++j) {
            const double term = lambda(i) * theta.v(j) * theta.v(j) * phi(j);
            if (theta.v(j) > 0.0) agg.a_plus(q) += term;
            else if (theta.v(j) < 0.0) agg.a_minus(q) += term;
        }
    }
    return agg;
}

AggregateBoundCheck check_aggregate_bounds(const ClusterAggregates& agg,
                                           const AssumptionReport& report,
                                           const ClusterSpec& spec, double slack) {
    if (!(slack >= 1.0)) throw std::invalid_argument("check_aggregate_bounds: slack must be >= 1");
    AggregateBoundCheck out;
    const double d = static_cast<double>(spec.d);
    const double cp = report.c_prime;
    out.upper = 1.0 / ((1.0 - 2.0 * cp) * (d - report.delta + 1.0));
    out.lower = (1.0 - cp / (1.0 - 2.0 * cp)) / (3.0 * d + report.delta + 1.0);
    out.pass.resize(static_cast<std::size_t>(spec.k));
    for (int q = 0; q < spec.k; ++q) {
        const double hi = std::max(agg.a_plus(q), agg.a_minus(q));
        const double matching = spec.labels[static_cast<std::size_t>(q)] > 0
                                    ? agg.a_plus(q)
                                    : agg.a_minus(q);
        out.pass[static_cast<std::size_t>(q)] =
            hi <= out.upper * slack && matching * slack >= out.lower;
    }
    return out;
}

double output_magnitude_check(const Params& theta,
                              const std::vector<Eigen::VectorXd>& testpoints) {
    if (testpoints.empty()) return 1.0;
    int ok = 0;
    for (const Eigen::VectorXd& x : testpoints)
        if (std::abs(forward(theta, x)) <= 2.0) ++ok;
    return static_cast<double>(ok) / static_cast<double>(testpoints.size());
}

using nlohmann::json;

std::string kkt_report_to_json(const KKTReport& r) {
    json lam = json::array();
    for (Eigen::Index i = 0; i < r.lambda.size(); ++i) lam.push_back(r.lambda(i));
    json j{{"lambda", std::move(lam)},
           {"active_set", r.active_set},
           {"stationarity_abs", r.stationarity_abs},
           {"stationarity_rel", r.stationarity_rel},
           {"slackness_violation", r.slackness_violation},
           {"min_margin", r.min_margin},
           {"feasible", r.feasible}};
    return j.dump(2);
}

std::string cluster_aggregates_to_json(const ClusterAggregates& agg) {
    json jp = json::array(), jm = json::array();
    for (Eigen::Index q = 0; q < agg.a_plus.size(); ++q) {
        jp.push_back(agg.a_plus(q));
        jm.push_back(agg.a_minus(q));
    }
    json j{{"a_plus", std::move(jp)}, {"a_minus", std::move(jm)}};
    return j.dump(2);
}

}  // namespace clusterlab
