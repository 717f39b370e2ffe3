#include "clusterlab/flow.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace clusterlab {

namespace {

const double kLn2 = std::log(2.0);

Eigen::VectorXd label_vector(const Dataset& ds) {
    Eigen::VectorXd y(ds.n);
    for (int i = 0; i < ds.n; ++i) y(i) = static_cast<double>(ds.y[static_cast<std::size_t>(i)]);
    return y;
}

}  // namespace

double loss_value(LossKind kind, double q) {
    switch (kind) {
        case LossKind::exponential:
            return std::exp(-q);
        case LossKind::logistic:
            // log2(1 + e^{-q}), stable for both signs of q.
            return std::log1p(std::exp(-std::abs(q))) / kLn2 + (q < 0.0 ? -q / kLn2 : 0.0);
    }
    return 0.0;
}

double loss_derivative(LossKind kind, double q) {
    switch (kind) {
        case LossKind::exponential:
            return -std::exp(-q);
        case LossKind::logistic: {
            // -e^{-q} / ((1 + e^{-q}) ln 2) = -sigmoid(-q) / ln 2
            const double s = 1.0 / (1.0 + std::exp(q));
            return -s / kLn2;
        }
    }
    return 0.0;
}

void FlowConfig::validate() const {
    if (width < 1) throw std::invalid_argument("FlowConfig: width must be positive");
    if (!(init_scale > 0.0)) throw std::invalid_argument("FlowConfig: init_scale must be positive");
    if (!(step > 0.0)) throw std::invalid_argument("FlowConfig: step must be positive");
    if (max_steps < 1) throw std::invalid_argument("FlowConfig: max_steps must be at least 1");
    if (post_target_steps < 0) throw std::invalid_argument("FlowConfig: post_target_steps must be >= 0");
    if (snapshot_every < 1) throw std::invalid_argument("FlowConfig: snapshot_every must be positive");
    if (kink_convention < 0.0 || kink_convention > 1.0)
        throw std::invalid_argument("FlowConfig: kink_convention must lie in [0, 1]");
}

double empirical_loss(const Params& theta, const Dataset& dataset, LossKind kind) {
    if (dataset.n < 1) throw std::invalid_argument("empirical_loss: empty dataset");
    const Eigen::VectorXd q = margins(theta, dataset);
    double acc = 0.0;
    for (int i = 0; i < dataset.n; ++i) acc += loss_value(kind, q(i));
    return acc / static_cast<double>(dataset.n);
}

Params init_params(int d, const FlowConfig& config, Rng& rng) {
    Params theta;
    theta.d = d;
    theta.w.resize(config.width, d);
    theta.b = Eigen::VectorXd::Zero(config.width);
    theta.v.resize(config.width);
    const double w_std = config.init_scale / std::sqrt(static_cast<double>(d));
    const double v_mag = config.init_scale / std::sqrt(static_cast<double>(config.width));
    for (int j = 0; j < config.width; ++j) {
        for (int c = 0; c < d; ++c) theta.w(j, c) = w_std * rng.gaussian();
        theta.v(j) = (j % 2 == 0) ? v_mag : -v_mag;
    }
    return theta;
}

Trajectory train(const Dataset& ds, const FlowConfig& config, Rng& rng, LossKind kind) {
    config.validate();
    if (ds.n < 1) throw std::invalid_argument("train: empty dataset");
    const int n = ds.n;
    const int m = config.width;
    const int d = ds.spec.d;
    const double target = config.target_loss > 0.0 ? config.target_loss
                                                   : 1.0 / static_cast<double>(n);

    Params theta = init_params(d, config, rng);
    const Eigen::VectorXd y = label_vector(ds);
    const Eigen::MatrixXd& x = ds.x;

    Trajectory traj;
    int steps_after_target = -1;  // counts down once the target is reached

    Eigen::MatrixXd pre(n, m), act(n, m), pattern(n, m), coeff(n, m);
    Eigen::VectorXd out(n), q(n), s(n);

    auto evaluate = [&](double& loss, double& min_margin) {
        pre.noalias() = x * theta.w.transpose();
        pre.rowwise() += theta.b.transpose();
        act = pre.cwiseMax(0.0);
        out.noalias() = act * theta.v;
        q = y.cwiseProduct(out);
        min_margin = q.minCoeff();
        double acc = 0.0;
        for (int i = 0; i < n; ++i) acc += loss_value(kind, q(i));
        loss = acc / static_cast<double>(n);
    };

    auto push_snapshot = [&](int step, double loss, double min_margin) {
        Snapshot snap;
        snap.step = step;
        snap.loss = loss;
        snap.min_margin = min_margin;
        snap.theta_norm = theta.norm();
        snap.theta = theta;
        traj.snapshots.push_back(std::move(snap));
    };

    int step_idx = 0;
    for (; step_idx < config.max_steps; ++step_idx) {
        double loss, min_margin;
        evaluate(loss, min_margin);

        if (!std::isfinite(loss)) {
            traj.diverged = true;
            push_snapshot(step_idx, loss, min_margin);
            break;
        }

        if (step_idx % config.snapshot_every == 0) push_snapshot(step_idx, loss, min_margin);

        if (traj.t0_step < 0 && loss < target) {
            traj.t0_step = step_idx;
            traj.reached_target = true;
            steps_after_target = config.post_target_steps;
        }
        if (steps_after_target == 0) break;
        if (steps_after_target > 0) --steps_after_target;

        // Numerical convergence floor: below this the gradients underflow and
        // the loss-normalized step 1/L overflows, so the trajectory is final.
        if (loss < 1e-280) break;

        for (int i = 0; i < n; ++i)
            s(i) = loss_derivative(kind, q(i)) * y(i) / static_cast<double>(n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j)
                pattern(i, j) = relu_subgradient(pre(i, j), config.kink_convention);
        coeff = pattern.array().colwise() * s.array();

        Eigen::MatrixXd grad_w = coeff.transpose() * x;
        grad_w.array().colwise() *= theta.v.array();
        Eigen::VectorXd grad_b = coeff.colwise().sum().transpose().cwiseProduct(theta.v);
        Eigen::VectorXd grad_v = act.transpose() * s;

        const double eta = config.schedule == StepSchedule::loss_normalized
                               ? config.step / loss
                               : config.step;
        theta.w.noalias() -= eta * grad_w;
        theta.b -= eta * grad_b;
        theta.v -= eta * grad_v;
    }

    if (!traj.diverged) {
        double loss, min_margin;
        evaluate(loss, min_margin);
        if (traj.snapshots.empty() || traj.snapshots.back().step != step_idx)
            push_snapshot(step_idx, loss, min_margin);
    }

    traj.final_theta = theta;
    for (Snapshot& snap : traj.snapshots) {
        const double a = snap.theta.norm();
        const double b = traj.final_theta.norm();
        snap.direction_distance_to_final =
            (a > 0.0 && b > 0.0) ? direction_distance(snap.theta, traj.final_theta) : 0.0;
    }
    return traj;
}

double direction_distance(const Params& a, const Params& b) {
    const Eigen::VectorXd fa = a.flatten();
    const Eigen::VectorXd fb = b.flatten();
    const double na = fa.norm();
    const double nb = fb.norm();
    if (!(na > 0.0) || !(nb > 0.0))
        throw std::invalid_argument("direction_distance: zero-norm input");
    return (fa / na - fb / nb).norm();
}

std::string trajectory_to_csv(const Trajectory& traj) {
    std::ostringstream out;
    out.precision(17);
    out << "step,loss,min_margin,theta_norm,dir_dist\n";
    for (const Snapshot& s : traj.snapshots) {
        out << s.step << "," << s.loss << "," << s.min_margin << ","
            << s.theta_norm << "," << s.direction_distance_to_final << "\n";
    }
    return out.str();
}

}  // namespace clusterlab
