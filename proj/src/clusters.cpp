#include "clusterlab/clusters.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace clusterlab {

namespace {

constexpr double kNormRelTol = 1e-9;

double cross_cluster_max_correlation(const Eigen::MatrixXd& means) {
    const int k = static_cast<int>(means.rows());
    double p = 0.0;
    for (int a = 0; a < k; ++a) {
        for (int b = a + 1; b < k; ++b) {
            p = std::max(p, std::abs(means.row(a).dot(means.row(b))));
        }
    }
    return p;
}

}  // namespace

void ClusterSpec::validate() const {
    if (d < 1) throw std::invalid_argument("ClusterSpec: d must be positive");
    if (k < 2) throw std::invalid_argument("ClusterSpec: k must be at least 2");
    if (k > d) throw std::invalid_argument("ClusterSpec: k must not exceed d");
    if (!(sigma > 0.0) || sigma > 1.0)
        throw std::invalid_argument("ClusterSpec: sigma must lie in (0, 1]");
    if (static_cast<int>(labels.size()) != k)
        throw std::invalid_argument("ClusterSpec: need one label per cluster");
    if (means.rows() != k || means.cols() != d)
        throw std::invalid_argument("ClusterSpec: means must be k x d");
    bool has_pos = false, has_neg = false;
    for (int lab : labels) {
        if (lab == 1) has_pos = true;
        else if (lab == -1) has_neg = true;
        else throw std::invalid_argument("ClusterSpec: labels must be +1 or -1");
    }
    if (!has_pos || !has_neg)
        throw std::invalid_argument("ClusterSpec: both labels must be present");
    const double target = std::sqrt(static_cast<double>(d));
    for (int q = 0; q < k; ++q) {
        const double norm = means.row(q).norm();
        if (std::abs(norm - target) > kNormRelTol * target)
            throw std::invalid_argument("ClusterSpec: mean norm must equal sqrt(d)");
    }
}

int ClusterSpec::positive_count() const {
    return static_cast<int>(std::count(labels.begin(), labels.end(), 1));
}

int ClusterSpec::negative_count() const {
    return static_cast<int>(std::count(labels.begin(), labels.end(), -1));
}

Eigen::VectorXd ClusterSpec::label_weighted_mean_sum() const {
    Eigen::VectorXd u = Eigen::VectorXd::Zero(d);
    for (int q = 0; q < k; ++q) u += labels[static_cast<std::size_t>(q)] * means.row(q).transpose();
    return u;
}

std::vector<int> Dataset::cluster_indices(int q) const {
    std::vector<int> idx;
    for (int i = 0; i < n; ++i)
        if (cluster[static_cast<std::size_t>(i)] == q) idx.push_back(i);
    return idx;
}

bool NicenessReport::all() const {
    for (bool b : pass)
        if (!b) return false;
    return true;
}

Eigen::MatrixXd make_means(MeansMode mode, int d, int k, Rng& rng,
                           const std::optional<Eigen::MatrixXd>& custom) {
    if (d < 1 || k < 1) throw std::invalid_argument("make_means: d, k must be positive");
    const double scale = std::sqrt(static_cast<double>(d));
    Eigen::MatrixXd means(k, d);
    switch (mode) {
        case MeansMode::orthogonal:
            if (k > d) throw std::invalid_argument("make_means: orthogonal mode needs k <= d");
            means.setZero();
            for (int q = 0; q < k; ++q) means(q, q) = scale;
            break;
        case MeansMode::uniform_sphere:
            for (int q = 0; q < k; ++q) {
                Eigen::VectorXd g(d);
                for (int j = 0; j < d; ++j) g(j) = rng.gaussian();
                means.row(q) = (scale / g.norm()) * g.transpose();
            }
            break;
        case MeansMode::custom: {
            if (!custom) throw std::invalid_argument("make_means: custom mode needs vectors");
            if (custom->rows() != k || custom->cols() != d)
                throw std::invalid_argument("make_means: custom means must be k x d");
            for (int q = 0; q < k; ++q) {
                const double norm = custom->row(q).norm();
                if (std::abs(norm - scale) > kNormRelTol * scale)
                    throw std::invalid_argument("make_means: custom mean norm must be sqrt(d)");
            }
            means = *custom;
            break;
        }
    }
    return means;
}

ClusterSpec make_cluster_spec(MeansMode mode, int d, int k, double sigma,
                              std::vector<int> labels, Rng& rng,
                              const std::optional<Eigen::MatrixXd>& custom) {
    ClusterSpec spec;
    spec.d = d;
    spec.k = k;
    spec.sigma = sigma;
    spec.labels = std::move(labels);
    spec.means = make_means(mode, d, k, rng, custom);
    spec.validate();
    return spec;
}

AssumptionReport check_assumption(const ClusterSpec& spec) {
    AssumptionReport r;
    const double d = static_cast<double>(spec.d);
    const double k = static_cast<double>(spec.k);
    r.p = cross_cluster_max_correlation(spec.means);
    r.delta = 4.0 * spec.sigma * std::sqrt(d) * std::log(d);
    r.lhs = k * (r.p + r.delta + 1.0);
    r.rhs = (d - r.delta + 1.0) / 10.0;
    r.assumption_holds = r.lhs <= r.rhs;
    r.c_prime = k * (r.p + r.delta + 1.0) / (d - r.delta + 1.0);
    r.delta_small = r.delta <= d / 21.0;
    r.perturbation_denominator = d - r.delta - k * r.p - k * r.delta;
    const double npos = spec.positive_count();
    const double nneg = spec.negative_count();
    r.c = std::min(npos, nneg) / k;
    return r;
}

Dataset sample_dataset(const ClusterSpec& spec, int n, Rng& rng) {
    spec.validate();
    if (n < 1) throw std::invalid_argument("sample_dataset: n must be at least 1");
    Dataset ds;
    ds.spec = spec;
    ds.n = n;
    ds.x.resize(n, spec.d);
    ds.xi.resize(n, spec.d);
    ds.y.resize(static_cast<std::size_t>(n));
    ds.cluster.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int q = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(spec.k)));
        ds.cluster[static_cast<std::size_t>(i)] = q;
        ds.y[static_cast<std::size_t>(i)] = spec.labels[static_cast<std::size_t>(q)];
        for (int j = 0; j < spec.d; ++j) ds.xi(i, j) = spec.sigma * rng.gaussian();
        ds.x.row(i) = spec.means.row(q) + ds.xi.row(i);
        // Re-derive xi from the rounded sum so x - mu - xi is bit-exactly zero.
        ds.xi.row(i) = ds.x.row(i) - spec.means.row(q);
    }
    return ds;
}

NicenessReport check_niceness(const Dataset& ds) {
    NicenessReport r;
    const ClusterSpec& spec = ds.spec;
    const AssumptionReport ar = check_assumption(spec);
    const double d = static_cast<double>(spec.d);
    const double sigma = spec.sigma;
    const double lnd = std::log(d);

    // P1: noise norms.
    const double t1 = sigma * std::sqrt(2.0 * d);
    double worst1 = 0.0;
    for (int i = 0; i < ds.n; ++i) worst1 = std::max(worst1, ds.xi.row(i).norm());
    r.slack[0] = t1 - worst1;

    // P2: pairwise noise products.  P4/P5: pairwise sample products.
    const double t2 = sigma * sigma * std::sqrt(2.0 * d) * lnd;
    const double t4 = ar.p + ar.delta;
    double worst2 = 0.0;
    double worst4 = 0.0;
    double worst5_lo = std::numeric_limits<double>::infinity();
    double worst5_hi = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < ds.n; ++i) {
        for (int j = i + 1; j < ds.n; ++j) {
            worst2 = std::max(worst2, std::abs(ds.xi.row(i).dot(ds.xi.row(j))));
            const double prod = ds.x.row(i).dot(ds.x.row(j));
            if (ds.cluster[static_cast<std::size_t>(i)] != ds.cluster[static_cast<std::size_t>(j)]) {
                worst4 = std::max(worst4, std::abs(prod));
            } else {
                worst5_lo = std::min(worst5_lo, prod);
                worst5_hi = std::max(worst5_hi, prod);
            }
        }
    }
    r.slack[1] = t2 - worst2;
    r.slack[3] = t4 - worst4;
    if (std::isfinite(worst5_lo)) {
        r.slack[4] = std::min(worst5_lo - (d - ar.delta), (3.0 * d + ar.delta) - worst5_hi);
    } else {
        r.slack[4] = 0.0;  // no same-cluster pair: vacuous
    }

    // P3: mean-noise products.
    const double t3 = sigma * std::sqrt(d) * lnd;
    double worst3 = 0.0;
    for (int i = 0; i < ds.n; ++i)
        for (int q = 0; q < spec.k; ++q)
            worst3 = std::max(worst3, std::abs(spec.means.row(q).dot(ds.xi.row(i))));
    r.slack[2] = t3 - worst3;

    // P6: every cluster represented.
    std::vector<bool> hit(static_cast<std::size_t>(spec.k), false);
    for (int c : ds.cluster) hit[static_cast<std::size_t>(c)] = true;
    bool all_hit = std::all_of(hit.begin(), hit.end(), [](bool b) { return b; });
    r.slack[5] = all_hit ? 1.0 : -1.0;

    for (int idx = 0; idx < 6; ++idx)
        r.pass[static_cast<std::size_t>(idx)] = r.slack[static_cast<std::size_t>(idx)] >= 0.0;
    return r;
}

bool check_test_point(const Dataset& ds, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& xi, int r) {
    if (r < 0 || r >= ds.spec.k)
        throw std::invalid_argument("check_test_point: cluster index out of range");
    const AssumptionReport ar = check_assumption(ds.spec);
    const double d = static_cast<double>(ds.spec.d);
    for (int i = 0; i < ds.n; ++i) {
        if (std::abs(ds.x.row(i).dot(xi)) > ar.delta) return false;
        if (std::abs(ds.xi.row(i).dot(xi)) > ar.delta) return false;
        const double prod = ds.x.row(i).dot(x);
        if (ds.cluster[static_cast<std::size_t>(i)] == r) {
            if (std::abs(prod - d) > ar.delta) return false;
        } else {
            if (std::abs(prod) > ar.p + ar.delta) return false;
        }
    }
    return true;
}

double linear_separator_rate(const ClusterSpec& spec, const Dataset& testset) {
    const Eigen::VectorXd u = spec.label_weighted_mean_sum();
    int correct = 0;
    for (int i = 0; i < testset.n; ++i) {
        if (sign_of(u.dot(testset.x.row(i))) == testset.y[static_cast<std::size_t>(i)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(testset.n);
}

// --- serialization ---

using nlohmann::json;

namespace {

json means_to_json(const Eigen::MatrixXd& means) {
    json rows = json::array();
    for (Eigen::Index q = 0; q < means.rows(); ++q) {
        json row = json::array();
        for (Eigen::Index j = 0; j < means.cols(); ++j) row.push_back(means(q, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd means_from_json(const json& rows) {
    const auto k = static_cast<Eigen::Index>(rows.size());
    if (k == 0) throw std::invalid_argument("means: empty");
    const auto d = static_cast<Eigen::Index>(rows.at(0).size());
    Eigen::MatrixXd means(k, d);
    for (Eigen::Index q = 0; q < k; ++q)
        for (Eigen::Index j = 0; j < d; ++j)
            means(q, j) = rows.at(static_cast<std::size_t>(q)).at(static_cast<std::size_t>(j)).get<double>();
    return means;
}

json spec_to_json_obj(const ClusterSpec& spec) {
    return json{{"d", spec.d},
                {"k", spec.k},
                {"sigma", spec.sigma},
                {"labels", spec.labels},
                {"means", means_to_json(spec.means)}};
}

ClusterSpec spec_from_json_obj(const json& j) {
    ClusterSpec spec;
    spec.d = j.at("d").get<int>();
    spec.k = j.at("k").get<int>();
    spec.sigma = j.at("sigma").get<double>();
    spec.labels = j.at("labels").get<std::vector<int>>();
    spec.means = means_from_json(j.at("means"));
    spec.validate();
    return spec;
}

}  // namespace

std::string cluster_spec_to_json(const ClusterSpec& spec) {
    return spec_to_json_obj(spec).dump(2);
}

ClusterSpec cluster_spec_from_json(const std::string& text) {
    return spec_from_json_obj(json::parse(text));
}

std::string dataset_to_json(const Dataset& ds) {
    json points = json::array();
    for (int i = 0; i < ds.n; ++i) {
        json px = json::array(), pxi = json::array();
        for (int j = 0; j < ds.spec.d; ++j) {
            px.push_back(ds.x(i, j));
            pxi.push_back(ds.xi(i, j));
        }
        points.push_back(json{{"cluster", ds.cluster[static_cast<std::size_t>(i)]},
                              {"y", ds.y[static_cast<std::size_t>(i)]},
                              {"x", std::move(px)},
                              {"xi", std::move(pxi)}});
    }
    json j{{"spec", spec_to_json_obj(ds.spec)},
           {"n", ds.n},
           {"seed", ds.seed},
           {"points", std::move(points)}};
    return j.dump();
}

Dataset dataset_from_json(const std::string& text) {
    const json j = json::parse(text);
    Dataset ds;
    ds.spec = spec_from_json_obj(j.at("spec"));
    ds.n = j.at("n").get<int>();
    ds.seed = j.at("seed").get<std::uint64_t>();
    ds.x.resize(ds.n, ds.spec.d);
    ds.xi.resize(ds.n, ds.spec.d);
    ds.y.resize(static_cast<std::size_t>(ds.n));
    ds.cluster.resize(static_cast<std::size_t>(ds.n));
    const json& points = j.at("points");
    for (int i = 0; i < ds.n; ++i) {
        const json& pt = points.at(static_cast<std::size_t>(i));
        ds.cluster[static_cast<std::size_t>(i)] = pt.at("cluster").get<int>();
        ds.y[static_cast<std::size_t>(i)] = pt.at("y").get<int>();
        for (int c = 0; c < ds.spec.d; ++c) {
            ds.x(i, c) = pt.at("x").at(static_cast<std::size_t>(c)).get<double>();
            ds.xi(i, c) = pt.at("xi").at(static_cast<std::size_t>(c)).get<double>();
        }
    }
    return ds;
}

std::string dataset_to_csv(const Dataset& ds) {
    std::ostringstream out;
    out.precision(17);
    out << "index,cluster,y";
    for (int j = 0; j < ds.spec.d; ++j) out << ",x_" << j;
    out << "\n";
    for (int i = 0; i < ds.n; ++i) {
        out << i << "," << ds.cluster[static_cast<std::size_t>(i)] << ","
            << ds.y[static_cast<std::size_t>(i)];
        for (int j = 0; j < ds.spec.d; ++j) out << "," << ds.x(i, j);
        out << "\n";
    }
    return out.str();
}

std::string assumption_report_to_json(const AssumptionReport& r) {
    json j{{"p", r.p},
           {"delta", r.delta},
           {"c_prime", r.c_prime},
           {"lhs", r.lhs},
           {"rhs", r.rhs},
           {"assumption_holds", r.assumption_holds},
           {"delta_small", r.delta_small},
           {"perturbation_denominator", r.perturbation_denominator},
           {"c", r.c}};
    return j.dump(2);
}

std::string niceness_report_to_json(const NicenessReport& r) {
    json j;
    for (int i = 0; i < 6; ++i) {
        const std::string key = "p" + std::to_string(i + 1);
        j[key] = r.pass[static_cast<std::size_t>(i)];
        j[key + "_slack"] = r.slack[static_cast<std::size_t>(i)];
    }
    j["all"] = r.all();
    return j.dump(2);
}

}  // namespace clusterlab
