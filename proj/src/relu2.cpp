#include "clusterlab/relu2.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace clusterlab {

namespace {

constexpr std::uint64_t kParamsMagic = 0x32756C6572UL;  // "relu2" packed LE
constexpr std::uint64_t kParamsVersion = 1;

void require_dim(const Params& theta, const Eigen::VectorXd& x) {
    if (static_cast<int>(x.size()) != theta.d)
        throw std::invalid_argument("relu2: input dimension mismatch");
}

}  // namespace

Eigen::VectorXd Params::flatten() const {
    Eigen::VectorXd flat(flat_size());
    int pos = 0;
    for (int j = 0; j < m(); ++j)
        for (int c = 0; c < d; ++c) flat(pos++) = w(j, c);
    for (int j = 0; j < m(); ++j) flat(pos++) = b(j);
    for (int j = 0; j < m(); ++j) flat(pos++) = v(j);
    return flat;
}

Params Params::from_flat(const Eigen::VectorXd& flat, int m, int d) {
    if (static_cast<int>(flat.size()) != m * d + 2 * m)
        throw std::invalid_argument("Params::from_flat: size mismatch");
    Params theta;
    theta.d = d;
    theta.w.resize(m, d);
    theta.b.resize(m);
    theta.v.resize(m);
    int pos = 0;
    for (int j = 0; j < m; ++j)
        for (int c = 0; c < d; ++c) theta.w(j, c) = flat(pos++);
    for (int j = 0; j < m; ++j) theta.b(j) = flat(pos++);
    for (int j = 0; j < m; ++j) theta.v(j) = flat(pos++);
    return theta;
}

void Params::check_finite() const {
    if (!w.allFinite() || !b.allFinite() || !v.allFinite())
        throw std::invalid_argument("Params: non-finite entry");
}

Eigen::VectorXd preactivations(const Params& theta, const Eigen::VectorXd& x) {
    require_dim(theta, x);
    Eigen::VectorXd p(theta.m());
    for (int j = 0; j < theta.m(); ++j) {
        double acc = 0.0;
        for (int c = 0; c < theta.d; ++c) acc += theta.w(j, c) * x(c);
        p(j) = acc + theta.b(j);
    }
    return p;
}

Eigen::VectorXd activation_pattern(const Params& theta, const Eigen::VectorXd& x,
                                   double convention) {
    if (convention < 0.0 || convention > 1.0)
        throw std::invalid_argument("relu2: kink convention must lie in [0, 1]");
    const Eigen::VectorXd p = preactivations(theta, x);
    Eigen::VectorXd phi(theta.m());
    for (int j = 0; j < theta.m(); ++j) phi(j) = relu_subgradient(p(j), convention);
    return phi;
}

double forward(const Params& theta, const Eigen::VectorXd& x) {
    const Eigen::VectorXd p = preactivations(theta, x);
    double out = 0.0;
    for (int j = 0; j < theta.m(); ++j) out += theta.v(j) * std::max(0.0, p(j));
    return out;
}

Eigen::VectorXd forward_batch(const Params& theta, const Eigen::MatrixXd& x) {
    if (static_cast<int>(x.cols()) != theta.d)
        throw std::invalid_argument("relu2: input dimension mismatch");
    Eigen::MatrixXd p = x * theta.w.transpose();
    p.rowwise() += theta.b.transpose();
    return p.cwiseMax(0.0) * theta.v;
}

Params grad_params(const Params& theta, const Eigen::VectorXd& x, int y,
                   double convention) {
    if (convention < 0.0 || convention > 1.0)
        throw std::invalid_argument("relu2: kink convention must lie in [0, 1]");
    require_dim(theta, x);
    const Eigen::VectorXd p = preactivations(theta, x);
    Params g;
    g.d = theta.d;
    g.w.resize(theta.m(), theta.d);
    g.b.resize(theta.m());
    g.v.resize(theta.m());
    const double yd = static_cast<double>(y);
    for (int j = 0; j < theta.m(); ++j) {
        const double phi_prime = relu_subgradient(p(j), convention);
        g.w.row(j) = yd * theta.v(j) * phi_prime * x.transpose();
        g.b(j) = yd * theta.v(j) * phi_prime;
        g.v(j) = yd * std::max(0.0, p(j));
    }
    return g;
}

Eigen::VectorXd grad_input(const Params& theta, const Eigen::VectorXd& x,
                           double convention) {
    const Eigen::VectorXd phi = activation_pattern(theta, x, convention);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(theta.d);
    for (int j = 0; j < theta.m(); ++j) g += theta.v(j) * phi(j) * theta.w.row(j).transpose();
    return g;
}

Params scale(const Params& theta, double alpha) {
    if (!(alpha > 0.0)) throw std::invalid_argument("relu2: scale needs alpha > 0");
    Params out = theta;
    out.w *= alpha;
    out.b *= alpha;
    out.v *= alpha;
    return out;
}

std::pair<double, double> homogeneity_check(const Params& theta,
                                            const Eigen::VectorXd& x, double alpha) {
    return {forward(scale(theta, alpha), x), alpha * alpha * forward(theta, x)};
}

Eigen::VectorXd margins(const Params& theta, const Dataset& dataset) {
    const Eigen::VectorXd out = forward_batch(theta, dataset.x);
    Eigen::VectorXd q(dataset.n);
    for (int i = 0; i < dataset.n; ++i)
        q(i) = static_cast<double>(dataset.y[static_cast<std::size_t>(i)]) * out(i);
    return q;
}

Params normalize_to_unit_margin(const Params& theta, const Dataset& dataset) {
    const double min_margin = margins(theta, dataset).minCoeff();
    if (!(min_margin > 0.0))
        throw std::runtime_error("normalize_to_unit_margin: non-positive minimum margin");
    // Degree-2 homogeneity: dividing theta by sqrt(min margin) sets it to 1.
    return scale(theta, 1.0 / std::sqrt(min_margin));
}

using nlohmann::json;

std::string params_to_json(const Params& theta) {
    json rows = json::array();
    for (int j = 0; j < theta.m(); ++j) {
        json row = json::array();
        for (int c = 0; c < theta.d; ++c) row.push_back(theta.w(j, c));
        rows.push_back(std::move(row));
    }
    json jb = json::array(), jv = json::array();
    for (int j = 0; j < theta.m(); ++j) {
        jb.push_back(theta.b(j));
        jv.push_back(theta.v(j));
    }
    json j{{"width", theta.m()}, {"d", theta.d}, {"w", std::move(rows)},
           {"b", std::move(jb)}, {"v", std::move(jv)}};
    return j.dump();
}

Params params_from_json(const std::string& text) {
    const json j = json::parse(text);
    const int m = j.at("width").get<int>();
    Params theta;
    theta.d = j.at("d").get<int>();
    theta.w.resize(m, theta.d);
    theta.b.resize(m);
    theta.v.resize(m);
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < theta.d; ++c)
            theta.w(r, c) = j.at("w").at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c)).get<double>();
    for (int r = 0; r < m; ++r) {
        theta.b(r) = j.at("b").at(static_cast<std::size_t>(r)).get<double>();
        theta.v(r) = j.at("v").at(static_cast<std::size_t>(r)).get<double>();
    }
    theta.check_finite();
    return theta;
}

void save_params_binary(const Params& theta, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_params_binary: cannot open " + path);
    const std::uint64_t header[8] = {kParamsMagic, kParamsVersion,
                                     static_cast<std::uint64_t>(theta.m()),
                                     static_cast<std::uint64_t>(theta.d),
                                     0, 0, 0, 0};
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    const Eigen::VectorXd flat = theta.flatten();
    out.write(reinterpret_cast<const char*>(flat.data()),
              static_cast<std::streamsize>(sizeof(double)) * flat.size());
    if (!out) throw std::runtime_error("save_params_binary: write failed");
}

Params load_params_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_params_binary: cannot open " + path);
    std::uint64_t header[8];
    in.read(reinterpret_cast<char*>(header), sizeof(header));
    if (!in || header[0] != kParamsMagic || header[1] != kParamsVersion)
        throw std::runtime_error("load_params_binary: bad header");
    const int m = static_cast<int>(header[2]);
    const int d = static_cast<int>(header[3]);
    Eigen::VectorXd flat(m * d + 2 * m);
    in.read(reinterpret_cast<char*>(flat.data()),
            static_cast<std::streamsize>(sizeof(double)) * flat.size());
    if (!in) throw std::runtime_error("load_params_binary: truncated payload");
    return Params::from_flat(flat, m, d);
}

}  // namespace clusterlab
