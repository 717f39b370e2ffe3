#ifndef CLUSTERLAB_CLUSTERS_HPP
#define CLUSTERLAB_CLUSTERS_HPP

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "clusterlab/rng.hpp"

namespace clusterlab {

enum class MeansMode { orthogonal, uniform_sphere, custom };

// The clustered distribution: k cluster means of norm sqrt(d), binary labels,
// isotropic Gaussian noise of scale sigma.
struct ClusterSpec {
    int d = 0;
    int k = 0;
    double sigma = 0.0;
    std::vector<int> labels;   // k entries in {-1, +1}
    Eigen::MatrixXd means;     // k x d, each row of norm sqrt(d)

    // Throws std::invalid_argument on any violated invariant.
    void validate() const;

    int positive_count() const;
    int negative_count() const;

    // u = sum_q y^(q) mu^(q), shared by the linear separator and the
    // universal perturbation direction.
    Eigen::VectorXd label_weighted_mean_sum() const;
};

struct Dataset {
    ClusterSpec spec;
    int n = 0;
    std::uint64_t seed = 0;
    Eigen::MatrixXd x;            // n x d
    Eigen::MatrixXd xi;           // n x d, noise so that x = mu^(cluster) + xi
    std::vector<int> y;           // n entries in {-1, +1}
    std::vector<int> cluster;     // n entries in [0, k)

    std::vector<int> cluster_indices(int q) const;
};

// All scalar quantities derived from a spec that the structural bounds use.
struct AssumptionReport {
    double p = 0.0;        // max cross-cluster |<mu_q, mu_q'>|
    double delta = 0.0;    // 4 sigma sqrt(d) ln d
    double c_prime = 0.0;  // k (p + delta + 1) / (d - delta + 1)
    double lhs = 0.0;      // k (p + delta + 1)
    double rhs = 0.0;      // (d - delta + 1) / 10
    bool assumption_holds = false;
    bool delta_small = false;              // delta <= d / 21
    double perturbation_denominator = 0.0; // d - delta - k p - k delta
    double c = 0.0;        // min(|Q+|, |Q-|) / k
};

struct NicenessReport {
    std::array<bool, 6> pass{};    // P1..P6
    std::array<double, 6> slack{}; // threshold minus achieved worst case; >= 0 iff pass
    bool all() const;
    bool p(int idx) const { return pass.at(static_cast<std::size_t>(idx - 1)); }
};

// Generates cluster means of norm sqrt(d). Orthogonal mode scales standard
// basis vectors; uniform_sphere normalizes a Gaussian vector and scales by
// sqrt(d); custom validates the supplied rows.
Eigen::MatrixXd make_means(MeansMode mode, int d, int k, Rng& rng,
                           const std::optional<Eigen::MatrixXd>& custom = std::nullopt);

ClusterSpec make_cluster_spec(MeansMode mode, int d, int k, double sigma,
                              std::vector<int> labels, Rng& rng,
                              const std::optional<Eigen::MatrixXd>& custom = std::nullopt);

// Pure and deterministic; never throws on infeasible specs, only reports.
AssumptionReport check_assumption(const ClusterSpec& spec);

Dataset sample_dataset(const ClusterSpec& spec, int n, Rng& rng);

NicenessReport check_niceness(const Dataset& dataset);

// True iff the fresh point x = mu^(r) + xi interacts with every training point
// within the Delta / p + Delta envelopes.
bool check_test_point(const Dataset& dataset, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& xi, int r);

// Fraction of testset classified correctly by sign(u^T x), sign(0) = -1.
double linear_separator_rate(const ClusterSpec& spec, const Dataset& testset);

// sign convention used throughout: sign(z) = 1 if z > 0, else -1.
inline int sign_of(double z) { return z > 0.0 ? 1 : -1; }

// Serialization (schemas documented in the README).
std::string cluster_spec_to_json(const ClusterSpec& spec);
ClusterSpec cluster_spec_from_json(const std::string& text);
std::string dataset_to_json(const Dataset& dataset);
Dataset dataset_from_json(const std::string& text);
std::string dataset_to_csv(const Dataset& dataset);

std::string assumption_report_to_json(const AssumptionReport& r);
std::string niceness_report_to_json(const NicenessReport& r);

}  // namespace clusterlab

#endif
