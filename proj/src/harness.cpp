#include "clusterlab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace clusterlab {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
}

void reject_unknown_keys(const json& j, const std::vector<std::string>& allowed,
                         const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
            throw std::invalid_argument("unknown config key '" + it.key() + "' in " + where);
    }
}

FlowConfig flow_config_from_json(const json& j) {
    reject_unknown_keys(j, {"width", "init_scale", "step", "schedule", "max_steps",
                            "target_loss", "post_target_steps", "snapshot_every",
                            "kink_convention", "seed"},
                        "flow");
    FlowConfig f;
    if (j.contains("width")) f.width = j.at("width").get<int>();
    if (j.contains("init_scale")) f.init_scale = j.at("init_scale").get<double>();
    if (j.contains("step")) f.step = j.at("step").get<double>();
    if (j.contains("schedule")) {
        const std::string s = j.at("schedule").get<std::string>();
        if (s == "fixed") f.schedule = StepSchedule::fixed;
        else if (s == "loss_normalized") f.schedule = StepSchedule::loss_normalized;
        else throw std::invalid_argument("unknown schedule '" + s + "'");
    }
    if (j.contains("max_steps")) f.max_steps = j.at("max_steps").get<int>();
    if (j.contains("target_loss")) f.target_loss = j.at("target_loss").get<double>();
    if (j.contains("post_target_steps")) f.post_target_steps = j.at("post_target_steps").get<int>();
    if (j.contains("snapshot_every")) f.snapshot_every = j.at("snapshot_every").get<int>();
    if (j.contains("kink_convention")) f.kink_convention = j.at("kink_convention").get<double>();
    if (j.contains("seed")) f.seed = j.at("seed").get<std::uint64_t>();
    f.validate();
    return f;
}

json flow_config_to_json(const FlowConfig& f) {
    return json{{"width", f.width},
                {"init_scale", f.init_scale},
                {"step", f.step},
                {"schedule", f.schedule == StepSchedule::fixed ? "fixed" : "loss_normalized"},
                {"max_steps", f.max_steps},
                {"target_loss", f.target_loss},
                {"post_target_steps", f.post_target_steps},
                {"snapshot_every", f.snapshot_every},
                {"kink_convention", f.kink_convention},
                {"seed", f.seed}};
}

json config_to_json_obj(const ExperimentConfig& c) {
    return json{{"d", c.d},
                {"k", c.k},
                {"sigma", c.sigma},
                {"means_mode", c.means_mode},
                {"labels_pattern", c.labels_pattern},
                {"n", c.n},
                {"flow", flow_config_to_json(c.flow)},
                {"test_set_size", c.test_set_size},
                {"active_tol", c.active_tol},
                {"aggregate_slack", c.aggregate_slack},
                {"output_dir", c.output_dir},
                {"seed", c.seed}};
}

ExperimentConfig config_from_json_obj(const json& j) {
    reject_unknown_keys(j, {"d", "k", "sigma", "means_mode", "labels_pattern", "n",
                            "flow", "test_set_size", "active_tol", "aggregate_slack",
                            "output_dir", "seed"},
                        "experiment");
    ExperimentConfig c;
    if (j.contains("d")) c.d = j.at("d").get<int>();
    if (j.contains("k")) c.k = j.at("k").get<int>();
    if (j.contains("sigma")) c.sigma = j.at("sigma").get<double>();
    if (j.contains("means_mode")) c.means_mode = j.at("means_mode").get<std::string>();
    if (j.contains("labels_pattern")) c.labels_pattern = j.at("labels_pattern").get<std::string>();
    if (j.contains("n")) c.n = j.at("n").get<int>();
    if (j.contains("flow")) c.flow = flow_config_from_json(j.at("flow"));
    if (j.contains("test_set_size")) c.test_set_size = j.at("test_set_size").get<int>();
    if (j.contains("active_tol")) c.active_tol = j.at("active_tol").get<double>();
    if (j.contains("aggregate_slack")) c.aggregate_slack = j.at("aggregate_slack").get<double>();
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    c.validate();
    return c;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (d < 1 || k < 2 || n < 1) throw std::invalid_argument("config: d, k, n out of range");
    if (!(sigma > 0.0) || sigma > 1.0) throw std::invalid_argument("config: sigma out of range");
    if (means_mode != "orthogonal" && means_mode != "uniform_sphere")
        throw std::invalid_argument("config: unknown means_mode '" + means_mode + "'");
    if (labels_pattern != "balanced" && labels_pattern != "alternating")
        throw std::invalid_argument("config: unknown labels_pattern '" + labels_pattern + "'");
    if (test_set_size < 1) throw std::invalid_argument("config: test_set_size out of range");
    if (!(active_tol > 0.0)) throw std::invalid_argument("config: active_tol must be positive");
    if (!(aggregate_slack >= 1.0)) throw std::invalid_argument("config: aggregate_slack must be >= 1");
    flow.validate();
}

std::vector<int> ExperimentConfig::make_labels() const {
    std::vector<int> labels(static_cast<std::size_t>(k));
    if (labels_pattern == "balanced") {
        // First ceil(k/2) clusters positive, the rest negative.
        const int pos = (k + 1) / 2;
        for (int q = 0; q < k; ++q) labels[static_cast<std::size_t>(q)] = q < pos ? 1 : -1;
    } else {
        for (int q = 0; q < k; ++q) labels[static_cast<std::size_t>(q)] = q % 2 == 0 ? 1 : -1;
    }
    return labels;
}

ExperimentConfig experiment_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("config: invalid JSON: ") + e.what());
    }
    return config_from_json_obj(j);
}

std::string experiment_config_to_json(const ExperimentConfig& config) {
    return config_to_json_obj(config).dump(2);
}

std::string config_hash(const ExperimentConfig& config) {
    const std::string canon = config_to_json_obj(config).dump();
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char ch : canon) {
        h ^= ch;
        h *= 0x100000001B3ULL;
    }
    std::ostringstream out;
    out << std::hex << h;
    return out.str();
}

SeedPlan::SeedPlan(std::uint64_t seed)
    : means(Rng(seed).split(1)),
      train_data(Rng(seed).split(2)),
      init(Rng(seed).split(3)),
      test_data(Rng(seed).split(4)),
      probes(Rng(seed).split(5)) {}

ClusterSpec build_spec(const ExperimentConfig& config, Rng& means_rng) {
    const MeansMode mode = config.means_mode == "orthogonal" ? MeansMode::orthogonal
                                                             : MeansMode::uniform_sphere;
    return make_cluster_spec(mode, config.d, config.k, config.sigma,
                             config.make_labels(), means_rng);
}

std::string svg_line_chart(const std::vector<double>& xs, const std::vector<double>& ys,
                           const std::string& title, bool log_y) {
    const int width = 640, height = 400, margin = 50;
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
        << "\" height=\"" << height << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\">"
        << title << "</text>\n";
    if (!xs.empty() && xs.size() == ys.size()) {
        std::vector<double> py(ys);
        if (log_y)
            for (double& v : py) v = std::log10(std::max(v, 1e-300));
        double xmin = xs.front(), xmax = xs.front(), ymin = py.front(), ymax = py.front();
        for (std::size_t i = 0; i < xs.size(); ++i) {
            xmin = std::min(xmin, xs[i]); xmax = std::max(xmax, xs[i]);
            ymin = std::min(ymin, py[i]); ymax = std::max(ymax, py[i]);
        }
        if (xmax == xmin) xmax = xmin + 1.0;
        if (ymax == ymin) ymax = ymin + 1.0;
        out << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double px = margin + (xs[i] - xmin) / (xmax - xmin) * (width - 2 * margin);
            const double pyv = height - margin - (py[i] - ymin) / (ymax - ymin) * (height - 2 * margin);
            out << px << "," << pyv << " ";
        }
        out << "\"/>\n";
        out.precision(4);
        out << "<text x=\"" << margin << "\" y=\"" << height - 10 << "\">x: ["
            << xmin << ", " << xmax << "]  y" << (log_y ? " (log10)" : "") << ": ["
            << ymin << ", " << ymax << "]</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

namespace {

struct PipelineArtifacts {
    ClusterSpec spec;
    AssumptionReport assumption;
    Dataset train_set;
    NicenessReport niceness;
};

PipelineArtifacts make_data(const ExperimentConfig& config, SeedPlan& seeds) {
    PipelineArtifacts art;
    art.spec = build_spec(config, seeds.means);
    art.assumption = check_assumption(art.spec);
    art.train_set = sample_dataset(art.spec, config.n, seeds.train_data);
    art.train_set.seed = config.seed;
    art.niceness = check_niceness(art.train_set);
    return art;
}

void stamp(json& j, const ExperimentConfig& config) {
    j["seed"] = config.seed;
    j["config_hash"] = config_hash(config);
}

void write_stamped_json(const fs::path& path, const std::string& body,
                        const ExperimentConfig& config) {
    json j = json::parse(body);
    stamp(j, config);
    write_file(path, j.dump(2) + "\n");
}

}  // namespace

RunRecord run_e2e(const ExperimentConfig& config) {
    const auto t_start = std::chrono::steady_clock::now();
    SeedPlan seeds(config.seed);
    RunRecord rec;
    rec.config_hash = config_hash(config);
    rec.run_id = "run-" + rec.config_hash;
    const fs::path dir = fs::path(config.output_dir) / rec.run_id;

    PipelineArtifacts art = make_data(config, seeds);
    rec.assumption = art.assumption;
    rec.niceness = art.niceness;
    write_stamped_json(dir / "assumption.json", assumption_report_to_json(art.assumption), config);
    write_stamped_json(dir / "niceness.json", niceness_report_to_json(art.niceness), config);

    if (!art.assumption.assumption_holds) {
        rec.exit_code = kExitInfeasibleSpec;
        write_stamped_json(dir / "run_record.json", run_record_to_json(config, rec), config);
        return rec;
    }

    FlowConfig flow_cfg = config.flow;
    const auto t_train = std::chrono::steady_clock::now();
    Trajectory traj = train(art.train_set, flow_cfg, seeds.init);
    rec.train_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_train).count();
    rec.reached_target = traj.reached_target;
    rec.t0_step = traj.t0_step;
    write_file(dir / "trajectory.csv", trajectory_to_csv(traj));
    {
        std::vector<double> xs, losses, dists;
        for (const Snapshot& s : traj.snapshots) {
            xs.push_back(static_cast<double>(s.step));
            losses.push_back(s.loss);
            dists.push_back(s.direction_distance_to_final);
        }
        write_file(dir / "loss_curve.svg", svg_line_chart(xs, losses, "training loss", true));
        write_file(dir / "direction_distance.svg",
                   svg_line_chart(xs, dists, "direction distance to final"));
    }

    if (traj.diverged) {
        rec.exit_code = kExitDivergence;
        write_stamped_json(dir / "run_record.json", run_record_to_json(config, rec), config);
        return rec;
    }

    rec.final_loss = empirical_loss(traj.final_theta, art.train_set, LossKind::exponential);
    rec.final_min_margin = margins(traj.final_theta, art.train_set).minCoeff();
    save_params_binary(traj.final_theta, (dir / "final_theta.bin").string());
    write_file(dir / "final_theta.json", params_to_json(traj.final_theta));

    const Dataset test_set = sample_dataset(art.spec, config.test_set_size, seeds.test_data);
    {
        const Eigen::VectorXd q = margins(traj.final_theta, test_set);
        int errors = 0;
        for (int i = 0; i < test_set.n; ++i)
            if (q(i) <= 0.0) ++errors;
        rec.test_error = static_cast<double>(errors) / static_cast<double>(test_set.n);
    }

    const Params normalized = normalize_to_unit_margin(traj.final_theta, art.train_set);
    rec.kkt = kkt_report(normalized, art.train_set, config.active_tol, config.flow.kink_convention);
    write_stamped_json(dir / "kkt_report.json", kkt_report_to_json(rec.kkt), config);
    const ClusterAggregates agg = cluster_aggregates(normalized, rec.kkt.lambda, art.train_set,
                                                     config.flow.kink_convention);
    write_stamped_json(dir / "aggregates.json", cluster_aggregates_to_json(agg), config);

    const Perturbation pert = universal_perturbation(art.spec, art.assumption);
    rec.norm_z = pert.norm;
    rec.robustness.norm_z = pert.norm;
    rec.robustness.norm_bound = pert.norm_bound;
    rec.robustness.eta1 = pert.eta1;
    rec.robustness.eta2 = pert.eta2;
    rec.robustness.flip_rate = flip_rate(normalized, pert, test_set);

    // Minimal flip norms of the trained net along the perturbation direction.
    {
        std::vector<double> norms;
        const int probes = std::min(200, test_set.n);
        for (int i = 0; i < probes; ++i) {
            const auto s = minimal_flip_norm(normalized, test_set.x.row(i).transpose(),
                                             test_set.y[static_cast<std::size_t>(i)],
                                             pert.z, 4.0 * pert.norm);
            if (s) norms.push_back(*s);
        }
        if (!norms.empty()) {
            std::sort(norms.begin(), norms.end());
            rec.robustness.minimal_flip_norm_median = norms[norms.size() / 2];
        }
    }

    // Robust construction and its certificate on the same fresh samples.
    const Params theta_rob = build_robust_network(art.spec);
    {
        int certified = 0;
        for (int i = 0; i < test_set.n; ++i) {
            const CertifyResult cr = certify_robust_point(
                theta_rob, test_set.x.row(i).transpose(), test_set.y[static_cast<std::size_t>(i)]);
            if (cr.certified) ++certified;
        }
        rec.robustness.certified_fraction =
            static_cast<double>(certified) / static_cast<double>(test_set.n);
    }
    write_stamped_json(dir / "robustness.json", robustness_report_to_json(rec.robustness), config);

    // Flip-rate-vs-norm sweep along z's direction for plotting.
    {
        std::ostringstream csv;
        csv << "scale,flip_rate\n";
        std::vector<double> xs, ys;
        for (int s = 0; s <= 20; ++s) {
            const double scale_factor = 0.1 * s;
            Perturbation scaled = pert;
            scaled.z = scale_factor * pert.z;
            scaled.norm = scaled.z.norm();
            const double rate = flip_rate(normalized, scaled, test_set);
            csv << scaled.norm << "," << rate << "\n";
            xs.push_back(scaled.norm);
            ys.push_back(rate);
        }
        write_file(dir / "flip_rate_sweep.csv", csv.str());
        write_file(dir / "flip_rate_sweep.svg",
                   svg_line_chart(xs, ys, "flip rate vs perturbation norm"));
    }

    rec.total_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    write_stamped_json(dir / "run_record.json", run_record_to_json(config, rec), config);
    return rec;
}

std::string run_record_to_json(const ExperimentConfig& config, const RunRecord& rec) {
    json j{{"run_id", rec.run_id},
           {"config", config_to_json_obj(config)},
           {"config_hash", rec.config_hash},
           {"exit_code", rec.exit_code},
           {"assumption", json::parse(assumption_report_to_json(rec.assumption))},
           {"niceness", json::parse(niceness_report_to_json(rec.niceness))},
           {"reached_target", rec.reached_target},
           {"t0_step", rec.t0_step},
           {"final_loss", rec.final_loss},
           {"final_min_margin", rec.final_min_margin},
           {"test_error", rec.test_error},
           {"stationarity_rel", rec.kkt.stationarity_rel},
           {"slackness_violation", rec.kkt.slackness_violation},
           {"robustness", json::parse(robustness_report_to_json(rec.robustness))},
           {"train_seconds", rec.train_seconds},
           {"total_seconds", rec.total_seconds}};
    return j.dump(2);
}

int cmd_gen_data(const ExperimentConfig& config) {
    SeedPlan seeds(config.seed);
    ClusterSpec spec = build_spec(config, seeds.means);
    Dataset ds = sample_dataset(spec, config.n, seeds.train_data);
    ds.seed = config.seed;
    const fs::path dir = config.output_dir;
    write_file(dir / "spec.json", cluster_spec_to_json(spec) + "\n");
    write_file(dir / "dataset.json", dataset_to_json(ds) + "\n");
    write_file(dir / "dataset.csv", dataset_to_csv(ds));
    return kExitOk;
}

int cmd_check_assumption(const ExperimentConfig& config) {
    SeedPlan seeds(config.seed);
    const ClusterSpec spec = build_spec(config, seeds.means);
    const AssumptionReport report = check_assumption(spec);
    write_stamped_json(fs::path(config.output_dir) / "assumption.json",
                       assumption_report_to_json(report), config);
    return kExitOk;
}

int cmd_train(const ExperimentConfig& config) {
    SeedPlan seeds(config.seed);
    const ClusterSpec spec = build_spec(config, seeds.means);
    const Dataset ds = sample_dataset(spec, config.n, seeds.train_data);
    const Trajectory traj = train(ds, config.flow, seeds.init);
    const fs::path dir = config.output_dir;
    write_file(dir / "trajectory.csv", trajectory_to_csv(traj));
    if (traj.diverged) return kExitDivergence;
    save_params_binary(traj.final_theta, (dir / "final_theta.bin").string());
    write_file(dir / "final_theta.json", params_to_json(traj.final_theta));
    return kExitOk;
}

int cmd_kkt_report(const ExperimentConfig& config) {
    SeedPlan seeds(config.seed);
    const ClusterSpec spec = build_spec(config, seeds.means);
    const Dataset ds = sample_dataset(spec, config.n, seeds.train_data);
    const Trajectory traj = train(ds, config.flow, seeds.init);
    if (traj.diverged) return kExitDivergence;
    const KKTReport report = kkt_report(traj.final_theta, ds, config.active_tol,
                                        config.flow.kink_convention);
    write_stamped_json(fs::path(config.output_dir) / "kkt_report.json",
                       kkt_report_to_json(report), config);
    return kExitOk;
}

int cmd_attack(const ExperimentConfig& config) {
    SeedPlan seeds(config.seed);
    const ClusterSpec spec = build_spec(config, seeds.means);
    const AssumptionReport report = check_assumption(spec);
    const fs::path dir = config.output_dir;
    if (!report.assumption_holds || !(report.perturbation_denominator > 0.0)) {
        write_stamped_json(dir / "assumption.json", assumption_report_to_json(report), config);
        return kExitInfeasibleSpec;
    }
    const Perturbation pert = universal_perturbation(spec, report);
    write_file(dir / "perturbation.json", perturbation_to_json(pert) + "\n");

    const Dataset ds = sample_dataset(spec, config.n, seeds.train_data);
    const Trajectory traj = train(ds, config.flow, seeds.init);
    if (traj.diverged) return kExitDivergence;
    const Dataset test_set = sample_dataset(spec, config.test_set_size, seeds.test_data);
    RobustnessReport rep;
    rep.norm_z = pert.norm;
    rep.norm_bound = pert.norm_bound;
    rep.eta1 = pert.eta1;
    rep.eta2 = pert.eta2;
    rep.flip_rate = flip_rate(traj.final_theta, pert, test_set);
    write_stamped_json(dir / "robustness.json", robustness_report_to_json(rep), config);
    return kExitOk;
}

int cmd_robust_baseline(const ExperimentConfig& config) {
    SeedPlan seeds(config.seed);
    const ClusterSpec spec = build_spec(config, seeds.means);
    const Dataset test_set = sample_dataset(spec, config.test_set_size, seeds.test_data);
    const Params theta_rob = build_robust_network(spec);
    int certified = 0, margin_ok = 0;
    for (int i = 0; i < test_set.n; ++i) {
        const CertifyResult cr = certify_robust_point(theta_rob, test_set.x.row(i).transpose(),
                                                      test_set.y[static_cast<std::size_t>(i)]);
        if (cr.certified) ++certified;
        if (cr.margin >= 1.0) ++margin_ok;
    }
    const LinearBaseline lin = linear_baseline(spec, test_set);
    json j{{"certified_fraction", static_cast<double>(certified) / test_set.n},
           {"margin_fraction", static_cast<double>(margin_ok) / test_set.n},
           {"linear_accuracy", lin.accuracy},
           {"linear_gradient_norm", lin.gradient_norm},
           {"linear_median_flip_norm", lin.median_flip_norm}};
    stamp(j, config);
    write_file(fs::path(config.output_dir) / "robust_baseline.json", j.dump(2) + "\n");
    return kExitOk;
}

int cmd_e2e(const ExperimentConfig& config) {
    return run_e2e(config).exit_code;
}

std::string sweep(const std::vector<ExperimentConfig>& grid, int parallelism) {
    std::vector<RunRecord> records(grid.size());
    std::atomic<std::size_t> next{0};
    const int workers = std::max(1, std::min<int>(parallelism, static_cast<int>(grid.size())));
    auto worker = [&]() {
        for (;;) {
            const std::size_t idx = next.fetch_add(1);
            if (idx >= grid.size()) return;
            try {
                records[idx] = run_e2e(grid[idx]);
            } catch (const std::exception&) {
                records[idx].exit_code = kExitInfeasibleSpec;
                records[idx].config_hash = config_hash(grid[idx]);
            }
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();

    std::ostringstream csv;
    csv.precision(17);
    csv << "run_id,config_hash,seed,d,k,sigma,n,exit_code,reached_target,test_error,"
           "stationarity_rel,flip_rate,norm_z,certified_fraction\n";
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const ExperimentConfig& c = grid[i];
        const RunRecord& r = records[i];
        csv << r.run_id << "," << r.config_hash << "," << c.seed << "," << c.d << ","
            << c.k << "," << c.sigma << "," << c.n << "," << r.exit_code << ","
            << (r.reached_target ? 1 : 0) << "," << r.test_error << ","
            << r.kkt.stationarity_rel << "," << r.robustness.flip_rate << ","
            << r.norm_z << "," << r.robustness.certified_fraction << "\n";
    }
    return csv.str();
}

std::vector<ExperimentConfig> expand_sweep_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("sweep config: invalid JSON: ") + e.what());
    }
    reject_unknown_keys(j, {"base", "grid", "parallelism"}, "sweep");
    const json base = j.value("base", json::object());
    std::vector<json> configs{base};
    if (j.contains("grid")) {
        for (auto it = j.at("grid").begin(); it != j.at("grid").end(); ++it) {
            std::vector<json> expanded;
            for (const json& cfg : configs) {
                for (const json& value : it.value()) {
                    json next_cfg = cfg;
                    next_cfg[it.key()] = value;
                    expanded.push_back(std::move(next_cfg));
                }
            }
            configs = std::move(expanded);
        }
    }
    std::vector<ExperimentConfig> out;
    out.reserve(configs.size());
    for (const json& cfg : configs) out.push_back(config_from_json_obj(cfg));
    return out;
}

}  // namespace clusterlab
