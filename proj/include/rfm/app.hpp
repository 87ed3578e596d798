#pragma once

// Experiment commands behind the command-line tool. Each command takes a
// validated config and an output directory and writes its artifacts there.

#include "rfm/checkpoint.hpp"
#include "rfm/config.hpp"
#include "rfm/csv.hpp"
#include "rfm/eval.hpp"
#include "rfm/recipes.hpp"
#include "rfm/sample.hpp"
#include "rfm/train.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

namespace rfm {

inline constexpr const char* kToolVersion = "0.1.0";

namespace fs = std::filesystem;

/// Exit codes of the command-line tool.
enum ExitCode : int { exit_ok = 0, exit_usage = 2, exit_numerical = 3 };

/// Key-value text: one "key = value" per line, in insertion order.
class KeyValueReport {
public:
    template <class T>
    void add(const std::string& key, const T& value)
    {
        std::ostringstream os;
        if constexpr (std::is_floating_point_v<T>) {
            os << format_double(value);
        } else {
            os << value;
        }
        entries_.emplace_back(key, os.str());
    }

    std::string text() const
    {
        std::string out;
        for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
        return out;
    }

    static std::map<std::string, std::string> parse(const std::string& path)
    {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open report '" + path + "'");
        std::map<std::string, std::string> kv;
        std::string line;
        while (std::getline(in, line)) {
            const auto eq = line.find(" = ");
            if (eq == std::string::npos) continue;
            kv[line.substr(0, eq)] = line.substr(eq + 3);
        }
        return kv;
    }

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

/// Writes through a temporary file and a rename so readers never see partial output.
inline void write_file_atomic(const fs::path& path, const std::string& bytes)
{
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open '" + tmp.string() + "' for writing");
        out << bytes;
        if (!out) throw Error("write to '" + tmp.string() + "' failed");
    }
    fs::rename(tmp, path);
}

inline std::string utc_timestamp()
{
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

/// Directory for run outputs: explicit value, else $RFM_OUTPUT_ROOT, else the config's output_dir.
inline fs::path resolve_output_dir(const std::string& explicit_dir, const ExperimentConfig& cfg,
                                   const std::string& leaf = "")
{
    if (!explicit_dir.empty()) return explicit_dir;
    fs::path root = cfg.output_dir();
    if (const char* env = std::getenv("RFM_OUTPUT_ROOT"); env && *env) root = env;
    return leaf.empty() ? root : root / leaf;
}

class Manifest {
public:
    Manifest(const ExperimentConfig& cfg, std::string command) : started_(utc_timestamp())
    {
        doc_["command"] = std::move(command);
        doc_["config_hash"] = cfg.hash();
        doc_["tool_version"] = kToolVersion;
        doc_["seed"] = cfg.seed();
        doc_["config"] = cfg.json();
        doc_["artifacts"] = Json::object();
    }

    void artifact(const std::string& role, const fs::path& path) { doc_["artifacts"][role] = path.string(); }
    void extra(const std::string& key, Json value) { doc_[key] = std::move(value); }

    void write(const fs::path& path)
    {
        doc_["started"] = started_;
        doc_["finished"] = utc_timestamp();
        write_file_atomic(path, doc_.dump(2) + "\n");
    }

private:
    Json doc_;
    std::string started_;
};

struct TrainOutcome {
    fs::path checkpoint;
    std::vector<LossRecord> trace;
};

inline std::string loss_csv(const std::vector<LossRecord>& trace)
{
    std::string out = "iter,loss,lr\n";
    for (const LossRecord& r : trace) {
        out += std::to_string(r.iter) + "," + format_double(r.loss) + "," + format_double(r.lr) + "\n";
    }
    return out;
}

inline TrainOutcome cmd_train(const ExperimentConfig& cfg, const fs::path& out_dir, std::ostream& log)
{
    fs::create_directories(out_dir);
    Manifest manifest(cfg, "train");
    const auto domain = cfg.domain();
    const auto flow = cfg.flow(domain);
    const auto prior = cfg.prior(domain);
    const auto data = cfg.data(domain);
    const TrainConfig tc = cfg.train();
    VelocityNet net(cfg.net(domain->dim()));
    const fs::path ckpt = out_dir / "checkpoint.rfmc";
    log << "train: " << net.num_params() << " parameters, " << tc.total_iters << " iterations, batch "
        << tc.batch_size << "\n";

    const long report_every = std::max(1L, tc.total_iters / 10);
    double window = 0.0;
    long in_window = 0;
    TrainCallbacks cb;
    cb.on_checkpoint = [&](long, const VelocityNet& n) { write_checkpoint(ckpt.string(), n); };
    cb.on_iter = [&](const LossRecord& r) {
        window += r.loss;
        ++in_window;
        if ((r.iter + 1) % report_every == 0) {
            log << "  iter " << r.iter + 1 << "  mean loss " << window / static_cast<double>(in_window)
                << "  lr " << r.lr << "\n";
            window = 0.0;
            in_window = 0;
        }
    };
    TrainOutcome outcome;
    outcome.trace = train(tc, net, *flow, *prior, *data, cb);
    write_checkpoint(ckpt.string(), net);
    const fs::path loss_path = out_dir / "loss.csv";
    write_file_atomic(loss_path, loss_csv(outcome.trace));
    manifest.artifact("checkpoint", ckpt);
    manifest.artifact("loss", loss_path);
    manifest.write(out_dir / "train_manifest.json");
    outcome.checkpoint = ckpt;
    return outcome;
}

/// Loads a checkpoint and checks its architecture against the config.
inline VelocityNet load_compatible_checkpoint(const ExperimentConfig& cfg, const std::string& path, int dim)
{
    VelocityNet net = read_checkpoint(path);
    NetConfig want = cfg.net(dim);
    NetConfig have = net.config();
    have.seed = want.seed;
    if (!(have == want)) {
        throw ConfigError("checkpoint '" + path + "' does not match the configured network architecture");
    }
    return net;
}

inline fs::path sidecar_path(const fs::path& samples_csv)
{
    fs::path p = samples_csv;
    p.replace_extension(".report");
    return p;
}

struct SampleOutcome {
    fs::path samples;
    SampleRunReport report;
};

inline SampleOutcome cmd_sample(const ExperimentConfig& cfg, const std::string& checkpoint, const fs::path& out_dir,
                                std::ostream& log)
{
    fs::create_directories(out_dir);
    Manifest manifest(cfg, "sample");
    const auto domain = cfg.domain();
    const auto prior = cfg.prior(domain);
    const VelocityNet net = load_compatible_checkpoint(cfg, checkpoint, domain->dim());
    const SampleOptions opts = cfg.sample();
    const long n = cfg.sample_count();
    const auto label = cfg.class_label();
    const auto weight = cfg.guidance_weight();
    if ((label || weight) && !net.conditional()) {
        throw ConfigError("class label or guidance given for an unconditional checkpoint");
    }
    const VelocityField field = weight ? guided_field(net, {*weight, *label}) : net_field(net, label);
    log << "sample: " << n << " points, " << method_name(opts.solver.method);
    if (opts.solver.method != Method::dopri5) log << " x " << opts.grid.steps() << " steps";
    log << "\n";

    SampleOutcome outcome;
    outcome.report = sample_batch(*domain, *prior, field, n, opts);
    outcome.samples = out_dir / "samples.csv";
    const fs::path tmp = outcome.samples.string() + ".tmp";
    write_points_csv(tmp.string(), outcome.report.samples);
    fs::rename(tmp, outcome.samples);

    KeyValueReport kv;
    kv.add("n", n);
    kv.add("nfe", outcome.report.nfe);
    kv.add("reflections", outcome.report.reflections);
    kv.add("solver", method_name(opts.solver.method));
    kv.add("steps", opts.solver.method == Method::dopri5 ? 0 : opts.grid.steps());
    kv.add("seed", cfg.seed());
    kv.add("config_hash", cfg.hash());
    write_file_atomic(sidecar_path(outcome.samples), kv.text());

    manifest.artifact("samples", outcome.samples);
    manifest.artifact("report", sidecar_path(outcome.samples));
    manifest.artifact("checkpoint", checkpoint);
    manifest.write(out_dir / "sample_manifest.json");
    return outcome;
}

struct MetricReport {
    double kl = 0.0;
    double violation_ratio = 0.0;
    long violations = 0;
    long n_used = 0;
    long m_used = 0;
    int k_used = 0;
};

/// Compares a sample file against ground truth (a CSV, or fresh draws from the
/// configured data distribution). Refuses samples produced under a different
/// config hash unless `force` is set.
inline MetricReport cmd_eval(const ExperimentConfig& cfg, const std::string& samples_path,
                             const std::string& groundtruth_path, bool force, const fs::path& out_dir,
                             std::ostream& log)
{
    fs::create_directories(out_dir);
    Manifest manifest(cfg, "eval");
    const auto domain = cfg.domain();
    const fs::path sidecar = sidecar_path(samples_path);
    if (fs::exists(sidecar)) {
        const auto kv = KeyValueReport::parse(sidecar.string());
        const auto it = kv.find("config_hash");
        if (it != kv.end() && it->second != cfg.hash()) {
            if (!force) {
                throw ConfigError("samples were produced with config " + it->second + " but the current config is " +
                                  cfg.hash() + " (use --force to compare anyway)");
            }
            log << "eval: warning: config hash mismatch ignored\n";
        }
    } else if (!force) {
        log << "eval: warning: no sidecar report next to the samples; config hash not checked\n";
    }
    const Mat p = read_points_csv(samples_path, domain->dim());
    Mat q;
    if (!groundtruth_path.empty()) {
        q = read_points_csv(groundtruth_path, domain->dim());
    } else {
        const auto data = cfg.data(domain);
        const long m = cfg.ground_truth_count() > 0 ? cfg.ground_truth_count() : p.cols();
        q.resize(domain->dim(), m);
        Rng rng = stream_rng(derive_seed(cfg.seed(), SeedTag::ground_truth), 0);
        for (long i = 0; i < m; ++i) q.col(i) = data->sample(rng).x;
    }
    MetricReport r;
    r.k_used = cfg.knn_k();
    r.n_used = p.cols();
    r.m_used = q.cols();
    r.kl = knn_kl(p, q, r.k_used, resolve_threads(cfg.threads()));
    r.violation_ratio = violation_ratio(p, *domain);
    r.violations = std::lround(r.violation_ratio * static_cast<double>(p.cols()));

    KeyValueReport kv;
    kv.add("kl", r.kl);
    kv.add("violation_ratio", r.violation_ratio);
    kv.add("violations", r.violations);
    kv.add("n_used", r.n_used);
    kv.add("m_used", r.m_used);
    kv.add("k_used", r.k_used);
    kv.add("seed", cfg.seed());
    kv.add("config_hash", cfg.hash());
    const fs::path metrics = out_dir / "metrics.txt";
    write_file_atomic(metrics, kv.text());
    log << "eval: kl " << r.kl << ", violation ratio " << r.violation_ratio << "\n";

    manifest.artifact("metrics", metrics);
    manifest.artifact("samples", samples_path);
    if (!groundtruth_path.empty()) manifest.artifact("groundtruth", groundtruth_path);
    manifest.write(out_dir / "eval_manifest.json");
    return r;
}

inline std::string field_file_name(double t)
{
    char buf[48];
    std::snprintf(buf, sizeof buf, "field_t%.4f.csv", t);
    return buf;
}

inline std::vector<fs::path> cmd_field(const ExperimentConfig& cfg, const std::string& checkpoint,
                                       const std::vector<double>& times, int resolution, const fs::path& out_dir,
                                       std::ostream& log)
{
    const auto domain = cfg.domain();
    if (domain->dim() != 2) throw ConfigError("field export needs a two-dimensional domain");
    if (times.empty()) throw ConfigError("field export needs at least one time");
    for (double t : times) {
        if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("field times must lie in [0, 1]");
    }
    fs::create_directories(out_dir);
    Manifest manifest(cfg, "field");
    const VelocityNet net = load_compatible_checkpoint(cfg, checkpoint, 2);
    std::vector<fs::path> files;
    for (double t : times) {
        const auto rows = velocity_field_grid(net, *domain, t, resolution, cfg.class_label());
        std::string text = "x,y,vx,vy\n";
        for (const FieldRow& r : rows) {
            text += format_double(r.x) + "," + format_double(r.y) + "," + format_double(r.vx) + "," +
                    format_double(r.vy) + "\n";
        }
        const fs::path path = out_dir / field_file_name(t);
        write_file_atomic(path, text);
        manifest.artifact(field_file_name(t), path);
        files.push_back(path);
    }
    log << "field: wrote " << files.size() << " grids\n";
    manifest.write(out_dir / "field_manifest.json");
    return files;
}

struct ReproOutcome {
    fs::path dir;
    fs::path checkpoint;
    fs::path samples;
    fs::path metrics;
    MetricReport metrics_report;
    SampleRunReport sample_report;
};

/// Train, sample and evaluate one built-in recipe into `out_dir`.
inline ReproOutcome cmd_repro(const ExperimentConfig& cfg, const std::string& name, const fs::path& out_dir,
                              std::ostream& log)
{
    fs::create_directories(out_dir);
    Manifest manifest(cfg, "repro " + name);
    log << "repro " << name << " -> " << out_dir.string() << " (config " << cfg.hash() << ")\n";
    ReproOutcome out;
    out.dir = out_dir;
    out.checkpoint = cmd_train(cfg, out_dir, log).checkpoint;
    SampleOutcome s = cmd_sample(cfg, out.checkpoint.string(), out_dir, log);
    out.samples = s.samples;
    out.sample_report = std::move(s.report);
    out.metrics_report = cmd_eval(cfg, out.samples.string(), "", false, out_dir, log);
    out.metrics = out_dir / "metrics.txt";
    manifest.artifact("checkpoint", out.checkpoint);
    manifest.artifact("samples", out.samples);
    manifest.artifact("metrics", out.metrics);
    manifest.extra("recipe", name);
    manifest.extra("kl", out.metrics_report.kl);
    manifest.extra("violation_ratio", out.metrics_report.violation_ratio);
    manifest.write(out_dir / "manifest.json");
    return out;
}

}  // namespace rfm
