#pragma once

// Experiment configuration: a JSON document validated against a built-in
// default document. Every key a user supplies must exist in the defaults.

#include "rfm/core.hpp"
#include "rfm/csv.hpp"
#include "rfm/flows.hpp"
#include "rfm/geometry.hpp"
#include "rfm/net.hpp"
#include "rfm/sample.hpp"
#include "rfm/train.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

namespace rfm {

using Json = nlohmann::json;

inline const Json& default_config_json()
{
    static const Json defaults = Json::parse(R"({
      "domain": {"kind": "hypercube", "dim": 2, "A": [], "b": [], "r": 1.0, "R": 2.0},
      "flow": {"kind": "convex_ot", "sigma_min": 1e-5},
      "prior": {"kind": "uniform"},
      "data": {"weights": [], "means": [], "stdevs": [], "csv_path": ""},
      "net": {"hidden_width": 512, "num_layers": 6, "time_embed_dim": 512, "num_classes": 0},
      "train": {"batch_size": 512, "total_iters": 200000, "lr_init": 3e-4, "lr_decay": 0.75,
                "decay_every": 10000, "warmup_iters": 0, "beta1": 0.9, "beta2": 0.999, "eps": 1e-8,
                "uncond_drop_prob": 0.1, "divergence_limit": 1e6, "checkpoint_every": 0},
      "sample": {"solver": "heun3", "steps": 100, "atol": 1e-5, "rtol": 1e-5, "n": 50000,
                 "fast_path": true, "class_label": null, "guidance_weight": null},
      "eval": {"k": 5, "n_ground_truth": 0},
      "seed": 0,
      "output_dir": "runs",
      "threads": 0
    })");
    return defaults;
}

/// Keys that do not change any numerical result and are left out of the hash.
inline bool is_operational_key(const std::string& key)
{
    return key == "output_dir" || key == "threads";
}

/// Sub-seeds for the independent random streams of one experiment.
enum class SeedTag : std::uint64_t { net = 1, train = 2, sample = 3, ground_truth = 4 };

inline std::uint64_t derive_seed(std::uint64_t seed, SeedTag tag)
{
    return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(tag)));
}

class ExperimentConfig {
public:
    ExperimentConfig() : doc_(default_config_json()) {}

    /// Merges `user` over the defaults, rejecting unknown keys and bad types.
    static ExperimentConfig from_json(const Json& user, std::string base_dir = ".")
    {
        ExperimentConfig cfg;
        cfg.base_dir_ = std::move(base_dir);
        if (!user.is_object()) throw ConfigError("config: top level must be an object");
        merge_strict(cfg.doc_, user, "");
        cfg.validate();
        return cfg;
    }

    static ExperimentConfig load(const std::string& path)
    {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config '" + path + "'");
        Json user;
        try {
            user = Json::parse(in, nullptr, true, true);
        } catch (const Json::exception& e) {
            throw ConfigError("config '" + path + "': " + e.what());
        }
        const auto dir = std::filesystem::path(path).parent_path();
        return from_json(user, dir.empty() ? "." : dir.string());
    }

    const Json& json() const { return doc_; }
    const std::string& base_dir() const { return base_dir_; }

    /// Sets "section.key" (or a top-level key) from a command-line string. The
    /// value is parsed as JSON when possible and used as a string otherwise.
    /// Call validate() after the last override.
    void set(const std::string& dotted, const std::string& value)
    {
        Json v;
        try {
            v = Json::parse(value);
        } catch (const Json::exception&) {
            v = value;
        }
        Json patch = Json::object();
        Json* cur = &patch;
        std::stringstream ss(dotted);
        std::string part;
        std::vector<std::string> parts;
        while (std::getline(ss, part, '.')) parts.push_back(part);
        if (parts.empty()) throw ConfigError("empty override key");
        for (std::size_t i = 0; i + 1 < parts.size(); ++i) cur = &(*cur)[parts[i]];
        (*cur)[parts.back()] = v;
        merge_strict(doc_, patch, "");
    }

    /// Canonical text: sorted keys, operational keys removed.
    std::string canonical() const
    {
        Json c = doc_;
        for (auto it = c.begin(); it != c.end();) {
            if (is_operational_key(it.key())) {
                it = c.erase(it);
            } else {
                ++it;
            }
        }
        return c.dump();
    }

    /// FNV-1a 64 of the canonical text, as 16 hex digits.
    std::string hash() const
    {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (unsigned char ch : canonical()) {
            h ^= ch;
            h *= 0x100000001b3ULL;
        }
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }

    template <class T>
    T get(const std::string& section, const std::string& key) const
    {
        try {
            return doc_.at(section).at(key).get<T>();
        } catch (const Json::exception& e) {
            throw ConfigError("config " + section + "." + key + ": " + e.what());
        }
    }

    template <class T>
    T top(const std::string& key) const
    {
        try {
            return doc_.at(key).get<T>();
        } catch (const Json::exception& e) {
            throw ConfigError("config " + key + ": " + e.what());
        }
    }

    std::uint64_t seed() const { return top<std::uint64_t>("seed"); }
    unsigned threads() const { return top<unsigned>("threads"); }
    std::string output_dir() const { return top<std::string>("output_dir"); }

    std::shared_ptr<const Domain> domain() const
    {
        const auto kind = get<std::string>("domain", "kind");
        const int dim = get<int>("domain", "dim");
        if (kind == "hypercube") return std::make_shared<Hypercube>(dim);
        if (kind == "simplex") return std::make_shared<Simplex>(dim);
        if (kind == "polytope") {
            const auto rows = get<std::vector<std::vector<double>>>("domain", "A");
            const auto b = get<std::vector<double>>("domain", "b");
            if (rows.empty() || rows.size() != b.size()) {
                throw ConfigError("domain: polytope needs A and b with the same nonzero number of rows");
            }
            Mat a(static_cast<Eigen::Index>(rows.size()), dim);
            for (std::size_t i = 0; i < rows.size(); ++i) {
                if (static_cast<int>(rows[i].size()) != dim) throw ConfigError("domain: A row width != dim");
                for (int j = 0; j < dim; ++j) a(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
            }
            return std::make_shared<ConvexPolytope>(a, Eigen::Map<const Vec>(b.data(), static_cast<Eigen::Index>(b.size())));
        }
        if (kind == "half_annulus") {
            if (dim != 2) throw ConfigError("domain: half_annulus is two-dimensional");
            return std::make_shared<HalfAnnulus>(get<double>("domain", "r"), get<double>("domain", "R"));
        }
        if (kind == "cup") {
            if (dim != 2) throw ConfigError("domain: cup is two-dimensional");
            return std::make_shared<Cup>();
        }
        throw ConfigError("domain: unknown kind '" + kind + "'");
    }

    std::shared_ptr<const ConditionalFlow> flow(const std::shared_ptr<const Domain>& domain) const
    {
        const auto kind = get<std::string>("flow", "kind");
        const double sigma = get<double>("flow", "sigma_min");
        if (kind == "convex_ot") return std::make_shared<ConvexOTFlow>(domain, sigma);
        if (kind == "polar_ot") {
            auto ring = std::dynamic_pointer_cast<const HalfAnnulus>(domain);
            if (!ring) throw ConfigError("flow: polar_ot requires a half_annulus domain");
            return std::make_shared<PolarOTFlow>(ring, sigma);
        }
        if (kind == "cup") {
            if (!std::dynamic_pointer_cast<const Cup>(domain)) throw ConfigError("flow: cup requires a cup domain");
            return std::make_shared<CupFlow>(domain);
        }
        throw ConfigError("flow: unknown kind '" + kind + "'");
    }

    std::shared_ptr<const Prior> prior(const std::shared_ptr<const Domain>& domain) const
    {
        const auto kind = get<std::string>("prior", "kind");
        if (kind == "uniform") return std::make_shared<UniformPrior>(domain);
        if (kind == "truncated_gaussian") return std::make_shared<TruncatedGaussianPrior>(domain);
        if (kind == "gaussian") return std::make_shared<GaussianPrior>(domain->dim());
        throw ConfigError("prior: unknown kind '" + kind + "'");
    }

    std::shared_ptr<const DataDistribution> data(const std::shared_ptr<const Domain>& domain) const
    {
        const auto csv = get<std::string>("data", "csv_path");
        const auto weights = get<std::vector<double>>("data", "weights");
        if (!csv.empty()) {
            if (!weights.empty()) throw ConfigError("data: give either a mixture or csv_path, not both");
            std::filesystem::path p(csv);
            if (p.is_relative()) p = std::filesystem::path(base_dir_) / p;
            const Mat rows = read_points_csv(p.string(), domain->dim());
            std::vector<Point> pts;
            for (Eigen::Index i = 0; i < rows.cols(); ++i) pts.emplace_back(rows.col(i));
            return std::make_shared<EmpiricalData>(domain, std::move(pts));
        }
        if (weights.empty()) throw ConfigError("data: no mixture components and no csv_path");
        auto to_vecs = [](const std::vector<std::vector<double>>& rows) {
            std::vector<Vec> out;
            for (const auto& r : rows) out.emplace_back(Eigen::Map<const Vec>(r.data(), static_cast<Eigen::Index>(r.size())));
            return out;
        };
        return std::make_shared<TruncatedGaussianMixture>(
            domain, weights, to_vecs(get<std::vector<std::vector<double>>>("data", "means")),
            to_vecs(get<std::vector<std::vector<double>>>("data", "stdevs")));
    }

    NetConfig net(int input_dim) const
    {
        NetConfig n;
        n.input_dim = input_dim;
        n.hidden_width = get<int>("net", "hidden_width");
        n.num_layers = get<int>("net", "num_layers");
        n.time_embed_dim = get<int>("net", "time_embed_dim");
        n.num_classes = get<int>("net", "num_classes");
        n.seed = derive_seed(seed(), SeedTag::net);
        n.validate();
        return n;
    }

    TrainConfig train() const
    {
        TrainConfig t;
        t.batch_size = get<int>("train", "batch_size");
        t.total_iters = get<long>("train", "total_iters");
        t.lr_init = get<double>("train", "lr_init");
        t.lr_decay = get<double>("train", "lr_decay");
        t.decay_every = get<long>("train", "decay_every");
        t.warmup_iters = get<long>("train", "warmup_iters");
        t.beta1 = get<double>("train", "beta1");
        t.beta2 = get<double>("train", "beta2");
        t.eps = get<double>("train", "eps");
        t.uncond_drop_prob = get<double>("train", "uncond_drop_prob");
        t.divergence_limit = get<double>("train", "divergence_limit");
        t.checkpoint_every = get<long>("train", "checkpoint_every");
        t.threads = threads();
        t.seed = derive_seed(seed(), SeedTag::train);
        t.validate();
        return t;
    }

    SampleOptions sample() const
    {
        SampleOptions s;
        s.solver.method = parse_method(get<std::string>("sample", "solver"));
        s.solver.atol = get<double>("sample", "atol");
        s.solver.rtol = get<double>("sample", "rtol");
        s.solver.validate();
        s.grid = TimeGrid::uniform(get<int>("sample", "steps"));
        s.hypercube_fast_path = get<bool>("sample", "fast_path");
        s.seed = derive_seed(seed(), SeedTag::sample);
        s.threads = threads();
        return s;
    }

    long sample_count() const
    {
        const long n = get<long>("sample", "n");
        if (n < 0) throw ConfigError("sample.n must be nonnegative");
        return n;
    }

    std::optional<int> class_label() const { return optional_value<int>("sample", "class_label"); }
    std::optional<double> guidance_weight() const { return optional_value<double>("sample", "guidance_weight"); }

    int knn_k() const
    {
        const int k = get<int>("eval", "k");
        if (k < 1) throw ConfigError("eval.k must be positive");
        return k;
    }

    long ground_truth_count() const
    {
        const long n = get<long>("eval", "n_ground_truth");
        if (n < 0) throw ConfigError("eval.n_ground_truth must be nonnegative");
        return n;
    }

    /// Builds every component once so that inconsistencies surface at load time.
    void validate() const
    {
        auto dom = domain();
        flow(dom);
        prior(dom);
        auto dat = data(dom);
        const NetConfig n = net(dom->dim());
        if (n.num_classes > 0 && dat->num_labels() == 0) {
            throw ConfigError("net.num_classes > 0 needs labeled (mixture) data");
        }
        if (n.num_classes > 0 && dat->num_labels() > n.num_classes) {
            throw ConfigError("data has more mixture components than net.num_classes");
        }
        train();
        sample();
        sample_count();
        if (auto c = class_label(); c && (*c < 0 || *c >= n.num_classes)) {
            throw ConfigError("sample.class_label out of range for net.num_classes");
        }
        if (guidance_weight() && !class_label()) throw ConfigError("sample.guidance_weight needs sample.class_label");
        knn_k();
        ground_truth_count();
        seed();
        threads();
        output_dir();
    }

private:
    template <class T>
    std::optional<T> optional_value(const std::string& section, const std::string& key) const
    {
        if (doc_.at(section).at(key).is_null()) return std::nullopt;
        return get<T>(section, key);
    }

    static void merge_strict(Json& base, const Json& patch, const std::string& where)
    {
        for (auto it = patch.begin(); it != patch.end(); ++it) {
            const std::string key = where.empty() ? it.key() : where + "." + it.key();
            if (!base.contains(it.key())) throw ConfigError("config: unknown key '" + key + "'");
            Json& slot = base[it.key()];
            if (slot.is_object()) {
                if (!it->is_object()) throw ConfigError("config: '" + key + "' must be an object");
                merge_strict(slot, *it, key);
            } else {
                if (it->is_object()) throw ConfigError("config: '" + key + "' must not be an object");
                slot = *it;
            }
        }
    }

    Json doc_;
    std::string base_dir_ = ".";
};

}  // namespace rfm
