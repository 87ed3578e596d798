// Command-line front end: train, sample, eval, field, repro, recipe.

#include "rfm/app.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace rfm;

/// Collects "--section.key value" pairs left over after CLI11 parsing.
std::vector<std::pair<std::string, std::string>> parse_overrides(const std::vector<std::string>& extras)
{
    std::vector<std::pair<std::string, std::string>> out;
    for (std::size_t i = 0; i < extras.size(); ++i) {
        std::string key = extras[i];
        if (key.rfind("--", 0) != 0) throw ConfigError("unexpected argument '" + key + "'");
        key = key.substr(2);
        std::string value;
        if (const auto eq = key.find('='); eq != std::string::npos) {
            value = key.substr(eq + 1);
            key = key.substr(0, eq);
        } else {
            if (i + 1 >= extras.size()) throw ConfigError("override --" + key + " needs a value");
            value = extras[++i];
        }
        out.emplace_back(key, value);
    }
    return out;
}

ExperimentConfig load_with_overrides(const std::string& path, const std::vector<std::string>& extras)
{
    ExperimentConfig cfg = ExperimentConfig::load(path);
    for (const auto& [k, v] : parse_overrides(extras)) cfg.set(k, v);
    cfg.validate();
    return cfg;
}

std::vector<double> parse_times(const std::string& text)
{
    std::vector<double> ts;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        try {
            std::size_t used = 0;
            ts.push_back(std::stod(part, &used));
            if (used != part.size()) throw std::invalid_argument(part);
        } catch (const std::exception&) {
            throw ConfigError("bad time value '" + part + "'");
        }
    }
    return ts;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Reflected flow matching on constrained domains"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    std::string config_path, out_dir, checkpoint, samples, groundtruth, times = "0,0.5,0.9", recipe;
    bool force = false, full = false;
    long n = -1;
    int steps = -1, resolution = 25;
    std::string solver;
    std::optional<double> guidance;
    std::optional<int> label;
    std::optional<std::uint64_t> seed;

    auto* train = app.add_subcommand("train", "Train a velocity model");
    train->add_option("-c,--config", config_path, "Config file (JSON)")->required();
    train->add_option("-o,--out", out_dir, "Output directory");
    train->allow_extras();

    auto* sample = app.add_subcommand("sample", "Draw samples from a checkpoint");
    sample->add_option("-c,--config", config_path, "Config file (JSON)")->required();
    sample->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    sample->add_option("-n,--n", n, "Number of samples");
    sample->add_option("--solver", solver, "euler | midpoint | heun3 | rk4 | dopri5");
    sample->add_option("--steps", steps, "Fixed-step count");
    sample->add_option("--guidance", guidance, "Guidance weight w");
    sample->add_option("--label", label, "Class label");
    sample->add_option("-o,--out", out_dir, "Output directory");
    sample->allow_extras();

    auto* eval = app.add_subcommand("eval", "KL estimate and violation ratio of a sample file");
    eval->add_option("-c,--config", config_path, "Config file (JSON)")->required();
    eval->add_option("--samples", samples, "Samples CSV")->required();
    eval->add_option("--groundtruth", groundtruth, "Ground-truth CSV (default: draw from the data config)");
    eval->add_flag("--force", force, "Ignore a config hash mismatch");
    eval->add_option("-o,--out", out_dir, "Output directory");
    eval->allow_extras();

    auto* field = app.add_subcommand("field", "Export velocity-field grids");
    field->add_option("-c,--config", config_path, "Config file (JSON)")->required();
    field->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    field->add_option("--t", times, "Comma-separated times");
    field->add_option("--resolution", resolution, "Grid points per axis");
    field->add_option("-o,--out", out_dir, "Output directory");
    field->allow_extras();

    auto* repro = app.add_subcommand("repro", "Train, sample and evaluate a built-in recipe");
    repro->add_option("recipe", recipe, "Recipe name")->required();
    repro->add_flag("--desk", "Desk scale (default)");
    repro->add_flag("--full", full, "Full published scale");
    repro->add_option("--seed", seed, "Global seed");
    repro->add_option("-o,--out", out_dir, "Output directory");
    repro->allow_extras();

    auto* show = app.add_subcommand("recipe", "Print a recipe's config");
    show->add_option("name", recipe, "Recipe name")->required();
    show->add_flag("--desk", "Desk scale (default)");
    show->add_flag("--full", full, "Full published scale");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_usage;
    }

    try {
        if (*train) {
            const ExperimentConfig cfg = load_with_overrides(config_path, train->remaining());
            cmd_train(cfg, resolve_output_dir(out_dir, cfg), std::cerr);
        } else if (*sample) {
            ExperimentConfig cfg = ExperimentConfig::load(config_path);
            for (const auto& [k, v] : parse_overrides(sample->remaining())) cfg.set(k, v);
            if (n >= 0) cfg.set("sample.n", std::to_string(n));
            if (!solver.empty()) cfg.set("sample.solver", Json(solver).dump());
            if (steps >= 0) cfg.set("sample.steps", std::to_string(steps));
            if (guidance) cfg.set("sample.guidance_weight", format_double(*guidance));
            if (label) cfg.set("sample.class_label", std::to_string(*label));
            cfg.validate();
            cmd_sample(cfg, checkpoint, resolve_output_dir(out_dir, cfg), std::cerr);
        } else if (*eval) {
            const ExperimentConfig cfg = load_with_overrides(config_path, eval->remaining());
            const fs::path dir = out_dir.empty() ? fs::path(samples).parent_path() : fs::path(out_dir);
            const MetricReport r = cmd_eval(cfg, samples, groundtruth, force, dir.empty() ? "." : dir, std::cerr);
            std::cout << "kl = " << format_double(r.kl) << "\nviolation_ratio = " << format_double(r.violation_ratio)
                      << "\n";
        } else if (*field) {
            const ExperimentConfig cfg = load_with_overrides(config_path, field->remaining());
            for (const fs::path& p : cmd_field(cfg, checkpoint, parse_times(times), resolution,
                                               resolve_output_dir(out_dir, cfg), std::cerr)) {
                std::cout << p.string() << "\n";
            }
        } else if (*repro) {
            const Scale scale = full ? Scale::full : Scale::desk;
            ExperimentConfig cfg = recipe_config(recipe, scale);
            if (seed) cfg.set("seed", std::to_string(*seed));
            for (const auto& [k, v] : parse_overrides(repro->remaining())) cfg.set(k, v);
            cfg.validate();
            const std::string leaf = recipe + (full ? "-full" : "-desk");
            const ReproOutcome r = cmd_repro(cfg, recipe, resolve_output_dir(out_dir, cfg, leaf), std::cerr);
            std::cout << "recipe = " << recipe << "\nkl = " << format_double(r.metrics_report.kl)
                      << "\nviolation_ratio = " << format_double(r.metrics_report.violation_ratio)
                      << "\nnfe = " << r.sample_report.nfe << "\nreflections = " << r.sample_report.reflections
                      << "\ndir = " << r.dir.string() << "\n";
        } else if (*show) {
            std::cout << recipe_json(recipe, full ? Scale::full : Scale::desk).dump(2) << "\n";
        }
    } catch (const NumericalError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_numerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_usage;
    }
    return exit_ok;
}
