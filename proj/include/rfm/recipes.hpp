#pragma once

// Built-in toy experiments. Full scale follows the published protocol
// (512-wide, 6 blocks, 200k iterations of batch 512). Desk scale keeps the
// 50k iterations but shrinks the net and batch so one domain fits in about
// 15 minutes on a single CPU core.

#include "rfm/config.hpp"

#include <string>
#include <vector>

namespace rfm {

enum class Scale { desk, full };

inline const std::vector<std::string>& recipe_names()
{
    static const std::vector<std::string> names = {"hypercube2", "hypercube10",  "simplex2",
                                                   "simplex10",  "half_annulus", "cup"};
    return names;
}

namespace detail {

inline Json recipe_problem(const std::string& name)
{
    if (name == "hypercube2") {
        return Json::parse(R"({
          "domain": {"kind": "hypercube", "dim": 2},
          "flow": {"kind": "convex_ot"},
          "data": {"weights": [0.25, 0.25, 0.25, 0.25],
                   "means": [[-0.5, -0.5], [0.5, -0.5], [-0.5, 0.5], [0.5, 0.5]],
                   "stdevs": [[0.25, 0.25], [0.25, 0.25], [0.25, 0.25], [0.25, 0.25]]}
        })");
    }
    if (name == "hypercube10") {
        Json j = Json::parse(R"({"domain": {"kind": "hypercube", "dim": 10}, "flow": {"kind": "convex_ot"}})");
        j["data"] = {{"weights", {0.5, 0.5}},
                     {"means", {std::vector<double>(10, -0.4), std::vector<double>(10, 0.4)}},
                     {"stdevs", {std::vector<double>(10, 0.3), std::vector<double>(10, 0.3)}}};
        return j;
    }
    if (name == "simplex2") {
        return Json::parse(R"({
          "domain": {"kind": "simplex", "dim": 2},
          "flow": {"kind": "convex_ot"},
          "data": {"weights": [0.5, 0.5], "means": [[0.2, 0.6], [0.6, 0.2]],
                   "stdevs": [[0.1, 0.1], [0.1, 0.1]]}
        })");
    }
    if (name == "simplex10") {
        Json j = Json::parse(R"({"domain": {"kind": "simplex", "dim": 10}, "flow": {"kind": "convex_ot"}})");
        std::vector<double> m1(10, 0.05), m2(10, 0.05);
        m1[0] = 0.4;
        m2[1] = 0.4;
        j["data"] = {{"weights", {0.5, 0.5}},
                     {"means", {m1, m2}},
                     {"stdevs", {std::vector<double>(10, 0.05), std::vector<double>(10, 0.05)}}};
        return j;
    }
    if (name == "half_annulus") {
        return Json::parse(R"({
          "domain": {"kind": "half_annulus", "dim": 2, "r": 1.0, "R": 2.0},
          "flow": {"kind": "polar_ot"},
          "data": {"weights": [0.5, 0.5], "means": [[-1.2, 0.6], [1.2, 0.6]],
                   "stdevs": [[0.3, 0.3], [0.3, 0.3]]}
        })");
    }
    if (name == "cup") {
        return Json::parse(R"({
          "domain": {"kind": "cup", "dim": 2},
          "flow": {"kind": "cup"},
          "data": {"weights": [0.5, 0.5], "means": [[-0.6, 1.0], [0.6, 1.0]],
                   "stdevs": [[0.35, 0.35], [0.35, 0.35]]}
        })");
    }
    throw ConfigError("unknown recipe '" + name + "'");
}

inline Json recipe_scale(Scale scale)
{
    if (scale == Scale::full) {
        return Json::parse(R"({
          "net": {"hidden_width": 512, "num_layers": 6, "time_embed_dim": 512},
          "train": {"batch_size": 512, "total_iters": 200000, "lr_init": 3e-4, "lr_decay": 0.75,
                    "decay_every": 10000},
          "sample": {"solver": "heun3", "steps": 100, "n": 50000}
        })");
    }
    return Json::parse(R"({
      "net": {"hidden_width": 128, "num_layers": 3, "time_embed_dim": 64},
      "train": {"batch_size": 256, "total_iters": 50000, "lr_init": 1e-3, "lr_decay": 0.6,
                "decay_every": 6250},
      "sample": {"solver": "heun3", "steps": 100, "n": 50000}
    })");
}

inline void merge_into(Json& base, const Json& patch)
{
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        if (it->is_object() && base.contains(it.key()) && base[it.key()].is_object()) {
            merge_into(base[it.key()], *it);
        } else {
            base[it.key()] = *it;
        }
    }
}

}  // namespace detail

/// The user-level JSON document for a recipe (a subset of the full config).
inline Json recipe_json(const std::string& name, Scale scale)
{
    Json j = detail::recipe_problem(name);
    detail::merge_into(j, detail::recipe_scale(scale));
    return j;
}

inline ExperimentConfig recipe_config(const std::string& name, Scale scale)
{
    return ExperimentConfig::from_json(recipe_json(name, scale));
}

}  // namespace rfm
