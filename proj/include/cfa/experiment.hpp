#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cfa/metrics.hpp"
#include "cfa/split.hpp"
#include "cfa/synth.hpp"
#include "cfa/train.hpp"

namespace cfa {

enum class Method { cfa, ft, lp_ft, reweight_e, reweight_yxe };

Method method_from_name(const std::string& name);
std::string method_name(Method m);

// Full experiment description: training hyperparameters plus data source,
// curation, method, and output plumbing.
struct RunConfig {
    TrainConfig train;

    std::string dataset_kind = "pixel_toy";  // pixel_toy | structured
    std::size_t num_classes = 4;
    std::size_t num_domains = 3;
    std::size_t n_per_cell = 500;
    std::size_t img_side = 8;          // pixel_toy
    double pixel_noise = 0.02;         // pixel_toy
    std::size_t class_dim = 4;         // structured
    std::size_t domain_dim = 3;        // structured
    std::size_t total_dim = 16;        // structured
    double sigma = 0.05;               // structured
    double noise_scale = 0.05;         // structured

    std::vector<std::size_t> hidden_dims = {64, 32};  // encoder hidden layers
    std::size_t feature_dim = 16;                     // encoder output d

    double ood_fraction = 0.2;
    double id_val_ratio = 0.1;
    double domain_label_ratio = 1.0;

    Method method = Method::cfa;
    double wise_alpha = -1.0;  // in [0,1] applies WiSE-FT; negative disables
    std::vector<std::uint64_t> seeds = {0};
    std::string out_dir = ".";
    std::string dataset_path;  // load instead of generating when nonempty
    std::string mask_path;     // load instead of curating when nonempty

    void validate() const;
};

// TOML-style key = value text (one pair per line, '#' comments). Unknown keys
// are rejected with the offending line number.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

// Canonical key = value echo of every field; re-parsing reproduces the config.
std::string run_config_echo(const RunConfig& cfg);

// FNV-1a hash of the canonical echo; embedded in every output file.
std::uint64_t config_hash(const RunConfig& cfg);

struct SplitMetrics {
    std::string split;
    double acc = 0.0;
    double f1 = 0.0;
};

struct SeedOutcome {
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;  // diagnostic when !ok
    MetricsReport report;
    std::vector<SplitMetrics> splits;  // train, id_val, ood_val, ood_test
};

// Per seed: generate/load data, curate/load mask, split, train per method,
// optionally WiSE-interpolate against the pretrained anchor, evaluate, and
// write <out_dir>/seed_<seed>.json. Also writes <out_dir>/aggregate.csv with
// means over successful seeds. A failing seed is recorded in its outcome and
// does not stop the others. Honors CFA_THREADS (default 1).
std::vector<SeedOutcome> run_experiment(const RunConfig& cfg);

// The single-seed pipeline behind run_experiment; throws on failure.
SeedOutcome run_single_seed(const RunConfig& cfg, std::uint64_t seed);

}  // namespace cfa
