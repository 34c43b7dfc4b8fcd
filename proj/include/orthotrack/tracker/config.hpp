#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>

#include "orthotrack/attention/attention_reg.hpp"
#include "orthotrack/masking/masking.hpp"

namespace orthotrack {

struct ModelConfig {
    StreamKind stream = StreamKind::OneStream;
    std::size_t layers = 4;          ///< encoder layers
    std::size_t relation_layers = 1; ///< joint template/search layers, two-stream only
    std::size_t heads = 4;
    std::size_t dim = 64;
    std::size_t mlp_ratio = 4;
    std::size_t patch = 16;
    std::size_t template_size = 128;
    std::size_t search_size = 256;
    std::size_t event_bins = 4;
    double template_scale = 2.0;
    double search_scale = 4.0;
    double init_std = 0.02;
    std::uint64_t init_seed = 1;

    void validate() const;
    std::size_t template_grid() const { return template_size / patch; }
    std::size_t search_grid() const { return search_size / patch; }
    std::size_t event_channels() const { return 2 * event_bins; }
    /// Layers whose attention is eligible for the rank loss.
    std::size_t regularized_layers() const {
        return stream == StreamKind::OneStream ? layers : relation_layers;
    }
};

struct OptimConfig {
    double lr_head = 1e-4;
    double lr_backbone = 1e-5;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const;
};

/// Distribution of synthetic training and evaluation sequences.
struct DataConfig {
    std::size_t sequences = 64;
    std::size_t frames = 20;
    std::size_t image_size = 256;
    double target_min = 24.0;
    double target_max = 48.0;
    double max_speed = 3.0; ///< pixels per frame
    std::size_t max_gap = 10;
    double jitter_loc = 3.0;
    double jitter_scale = 0.25;
    double noise_rate = 0.5;
    std::uint64_t seed = 1;

    void validate() const;
};

struct TrainOptions {
    std::size_t steps = 300;
    std::size_t batch = 8;
    std::uint64_t seed = 1;
    std::size_t dump_every = 100; ///< 0 disables periodic attention dumps
};

struct EvalConfig {
    std::size_t sequences = 8;
    std::size_t frames = 30;
    std::uint64_t seed = 7;
};

struct RunConfig {
    ModelConfig model;
    AugmentationConfig aug;
    OptimConfig optim;
    DataConfig data;
    TrainOptions train;
    EvalConfig eval;

    void validate() const;

    /// Laptop-scale defaults.
    static RunConfig desk();
    /// Reduced model and data for tests and the acceptance suite.
    static RunConfig micro();
};

/// Sectioned `key = value` text. Every field is written; unknown keys,
/// malformed lines and bad values throw InputError on read.
void write_config(std::ostream& os, const RunConfig& config);
RunConfig read_config(std::istream& is, RunConfig base = RunConfig::desk());
void write_config_file(const std::string& path, const RunConfig& config);
RunConfig read_config_file(const std::string& path, RunConfig base = RunConfig::desk());

/// Applies one `section.key=value` override.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);

} // namespace orthotrack
