#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "orthotrack/attention/attention_reg.hpp"
#include "orthotrack/core/tensor.hpp"
#include "orthotrack/events/types.hpp"
#include "orthotrack/masking/masking.hpp"
#include "orthotrack/tokenizer/tokenizer.hpp"
#include "orthotrack/tracker/config.hpp"

namespace orthotrack {

/// Optimizer group of a parameter.
enum class ParamGroup { Backbone, Head };

struct NamedParameter {
    std::string name;
    Tensor value;
    ParamGroup group = ParamGroup::Backbone;
};

/// Pre-norm transformer encoder layer.
struct EncoderLayer {
    Tensor ln1_gamma, ln1_beta;
    Tensor qkv_w, qkv_b; ///< D × 3D, 1 × 3D
    Tensor out_w, out_b;
    Tensor ln2_gamma, ln2_beta;
    Tensor fc1_w, fc1_b;
    Tensor fc2_w, fc2_b;
};

struct PredictionHead {
    Tensor norm_gamma, norm_beta;
    Tensor hidden_w, hidden_b;
    Tensor cls_w, cls_b; ///< D × 1
    Tensor box_w, box_b; ///< D × 4: cell offsets (dx, dy) and size (w, h), all through a sigmoid
};

/// RGB and event views of one crop.
struct RegionPair {
    events::Planar rgb;    ///< 3 × S × S
    events::Planar events; ///< 2B × S × S
};

class TrackerModel {
  public:
    /// Parameters are drawn from N(0, init_std²) in declaration order from
    /// `config.init_seed`; layer-norm gains start at 1 and biases at 0.
    explicit TrackerModel(ModelConfig config);

    const ModelConfig& config() const { return config_; }
    const std::vector<NamedParameter>& parameters() const { return params_; }
    const Tensor& parameter(const std::string& name) const;
    std::size_t parameter_count() const;
    void zero_grad();

    PatchEmbedding rgb_embedding;
    PatchEmbedding event_embedding;
    Tensor template_positions; ///< template_grid² × D
    Tensor search_positions;   ///< search_grid² × D
    std::vector<EncoderLayer> encoder;
    std::vector<EncoderLayer> relation; ///< two-stream only
    PredictionHead head;

  private:
    Tensor add(const std::string& name, Shape shape, ParamGroup group, double std_dev, double fill = 0.0);

    ModelConfig config_;
    std::vector<NamedParameter> params_;
    std::uint64_t rng_state_;
};

struct ForwardOptions {
    const MaskSet* masks = nullptr; ///< training-time masks, null at inference
};

struct ForwardResult {
    Tensor cls_logits; ///< G² × 1 over search cells
    Tensor box_params; ///< G² × 4 in (0, 1)
    /// Attention of every regularizable layer, indexed [layer][head].
    std::vector<std::vector<AttentionRecord>> attention;
};

/// Runs the tracker on one template/search pair.
ForwardResult forward(const TrackerModel& model, const RegionPair& templ, const RegionPair& search,
                      const ForwardOptions& options = {});

/// Output of a self-attention layer with per-head attention matrices.
Tensor encoder_layer(const EncoderLayer& layer, const Tensor& x, std::size_t heads,
                     std::vector<Tensor>* attention);

/// Box in search-crop pixels decoded from the parameters of `cell`.
events::BBox decode_box(std::span<const double> params4, std::size_t cell, std::size_t grid, double crop_size);

/// Cell holding the box center, clamped to the grid.
std::size_t target_cell(const events::BBox& crop_box, std::size_t grid, double crop_size);

/// Symmetric Hann window over a G×G grid, row-major.
std::vector<double> hann_window(std::size_t grid);

struct Prediction {
    std::size_t cell = 0;
    double score = 0.0;
    events::BBox box; ///< search-crop pixels
};

/// sigmoid(logit)·hann per cell; argmax with ties to the lowest index.
Prediction predict(const ForwardResult& result, std::size_t grid, double crop_size);

} // namespace orthotrack
