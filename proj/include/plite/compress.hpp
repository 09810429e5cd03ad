#pragma once

#include <cstdint>
#include <vector>

#include "plite/train.hpp"

namespace plite {

enum class PruneScope : uint8_t { PerLayer = 0, Global = 1 };

struct PruneResult {
    Model model;
    PruneMask mask;
};

/// Magnitude pruning: zeroes the floor(sparsity*n) smallest-|w| weights, per
/// weight tensor or pooled across all of them. Ties break by ascending flat
/// index; biases are never pruned.
PruneResult prune_magnitude(const Model& model, double sparsity,
                            PruneScope scope = PruneScope::PerLayer);

/// zeros/total over all weight masks.
double achieved_sparsity(const PruneMask& mask);

struct SweepRow {
    double sparsity = 0.0;
    double val_accuracy = 0.0;
    double val_loss = 0.0;
    int finetune_epochs = 0;
};

struct SparsitySweep {
    std::vector<SweepRow> rows;
};

/// The nine-point sparsity grid used by the sweep by default.
const std::vector<double>& default_sparsity_grid();

/// For each sparsity in the grid: prune a fresh copy of the baseline,
/// fine-tune with the mask held, evaluate on the validation split.
SparsitySweep sparsity_sweep(const Model& baseline, const LabeledDataset& train_data,
                             const LabeledDataset& val_data, const std::vector<double>& grid,
                             int finetune_epochs, const TrainConfig& cfg);

/// Largest sparsity whose accuracy stays within max_drop of the baseline;
/// falls back to the highest-accuracy row when none qualifies.
double select_sparsity(const SparsitySweep& sweep, double baseline_acc, double max_drop);

// ---- int8 quantization ------------------------------------------------------

struct QuantTensor {
    std::vector<int> shape;
    std::vector<int8_t> data;
    float scale = 1.0f;
    int32_t zero_point = 0;  // always 0 for weights (symmetric)

    bool empty() const { return data.empty(); }
    int64_t size() const { return static_cast<int64_t>(data.size()); }
};

struct QuantEdge {
    float scale = 1.0f;
    int32_t zero_point = 0;
};

struct QuantLayerParams {
    QuantTensor weights;
    Tensor bias_float;            // retained until calibration fixes the bias scale
    std::vector<int32_t> bias_q;  // int32, scale = input_scale * weight_scale
    float bias_scale = 0.0f;
};

/// Model structure plus int8 weights with per-tensor symmetric scale, int32
/// biases, and per-activation-edge affine parameters once calibrated.
struct QuantModel {
    std::vector<LayerSpec> layers;
    std::vector<QuantLayerParams> params;
    std::vector<int> input_shape;
    std::vector<std::string> class_names;
    ModelMeta meta;

    bool calibrated = false;
    // edges[0] is the model input, edges[i+1] the output of layer i.
    std::vector<QuantEdge> edges;

    int num_classes() const { return static_cast<int>(class_names.size()); }
};

/// Rounds half to even, the rounding used everywhere in the quantizer.
int32_t round_half_even(double v);

/// Symmetric per-tensor weight quantization: scale = max|w|/127 (1.0 for an
/// all-zero tensor), q = clamp(round_half_even(w/scale), -127, 127).
QuantModel quantize_weights(const Model& model);

/// Runs a float forward (with dequantized weights) over `samples` inputs,
/// records per-edge min/max, derives asymmetric (scale, zero_point) covering
/// [min, max] widened to include zero, and quantizes biases to int32.
QuantModel calibrate_activations(QuantModel qmodel, const LabeledDataset& calib_data, int samples);

/// Integer inference: int8 x int8 -> int32 accumulation with int32 bias,
/// requantized per edge via a float multiplier with round-half-even; ReLU and
/// MaxPool stay in int8, final logits are dequantized and softmaxed in float.
Tensor quantized_forward(const QuantModel& qmodel, const Tensor& input);

int quantized_predict(const QuantModel& qmodel, const Tensor& input);

EvalResult evaluate_quant(const QuantModel& qmodel, const LabeledDataset& data);

/// Float model whose weights are dequantize(quantize(w)); structure and
/// metadata shared with the source.
Model dequantized_model(const QuantModel& qmodel);

/// Per-layer weight scales for finetune_fakequant.
FakeQuantParams fakequant_params(const QuantModel& qmodel);

/// Per-layer effective input/output edges after pass-through inheritance
/// (MaxPool/Flatten reuse their input edge). Requires calibration.
void effective_edges(const QuantModel& qmodel, std::vector<QuantEdge>& in_edges,
                     std::vector<QuantEdge>& out_edges);

}  // namespace plite
