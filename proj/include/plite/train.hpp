#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "plite/datasets.hpp"
#include "plite/nn.hpp"

namespace plite {

enum class Optimizer : uint8_t { Sgd = 0, SgdMomentum = 1 };

struct TrainConfig {
    int epochs = 5;
    int batch_size = 32;
    float learning_rate = 0.01f;
    uint64_t seed = 42;
    Optimizer optimizer = Optimizer::SgdMomentum;
    float momentum = 0.9f;
};

struct TrainHistory {
    std::vector<double> train_loss;
    std::vector<double> train_acc;
    std::vector<double> val_loss;
    std::vector<double> val_acc;
};

struct TrainResult {
    Model model;
    TrainHistory history;
};

struct EvalResult {
    double accuracy = 0.0;
    double mean_loss = 0.0;
};

/// Gradient of the mean cross-entropy w.r.t. every parameter, aligned with
/// Model::params (empty pairs for parameterless layers).
struct Gradients {
    std::vector<LayerParams> per_layer;
};

/// Per-parameter binary masks (1 kept, 0 pruned) aligned with Model::params.
/// Only weights are masked; biases are left alone.
struct PruneMask {
    std::vector<Tensor> weight_masks;  // empty tensor for parameterless layers
};

/// Per-weight-tensor quantization scales for fake-quant fine-tuning, aligned
/// with Model::params (0 for parameterless layers).
struct FakeQuantParams {
    std::vector<float> weight_scales;
};

/// The layer stack used throughout: Conv2D(8,3x3) -> ReLU -> MaxPool(2) ->
/// Conv2D(16,3x3) -> ReLU -> MaxPool(2) -> Flatten -> Dense(K) -> Softmax.
/// Parameters are left empty; call init_params before training.
Model canonical_cnn(const std::vector<std::string>& class_names,
                    std::vector<int> input_shape = {28, 28, 1});

/// Assembles a model with empty parameter tensors and validates the shape
/// chain.
Model make_model(std::vector<LayerSpec> layers, std::vector<int> input_shape,
                 std::vector<std::string> class_names, const std::string& name);

/// He-style uniform init, bound sqrt(6/fan_in), biases zero. Deterministic
/// for a given seed.
void init_params(Model& model, uint64_t seed);

/// Analytic gradients of mean cross-entropy over the batch.
Gradients gradients(const Model& model, std::span<const Example> batch);

/// Mini-batch gradient descent on cross-entropy. Deterministic given the
/// seed: fixed shuffle order, fixed batch accumulation order.
TrainResult train(const Model& model, const LabeledDataset& train_data,
                  const LabeledDataset& val_data, const TrainConfig& cfg);

/// accuracy = correct/total via predict; loss = mean cross-entropy.
EvalResult evaluate(const Model& model, const LabeledDataset& data, const ExecutionPlan& plan);

/// Training with the mask re-applied after every update; masked weights stay
/// exactly zero throughout.
Model finetune_masked(const Model& model, const PruneMask& mask, const LabeledDataset& data,
                      const TrainConfig& cfg);

/// Fake-quantization fine-tuning: forward sees quantize-dequantize of the
/// weights at the given scales, gradients flow straight through the rounding
/// to the float shadow weights, which are returned.
Model finetune_fakequant(const Model& model, const FakeQuantParams& qparams,
                         const LabeledDataset& data, const TrainConfig& cfg);

}  // namespace plite
