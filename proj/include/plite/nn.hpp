#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "plite/tensor.hpp"

namespace plite {

enum class LayerKind : uint8_t {
    Conv2D = 1,
    MaxPool2D = 2,
    Flatten = 3,
    Dense = 4,
    ReLU = 5,
    Softmax = 6,
};

const char* to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

/// One layer of the network. Only the fields for the layer's kind are
/// meaningful; use the factories below.
struct LayerSpec {
    LayerKind kind = LayerKind::Flatten;
    int out_channels = 0;  // Conv2D
    int kernel_h = 0;      // Conv2D
    int kernel_w = 0;      // Conv2D
    int stride = 1;        // Conv2D, MaxPool2D
    int padding = 0;       // Conv2D
    int pool = 0;          // MaxPool2D
    int units = 0;         // Dense

    static LayerSpec conv2d(int out_channels, int kernel_h, int kernel_w, int stride = 1,
                            int padding = 0);
    static LayerSpec maxpool2d(int pool, int stride);
    static LayerSpec flatten();
    static LayerSpec dense(int units);
    static LayerSpec relu();
    static LayerSpec softmax();

    bool has_params() const { return kind == LayerKind::Conv2D || kind == LayerKind::Dense; }
};

/// Weight/bias pair for Conv2D (weights [kh,kw,in_c,out_c], bias [out_c]) and
/// Dense (weights [in,units], bias [units]); empty for every other kind.
struct LayerParams {
    Tensor weights;
    Tensor bias;
};

struct ModelMeta {
    std::string name = "model";
    uint64_t seed = 0;
    int epochs = 0;
};

/// A float inference model: layer specs plus aligned parameter tensors.
struct Model {
    std::vector<LayerSpec> layers;
    std::vector<LayerParams> params;  // params.size() == layers.size()
    std::vector<int> input_shape;
    std::vector<std::string> class_names;
    ModelMeta meta;

    int num_classes() const { return static_cast<int>(class_names.size()); }
};

enum class Backend : uint8_t { Reference = 0, Accelerated = 1 };

const char* to_string(Backend b);

/// Per-layer backend assignment, aligned with Model::layers.
struct ExecutionPlan {
    std::vector<Backend> backends;
};

/// Walks the layer chain from input_shape and returns each layer's output
/// shape. Throws naming the layer index when a layer is incompatible with its
/// input or its parameter tensors.
std::vector<std::vector<int>> infer_shapes(const Model& model);

/// Layer kinds the accelerated (im2col+GEMM) backend takes; the rest fall
/// back to the reference path, delegate style.
const std::set<LayerKind>& default_accelerated_kinds();

/// Assigns Accelerated to every layer whose kind is in supported, Reference
/// otherwise.
ExecutionPlan plan_execution(const Model& model, const std::set<LayerKind>& supported);

ExecutionPlan reference_plan(const Model& model);
ExecutionPlan accelerated_plan(const Model& model);
ExecutionPlan plan_for_backend(const Model& model, Backend backend);

/// Cross-correlation (no kernel flip) plus bias. weights [kh,kw,in_c,out_c].
/// Reference = direct six-loop kernel, Accelerated = im2col + GEMM; the two
/// agree within 1e-5 absolute.
Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, int stride,
              int padding, Backend backend);

Tensor maxpool2d(const Tensor& input, int pool, int stride);
Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias, Backend backend);
Tensor relu(const Tensor& input);
Tensor softmax(const Tensor& logits);

Tensor apply_layer(const LayerSpec& layer, const Tensor& input, const LayerParams& params,
                   Backend backend);

/// Runs the full layer chain; returns class probabilities (sums to 1 within
/// 1e-5).
Tensor forward(const Model& model, const Tensor& input, const ExecutionPlan& plan);

/// Lowest index wins ties.
int argmax(const std::vector<float>& v);

int predict(const Model& model, const Tensor& input, const ExecutionPlan& plan);

}  // namespace plite
