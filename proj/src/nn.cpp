#include "plite/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace plite {

const char* to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::Conv2D: return "Conv2D";
        case LayerKind::MaxPool2D: return "MaxPool2D";
        case LayerKind::Flatten: return "Flatten";
        case LayerKind::Dense: return "Dense";
        case LayerKind::ReLU: return "ReLU";
        case LayerKind::Softmax: return "Softmax";
    }
    return "?";
}

const char* to_string(Backend b) {
    return b == Backend::Accelerated ? "accelerated" : "reference";
}

LayerKind layer_kind_from_string(const std::string& name) {
    for (LayerKind k : {LayerKind::Conv2D, LayerKind::MaxPool2D, LayerKind::Flatten,
                        LayerKind::Dense, LayerKind::ReLU, LayerKind::Softmax}) {
        if (name == to_string(k)) return k;
    }
    throw Error("unknown layer kind: " + name);
}

LayerSpec LayerSpec::conv2d(int out_channels, int kernel_h, int kernel_w, int stride, int padding) {
    if (out_channels < 1 || kernel_h < 1 || kernel_w < 1 || stride < 1 || padding < 0) {
        throw Error("Conv2D: attributes must be positive (padding >= 0)");
    }
    LayerSpec s;
    s.kind = LayerKind::Conv2D;
    s.out_channels = out_channels;
    s.kernel_h = kernel_h;
    s.kernel_w = kernel_w;
    s.stride = stride;
    s.padding = padding;
    return s;
}

LayerSpec LayerSpec::maxpool2d(int pool, int stride) {
    if (pool < 1 || stride < 1) throw Error("MaxPool2D: attributes must be positive");
    LayerSpec s;
    s.kind = LayerKind::MaxPool2D;
    s.pool = pool;
    s.stride = stride;
    return s;
}

LayerSpec LayerSpec::flatten() {
    LayerSpec s;
    s.kind = LayerKind::Flatten;
    return s;
}

LayerSpec LayerSpec::dense(int units) {
    if (units < 1) throw Error("Dense: units must be positive");
    LayerSpec s;
    s.kind = LayerKind::Dense;
    s.units = units;
    return s;
}

LayerSpec LayerSpec::relu() {
    LayerSpec s;
    s.kind = LayerKind::ReLU;
    return s;
}

LayerSpec LayerSpec::softmax() {
    LayerSpec s;
    s.kind = LayerKind::Softmax;
    return s;
}

namespace {

[[noreturn]] void layer_error(size_t index, const LayerSpec& layer, const std::string& what) {
    throw Error("layer " + std::to_string(index) + " (" + to_string(layer.kind) + "): " + what);
}

std::vector<int> conv_weight_shape(const LayerSpec& l, int in_c) {
    return {l.kernel_h, l.kernel_w, in_c, l.out_channels};
}

}  // namespace

std::vector<std::vector<int>> infer_shapes(const Model& model) {
    if (model.layers.empty()) throw Error("model has no layers");
    if (model.params.size() != model.layers.size()) {
        throw Error("model params/layers misaligned: " + std::to_string(model.params.size()) +
                    " vs " + std::to_string(model.layers.size()));
    }
    std::vector<std::vector<int>> shapes;
    std::vector<int> cur = model.input_shape;
    for (size_t i = 0; i < model.layers.size(); ++i) {
        const LayerSpec& l = model.layers[i];
        const LayerParams& p = model.params[i];
        if (l.kind == LayerKind::Softmax && i + 1 != model.layers.size()) {
            layer_error(i, l, "Softmax must be the final layer");
        }
        switch (l.kind) {
            case LayerKind::Conv2D: {
                if (cur.size() != 3) layer_error(i, l, "expects [h,w,c] input, got " + Tensor::shape_str(cur));
                const int oh = [&] {
                    try {
                        return conv_out_dim(cur[0], l.kernel_h, l.stride, l.padding);
                    } catch (const Error& e) {
                        layer_error(i, l, e.what());
                    }
                }();
                const int ow = [&] {
                    try {
                        return conv_out_dim(cur[1], l.kernel_w, l.stride, l.padding);
                    } catch (const Error& e) {
                        layer_error(i, l, e.what());
                    }
                }();
                const std::vector<int> wshape = conv_weight_shape(l, cur[2]);
                if (!p.weights.empty() && p.weights.shape() != wshape) {
                    layer_error(i, l, "weight shape " + p.weights.shape_str() + " expected " +
                                          Tensor::shape_str(wshape));
                }
                if (!p.bias.empty() && p.bias.shape() != std::vector<int>{l.out_channels}) {
                    layer_error(i, l, "bias shape " + p.bias.shape_str() + " expected [" +
                                          std::to_string(l.out_channels) + "]");
                }
                cur = {oh, ow, l.out_channels};
                break;
            }
            case LayerKind::MaxPool2D: {
                if (cur.size() != 3) layer_error(i, l, "expects [h,w,c] input, got " + Tensor::shape_str(cur));
                if (cur[0] < l.pool || cur[1] < l.pool) {
                    layer_error(i, l, "pool window " + std::to_string(l.pool) +
                                          " larger than input " + Tensor::shape_str(cur));
                }
                cur = {(cur[0] - l.pool) / l.stride + 1, (cur[1] - l.pool) / l.stride + 1, cur[2]};
                break;
            }
            case LayerKind::Flatten: {
                cur = {static_cast<int>(Tensor::shape_product(cur))};
                break;
            }
            case LayerKind::Dense: {
                if (cur.size() != 1) layer_error(i, l, "expects flat input, got " + Tensor::shape_str(cur));
                const std::vector<int> wshape{cur[0], l.units};
                if (!p.weights.empty() && p.weights.shape() != wshape) {
                    layer_error(i, l, "weight shape " + p.weights.shape_str() + " expected " +
                                          Tensor::shape_str(wshape));
                }
                if (!p.bias.empty() && p.bias.shape() != std::vector<int>{l.units}) {
                    layer_error(i, l, "bias shape " + p.bias.shape_str() + " expected [" +
                                          std::to_string(l.units) + "]");
                }
                cur = {l.units};
                break;
            }
            case LayerKind::ReLU:
            case LayerKind::Softmax:
                if (l.kind == LayerKind::Softmax && cur.size() != 1) {
                    layer_error(i, l, "expects flat input, got " + Tensor::shape_str(cur));
                }
                break;
        }
        shapes.push_back(cur);
    }
    if (!model.class_names.empty()) {
        const std::vector<int>& out = shapes.back();
        if (out.size() != 1 || out[0] != model.num_classes()) {
            throw Error("final output " + Tensor::shape_str(out) + " does not match " +
                        std::to_string(model.num_classes()) + " class names");
        }
    }
    return shapes;
}

const std::set<LayerKind>& default_accelerated_kinds() {
    static const std::set<LayerKind> kinds{LayerKind::Conv2D, LayerKind::Dense};
    return kinds;
}

ExecutionPlan plan_execution(const Model& model, const std::set<LayerKind>& supported) {
    ExecutionPlan plan;
    plan.backends.reserve(model.layers.size());
    for (const LayerSpec& l : model.layers) {
        plan.backends.push_back(supported.count(l.kind) ? Backend::Accelerated
                                                        : Backend::Reference);
    }
    return plan;
}

ExecutionPlan reference_plan(const Model& model) { return plan_execution(model, {}); }

ExecutionPlan accelerated_plan(const Model& model) {
    return plan_execution(model, default_accelerated_kinds());
}

ExecutionPlan plan_for_backend(const Model& model, Backend backend) {
    return backend == Backend::Accelerated ? accelerated_plan(model) : reference_plan(model);
}

Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, int stride,
              int padding, Backend backend) {
    if (input.rank() != 3) throw Error("conv2d expects [h,w,c] input, got " + input.shape_str());
    if (weights.rank() != 4) throw Error("conv2d expects [kh,kw,in_c,out_c] weights");
    const int h = input.dim(0), w = input.dim(1), c = input.dim(2);
    const int kh = weights.dim(0), kw = weights.dim(1);
    const int wc = weights.dim(2), oc = weights.dim(3);
    if (wc != c) {
        throw Error("conv2d channel mismatch: input has " + std::to_string(c) + ", weights expect " +
                    std::to_string(wc));
    }
    if (bias.shape() != std::vector<int>{oc}) {
        throw Error("conv2d bias shape " + bias.shape_str() + " expected [" + std::to_string(oc) + "]");
    }
    const int oh = conv_out_dim(h, kh, stride, padding);
    const int ow = conv_out_dim(w, kw, stride, padding);

    if (backend == Backend::Accelerated) {
        // Delegate-style path: patch matrix times [kh*kw*c, oc] weight matrix.
        const Tensor cols = im2col(input, kh, kw, stride, padding);
        const Tensor wmat = weights.reshaped({kh * kw * c, oc});
        Tensor out = matmul(cols, wmat);
        float* po = out.data().data();
        const float* pb = bias.data().data();
        for (int r = 0; r < oh * ow; ++r) {
            for (int j = 0; j < oc; ++j) po[static_cast<size_t>(r) * oc + j] += pb[j];
        }
        return out.reshaped({oh, ow, oc});
    }

    // Reference path: direct six-loop kernel.
    Tensor out = Tensor::zeros({oh, ow, oc});
    float* po = out.data().data();
    const float* px = input.data().data();
    const float* pw = weights.data().data();
    const float* pb = bias.data().data();
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            for (int f = 0; f < oc; ++f) {
                float acc = 0.0f;
                for (int ky = 0; ky < kh; ++ky) {
                    const int iy = oy * stride - padding + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int ix = ox * stride - padding + kx;
                        if (ix < 0 || ix >= w) continue;
                        for (int ch = 0; ch < c; ++ch) {
                            acc += px[(static_cast<size_t>(iy) * w + ix) * c + ch] *
                                   pw[((static_cast<size_t>(ky) * kw + kx) * c + ch) * oc + f];
                        }
                    }
                }
                po[(static_cast<size_t>(oy) * ow + ox) * oc + f] = acc + pb[f];
            }
        }
    }
    return out;
}

Tensor maxpool2d(const Tensor& input, int pool, int stride) {
    if (input.rank() != 3) throw Error("maxpool2d expects [h,w,c] input, got " + input.shape_str());
    const int h = input.dim(0), w = input.dim(1), c = input.dim(2);
    if (h < pool || w < pool) {
        throw Error("maxpool2d window " + std::to_string(pool) + " larger than input " +
                    input.shape_str());
    }
    const int oh = (h - pool) / stride + 1;
    const int ow = (w - pool) / stride + 1;
    Tensor out = Tensor::zeros({oh, ow, c});
    float* po = out.data().data();
    const float* px = input.data().data();
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            for (int ch = 0; ch < c; ++ch) {
                float best = -std::numeric_limits<float>::infinity();
                for (int ky = 0; ky < pool; ++ky) {
                    for (int kx = 0; kx < pool; ++kx) {
                        const float v =
                            px[(static_cast<size_t>(oy * stride + ky) * w + (ox * stride + kx)) * c + ch];
                        if (v > best) best = v;
                    }
                }
                po[(static_cast<size_t>(oy) * ow + ox) * c + ch] = best;
            }
        }
    }
    return out;
}

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias, Backend backend) {
    if (input.rank() != 1) throw Error("dense expects flat input, got " + input.shape_str());
    const int in = input.dim(0);
    if (weights.rank() != 2 || weights.dim(0) != in) {
        throw Error("dense weight shape " + weights.shape_str() + " does not take input " +
                    input.shape_str());
    }
    const int units = weights.dim(1);
    if (bias.shape() != std::vector<int>{units}) {
        throw Error("dense bias shape " + bias.shape_str() + " expected [" + std::to_string(units) + "]");
    }

    if (backend == Backend::Accelerated) {
        Tensor out = matmul(input.reshaped({1, in}), weights);
        float* po = out.data().data();
        const float* pb = bias.data().data();
        for (int j = 0; j < units; ++j) po[j] += pb[j];
        return out.reshaped({units});
    }

    std::vector<float> out(static_cast<size_t>(units));
    const float* px = input.data().data();
    const float* pw = weights.data().data();
    for (int j = 0; j < units; ++j) {
        float acc = 0.0f;
        for (int i = 0; i < in; ++i) acc += px[i] * pw[static_cast<size_t>(i) * units + j];
        out[static_cast<size_t>(j)] = acc + bias.data()[static_cast<size_t>(j)];
    }
    return Tensor({units}, std::move(out));
}

Tensor relu(const Tensor& input) {
    std::vector<float> out(input.data());
    for (float& v : out) v = v > 0.0f ? v : 0.0f;
    return Tensor(input.shape(), std::move(out));
}

Tensor softmax(const Tensor& logits) {
    if (logits.rank() != 1) throw Error("softmax expects flat input, got " + logits.shape_str());
    const std::vector<float>& x = logits.data();
    float mx = x[0];
    for (float v : x) mx = std::max(mx, v);
    std::vector<float> out(x.size());
    double sum = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        out[i] = std::exp(x[i] - mx);
        sum += out[i];
    }
    const float inv = static_cast<float>(1.0 / sum);
    for (float& v : out) v *= inv;
    return Tensor(logits.shape(), std::move(out));
}

Tensor apply_layer(const LayerSpec& layer, const Tensor& input, const LayerParams& params,
                   Backend backend) {
    switch (layer.kind) {
        case LayerKind::Conv2D:
            return conv2d(input, params.weights, params.bias, layer.stride, layer.padding, backend);
        case LayerKind::MaxPool2D:
            return maxpool2d(input, layer.pool, layer.stride);
        case LayerKind::Flatten:
            return input.reshaped({static_cast<int>(input.size())});
        case LayerKind::Dense:
            return dense(input, params.weights, params.bias, backend);
        case LayerKind::ReLU:
            return relu(input);
        case LayerKind::Softmax:
            return softmax(input);
    }
    throw Error("unreachable layer kind");
}

Tensor forward(const Model& model, const Tensor& input, const ExecutionPlan& plan) {
    if (input.shape() != model.input_shape) {
        throw Error("input shape " + input.shape_str() + " does not match model input " +
                    Tensor::shape_str(model.input_shape));
    }
    if (plan.backends.size() != model.layers.size()) {
        throw Error("plan covers " + std::to_string(plan.backends.size()) + " layers, model has " +
                    std::to_string(model.layers.size()));
    }
    Tensor x = input;
    for (size_t i = 0; i < model.layers.size(); ++i) {
        x = apply_layer(model.layers[i], x, model.params[i], plan.backends[i]);
    }
    return x;
}

int argmax(const std::vector<float>& v) {
    if (v.empty()) throw Error("argmax of empty vector");
    size_t best = 0;
    for (size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return static_cast<int>(best);
}

int predict(const Model& model, const Tensor& input, const ExecutionPlan& plan) {
    return argmax(forward(model, input, plan).data());
}

}  // namespace plite
