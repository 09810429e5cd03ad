#include "plite/train.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <numeric>
#include <random>

namespace plite {

Model canonical_cnn(const std::vector<std::string>& class_names, std::vector<int> input_shape) {
    const int k = static_cast<int>(class_names.size());
    std::vector<LayerSpec> layers{
        LayerSpec::conv2d(8, 3, 3), LayerSpec::relu(),    LayerSpec::maxpool2d(2, 2),
        LayerSpec::conv2d(16, 3, 3), LayerSpec::relu(),   LayerSpec::maxpool2d(2, 2),
        LayerSpec::flatten(),        LayerSpec::dense(k), LayerSpec::softmax(),
    };
    return make_model(std::move(layers), std::move(input_shape), class_names, "canonical-cnn");
}

Model make_model(std::vector<LayerSpec> layers, std::vector<int> input_shape,
                 std::vector<std::string> class_names, const std::string& name) {
    Model m;
    m.layers = std::move(layers);
    m.params.resize(m.layers.size());
    m.input_shape = std::move(input_shape);
    m.class_names = std::move(class_names);
    m.meta.name = name;
    infer_shapes(m);
    return m;
}

void init_params(Model& model, uint64_t seed) {
    const std::vector<std::vector<int>> shapes = infer_shapes(model);
    std::mt19937_64 rng(seed);
    std::vector<int> cur = model.input_shape;
    for (size_t i = 0; i < model.layers.size(); ++i) {
        const LayerSpec& l = model.layers[i];
        if (l.kind == LayerKind::Conv2D) {
            const int in_c = cur[2];
            const int fan_in = l.kernel_h * l.kernel_w * in_c;
            const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
            std::uniform_real_distribution<float> dist(-bound, bound);
            Tensor w = Tensor::zeros({l.kernel_h, l.kernel_w, in_c, l.out_channels});
            for (float& v : w.data()) v = dist(rng);
            model.params[i].weights = std::move(w);
            model.params[i].bias = Tensor::zeros({l.out_channels});
        } else if (l.kind == LayerKind::Dense) {
            const int fan_in = cur[0];
            const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
            std::uniform_real_distribution<float> dist(-bound, bound);
            Tensor w = Tensor::zeros({fan_in, l.units});
            for (float& v : w.data()) v = dist(rng);
            model.params[i].weights = std::move(w);
            model.params[i].bias = Tensor::zeros({l.units});
        }
        cur = shapes[i];
    }
    model.meta.seed = seed;
}

namespace {

// Per-layer forward state the backward pass consumes.
struct LayerCache {
    Tensor input;                 // input tensor to this layer
    Tensor cols;                  // Conv2D: im2col patch matrix
    std::vector<int> pool_src;    // MaxPool2D: winning input flat index per output element
};

struct ForwardState {
    std::vector<LayerCache> caches;
    Tensor logits;  // input of the final Softmax layer
    Tensor probs;
};

// Training forward pass. Convolutions run through im2col so the patch matrix
// can be reused by the backward pass.
ForwardState forward_train(const Model& model, const Tensor& input) {
    ForwardState st;
    st.caches.resize(model.layers.size());
    Tensor x = input;
    for (size_t i = 0; i < model.layers.size(); ++i) {
        const LayerSpec& l = model.layers[i];
        const LayerParams& p = model.params[i];
        LayerCache& cache = st.caches[i];
        switch (l.kind) {
            case LayerKind::Conv2D: {
                cache.input = x;
                const int kh = l.kernel_h, kw = l.kernel_w;
                const int c = x.dim(2), oc = l.out_channels;
                const int oh = conv_out_dim(x.dim(0), kh, l.stride, l.padding);
                const int ow = conv_out_dim(x.dim(1), kw, l.stride, l.padding);
                cache.cols = im2col(x, kh, kw, l.stride, l.padding);
                Tensor out = matmul(cache.cols, p.weights.reshaped({kh * kw * c, oc}));
                float* po = out.data().data();
                const float* pb = p.bias.data().data();
                for (int r = 0; r < oh * ow; ++r)
                    for (int j = 0; j < oc; ++j) po[static_cast<size_t>(r) * oc + j] += pb[j];
                x = out.reshaped({oh, ow, oc});
                break;
            }
            case LayerKind::MaxPool2D: {
                cache.input = x;
                const int h = x.dim(0), w = x.dim(1), c = x.dim(2);
                const int oh = (h - l.pool) / l.stride + 1;
                const int ow = (w - l.pool) / l.stride + 1;
                Tensor out = Tensor::zeros({oh, ow, c});
                cache.pool_src.resize(static_cast<size_t>(oh) * ow * c);
                const float* px = x.data().data();
                float* po = out.data().data();
                size_t o = 0;
                for (int oy = 0; oy < oh; ++oy) {
                    for (int ox = 0; ox < ow; ++ox) {
                        for (int ch = 0; ch < c; ++ch, ++o) {
                            int best_idx = -1;
                            float best = 0.0f;
                            for (int ky = 0; ky < l.pool; ++ky) {
                                for (int kx = 0; kx < l.pool; ++kx) {
                                    const int idx =
                                        ((oy * l.stride + ky) * w + (ox * l.stride + kx)) * c + ch;
                                    const float v = px[idx];
                                    if (best_idx < 0 || v > best) {  // first max wins ties
                                        best = v;
                                        best_idx = idx;
                                    }
                                }
                            }
                            po[o] = best;
                            cache.pool_src[o] = best_idx;
                        }
                    }
                }
                x = std::move(out);
                break;
            }
            case LayerKind::Flatten:
                cache.input = x;
                x = x.reshaped({static_cast<int>(x.size())});
                break;
            case LayerKind::Dense: {
                cache.input = x;
                x = dense(x, p.weights, p.bias, Backend::Accelerated);
                break;
            }
            case LayerKind::ReLU:
                cache.input = x;
                x = relu(x);
                break;
            case LayerKind::Softmax:
                st.logits = x;
                x = softmax(x);
                break;
        }
    }
    st.probs = x;
    return st;
}

double sample_loss(const Tensor& logits, int label) {
    // cross-entropy from max-subtracted log-sum-exp
    const std::vector<float>& x = logits.data();
    float mx = x[0];
    for (float v : x) mx = std::max(mx, v);
    double sum = 0.0;
    for (float v : x) sum += std::exp(static_cast<double>(v - mx));
    return std::log(sum) + mx - x[static_cast<size_t>(label)];
}

// Accumulates one sample's gradients (of its own cross-entropy) into acc.
void backward_sample(const Model& model, const ForwardState& st, int label,
                     std::vector<LayerParams>& acc) {
    const size_t n_layers = model.layers.size();
    // combined softmax + cross-entropy gradient
    Tensor grad = st.probs;
    grad.data()[static_cast<size_t>(label)] -= 1.0f;

    for (size_t ii = n_layers; ii-- > 0;) {
        const LayerSpec& l = model.layers[ii];
        const LayerParams& p = model.params[ii];
        const LayerCache& cache = st.caches[ii];
        switch (l.kind) {
            case LayerKind::Softmax:
                break;  // folded into the initial gradient
            case LayerKind::Dense: {
                const int in = cache.input.dim(0);
                const int units = l.units;
                const float* px = cache.input.data().data();
                const float* pg = grad.data().data();
                float* gw = acc[ii].weights.data().data();
                float* gb = acc[ii].bias.data().data();
                for (int i = 0; i < in; ++i) {
                    const float xv = px[i];
                    float* gr = gw + static_cast<size_t>(i) * units;
                    for (int j = 0; j < units; ++j) gr[j] += xv * pg[j];
                }
                for (int j = 0; j < units; ++j) gb[j] += pg[j];
                Tensor dx = Tensor::zeros({in});
                float* pdx = dx.data().data();
                const float* pw = p.weights.data().data();
                for (int i = 0; i < in; ++i) {
                    float s = 0.0f;
                    const float* wr = pw + static_cast<size_t>(i) * units;
                    for (int j = 0; j < units; ++j) s += wr[j] * pg[j];
                    pdx[i] = s;
                }
                grad = std::move(dx);
                break;
            }
            case LayerKind::ReLU: {
                const float* px = cache.input.data().data();
                float* pg = grad.data().data();
                for (int64_t i = 0; i < grad.size(); ++i) {
                    if (px[i] <= 0.0f) pg[i] = 0.0f;  // subgradient 0 at exactly 0
                }
                break;
            }
            case LayerKind::Flatten:
                grad = grad.reshaped(cache.input.shape());
                break;
            case LayerKind::MaxPool2D: {
                Tensor dx = Tensor::zeros(cache.input.shape());
                float* pdx = dx.data().data();
                const float* pg = grad.data().data();
                for (size_t o = 0; o < cache.pool_src.size(); ++o) {
                    pdx[cache.pool_src[o]] += pg[o];
                }
                grad = std::move(dx);
                break;
            }
            case LayerKind::Conv2D: {
                const int kh = l.kernel_h, kw = l.kernel_w;
                const Tensor& in_t = cache.input;
                const int h = in_t.dim(0), w = in_t.dim(1), c = in_t.dim(2);
                const int oc = l.out_channels;
                const int rows = cache.cols.dim(0);
                const Tensor dy = grad.reshaped({rows, oc});
                // dW = cols^T * dy, db = column sums of dy
                Tensor dwmat = matmul(transpose(cache.cols), dy);
                float* gw = acc[ii].weights.data().data();
                const float* pdw = dwmat.data().data();
                for (int64_t i = 0; i < dwmat.size(); ++i) gw[i] += pdw[i];
                float* gb = acc[ii].bias.data().data();
                const float* pdy = dy.data().data();
                for (int r = 0; r < rows; ++r)
                    for (int j = 0; j < oc; ++j) gb[j] += pdy[static_cast<size_t>(r) * oc + j];
                // dx via the patch matrix
                const Tensor wmat = p.weights.reshaped({kh * kw * c, oc});
                const Tensor dcols = matmul(dy, transpose(wmat));
                grad = col2im(dcols, h, w, c, kh, kw, l.stride, l.padding);
                break;
            }
        }
    }
}

std::vector<LayerParams> zero_like_params(const Model& model) {
    std::vector<LayerParams> out(model.params.size());
    for (size_t i = 0; i < model.params.size(); ++i) {
        if (!model.params[i].weights.empty()) {
            out[i].weights = Tensor::zeros(model.params[i].weights.shape());
            out[i].bias = Tensor::zeros(model.params[i].bias.shape());
        }
    }
    return out;
}

void scale_params(std::vector<LayerParams>& grads, float s) {
    for (LayerParams& g : grads) {
        for (float& v : g.weights.data()) v *= s;
        for (float& v : g.bias.data()) v *= s;
    }
}

void validate_config(const TrainConfig& cfg) {
    if (cfg.epochs < 1) throw Error("train: epochs must be >= 1");
    if (cfg.batch_size < 1) throw Error("train: batch_size must be >= 1");
    if (cfg.learning_rate < 0.0f) throw Error("train: learning_rate must be >= 0");
}

void validate_data(const LabeledDataset& data, const Model& model, const char* who) {
    if (data.items.empty()) throw Error(std::string(who) + ": dataset is empty");
    for (const Example& ex : data.items) {
        if (ex.label < 0 || ex.label >= model.num_classes()) {
            throw Error(std::string(who) + ": label " + std::to_string(ex.label) +
                        " outside class range 0.." + std::to_string(model.num_classes() - 1));
        }
    }
}

// One optimizer. Applies a step of SGD (optionally with momentum) and then
// lets the caller post-process weights (mask re-application, etc).
class Updater {
public:
    Updater(Model& model, const TrainConfig& cfg) : model_(model), cfg_(cfg) {
        if (cfg.optimizer == Optimizer::SgdMomentum) velocity_ = zero_like_params(model);
    }

    void step(const std::vector<LayerParams>& grads) {
        for (size_t i = 0; i < model_.params.size(); ++i) {
            LayerParams& p = model_.params[i];
            if (p.weights.empty()) continue;
            apply(p.weights.data(), grads[i].weights.data(),
                  velocity_.empty() ? nullptr : &velocity_[i].weights.data());
            apply(p.bias.data(), grads[i].bias.data(),
                  velocity_.empty() ? nullptr : &velocity_[i].bias.data());
        }
    }

private:
    void apply(std::vector<float>& w, const std::vector<float>& g, std::vector<float>* v) {
        const float lr = cfg_.learning_rate;
        if (v) {
            const float mu = cfg_.momentum;
            for (size_t i = 0; i < w.size(); ++i) {
                (*v)[i] = mu * (*v)[i] + g[i];
                w[i] -= lr * (*v)[i];
            }
        } else {
            for (size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
        }
    }

    Model& model_;
    const TrainConfig& cfg_;
    std::vector<LayerParams> velocity_;
};

struct EpochStats {
    double loss = 0.0;
    double acc = 0.0;
};

// Shared mini-batch loop. post_update runs after every optimizer step.
template <typename PostUpdate>
TrainHistory run_training(Model& model, const LabeledDataset& train_data,
                          const LabeledDataset* val_data, const TrainConfig& cfg,
                          PostUpdate&& post_update, bool fakequant = false,
                          const FakeQuantParams* qparams = nullptr) {
    validate_config(cfg);
    validate_data(train_data, model, "train");
    infer_shapes(model);

    std::mt19937_64 rng(cfg.seed);
    std::vector<size_t> order(train_data.items.size());
    std::iota(order.begin(), order.end(), size_t{0});

    Updater updater(model, cfg);
    TrainHistory history;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        int64_t correct = 0;
        const size_t n = order.size();
        size_t batch_index = 0;
        for (size_t start = 0; start < n; start += static_cast<size_t>(cfg.batch_size), ++batch_index) {
            const size_t end = std::min(n, start + static_cast<size_t>(cfg.batch_size));
            const int bsz = static_cast<int>(end - start);

            // Fake quantization runs the batch against quantize-dequantized
            // weights; gradients pass straight through to the shadow weights.
            std::vector<Tensor> shadow;
            if (fakequant) {
                shadow.reserve(model.params.size());
                for (size_t i = 0; i < model.params.size(); ++i) {
                    shadow.push_back(model.params[i].weights);
                    if (model.params[i].weights.empty()) continue;
                    const float scale = qparams->weight_scales[i];
                    std::fesetround(FE_TONEAREST);
                    for (float& v : model.params[i].weights.data()) {
                        const float q = std::clamp(
                            static_cast<float>(std::nearbyint(v / scale)), -127.0f, 127.0f);
                        v = q * scale;
                    }
                }
            }

            std::vector<LayerParams> grads = zero_like_params(model);
            double batch_loss = 0.0;
            for (size_t s = start; s < end; ++s) {
                const Example& ex = train_data.items[order[s]];
                const ForwardState st = forward_train(model, ex.image);
                batch_loss += sample_loss(st.logits, ex.label);
                if (argmax(st.probs.data()) == ex.label) ++correct;
                backward_sample(model, st, ex.label, grads);
            }
            batch_loss /= bsz;
            if (!std::isfinite(batch_loss)) {
                throw Error("training diverged: non-finite loss at epoch " +
                            std::to_string(epoch + 1) + ", batch " + std::to_string(batch_index + 1));
            }
            scale_params(grads, 1.0f / static_cast<float>(bsz));

            if (fakequant) {
                for (size_t i = 0; i < model.params.size(); ++i) {
                    model.params[i].weights = std::move(shadow[i]);
                }
            }

            updater.step(grads);
            post_update(model);
            epoch_loss += batch_loss * bsz;
        }

        history.train_loss.push_back(epoch_loss / static_cast<double>(n));
        history.train_acc.push_back(static_cast<double>(correct) / static_cast<double>(n));
        if (val_data) {
            const EvalResult ev = evaluate(model, *val_data, accelerated_plan(model));
            history.val_loss.push_back(ev.mean_loss);
            history.val_acc.push_back(ev.accuracy);
        }
    }
    model.meta.seed = cfg.seed;
    model.meta.epochs += cfg.epochs;
    return history;
}

}  // namespace

Gradients gradients(const Model& model, std::span<const Example> batch) {
    if (batch.empty()) throw Error("gradients: batch is empty");
    infer_shapes(model);
    std::vector<LayerParams> acc = zero_like_params(model);
    for (const Example& ex : batch) {
        const ForwardState st = forward_train(model, ex.image);
        backward_sample(model, st, ex.label, acc);
    }
    scale_params(acc, 1.0f / static_cast<float>(batch.size()));
    return Gradients{std::move(acc)};
}

TrainResult train(const Model& model, const LabeledDataset& train_data,
                  const LabeledDataset& val_data, const TrainConfig& cfg) {
    validate_data(val_data, model, "train (validation)");
    TrainResult res;
    res.model = model;
    res.history = run_training(res.model, train_data, &val_data, cfg, [](Model&) {});
    return res;
}

EvalResult evaluate(const Model& model, const LabeledDataset& data, const ExecutionPlan& plan) {
    validate_data(data, model, "evaluate");
    double loss = 0.0;
    int64_t correct = 0;
    for (const Example& ex : data.items) {
        const Tensor probs = forward(model, ex.image, plan);
        const float p = probs.data()[static_cast<size_t>(ex.label)];
        loss += -std::log(std::max(static_cast<double>(p), 1e-30));
        if (argmax(probs.data()) == ex.label) ++correct;
    }
    const double n = static_cast<double>(data.items.size());
    return {static_cast<double>(correct) / n, loss / n};
}

namespace {

void apply_mask(Model& model, const PruneMask& mask) {
    for (size_t i = 0; i < model.params.size(); ++i) {
        if (model.params[i].weights.empty()) continue;
        const Tensor& m = mask.weight_masks[i];
        std::vector<float>& w = model.params[i].weights.data();
        const std::vector<float>& mv = m.data();
        for (size_t j = 0; j < w.size(); ++j) {
            if (mv[j] == 0.0f) w[j] = 0.0f;
        }
    }
}

void validate_mask(const Model& model, const PruneMask& mask) {
    if (mask.weight_masks.size() != model.params.size()) {
        throw Error("mask has " + std::to_string(mask.weight_masks.size()) + " entries, model has " +
                    std::to_string(model.params.size()) + " layers");
    }
    for (size_t i = 0; i < model.params.size(); ++i) {
        if (model.params[i].weights.empty() != mask.weight_masks[i].empty() ||
            (!mask.weight_masks[i].empty() &&
             mask.weight_masks[i].shape() != model.params[i].weights.shape())) {
            throw Error("mask misaligned at layer " + std::to_string(i));
        }
    }
}

}  // namespace

Model finetune_masked(const Model& model, const PruneMask& mask, const LabeledDataset& data,
                      const TrainConfig& cfg) {
    validate_mask(model, mask);
    Model out = model;
    apply_mask(out, mask);
    run_training(out, data, nullptr, cfg, [&mask](Model& m) { apply_mask(m, mask); });
    return out;
}

Model finetune_fakequant(const Model& model, const FakeQuantParams& qparams,
                         const LabeledDataset& data, const TrainConfig& cfg) {
    if (qparams.weight_scales.size() != model.params.size()) {
        throw Error("fakequant scales misaligned: " + std::to_string(qparams.weight_scales.size()) +
                    " vs " + std::to_string(model.params.size()) + " layers");
    }
    for (size_t i = 0; i < model.params.size(); ++i) {
        if (!model.params[i].weights.empty() && !(qparams.weight_scales[i] > 0.0f)) {
            throw Error("fakequant: missing scale for layer " + std::to_string(i));
        }
    }
    Model out = model;
    run_training(out, data, nullptr, cfg, [](Model&) {}, /*fakequant=*/true, &qparams);
    return out;
}

}  // namespace plite
