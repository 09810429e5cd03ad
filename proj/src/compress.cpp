#include "plite/compress.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <limits>
#include <numeric>

namespace plite {

namespace {

// Sorts flat indices by (|w|, index) ascending; the first k are pruned. The
// fixed total order makes masks deterministic and nested across sparsities.
std::vector<size_t> magnitude_order(const std::vector<float>& w) {
    std::vector<size_t> idx(w.size());
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::sort(idx.begin(), idx.end(), [&w](size_t a, size_t b) {
        const float ma = std::fabs(w[a]), mb = std::fabs(w[b]);
        if (ma != mb) return ma < mb;
        return a < b;
    });
    return idx;
}

}  // namespace

PruneResult prune_magnitude(const Model& model, double sparsity, PruneScope scope) {
    if (!(sparsity >= 0.0 && sparsity < 1.0)) {
        throw Error("sparsity must be in [0,1), got " + std::to_string(sparsity));
    }
    PruneResult res;
    res.model = model;
    res.mask.weight_masks.resize(model.params.size());

    for (size_t i = 0; i < model.params.size(); ++i) {
        if (model.params[i].weights.empty()) continue;
        res.mask.weight_masks[i] = Tensor::full(model.params[i].weights.shape(), 1.0f);
    }

    if (scope == PruneScope::PerLayer) {
        for (size_t i = 0; i < res.model.params.size(); ++i) {
            LayerParams& p = res.model.params[i];
            if (p.weights.empty()) continue;
            std::vector<float>& w = p.weights.data();
            const size_t k = static_cast<size_t>(std::floor(sparsity * static_cast<double>(w.size())));
            const std::vector<size_t> order = magnitude_order(w);
            std::vector<float>& m = res.mask.weight_masks[i].data();
            for (size_t j = 0; j < k; ++j) {
                w[order[j]] = 0.0f;
                m[order[j]] = 0.0f;
            }
        }
        return res;
    }

    // Global scope: one pool across all weight tensors, ordered by
    // (|w|, layer, flat index).
    std::vector<float> pool;
    std::vector<std::pair<size_t, size_t>> where;  // (layer, flat)
    for (size_t i = 0; i < model.params.size(); ++i) {
        const Tensor& w = model.params[i].weights;
        if (w.empty()) continue;
        for (size_t j = 0; j < w.data().size(); ++j) {
            pool.push_back(w.data()[j]);
            where.emplace_back(i, j);
        }
    }
    const size_t k = static_cast<size_t>(std::floor(sparsity * static_cast<double>(pool.size())));
    const std::vector<size_t> order = magnitude_order(pool);
    for (size_t j = 0; j < k; ++j) {
        const auto [layer, flat] = where[order[j]];
        res.model.params[layer].weights.data()[flat] = 0.0f;
        res.mask.weight_masks[layer].data()[flat] = 0.0f;
    }
    return res;
}

double achieved_sparsity(const PruneMask& mask) {
    int64_t zeros = 0, total = 0;
    for (const Tensor& m : mask.weight_masks) {
        for (float v : m.data()) {
            total += 1;
            if (v == 0.0f) zeros += 1;
        }
    }
    if (total == 0) throw Error("achieved_sparsity: mask has no weights");
    return static_cast<double>(zeros) / static_cast<double>(total);
}

const std::vector<double>& default_sparsity_grid() {
    static const std::vector<double> grid{0.25, 0.50, 0.60, 0.70, 0.80, 0.90, 0.95, 0.97, 0.99};
    return grid;
}

SparsitySweep sparsity_sweep(const Model& baseline, const LabeledDataset& train_data,
                             const LabeledDataset& val_data, const std::vector<double>& grid,
                             int finetune_epochs, const TrainConfig& cfg) {
    if (grid.empty()) throw Error("sparsity_sweep: empty grid");
    for (size_t i = 1; i < grid.size(); ++i) {
        if (!(grid[i] > grid[i - 1])) throw Error("sparsity grid must be strictly ascending");
    }
    SparsitySweep sweep;
    for (double s : grid) {
        try {
            PruneResult pruned = prune_magnitude(baseline, s, PruneScope::PerLayer);
            Model m = std::move(pruned.model);
            if (finetune_epochs > 0) {
                TrainConfig ft = cfg;
                ft.epochs = finetune_epochs;
                m = finetune_masked(m, pruned.mask, train_data, ft);
            }
            const EvalResult ev = evaluate(m, val_data, accelerated_plan(m));
            sweep.rows.push_back({s, ev.accuracy, ev.mean_loss, finetune_epochs});
        } catch (const Error& e) {
            throw Error("sweep failed at sparsity " + std::to_string(s) + ": " + e.what());
        }
    }
    return sweep;
}

double select_sparsity(const SparsitySweep& sweep, double baseline_acc, double max_drop) {
    if (sweep.rows.empty()) throw Error("select_sparsity: empty sweep");
    const double bar = baseline_acc - max_drop;
    bool found = false;
    double chosen = 0.0;
    for (const SweepRow& r : sweep.rows) {
        if (r.val_accuracy >= bar && (!found || r.sparsity >= chosen)) {
            chosen = r.sparsity;
            found = true;
        }
    }
    if (found) return chosen;
    double best_acc = -1.0;
    for (const SweepRow& r : sweep.rows) {
        if (r.val_accuracy >= best_acc) {
            best_acc = r.val_accuracy;
            chosen = r.sparsity;
        }
    }
    return chosen;
}

// ---- quantization -----------------------------------------------------------

int32_t round_half_even(double v) {
    std::fesetround(FE_TONEAREST);
    return static_cast<int32_t>(std::nearbyint(v));
}

namespace {

int8_t clamp_i8(int32_t v, int32_t lo = -128, int32_t hi = 127) {
    return static_cast<int8_t>(std::clamp(v, lo, hi));
}

}  // namespace

QuantModel quantize_weights(const Model& model) {
    infer_shapes(model);
    QuantModel qm;
    qm.layers = model.layers;
    qm.input_shape = model.input_shape;
    qm.class_names = model.class_names;
    qm.meta = model.meta;
    qm.params.resize(model.params.size());

    for (size_t i = 0; i < model.params.size(); ++i) {
        const LayerParams& p = model.params[i];
        if (p.weights.empty()) {
            if (model.layers[i].has_params()) {
                throw Error("quantize_weights: layer " + std::to_string(i) + " has no parameters");
            }
            continue;
        }
        if (!p.weights.all_finite() || !p.bias.all_finite()) {
            throw Error("quantize_weights: non-finite weight in layer " + std::to_string(i));
        }
        float max_abs = 0.0f;
        for (float v : p.weights.data()) max_abs = std::max(max_abs, std::fabs(v));
        const float scale = max_abs > 0.0f ? max_abs / 127.0f : 1.0f;

        QuantTensor qt;
        qt.shape = p.weights.shape();
        qt.scale = scale;
        qt.zero_point = 0;
        qt.data.resize(p.weights.data().size());
        for (size_t j = 0; j < qt.data.size(); ++j) {
            qt.data[j] = clamp_i8(round_half_even(p.weights.data()[j] / scale), -127, 127);
        }
        qm.params[i].weights = std::move(qt);
        qm.params[i].bias_float = p.bias;
    }
    return qm;
}

Model dequantized_model(const QuantModel& qm) {
    Model m;
    m.layers = qm.layers;
    m.input_shape = qm.input_shape;
    m.class_names = qm.class_names;
    m.meta = qm.meta;
    m.params.resize(qm.params.size());
    for (size_t i = 0; i < qm.params.size(); ++i) {
        const QuantLayerParams& qp = qm.params[i];
        if (qp.weights.empty()) continue;
        std::vector<float> w(qp.weights.data.size());
        for (size_t j = 0; j < w.size(); ++j) {
            w[j] = qp.weights.scale * static_cast<float>(qp.weights.data[j]);
        }
        m.params[i].weights = Tensor(qp.weights.shape, std::move(w));
        if (!qp.bias_float.empty()) {
            m.params[i].bias = qp.bias_float;
        } else {
            // reconstruct from int32 bias
            const int n = static_cast<int>(qp.bias_q.size());
            std::vector<float> b(static_cast<size_t>(n));
            for (int j = 0; j < n; ++j) {
                b[static_cast<size_t>(j)] = qp.bias_scale * static_cast<float>(qp.bias_q[static_cast<size_t>(j)]);
            }
            m.params[i].bias = Tensor({n}, std::move(b));
        }
    }
    return m;
}

FakeQuantParams fakequant_params(const QuantModel& qm) {
    FakeQuantParams fq;
    fq.weight_scales.resize(qm.params.size(), 0.0f);
    for (size_t i = 0; i < qm.params.size(); ++i) {
        if (!qm.params[i].weights.empty()) fq.weight_scales[i] = qm.params[i].weights.scale;
    }
    return fq;
}

namespace {

QuantEdge edge_from_range(float lo, float hi) {
    // Widen to include zero so that real 0 is exactly representable.
    lo = std::min(lo, 0.0f);
    hi = std::max(hi, 0.0f);
    if (hi - lo < 1e-9f) {  // constant activation; avoid a zero scale
        lo -= 1e-3f;
        hi += 1e-3f;
    }
    QuantEdge e;
    e.scale = (hi - lo) / 255.0f;
    e.zero_point = std::clamp(-128 - round_half_even(static_cast<double>(lo) / e.scale), -128, 127);
    return e;
}

}  // namespace

void effective_edges(const QuantModel& qm, std::vector<QuantEdge>& in_edges,
                     std::vector<QuantEdge>& out_edges) {
    if (!qm.calibrated) throw Error("quantized model is not calibrated");
    in_edges.resize(qm.layers.size());
    out_edges.resize(qm.layers.size());
    QuantEdge cur = qm.edges[0];
    for (size_t i = 0; i < qm.layers.size(); ++i) {
        in_edges[i] = cur;
        switch (qm.layers[i].kind) {
            case LayerKind::Conv2D:
            case LayerKind::Dense:
            case LayerKind::ReLU:
                cur = qm.edges[i + 1];
                break;
            case LayerKind::MaxPool2D:
            case LayerKind::Flatten:
            case LayerKind::Softmax:
                break;  // values pass through (or leave int8 domain at softmax)
        }
        out_edges[i] = cur;
    }
}

QuantModel calibrate_activations(QuantModel qm, const LabeledDataset& calib_data, int samples) {
    if (calib_data.items.empty()) throw Error("calibrate_activations: empty calibration set");
    if (samples < 1) throw Error("calibrate_activations: samples must be >= 1");

    const Model fm = dequantized_model(qm);
    infer_shapes(fm);
    const LabeledDataset subset =
        take_round_robin(calib_data, std::min<int>(samples, static_cast<int>(calib_data.items.size())));

    const size_t n_edges = qm.layers.size() + 1;
    std::vector<float> lo(n_edges, std::numeric_limits<float>::infinity());
    std::vector<float> hi(n_edges, -std::numeric_limits<float>::infinity());
    auto track = [&](size_t edge, const Tensor& t) {
        for (float v : t.data()) {
            lo[edge] = std::min(lo[edge], v);
            hi[edge] = std::max(hi[edge], v);
        }
    };

    for (const Example& ex : subset.items) {
        Tensor x = ex.image;
        track(0, x);
        for (size_t i = 0; i < fm.layers.size(); ++i) {
            x = apply_layer(fm.layers[i], x, fm.params[i], Backend::Accelerated);
            track(i + 1, x);
        }
    }

    qm.edges.resize(n_edges);
    for (size_t e = 0; e < n_edges; ++e) qm.edges[e] = edge_from_range(lo[e], hi[e]);
    qm.calibrated = true;

    // int32 biases at scale = effective_input_scale * weight_scale
    std::vector<QuantEdge> in_edges, out_edges;
    effective_edges(qm, in_edges, out_edges);
    for (size_t i = 0; i < qm.params.size(); ++i) {
        QuantLayerParams& qp = qm.params[i];
        if (qp.weights.empty()) continue;
        qp.bias_scale = in_edges[i].scale * qp.weights.scale;
        qp.bias_q.resize(qp.bias_float.data().size());
        for (size_t j = 0; j < qp.bias_q.size(); ++j) {
            qp.bias_q[j] = round_half_even(static_cast<double>(qp.bias_float.data()[j]) /
                                           static_cast<double>(qp.bias_scale));
        }
        qp.bias_float = Tensor();
    }
    return qm;
}

namespace {

struct QActivation {
    std::vector<int> shape;
    std::vector<int8_t> data;
};

int8_t requant_value(int32_t q, int32_t in_zp, double multiplier, int32_t out_zp) {
    return clamp_i8(round_half_even(static_cast<double>(q - in_zp) * multiplier) + out_zp);
}

}  // namespace

Tensor quantized_forward(const QuantModel& qm, const Tensor& input) {
    if (!qm.calibrated) throw Error("quantized_forward: model is not calibrated");
    if (input.shape() != qm.input_shape) {
        throw Error("input shape " + input.shape_str() + " does not match model input " +
                    Tensor::shape_str(qm.input_shape));
    }
    std::vector<QuantEdge> in_edges, out_edges;
    effective_edges(qm, in_edges, out_edges);

    QActivation act;
    act.shape = input.shape();
    act.data.resize(input.data().size());
    {
        const QuantEdge e = qm.edges[0];
        for (size_t i = 0; i < act.data.size(); ++i) {
            act.data[i] = clamp_i8(round_half_even(static_cast<double>(input.data()[i]) / e.scale) +
                                   e.zero_point);
        }
    }

    for (size_t li = 0; li < qm.layers.size(); ++li) {
        const LayerSpec& l = qm.layers[li];
        const QuantLayerParams& qp = qm.params[li];
        const QuantEdge in_e = in_edges[li];
        const QuantEdge out_e = out_edges[li];
        switch (l.kind) {
            case LayerKind::Conv2D: {
                const int h = act.shape[0], w = act.shape[1], c = act.shape[2];
                const int kh = l.kernel_h, kw = l.kernel_w, oc = l.out_channels;
                const int oh = conv_out_dim(h, kh, l.stride, l.padding);
                const int ow = conv_out_dim(w, kw, l.stride, l.padding);
                const double mult = static_cast<double>(in_e.scale) *
                                    static_cast<double>(qp.weights.scale) /
                                    static_cast<double>(out_e.scale);
                QActivation out;
                out.shape = {oh, ow, oc};
                out.data.resize(static_cast<size_t>(oh) * ow * oc);
                const int8_t* px = act.data.data();
                const int8_t* pw = qp.weights.data.data();
                for (int oy = 0; oy < oh; ++oy) {
                    for (int ox = 0; ox < ow; ++ox) {
                        for (int f = 0; f < oc; ++f) {
                            int32_t acc = 0;
                            for (int ky = 0; ky < kh; ++ky) {
                                const int iy = oy * l.stride - l.padding + ky;
                                // padding is real zero = in_zp, so (q - zp) vanishes
                                if (iy < 0 || iy >= h) continue;
                                for (int kx = 0; kx < kw; ++kx) {
                                    const int ix = ox * l.stride - l.padding + kx;
                                    if (ix < 0 || ix >= w) continue;
                                    for (int ch = 0; ch < c; ++ch) {
                                        const int32_t xv =
                                            px[(static_cast<size_t>(iy) * w + ix) * c + ch] -
                                            in_e.zero_point;
                                        const int32_t wv =
                                            pw[((static_cast<size_t>(ky) * kw + kx) * c + ch) * oc + f];
                                        acc += xv * wv;
                                    }
                                }
                            }
                            acc += qp.bias_q[static_cast<size_t>(f)];
                            out.data[(static_cast<size_t>(oy) * ow + ox) * oc + f] =
                                clamp_i8(round_half_even(acc * mult) + out_e.zero_point);
                        }
                    }
                }
                act = std::move(out);
                break;
            }
            case LayerKind::Dense: {
                const int in = act.shape[0];
                const int units = l.units;
                const double mult = static_cast<double>(in_e.scale) *
                                    static_cast<double>(qp.weights.scale) /
                                    static_cast<double>(out_e.scale);
                QActivation out;
                out.shape = {units};
                out.data.resize(static_cast<size_t>(units));
                const int8_t* px = act.data.data();
                const int8_t* pw = qp.weights.data.data();
                for (int j = 0; j < units; ++j) {
                    int32_t acc = 0;
                    for (int i = 0; i < in; ++i) {
                        acc += (static_cast<int32_t>(px[i]) - in_e.zero_point) *
                               static_cast<int32_t>(pw[static_cast<size_t>(i) * units + j]);
                    }
                    acc += qp.bias_q[static_cast<size_t>(j)];
                    out.data[static_cast<size_t>(j)] =
                        clamp_i8(round_half_even(acc * mult) + out_e.zero_point);
                }
                act = std::move(out);
                break;
            }
            case LayerKind::ReLU: {
                const double mult =
                    static_cast<double>(in_e.scale) / static_cast<double>(out_e.scale);
                for (int8_t& q : act.data) {
                    const int32_t clipped = std::max<int32_t>(q, in_e.zero_point);
                    q = requant_value(clipped, in_e.zero_point, mult, out_e.zero_point);
                }
                break;
            }
            case LayerKind::MaxPool2D: {
                const int h = act.shape[0], w = act.shape[1], c = act.shape[2];
                const int oh = (h - l.pool) / l.stride + 1;
                const int ow = (w - l.pool) / l.stride + 1;
                QActivation out;
                out.shape = {oh, ow, c};
                out.data.resize(static_cast<size_t>(oh) * ow * c);
                const int8_t* px = act.data.data();
                size_t o = 0;
                for (int oy = 0; oy < oh; ++oy) {
                    for (int ox = 0; ox < ow; ++ox) {
                        for (int ch = 0; ch < c; ++ch, ++o) {
                            int8_t best = std::numeric_limits<int8_t>::min();
                            for (int ky = 0; ky < l.pool; ++ky) {
                                for (int kx = 0; kx < l.pool; ++kx) {
                                    best = std::max(
                                        best, px[(static_cast<size_t>(oy * l.stride + ky) * w +
                                                  (ox * l.stride + kx)) *
                                                     c +
                                                 ch]);
                                }
                            }
                            out.data[o] = best;
                        }
                    }
                }
                act = std::move(out);
                break;
            }
            case LayerKind::Flatten:
                act.shape = {static_cast<int>(act.data.size())};
                break;
            case LayerKind::Softmax: {
                const int n = static_cast<int>(act.data.size());
                std::vector<float> logits(static_cast<size_t>(n));
                for (int i = 0; i < n; ++i) {
                    logits[static_cast<size_t>(i)] =
                        in_e.scale * static_cast<float>(act.data[static_cast<size_t>(i)] - in_e.zero_point);
                }
                return softmax(Tensor({n}, std::move(logits)));
            }
        }
    }
    throw Error("quantized model has no final Softmax layer");
}

int quantized_predict(const QuantModel& qm, const Tensor& input) {
    return argmax(quantized_forward(qm, input).data());
}

EvalResult evaluate_quant(const QuantModel& qm, const LabeledDataset& data) {
    if (data.items.empty()) throw Error("evaluate_quant: dataset is empty");
    double loss = 0.0;
    int64_t correct = 0;
    for (const Example& ex : data.items) {
        const Tensor probs = quantized_forward(qm, ex.image);
        const float p = probs.data()[static_cast<size_t>(ex.label)];
        loss += -std::log(std::max(static_cast<double>(p), 1e-30));
        if (argmax(probs.data()) == ex.label) ++correct;
    }
    const double n = static_cast<double>(data.items.size());
    return {static_cast<double>(correct) / n, loss / n};
}

}  // namespace plite
