#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "plite/compress.hpp"

using namespace plite;

namespace {

Model dense_fixture(std::vector<float> weights) {
    const int n = static_cast<int>(weights.size()) / 2;
    Model m = make_model({LayerSpec::flatten(), LayerSpec::dense(2), LayerSpec::softmax()},
                         {n, 1, 1}, {"a", "b"}, "fixture");
    m.params[1].weights = Tensor({n, 2}, std::move(weights));
    m.params[1].bias = Tensor({2}, {0.5f, -0.5f});
    return m;
}

Model small_trained_model(uint64_t seed, const LabeledDataset& train_ds,
                          const LabeledDataset& val_ds, int epochs = 3) {
    Model m = canonical_cnn(train_ds.class_names, train_ds.items[0].image.shape());
    init_params(m, seed);
    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.seed = seed;
    return train(m, train_ds, val_ds, cfg).model;
}

std::set<size_t> zeroed_set(const PruneMask& mask) {
    std::set<size_t> out;
    size_t offset = 0;
    for (const Tensor& t : mask.weight_masks) {
        for (size_t j = 0; j < t.data().size(); ++j) {
            if (t.data()[j] == 0.0f) out.insert(offset + j);
        }
        offset += t.data().size();
    }
    return out;
}

}  // namespace

TEST_SUITE("compress") {

TEST_CASE("prunes the smallest magnitudes") {
    Model m = dense_fixture({0.1f, -0.5f, 0.05f, 0.9f});
    const PruneResult r = prune_magnitude(m, 0.5, PruneScope::PerLayer);
    CHECK(r.model.params[1].weights.data() == std::vector<float>{0.0f, -0.5f, 0.0f, 0.9f});
    CHECK(r.mask.weight_masks[1].data() == std::vector<float>{0.0f, 1.0f, 0.0f, 1.0f});
    // biases untouched
    CHECK(r.model.params[1].bias.data() == m.params[1].bias.data());
}

TEST_CASE("zero sparsity is a no-op with an all-ones mask") {
    Model m = dense_fixture({0.1f, -0.5f, 0.05f, 0.9f});
    const PruneResult r = prune_magnitude(m, 0.0, PruneScope::PerLayer);
    CHECK(r.model.params[1].weights.data() == m.params[1].weights.data());
    for (float v : r.mask.weight_masks[1].data()) CHECK(v == 1.0f);
}

TEST_CASE("magnitude ties break by ascending index") {
    Model m = dense_fixture({1.0f, 1.0f, -1.0f, 1.0f});
    const PruneResult r = prune_magnitude(m, 0.5, PruneScope::PerLayer);
    CHECK(r.model.params[1].weights.data() == std::vector<float>{0.0f, 0.0f, -1.0f, 1.0f});
}

TEST_CASE("sparsity outside [0,1) is rejected") {
    Model m = dense_fixture({0.1f, -0.5f, 0.05f, 0.9f});
    CHECK_THROWS_AS(prune_magnitude(m, 1.0, PruneScope::PerLayer), Error);
    CHECK_THROWS_AS(prune_magnitude(m, -0.01, PruneScope::PerLayer), Error);
}

TEST_CASE("pruning is idempotent") {
    std::mt19937_64 rng(61);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    std::vector<float> w(40);
    for (float& v : w) v = dist(rng);
    Model m = dense_fixture(w);
    const PruneResult once = prune_magnitude(m, 0.6, PruneScope::PerLayer);
    const PruneResult twice = prune_magnitude(once.model, 0.6, PruneScope::PerLayer);
    CHECK(once.model.params[1].weights.data() == twice.model.params[1].weights.data());
    CHECK(once.mask.weight_masks[1].data() == twice.mask.weight_masks[1].data());
}

TEST_CASE("zeroed sets nest as sparsity grows") {
    std::mt19937_64 rng(67);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    std::vector<float> w(60);
    for (float& v : w) v = dist(rng);
    Model m = dense_fixture(w);
    for (PruneScope scope : {PruneScope::PerLayer, PruneScope::Global}) {
        std::set<size_t> prev;
        for (double s : {0.1, 0.3, 0.5, 0.8, 0.95}) {
            const PruneResult r = prune_magnitude(m, s, scope);
            const std::set<size_t> cur = zeroed_set(r.mask);
            CHECK(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
            prev = cur;
        }
    }
}

TEST_CASE("achieved sparsity is within one weight of the request") {
    std::mt19937_64 rng(71);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    std::vector<float> w(54);
    for (float& v : w) v = dist(rng);
    Model m = dense_fixture(w);
    for (double s : {0.25, 0.5, 0.7, 0.97}) {
        const PruneResult r = prune_magnitude(m, s, PruneScope::PerLayer);
        const double achieved = achieved_sparsity(r.mask);
        CHECK(achieved >= s - 1.0 / 54.0);
        CHECK(achieved <= s + 1.0 / 54.0);
    }
}

TEST_CASE("default grid has the nine standard points") {
    const std::vector<double> want{0.25, 0.50, 0.60, 0.70, 0.80, 0.90, 0.95, 0.97, 0.99};
    CHECK(default_sparsity_grid() == want);
}

TEST_CASE("sweep row at s=0 with no fine-tuning equals the baseline evaluation") {
    SynthSpec spec;
    spec.classes = 2;
    spec.per_class = 30;
    spec.image_size = 12;
    const LabeledDataset all = synth_dataset(spec, 73);
    auto [train_ds, val_ds] = split(all, 0.7, 3);
    const Model m = small_trained_model(5, train_ds, val_ds, 2);

    TrainConfig cfg;
    cfg.seed = 5;
    const SparsitySweep sweep = sparsity_sweep(m, train_ds, val_ds, {0.0, 0.5}, 0, cfg);
    REQUIRE(sweep.rows.size() == 2);
    const EvalResult base = evaluate(m, val_ds, accelerated_plan(m));
    CHECK(sweep.rows[0].val_accuracy == base.accuracy);
    CHECK(sweep.rows[0].val_loss == base.mean_loss);
    CHECK(sweep.rows[0].finetune_epochs == 0);
}

TEST_CASE("sweep rejects an unsorted grid") {
    Model m = dense_fixture({0.1f, -0.5f, 0.05f, 0.9f});
    LabeledDataset dummy;
    dummy.class_names = {"a", "b"};
    dummy.items.push_back({Tensor::zeros({2, 1, 1}), 0});
    TrainConfig cfg;
    CHECK_THROWS_WITH_AS(sparsity_sweep(m, dummy, dummy, {0.5, 0.25}, 0, cfg),
                         doctest::Contains("ascending"), Error);
}

TEST_CASE("select_sparsity picks the largest within the drop budget") {
    SparsitySweep sweep;
    sweep.rows = {{0.5, 0.980, 0.1, 2}, {0.7, 0.979, 0.1, 2}, {0.9, 0.900, 0.4, 2}};
    CHECK(select_sparsity(sweep, 0.980, 0.01) == 0.7);
}

TEST_CASE("select_sparsity takes the last row when all qualify") {
    SparsitySweep sweep;
    sweep.rows = {{0.5, 0.99, 0.1, 2}, {0.7, 0.99, 0.1, 2}, {0.9, 0.985, 0.1, 2}};
    CHECK(select_sparsity(sweep, 0.98, 0.01) == 0.9);
}

TEST_CASE("select_sparsity falls back to the best accuracy") {
    SparsitySweep sweep;
    sweep.rows = {{0.5, 0.80, 0.5, 2}, {0.7, 0.85, 0.4, 2}, {0.9, 0.70, 0.9, 2}};
    CHECK(select_sparsity(sweep, 0.99, 0.01) == 0.7);
}

TEST_CASE("weight quantization matches the hand-worked example") {
    Model m = dense_fixture({0.0f, 0.5f, -1.0f, 0.25f});
    const QuantModel qm = quantize_weights(m);
    CHECK(qm.params[1].weights.scale == doctest::Approx(1.0 / 127.0).epsilon(1e-9));
    CHECK(qm.params[1].weights.zero_point == 0);
    // round_half_even(0.5 * 127) = round_half_even(63.5) = 64
    CHECK(qm.params[1].weights.data[0] == 0);
    CHECK(qm.params[1].weights.data[1] == 64);
    CHECK(qm.params[1].weights.data[2] == -127);
}

TEST_CASE("all-zero tensor quantizes with scale 1") {
    Model m = dense_fixture({0.0f, 0.0f, 0.0f, 0.0f});
    const QuantModel qm = quantize_weights(m);
    CHECK(qm.params[1].weights.scale == 1.0f);
    for (int8_t q : qm.params[1].weights.data) CHECK(q == 0);
}

TEST_CASE("on-grid weights survive quantization exactly") {
    // multiples of max/127 with max = 1.27
    Model m = dense_fixture({1.27f, 1.27f * 64 / 127, -1.27f * 3 / 127, 0.0f});
    const QuantModel qm = quantize_weights(m);
    const Model back = dequantized_model(qm);
    for (size_t j = 0; j < back.params[1].weights.data().size(); ++j) {
        CHECK(back.params[1].weights.data()[j] ==
              doctest::Approx(m.params[1].weights.data()[j]).epsilon(1e-7));
    }
}

TEST_CASE("dequantization error is bounded by half a step") {
    std::mt19937_64 rng(79);
    std::uniform_real_distribution<float> dist(-2.0f, 2.0f);
    std::vector<float> w(64);
    for (float& v : w) v = dist(rng);
    Model m = dense_fixture(w);
    const QuantModel qm = quantize_weights(m);
    const Model back = dequantized_model(qm);
    const float half_step = qm.params[1].weights.scale * 0.5f + 1e-7f;
    for (size_t j = 0; j < w.size(); ++j) {
        CHECK(std::fabs(back.params[1].weights.data()[j] - m.params[1].weights.data()[j]) <=
              half_step);
    }
}

TEST_CASE("non-finite weights are rejected") {
    Model m = dense_fixture({0.1f, std::numeric_limits<float>::infinity(), 0.0f, 1.0f});
    CHECK_THROWS_WITH_AS(quantize_weights(m), doctest::Contains("non-finite"), Error);
}

TEST_CASE("calibration fixes the zero point of nonnegative edges at -128") {
    SynthSpec spec;
    spec.classes = 2;
    spec.per_class = 20;
    spec.image_size = 12;
    const LabeledDataset all = synth_dataset(spec, 83);
    auto [train_ds, val_ds] = split(all, 0.7, 3);
    const Model m = small_trained_model(7, train_ds, val_ds, 2);
    const QuantModel qm = calibrate_activations(quantize_weights(m), train_ds, 20);
    REQUIRE(qm.calibrated);
    REQUIRE(qm.edges.size() == m.layers.size() + 1);
    // model input is [0,1] pixels, and every post-ReLU edge is nonnegative
    CHECK(qm.edges[0].zero_point == -128);
    for (size_t i = 0; i < m.layers.size(); ++i) {
        if (m.layers[i].kind == LayerKind::ReLU) CHECK(qm.edges[i + 1].zero_point == -128);
        CHECK(qm.edges[i + 1].scale > 0.0f);
    }
}

TEST_CASE("constant activations widen to a nonzero range") {
    Model m = dense_fixture({0.0f, 0.0f, 0.0f, 0.0f});
    m.params[1].bias = Tensor({2}, {0.0f, 0.0f});
    LabeledDataset data;
    data.class_names = {"a", "b"};
    for (int i = 0; i < 3; ++i) data.items.push_back({Tensor({2, 1, 1}, {0.0f, 0.0f}), 0});
    data.items.push_back({Tensor({2, 1, 1}, {0.0f, 0.0f}), 1});
    const QuantModel qm = calibrate_activations(quantize_weights(m), data, 4);
    // every edge saw only zeros; range widened to [-1e-3, 1e-3]
    CHECK(qm.edges[0].scale == doctest::Approx(2e-3 / 255.0).epsilon(1e-4));
}

TEST_CASE("calibration rejects an empty set") {
    Model m = dense_fixture({0.1f, 0.2f, 0.3f, 0.4f});
    LabeledDataset empty;
    CHECK_THROWS_AS(calibrate_activations(quantize_weights(m), empty, 10), Error);
}

TEST_CASE("quantized identity dense stays within one step") {
    // W = I on the quantization grid, b = 0
    Model m = make_model({LayerSpec::dense(2), LayerSpec::softmax()}, {2}, {"a", "b"}, "ident");
    m.params[0].weights = Tensor({2, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
    m.params[0].bias = Tensor({2}, {0.0f, 0.0f});
    LabeledDataset calib;
    calib.class_names = {"a", "b"};
    for (int i = 0; i < 8; ++i) {
        const float a = static_cast<float>(i) / 8.0f;
        calib.items.push_back({Tensor({2}, {a, 1.0f - a}), i % 2});
    }
    const QuantModel qm = calibrate_activations(quantize_weights(m), calib, 8);
    const Tensor in({2}, {0.25f, 0.75f});
    const Tensor probs = quantized_forward(qm, in);
    // the logits fed to softmax equal the input within one quantization step
    const Model back = dequantized_model(qm);
    const Tensor want = forward(back, in, reference_plan(back));
    CHECK(std::fabs(probs.data()[0] - want.data()[0]) < 0.02);
    CHECK(std::fabs(probs.data()[1] - want.data()[1]) < 0.02);
}

TEST_CASE("quantized forward is bit-deterministic") {
    SynthSpec spec;
    spec.classes = 2;
    spec.per_class = 16;
    spec.image_size = 12;
    const LabeledDataset all = synth_dataset(spec, 89);
    auto [train_ds, val_ds] = split(all, 0.7, 3);
    const Model m = small_trained_model(11, train_ds, val_ds, 2);
    const QuantModel qm = calibrate_activations(quantize_weights(m), train_ds, 16);
    const Tensor& x = val_ds.items[0].image;
    const Tensor a = quantized_forward(qm, x);
    const Tensor b = quantized_forward(qm, x);
    CHECK(a.data() == b.data());
}

TEST_CASE("quantized forward requires calibration") {
    Model m = dense_fixture({0.1f, 0.2f, 0.3f, 0.4f});
    const QuantModel qm = quantize_weights(m);
    CHECK_THROWS_WITH_AS(quantized_forward(qm, Tensor({2, 1, 1}, {0.1f, 0.2f})),
                         doctest::Contains("not calibrated"), Error);
}

TEST_CASE("calibrating on a 100-sample subset tracks full-set calibration") {
    SynthSpec spec;
    spec.classes = 4;
    spec.per_class = 60;
    spec.image_size = 16;
    spec.noise_sigma = 0.2;
    const LabeledDataset all = synth_dataset(spec, 103);
    auto [train_ds, val_ds] = split(all, 0.7, 3);
    const Model m = small_trained_model(17, train_ds, val_ds, 3);
    const QuantModel q_full = calibrate_activations(quantize_weights(m), train_ds,
                                                    static_cast<int>(train_ds.size()));
    const QuantModel q_sub = calibrate_activations(quantize_weights(m), train_ds, 100);
    const EvalResult e_full = evaluate_quant(q_full, val_ds);
    const EvalResult e_sub = evaluate_quant(q_sub, val_ds);
    CHECK(std::fabs(e_full.accuracy - e_sub.accuracy) <= 0.01);
}

TEST_CASE("fake-quant fine-tuning does not lose accuracy") {
    SynthSpec spec;
    spec.classes = 4;
    spec.per_class = 60;
    spec.image_size = 16;
    spec.noise_sigma = 0.3;
    const LabeledDataset all = synth_dataset(spec, 107);
    auto [train_ds, val_ds] = split(all, 0.7, 3);
    const Model m = small_trained_model(19, train_ds, val_ds, 2);

    const QuantModel before = calibrate_activations(quantize_weights(m), train_ds, 100);
    const double acc_before = evaluate_quant(before, val_ds).accuracy;

    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.seed = 19;
    const Model tuned = finetune_fakequant(m, fakequant_params(before), train_ds, cfg);
    const QuantModel after = calibrate_activations(quantize_weights(tuned), train_ds, 100);
    const double acc_after = evaluate_quant(after, val_ds).accuracy;
    CHECK(acc_after >= acc_before);
}

TEST_CASE("quantized model tracks the float model on a trained classifier") {
    SynthSpec spec;
    spec.classes = 4;
    spec.per_class = 60;
    spec.image_size = 16;
    const LabeledDataset all = synth_dataset(spec, 97);
    auto [train_ds, val_ds] = split(all, 0.7, 3);
    const Model m = small_trained_model(13, train_ds, val_ds, 3);
    const QuantModel qm = calibrate_activations(quantize_weights(m), train_ds, 100);

    const ExecutionPlan plan = accelerated_plan(m);
    int agree = 0;
    for (const Example& e : val_ds.items) {
        agree += predict(m, e.image, plan) == quantized_predict(qm, e.image);
    }
    const double agreement = static_cast<double>(agree) / static_cast<double>(val_ds.size());
    CHECK(agreement >= 0.97);

    const EvalResult fl = evaluate(m, val_ds, plan);
    const EvalResult qt = evaluate_quant(qm, val_ds);
    CHECK(std::fabs(fl.accuracy - qt.accuracy) <= 0.02);
}

}  // TEST_SUITE
