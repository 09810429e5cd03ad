#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <span>

#include "plite/train.hpp"

using namespace plite;

namespace {

// Two separable point clouds packed as [2,1,1] "images".
LabeledDataset blob_dataset(int per_class, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> noise(0.0f, 0.35f);
    LabeledDataset ds;
    ds.class_names = {"neg", "pos"};
    for (int c = 0; c < 2; ++c) {
        const float cx = c == 0 ? -1.0f : 1.0f;
        for (int i = 0; i < per_class; ++i) {
            Tensor img({2, 1, 1}, {cx + noise(rng), -cx + noise(rng)});
            ds.items.push_back({std::move(img), c});
        }
    }
    return ds;
}

Model tiny_mlp(int classes = 2, int inputs = 2) {
    std::vector<std::string> names;
    for (int i = 0; i < classes; ++i) names.push_back("c" + std::to_string(i));
    Model m = make_model({LayerSpec::flatten(), LayerSpec::dense(classes), LayerSpec::softmax()},
                         {inputs, 1, 1}, names, "tiny-mlp");
    return m;
}

// Independent oracle: plain logistic regression (bias included) trained by
// full-batch gradient descent in double precision.
double logistic_oracle_accuracy(const LabeledDataset& train, const LabeledDataset& val) {
    double w0 = 0, w1 = 0, b = 0;
    for (int it = 0; it < 500; ++it) {
        double g0 = 0, g1 = 0, gb = 0;
        for (const Example& e : train.items) {
            const double x0 = e.image.data()[0], x1 = e.image.data()[1];
            const double z = w0 * x0 + w1 * x1 + b;
            const double p = 1.0 / (1.0 + std::exp(-z));
            const double d = p - e.label;
            g0 += d * x0;
            g1 += d * x1;
            gb += d;
        }
        const double n = static_cast<double>(train.items.size());
        w0 -= 0.5 * g0 / n;
        w1 -= 0.5 * g1 / n;
        b -= 0.5 * gb / n;
    }
    int correct = 0;
    for (const Example& e : val.items) {
        const double z = w0 * e.image.data()[0] + w1 * e.image.data()[1] + b;
        correct += (z > 0 ? 1 : 0) == e.label;
    }
    return static_cast<double>(correct) / static_cast<double>(val.items.size());
}

// Central finite differences of the batch mean cross-entropy.
double batch_loss(const Model& m, std::span<const Example> batch) {
    double total = 0.0;
    const ExecutionPlan plan = reference_plan(m);
    for (const Example& e : batch) {
        const Tensor probs = forward(m, e.image, plan);
        total += -std::log(std::max(static_cast<double>(probs.data()[e.label]), 1e-30));
    }
    return total / static_cast<double>(batch.size());
}

void check_gradients_fd(Model& m, std::span<const Example> batch, double tol = 1e-2) {
    const Gradients g = gradients(m, batch);
    const float eps = 1e-3f;
    for (size_t li = 0; li < m.params.size(); ++li) {
        for (int which = 0; which < 2; ++which) {
            Tensor& param = which == 0 ? m.params[li].weights : m.params[li].bias;
            const Tensor& grad = which == 0 ? g.per_layer[li].weights : g.per_layer[li].bias;
            for (size_t j = 0; j < param.data().size(); ++j) {
                const float orig = param.data()[j];
                param.data()[j] = orig + eps;
                const double up = batch_loss(m, batch);
                param.data()[j] = orig - eps;
                const double down = batch_loss(m, batch);
                param.data()[j] = orig;
                const double fd = (up - down) / (2.0 * eps);
                const double an = grad.data()[j];
                const double rel = std::fabs(an - fd) / std::max({std::fabs(an), std::fabs(fd), 1e-2});
                CHECK(rel < tol);
            }
        }
    }
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("zero-weight dense+softmax bias gradient is softmax minus onehot") {
    Model m = tiny_mlp(2);
    init_params(m, 1);
    for (float& v : m.params[1].weights.data()) v = 0.0f;
    for (float& v : m.params[1].bias.data()) v = 0.0f;

    // balanced batch: one of each class
    std::vector<Example> batch;
    batch.push_back({Tensor({2, 1, 1}, {0.3f, -0.2f}), 0});
    batch.push_back({Tensor({2, 1, 1}, {-0.5f, 0.1f}), 1});
    const Gradients g = gradients(m, batch);
    // probs are uniform (0.5, 0.5); mean of (probs - onehot) over the batch is 0
    CHECK(g.per_layer[1].bias.data()[0] == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(g.per_layer[1].bias.data()[1] == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("analytic gradients match central finite differences") {
    for (uint64_t seed : {3u, 4u, 5u}) {
        Model m = make_model(
            {LayerSpec::conv2d(2, 2, 2), LayerSpec::relu(), LayerSpec::maxpool2d(2, 2),
             LayerSpec::flatten(), LayerSpec::dense(3), LayerSpec::softmax()},
            {5, 5, 1}, {"a", "b", "c"}, "fd");
        init_params(m, seed);
        std::mt19937_64 rng(seed * 31);
        std::uniform_real_distribution<float> px(0.0f, 1.0f);
        std::vector<Example> batch;
        for (int i = 0; i < 2; ++i) {
            Tensor img = Tensor::zeros({5, 5, 1});
            for (float& v : img.data()) v = px(rng);
            batch.push_back({std::move(img), i % 3});
        }
        check_gradients_fd(m, batch);
    }
}

TEST_CASE("relu uses subgradient zero at exactly zero") {
    // dense output is exactly 0 for a zero input, relu sits at the kink
    Model m = make_model({LayerSpec::flatten(), LayerSpec::dense(2), LayerSpec::relu(),
                          LayerSpec::dense(2), LayerSpec::softmax()},
                         {2, 1, 1}, {"a", "b"}, "kink");
    init_params(m, 9);
    std::vector<Example> batch;
    batch.push_back({Tensor({2, 1, 1}, {0.0f, 0.0f}), 0});
    const Gradients g = gradients(m, batch);
    // with x = 0 everything upstream of the first dense gets zero gradient
    for (float v : g.per_layer[1].weights.data()) CHECK(v == 0.0f);
}

TEST_CASE("separable blobs train to high accuracy, oracle confirms the data") {
    const LabeledDataset all = blob_dataset(60, 21);
    auto [train_ds, val_ds] = split(all, 0.7, 2);

    const double oracle_acc = logistic_oracle_accuracy(train_ds, val_ds);
    CHECK(oracle_acc >= 0.99);

    Model m = tiny_mlp(2);
    init_params(m, 3);
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.batch_size = 8;
    cfg.learning_rate = 0.1f;
    cfg.seed = 4;
    const TrainResult res = train(m, train_ds, val_ds, cfg);
    CHECK(res.history.val_acc.back() >= 0.95);
    CHECK(res.history.train_loss.back() < res.history.train_loss.front());
    CHECK(res.history.val_acc.size() == 10);
}

TEST_CASE("zero learning rate leaves parameters untouched") {
    const LabeledDataset all = blob_dataset(10, 23);
    auto [train_ds, val_ds] = split(all, 0.7, 2);
    Model m = tiny_mlp(2);
    init_params(m, 5);
    const std::vector<float> before = m.params[1].weights.data();
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.learning_rate = 0.0f;
    const TrainResult res = train(m, train_ds, val_ds, cfg);
    CHECK(res.model.params[1].weights.data() == before);
    CHECK(res.history.val_acc[0] == res.history.val_acc[2]);
    CHECK(res.history.val_loss[0] == res.history.val_loss[2]);
}

TEST_CASE("plain sgd and momentum sgd both learn, differently") {
    const LabeledDataset all = blob_dataset(20, 27);
    auto [train_ds, val_ds] = split(all, 0.7, 2);
    Model m = tiny_mlp(2);
    init_params(m, 31);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.learning_rate = 0.05f;
    cfg.optimizer = Optimizer::Sgd;
    const TrainResult plain = train(m, train_ds, val_ds, cfg);
    cfg.optimizer = Optimizer::SgdMomentum;
    const TrainResult mom = train(m, train_ds, val_ds, cfg);
    CHECK(plain.history.train_loss.back() < plain.history.train_loss.front());
    CHECK(plain.model.params[1].weights.data() != m.params[1].weights.data());
    CHECK(plain.model.params[1].weights.data() != mom.model.params[1].weights.data());
}

TEST_CASE("training is bit-deterministic for a fixed seed") {
    const LabeledDataset all = blob_dataset(20, 29);
    auto [train_ds, val_ds] = split(all, 0.7, 2);
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.seed = 17;
    Model m = tiny_mlp(2);
    init_params(m, 17);
    const TrainResult a = train(m, train_ds, val_ds, cfg);
    const TrainResult b = train(m, train_ds, val_ds, cfg);
    for (size_t i = 0; i < a.model.params.size(); ++i) {
        CHECK(a.model.params[i].weights.data() == b.model.params[i].weights.data());
        CHECK(a.model.params[i].bias.data() == b.model.params[i].bias.data());
    }
}

TEST_CASE("training aborts on a non-finite loss naming epoch and batch") {
    const LabeledDataset all = blob_dataset(10, 31);
    auto [train_ds, val_ds] = split(all, 0.7, 2);
    Model m = tiny_mlp(2);
    init_params(m, 7);
    m.params[1].weights.data()[0] = std::numeric_limits<float>::infinity();
    TrainConfig cfg;
    cfg.epochs = 2;
    CHECK_THROWS_WITH_AS(train(m, train_ds, val_ds, cfg),
                         doctest::Contains("epoch 1, batch 1"), Error);
}

TEST_CASE("evaluate on a constant predictor") {
    Model m = tiny_mlp(2);
    init_params(m, 11);
    for (float& v : m.params[1].weights.data()) v = 0.0f;
    m.params[1].bias.data() = {5.0f, 0.0f};  // always predicts class 0
    LabeledDataset data;
    data.class_names = {"a", "b"};
    for (int i = 0; i < 4; ++i) data.items.push_back({Tensor({2, 1, 1}, {0.1f, 0.2f}), 0});
    const EvalResult ev = evaluate(m, data, reference_plan(m));
    CHECK(ev.accuracy == 1.0);
}

TEST_CASE("uniform model loss is ln K") {
    Model m = tiny_mlp(4);
    init_params(m, 11);
    for (float& v : m.params[1].weights.data()) v = 0.0f;
    for (float& v : m.params[1].bias.data()) v = 0.0f;
    LabeledDataset data;
    data.class_names = {"a", "b", "c", "d"};
    for (int i = 0; i < 8; ++i) data.items.push_back({Tensor({2, 1, 1}, {0.5f, -0.3f}), i % 4});
    const EvalResult ev = evaluate(m, data, reference_plan(m));
    CHECK(std::fabs(ev.mean_loss - std::log(4.0)) < 1e-5);
}

TEST_CASE("evaluate rejects empty data") {
    Model m = tiny_mlp(2);
    init_params(m, 1);
    LabeledDataset empty;
    empty.class_names = {"a", "b"};
    CHECK_THROWS_AS(evaluate(m, empty, reference_plan(m)), Error);
}

TEST_CASE("all-ones mask fine-tunes exactly like train") {
    const LabeledDataset all = blob_dataset(20, 37);
    auto [train_ds, val_ds] = split(all, 0.7, 2);
    Model m = tiny_mlp(2);
    init_params(m, 13);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.seed = 19;

    PruneMask ones;
    ones.weight_masks.resize(m.params.size());
    ones.weight_masks[1] = Tensor::full(m.params[1].weights.shape(), 1.0f);

    const Model masked = finetune_masked(m, ones, train_ds, cfg);
    const TrainResult plain = train(m, train_ds, val_ds, cfg);
    CHECK(masked.params[1].weights.data() == plain.model.params[1].weights.data());
    CHECK(masked.params[1].bias.data() == plain.model.params[1].bias.data());
}

TEST_CASE("a trained model predicts the training data it fits") {
    const LabeledDataset all = blob_dataset(40, 59);
    auto [train_ds, val_ds] = split(all, 0.7, 2);
    Model m = tiny_mlp(2);
    init_params(m, 3);
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.learning_rate = 0.1f;
    const TrainResult res = train(m, train_ds, val_ds, cfg);
    const EvalResult on_train = evaluate(res.model, train_ds, accelerated_plan(res.model));
    CHECK(on_train.accuracy >= 0.95);
    // pick an item the model fits and check predict returns its label
    const ExecutionPlan plan = accelerated_plan(res.model);
    for (const Example& e : train_ds.items) {
        const Tensor probs = forward(res.model, e.image, plan);
        if (probs.data()[static_cast<size_t>(e.label)] > 0.9f) {
            CHECK(predict(res.model, e.image, plan) == e.label);
            break;
        }
    }
}

TEST_CASE("canonical cnn separates the bar dataset") {
    SynthSpec spec;
    spec.classes = 4;
    spec.per_class = 200;
    spec.image_size = 16;
    const LabeledDataset all = synth_dataset(spec, 61);
    auto [train_ds, val_ds] = split(all, 0.7, 2);
    Model m = canonical_cnn(all.class_names, {16, 16, 1});
    init_params(m, 6);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.seed = 6;
    const TrainResult res = train(m, train_ds, val_ds, cfg);
    CHECK(res.history.val_acc.back() >= 0.95);
}

TEST_CASE("a random mask holds its zeros through fine-tuning") {
    const LabeledDataset all = blob_dataset(20, 63);
    auto [train_ds, val_ds] = split(all, 0.7, 2);
    Model m = tiny_mlp(4, 6);
    init_params(m, 8);
    PruneMask mask;
    mask.weight_masks.resize(m.params.size());
    mask.weight_masks[1] = Tensor::full(m.params[1].weights.shape(), 1.0f);
    std::mt19937_64 rng(65);
    std::bernoulli_distribution drop(0.5);
    for (float& v : mask.weight_masks[1].data()) {
        if (drop(rng)) v = 0.0f;
    }
    LabeledDataset data = all;
    for (Example& e : data.items) {
        e.image = Tensor({6, 1, 1}, {e.image.data()[0], e.image.data()[1], 0.1f, 0.2f, 0.3f, 0.4f});
        e.label = e.label % 4;
    }
    data.class_names = {"c0", "c1", "c2", "c3"};
    TrainConfig cfg;
    cfg.epochs = 3;
    const Model out = finetune_masked(m, mask, data, cfg);
    for (size_t j = 0; j < out.params[1].weights.data().size(); ++j) {
        if (mask.weight_masks[1].data()[j] == 0.0f) {
            CHECK(out.params[1].weights.data()[j] == 0.0f);
        }
    }
}

TEST_CASE("all-zeros mask pins a layer at zero") {
    const LabeledDataset all = blob_dataset(20, 41);
    auto [train_ds, val_ds] = split(all, 0.7, 2);
    Model m = tiny_mlp(2);
    init_params(m, 13);
    PruneMask mask;
    mask.weight_masks.resize(m.params.size());
    mask.weight_masks[1] = Tensor::zeros(m.params[1].weights.shape());
    TrainConfig cfg;
    cfg.epochs = 3;
    const Model out = finetune_masked(m, mask, train_ds, cfg);
    for (float v : out.params[1].weights.data()) CHECK(v == 0.0f);
}

TEST_CASE("mask misalignment is rejected") {
    const LabeledDataset all = blob_dataset(5, 43);
    Model m = tiny_mlp(2);
    init_params(m, 13);
    PruneMask bad;
    bad.weight_masks.resize(m.params.size());
    bad.weight_masks[1] = Tensor::zeros({3, 3});
    TrainConfig cfg;
    CHECK_THROWS_WITH_AS(finetune_masked(m, bad, all, cfg), doctest::Contains("misaligned"), Error);
}

TEST_CASE("fake quantization at a very fine scale behaves like plain training") {
    const LabeledDataset all = blob_dataset(16, 47);
    auto [train_ds, val_ds] = split(all, 0.7, 2);
    Model m = tiny_mlp(2);
    init_params(m, 15);
    // weights and the whole (tiny-lr) trajectory stay inside +-127*scale, and
    // the quantize-dequantize error stays below 1e-6 per value
    for (float& v : m.params[1].weights.data()) v *= 1e-4f;

    FakeQuantParams fq;
    fq.weight_scales.resize(m.params.size(), 0.0f);
    fq.weight_scales[1] = 1.9e-6f;

    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.learning_rate = 1e-6f;
    cfg.seed = 47;
    const Model fake = finetune_fakequant(m, fq, train_ds, cfg);
    const TrainResult plain = train(m, train_ds, val_ds, cfg);
    for (size_t j = 0; j < fake.params[1].weights.data().size(); ++j) {
        CHECK(std::fabs(fake.params[1].weights.data()[j] -
                        plain.model.params[1].weights.data()[j]) < 1e-4f);
    }
    const EvalResult ev_fake = evaluate(fake, val_ds, reference_plan(fake));
    const EvalResult ev_plain = evaluate(plain.model, val_ds, reference_plan(plain.model));
    CHECK(std::fabs(ev_fake.mean_loss - ev_plain.mean_loss) < 1e-4);
}

TEST_CASE("on-grid weights with zero learning rate are unchanged") {
    const LabeledDataset all = blob_dataset(8, 53);
    Model m = tiny_mlp(2);
    init_params(m, 15);
    const float scale = 0.01f;
    // snap to the quantization grid
    for (float& v : m.params[1].weights.data()) v = std::round(v / scale) * scale;
    const std::vector<float> before = m.params[1].weights.data();

    FakeQuantParams fq;
    fq.weight_scales.resize(m.params.size(), 0.0f);
    fq.weight_scales[1] = scale;
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.learning_rate = 0.0f;
    const Model out = finetune_fakequant(m, fq, all, cfg);
    CHECK(out.params[1].weights.data() == before);
}

TEST_CASE("gradients rejects an empty batch") {
    Model m = tiny_mlp(2);
    init_params(m, 1);
    CHECK_THROWS_AS(gradients(m, std::span<const Example>{}), Error);
}

}  // TEST_SUITE
