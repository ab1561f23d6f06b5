#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "datf/model.hpp"

using namespace datf;

namespace {

ModelConfig tiny_config(int vocab = 10, int classes = 3) {
    ModelConfig cfg;
    cfg.vocab = vocab;
    cfg.heads = 2;
    cfg.head_dim = 4;
    cfg.d_model = 8;
    cfg.d_ff = 12;
    cfg.classes = classes;
    cfg.max_len = 16;
    return cfg;
}

Dataset presence_task(std::uint64_t seed, int n_examples, int seq_len, int vocab) {
    // Label 1 iff the marker token appears; separable from pooled embeddings.
    const int marker = kFirstContentTokenId;
    rng::Engine eng = rng::derive(seed, 0xfeed);
    Dataset data;
    data.vocab = vocab;
    data.classes = 2;
    for (int i = 0; i < n_examples; ++i) {
        Example ex;
        ex.label = i % 2;
        for (int j = 0; j < seq_len; ++j) {
            ex.tokens.push_back(rng::uniform_int(eng, marker + 1, vocab - 1));
        }
        if (ex.label == 1) {
            ex.tokens[static_cast<std::size_t>(rng::uniform_int(eng, 0, seq_len - 1))] = marker;
        }
        data.examples.push_back(std::move(ex));
    }
    return data;
}

std::filesystem::path temp_path(const char* name) {
    return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("model_forward shape, determinism and input validation") {
    const ModelConfig cfg = tiny_config();
    const ModelParams params = init_model(cfg, 7);
    const std::vector<int> tokens = {2, 5, 3, 9, 4};

    const Matrix logits = model_forward(params, cfg, tokens);
    CHECK(logits.rows == 1);
    CHECK(logits.cols == cfg.classes);
    CHECK(max_abs_diff(logits, model_forward(params, cfg, tokens)) == 0.0);

    CHECK_THROWS_AS(model_forward(params, cfg, std::vector<int>{}), std::invalid_argument);
    CHECK_THROWS_AS(model_forward(params, cfg, std::vector<int>{2, 10}), std::out_of_range);
    CHECK_THROWS_AS(model_forward(params, cfg, std::vector<int>(17, 2)), std::invalid_argument);
    CHECK_THROWS_AS(model_forward(params, cfg, std::vector<int>{0, 0}), std::invalid_argument);
}

TEST_CASE("init_model alternates distance weight signs") {
    const ModelConfig cfg = tiny_config();
    const ModelParams params = init_model(cfg, 3);
    for (int i = 0; i < cfg.heads; ++i) {
        const double w = params.block.attention.distance[static_cast<std::size_t>(i)].w;
        if (i % 2 == 0) CHECK(w > 0.0);
        else CHECK(w < 0.0);
        CHECK(std::fabs(w) >= 0.1);
        CHECK(std::fabs(w) <= 1.0);
        CHECK(params.block.attention.distance[static_cast<std::size_t>(i)].v == 0.0);
    }
}

TEST_CASE("full model gradient matches finite differences for every parameter") {
    const ModelConfig cfg = tiny_config();
    ModelParams params = init_model(cfg, 11);
    ModelParams grads = zeros_like(params);
    const Example example{{2, 7, 3, 9, 4}, 1};

    const std::vector<ParamRef> values = param_refs(params);
    const std::vector<ParamRef> grad_refs = param_refs(grads);

    const auto result = gradient_check_refs(
        [&]() {
            Matrix loss(1, 1);
            loss(0, 0) = softmax_cross_entropy(model_forward(params, cfg, example.tokens),
                                               example.label);
            return loss;
        },
        [&](const Matrix& g) {
            zero_param_refs(grad_refs);
            model_example_grad(params, cfg, example, &grads);
            // upstream weight on the scalar loss
            for (const ParamRef& ref : grad_refs) {
                for (std::size_t j = 0; j < ref.size; ++j) ref.data[j] *= g(0, 0);
            }
        },
        values, grad_refs, 13);
    CHECK(result.max_rel_err < 1e-4);
    CHECK(result.checked > 300);  // every live scalar parameter, including w_i/v_i
}

TEST_CASE("adam with lr=0 or zero gradients leaves parameters unchanged") {
    const ModelConfig cfg = tiny_config();
    ModelParams params = init_model(cfg, 17);
    ModelParams reference = params;
    ModelParams grads = zeros_like(params);

    AdamState zero_lr;
    zero_lr.lr = 0.0;
    for (ParamRef& ref : param_refs(grads)) {
        for (std::size_t j = 0; j < ref.size; ++j) ref.data[j] = 1.0;
    }
    adam_step(param_refs(params), param_refs(grads), zero_lr);
    CHECK(max_abs_diff(params.embeddings, reference.embeddings) == 0.0);
    CHECK(max_abs_diff(params.block.ffn_w1, reference.block.ffn_w1) == 0.0);

    AdamState normal;
    zero_param_refs(param_refs(grads));
    adam_step(param_refs(params), param_refs(grads), normal);
    CHECK(max_abs_diff(params.embeddings, reference.embeddings) == 0.0);
    CHECK(max_abs_diff(params.classifier_w, reference.classifier_w) == 0.0);
}

TEST_CASE("train_epoch with lr=0 is a no-op on parameters") {
    ModelConfig cfg = tiny_config(12, 2);
    const Dataset data = presence_task(5, 32, 6, 12);
    cfg.max_len = 6;
    ModelParams params = init_model(cfg, 19);
    const ModelParams reference = params;
    AdamState adam;
    adam.lr = 0.0;
    rng::Engine shuffle = rng::derive(1, 2);
    train_epoch(params, cfg, data, adam, 8, shuffle);
    CHECK(max_abs_diff(params.embeddings, reference.embeddings) == 0.0);
    CHECK(max_abs_diff(params.block.attention.wo, reference.block.attention.wo) == 0.0);
    CHECK(params.block.attention.distance[0].w == reference.block.attention.distance[0].w);
}

TEST_CASE("a single example is memorized") {
    ModelConfig cfg = tiny_config(10, 3);
    cfg.max_len = 5;
    Dataset data;
    data.vocab = 10;
    data.classes = 3;
    data.examples.push_back({{2, 7, 3, 9, 4}, 2});

    auto loss_after = [&](std::uint64_t init_seed, int epochs) {
        ModelParams params = init_model(cfg, init_seed);
        AdamState adam;
        rng::Engine shuffle = rng::derive(3, 4);
        double last_loss = 1e9;
        for (int epoch = 0; epoch < epochs; ++epoch) {
            last_loss = train_epoch(params, cfg, data, adam, 1, shuffle).mean_loss;
        }
        return last_loss;
    };

    CHECK(loss_after(4, 200) < 0.01);
    // Convergence speed varies with the init draw; every instance memorizes.
    for (std::uint64_t seed = 1; seed <= 3; ++seed) CHECK(loss_after(seed, 200) < 0.05);
}

TEST_CASE("loss decreases on a separable toy task (smoothed, 5 seeds)") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        ModelConfig cfg = tiny_config(12, 2);
        cfg.max_len = 6;
        ModelParams params = init_model(cfg, seed);
        const Dataset data = presence_task(seed, 200, 6, 12);
        AdamState adam;
        rng::Engine shuffle = rng::derive(seed, 5);
        std::vector<double> losses;
        for (int epoch = 0; epoch < 6; ++epoch) {
            losses.push_back(train_epoch(params, cfg, data, adam, 16, shuffle).mean_loss);
        }
        // two-epoch moving average must fall monotonically
        for (std::size_t i = 2; i < losses.size(); ++i) {
            const double prev = 0.5 * (losses[i - 2] + losses[i - 1]);
            const double cur = 0.5 * (losses[i - 1] + losses[i]);
            INFO("seed ", seed, " epoch ", i);
            CHECK(cur < prev);
        }
    }
}

TEST_CASE("evaluate metrics") {
    ModelConfig cfg = tiny_config(12, 2);
    cfg.max_len = 6;
    const Dataset data = presence_task(9, 100, 6, 12);

    // Constant predictor: always class 0 via a degenerate classifier.
    ModelParams constant = init_model(cfg, 31);
    constant.classifier_w = Matrix(cfg.d_model, 2);
    constant.classifier_b = Matrix::from_rows({{1.0, 0.0}});
    const EvalMetrics metrics = evaluate(constant, cfg, data);
    CHECK(metrics.accuracy == doctest::Approx(0.5));
    CHECK(metrics.macro_f == doctest::Approx(1.0 / 3.0));

    // A fresh random model scores near chance on balanced data.
    const EvalMetrics chance = evaluate(init_model(cfg, 37), cfg, data);
    CHECK(chance.accuracy > 0.2);
    CHECK(chance.accuracy < 0.8);
}

TEST_CASE("macro_f conventions and relabeling invariance") {
    // All correct.
    CHECK(macro_f_score({0, 1, 0, 1}, {0, 1, 0, 1}, 2) == doctest::Approx(1.0));
    // Constant predictor on balanced labels: (2/3 + 0) / 2.
    CHECK(macro_f_score({0, 0, 1, 1}, {0, 0, 0, 0}, 2) == doctest::Approx(1.0 / 3.0));
    // A class absent from labels and predictions is excluded from the mean.
    CHECK(macro_f_score({0, 1}, {0, 1}, 3) == doctest::Approx(1.0));

    rng::Engine eng = rng::derive(41, 0);
    std::vector<int> labels, preds;
    for (int i = 0; i < 200; ++i) {
        labels.push_back(rng::uniform_int(eng, 0, 3));
        preds.push_back(rng::uniform_int(eng, 0, 3));
    }
    const double base = macro_f_score(labels, preds, 4);
    const int perm[4] = {2, 0, 3, 1};
    std::vector<int> labels_p, preds_p;
    for (int v : labels) labels_p.push_back(perm[v]);
    for (int v : preds) preds_p.push_back(perm[v]);
    CHECK(macro_f_score(labels_p, preds_p, 4) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("training is bitwise deterministic per seed") {
    ModelConfig cfg = tiny_config(12, 2);
    cfg.max_len = 6;
    const Dataset data = presence_task(43, 64, 6, 12);

    auto run = [&]() {
        ModelParams params = init_model(cfg, 47);
        AdamState adam;
        rng::Engine shuffle = rng::derive(47, 6);
        EpochMetrics last{};
        for (int epoch = 0; epoch < 3; ++epoch) {
            last = train_epoch(params, cfg, data, adam, 8, shuffle);
        }
        return std::make_pair(params, last);
    };
    auto [params_a, metrics_a] = run();
    auto [params_b, metrics_b] = run();
    CHECK(metrics_a.mean_loss == metrics_b.mean_loss);
    CHECK(metrics_a.accuracy == metrics_b.accuracy);
    CHECK(max_abs_diff(params_a.embeddings, params_b.embeddings) == 0.0);
    CHECK(max_abs_diff(params_a.block.attention.heads[0].wq,
                       params_b.block.attention.heads[0].wq) == 0.0);
}

TEST_CASE("checkpoint round-trip is bitwise") {
    const ModelConfig cfg = tiny_config();
    ModelParams params = init_model(cfg, 53);
    AdamState adam;
    adam.step = 12;
    // populate moments with one step
    ModelParams grads = zeros_like(params);
    for (ParamRef& ref : param_refs(grads)) {
        for (std::size_t j = 0; j < ref.size; ++j) ref.data[j] = 0.01 * (j % 7);
    }
    adam_step(param_refs(params), param_refs(grads), adam);

    const auto path = temp_path("datf_test_ckpt.datf");
    save_checkpoint(params, cfg, &adam, path.string());
    const Checkpoint loaded = load_checkpoint(path.string());

    CHECK(loaded.has_adam);
    CHECK(loaded.adam.step == adam.step);
    CHECK(loaded.config.heads == cfg.heads);
    CHECK(max_abs_diff(loaded.params.embeddings, params.embeddings) == 0.0);
    CHECK(max_abs_diff(loaded.params.block.attention.heads[1].wv,
                       params.block.attention.heads[1].wv) == 0.0);
    CHECK(loaded.params.block.attention.distance[1].w == params.block.attention.distance[1].w);
    for (std::size_t i = 0; i < adam.m.size(); ++i) {
        CHECK(loaded.adam.m[i] == adam.m[i]);
        CHECK(loaded.adam.v[i] == adam.v[i]);
    }
    std::filesystem::remove(path);
}

TEST_CASE("checkpoint load failures are diagnosed") {
    const ModelConfig cfg = tiny_config();
    const ModelParams params = init_model(cfg, 59);
    const auto path = temp_path("datf_test_trunc.datf");
    save_checkpoint(params, cfg, nullptr, path.string());

    // Truncate the file and expect a format error, not a crash.
    const auto full_size = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, full_size / 2);
    CHECK_THROWS_WITH_AS(load_checkpoint(path.string()), doctest::Contains("truncated"),
                         std::runtime_error);

    // Wrong magic.
    {
        std::ofstream out(path, std::ios::binary);
        out << "NOPE garbage";
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(path.string()), doctest::Contains("magic"),
                         std::runtime_error);

    // Config mismatch.
    save_checkpoint(params, cfg, nullptr, path.string());
    ModelConfig other = cfg;
    other.heads = 4;
    other.head_dim = 2;
    other.d_model = 8;
    CHECK_THROWS_WITH_AS(load_checkpoint(path.string(), &other), doctest::Contains("match"),
                         std::runtime_error);
    std::filesystem::remove(path);
}
