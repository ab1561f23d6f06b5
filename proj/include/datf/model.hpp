#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "datf/attention.hpp"
#include "datf/grad_check.hpp"
#include "datf/rng.hpp"
#include "datf/tasks.hpp"

namespace datf {

struct ModelConfig {
    int vocab = 0;
    int d_model = 256;
    int heads = 16;
    int head_dim = 16;
    int d_ff = 512;
    int classes = 0;
    MappingKind mapping;
    AdjustmentStrategy strategy = AdjustmentStrategy::EarlyMultiply;
    int max_len = 0;
    bool use_sinusoidal_pos = false;

    void validate() const;  // throws std::invalid_argument on any violation
};

struct ModelParams {
    Matrix embeddings;  // vocab x d_model
    TransformerBlockParams block;
    Matrix classifier_w;  // d_model x C
    Matrix classifier_b;  // 1 x C
};

// Deterministic initialization: embeddings uniform [-0.05, 0.05], Xavier
// uniform projections, distance weights w_i with alternating sign and
// magnitude uniform [0.1, 1.0], v_i = 0, layer-norm gain 1 / bias 0.
ModelParams init_model(const ModelConfig& cfg, std::uint64_t seed);
ModelParams zeros_like(const ModelParams& params);

struct ModelForwardCache {
    std::vector<int> tokens;
    PadMask mask;       // empty when no PAD tokens present
    int valid_rows = 0;
    Matrix embedded;    // after optional position encoding
    TransformerBlockCache block;
    Matrix block_out;
    Matrix pooled;
    Matrix logits;
};

// embed -> (optional sinusoidal add) -> transformer block -> masked mean
// pool -> classifier affine. Returns 1 x C logits.
Matrix model_forward(const ModelParams& params, const ModelConfig& cfg,
                     std::span<const int> tokens, ModelForwardCache* cache = nullptr);

struct ExampleResult {
    double loss = 0.0;
    int predicted = -1;
};

// Forward + cross-entropy + full backward; parameter gradients accumulate
// into *grads.
ExampleResult model_example_grad(const ModelParams& params, const ModelConfig& cfg,
                                 const Example& example, ModelParams* grads);

// ---- parameter registry (fixed order, shared by Adam and checkpoints) ----

std::vector<ParamRef> param_refs(ModelParams& params);

// ---- Adam ----

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t step = 0;
    std::vector<std::vector<double>> m, v;  // lazily sized to the param list
};

void adam_step(const std::vector<ParamRef>& params, const std::vector<ParamRef>& grads,
               AdamState& state);

// ---- training / evaluation ----

struct EpochMetrics {
    double mean_loss = 0.0;
    double accuracy = 0.0;
};

// One pass over the dataset in shuffled order with mini-batch mean gradients
// and an Adam update per batch. Per-example gradients are folded in example
// order regardless of worker count, so results are bitwise reproducible.
// Throws std::runtime_error on non-finite loss.
EpochMetrics train_epoch(ModelParams& params, const ModelConfig& cfg, const Dataset& data,
                         AdamState& adam, int batch_size, rng::Engine& shuffle_rng,
                         int n_threads = 1);

struct EvalMetrics {
    double accuracy = 0.0;
    double macro_f = 0.0;
};

EvalMetrics evaluate(const ModelParams& params, const ModelConfig& cfg, const Dataset& data,
                     int n_threads = 1);

// Macro-F over a prediction/label list; exposed for tests.
double macro_f_score(const std::vector<int>& labels, const std::vector<int>& predictions,
                     int classes);

// ---- checkpoints ----
// Binary format (documented in docs/checkpoint_format.md): magic "DATF",
// u32 version, config block, shape-prefixed little-endian double arrays in
// param_refs order, then optional Adam state.

struct Checkpoint {
    ModelConfig config;
    ModelParams params;
    AdamState adam;
    bool has_adam = false;
};

void save_checkpoint(const ModelParams& params, const ModelConfig& cfg, const AdamState* adam,
                     const std::string& path);
Checkpoint load_checkpoint(const std::string& path, const ModelConfig* expected = nullptr);

}  // namespace datf
