#include "datf/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>

#include "datf/parallel.hpp"

namespace datf {

void ModelConfig::validate() const {
    if (vocab < 2) throw std::invalid_argument("ModelConfig: vocab must be >= 2");
    if (heads < 1) throw std::invalid_argument("ModelConfig: heads must be >= 1");
    if (head_dim < 1) throw std::invalid_argument("ModelConfig: head_dim must be >= 1");
    if (d_model != heads * head_dim) {
        throw std::invalid_argument("ModelConfig: d_model (" + std::to_string(d_model) +
                                    ") must equal heads * head_dim (" +
                                    std::to_string(heads * head_dim) + ")");
    }
    if (d_ff < 1) throw std::invalid_argument("ModelConfig: d_ff must be >= 1");
    if (classes < 2) throw std::invalid_argument("ModelConfig: classes must be >= 2");
    if (max_len < 1) throw std::invalid_argument("ModelConfig: max_len must be >= 1");
    if (use_sinusoidal_pos && d_model % 2 != 0) {
        throw std::invalid_argument("ModelConfig: sinusoidal encoding needs even d_model");
    }
    if (mapping.type == MappingKind::Type::Clip && mapping.clip_threshold <= 0.0) {
        throw std::invalid_argument("ModelConfig: clip threshold must be > 0");
    }
}

namespace {

Matrix xavier_uniform(int rows, int cols, rng::Engine& eng) {
    const double limit = std::sqrt(6.0 / (rows + cols));
    Matrix m(rows, cols);
    for (double& v : m.values) v = rng::uniform(eng, -limit, limit);
    return m;
}

ModelParams make_params_shell(const ModelConfig& cfg) {
    ModelParams p;
    p.embeddings = Matrix(cfg.vocab, cfg.d_model);
    p.block.attention.heads.assign(
        static_cast<std::size_t>(cfg.heads),
        HeadParams{Matrix(cfg.d_model, cfg.head_dim), Matrix(cfg.d_model, cfg.head_dim),
                   Matrix(cfg.d_model, cfg.head_dim)});
    p.block.attention.wo = Matrix(cfg.heads * cfg.head_dim, cfg.d_model);
    p.block.attention.distance.assign(static_cast<std::size_t>(cfg.heads),
                                      HeadDistanceParams{0.0, 0.0, 0.0, 0.0});
    p.block.ffn_w1 = Matrix(cfg.d_model, cfg.d_ff);
    p.block.ffn_b1 = Matrix(1, cfg.d_ff);
    p.block.ffn_w2 = Matrix(cfg.d_ff, cfg.d_model);
    p.block.ffn_b2 = Matrix(1, cfg.d_model);
    p.block.ln1_gain = Matrix(1, cfg.d_model);
    p.block.ln1_bias = Matrix(1, cfg.d_model);
    p.block.ln2_gain = Matrix(1, cfg.d_model);
    p.block.ln2_bias = Matrix(1, cfg.d_model);
    p.classifier_w = Matrix(cfg.d_model, cfg.classes);
    p.classifier_b = Matrix(1, cfg.classes);
    return p;
}

// Position-encoding tables depend only on (n, d_model); cache like the
// distance matrices.
std::shared_ptr<const Matrix> cached_position_encoding(int n, int d_model) {
    static std::mutex mu;
    static std::map<std::pair<int, int>, std::shared_ptr<const Matrix>> cache;
    std::lock_guard lock(mu);
    auto key = std::make_pair(n, d_model);
    auto it = cache.find(key);
    if (it == cache.end()) {
        it = cache.emplace(key, std::make_shared<const Matrix>(
                                    sinusoidal_position_encoding(n, d_model)))
                 .first;
    }
    return it->second;
}

}  // namespace

ModelParams init_model(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    rng::Engine eng = rng::derive(seed, 0x1417);
    ModelParams p = make_params_shell(cfg);

    for (double& v : p.embeddings.values) v = rng::uniform(eng, -0.05, 0.05);
    for (HeadParams& head : p.block.attention.heads) {
        head.wq = xavier_uniform(cfg.d_model, cfg.head_dim, eng);
        head.wk = xavier_uniform(cfg.d_model, cfg.head_dim, eng);
        head.wv = xavier_uniform(cfg.d_model, cfg.head_dim, eng);
    }
    p.block.attention.wo = xavier_uniform(cfg.heads * cfg.head_dim, cfg.d_model, eng);
    for (int i = 0; i < cfg.heads; ++i) {
        HeadDistanceParams& dp = p.block.attention.distance[static_cast<std::size_t>(i)];
        const double sign = (i % 2 == 0) ? 1.0 : -1.0;
        dp.w = sign * rng::uniform(eng, 0.1, 1.0);
        dp.v = 0.0;
        dp.linear_k = cfg.mapping.linear_k;
        dp.linear_b = cfg.mapping.linear_b;
    }
    p.block.ffn_w1 = xavier_uniform(cfg.d_model, cfg.d_ff, eng);
    p.block.ffn_w2 = xavier_uniform(cfg.d_ff, cfg.d_model, eng);
    p.block.ln1_gain = Matrix::ones(1, cfg.d_model);
    p.block.ln2_gain = Matrix::ones(1, cfg.d_model);
    p.classifier_w = xavier_uniform(cfg.d_model, cfg.classes, eng);
    return p;
}

ModelParams zeros_like(const ModelParams& params) {
    ModelParams z;
    z.embeddings = Matrix(params.embeddings.rows, params.embeddings.cols);
    z.block = zeros_like(params.block);
    z.classifier_w = Matrix(params.classifier_w.rows, params.classifier_w.cols);
    z.classifier_b = Matrix(params.classifier_b.rows, params.classifier_b.cols);
    return z;
}

namespace {

Matrix masked_mean_pool(const Matrix& x, const PadMask& mask, int valid_rows) {
    if (mask.empty()) return mean_pool_rows(x);
    Matrix out(1, x.cols);
    const double inv = 1.0 / valid_rows;
    for (int i = 0; i < x.rows; ++i) {
        if (mask[static_cast<std::size_t>(i)]) continue;
        for (int j = 0; j < x.cols; ++j) out(0, j) += x(i, j) * inv;
    }
    return out;
}

Matrix masked_mean_pool_backward(int rows, const PadMask& mask, int valid_rows, const Matrix& g) {
    if (mask.empty()) return mean_pool_rows_backward(rows, g);
    Matrix out(rows, g.cols);
    const double inv = 1.0 / valid_rows;
    for (int i = 0; i < rows; ++i) {
        if (mask[static_cast<std::size_t>(i)]) continue;
        for (int j = 0; j < g.cols; ++j) out(i, j) = g(0, j) * inv;
    }
    return out;
}

}  // namespace

Matrix model_forward(const ModelParams& params, const ModelConfig& cfg,
                     std::span<const int> tokens, ModelForwardCache* cache) {
    if (tokens.empty()) throw std::invalid_argument("model_forward: empty token sequence");
    if (static_cast<int>(tokens.size()) > cfg.max_len) {
        throw std::invalid_argument("model_forward: sequence length " +
                                    std::to_string(tokens.size()) + " exceeds max_len " +
                                    std::to_string(cfg.max_len));
    }
    const int n = static_cast<int>(tokens.size());

    ModelForwardCache local;
    ModelForwardCache& c = cache ? *cache : local;
    c.tokens.assign(tokens.begin(), tokens.end());

    bool any_pad = false;
    for (int t : tokens) {
        if (t < 0 || t >= cfg.vocab) {
            throw std::out_of_range("model_forward: token id " + std::to_string(t) +
                                    " out of range [0, " + std::to_string(cfg.vocab) + ")");
        }
        if (t == kPadTokenId) any_pad = true;
    }
    c.mask.clear();
    c.valid_rows = n;
    if (any_pad) {
        c.mask.resize(static_cast<std::size_t>(n));
        int valid = 0;
        for (int i = 0; i < n; ++i) {
            const bool pad = tokens[static_cast<std::size_t>(i)] == kPadTokenId;
            c.mask[static_cast<std::size_t>(i)] = pad ? 1 : 0;
            if (!pad) ++valid;
        }
        if (valid == 0) throw std::invalid_argument("model_forward: all tokens are PAD");
        c.valid_rows = valid;
    }

    c.embedded = Matrix(n, cfg.d_model);
    for (int i = 0; i < n; ++i) {
        const int id = tokens[static_cast<std::size_t>(i)];
        for (int j = 0; j < cfg.d_model; ++j) c.embedded(i, j) = params.embeddings(id, j);
    }
    if (cfg.use_sinusoidal_pos) {
        const auto pe = cached_position_encoding(n, cfg.d_model);
        add_inplace(c.embedded, *pe);
    }

    const PadMask* mask = c.mask.empty() ? nullptr : &c.mask;
    c.block_out = transformer_block(c.embedded, params.block, cfg.mapping, cfg.strategy, mask,
                                    &c.block);
    c.pooled = masked_mean_pool(c.block_out, c.mask, c.valid_rows);
    c.logits = add(matmul(c.pooled, params.classifier_w), params.classifier_b);
    return c.logits;
}

ExampleResult model_example_grad(const ModelParams& params, const ModelConfig& cfg,
                                 const Example& example, ModelParams* grads) {
    ModelForwardCache cache;
    const Matrix logits = model_forward(params, cfg, example.tokens, &cache);

    Matrix probs;
    ExampleResult result;
    result.loss = softmax_cross_entropy(logits, example.label, &probs);
    result.predicted = 0;
    for (int j = 1; j < logits.cols; ++j) {
        if (logits(0, j) > logits(0, result.predicted)) result.predicted = j;
    }

    const Matrix d_logits = softmax_cross_entropy_backward(probs, example.label);
    add_inplace(grads->classifier_b, d_logits);
    add_inplace(grads->classifier_w, matmul_tn(cache.pooled, d_logits));
    const Matrix d_pooled = matmul_nt(d_logits, params.classifier_w);

    const Matrix d_block_out =
        masked_mean_pool_backward(cache.block_out.rows, cache.mask, cache.valid_rows, d_pooled);

    const PadMask* mask = cache.mask.empty() ? nullptr : &cache.mask;
    const Matrix d_embedded = transformer_block_backward(d_block_out, cache.block, params.block,
                                                         cfg.mapping, cfg.strategy, mask,
                                                         &grads->block);

    for (int i = 0; i < d_embedded.rows; ++i) {
        const int id = cache.tokens[static_cast<std::size_t>(i)];
        for (int j = 0; j < d_embedded.cols; ++j) grads->embeddings(id, j) += d_embedded(i, j);
    }
    return result;
}

std::vector<ParamRef> param_refs(ModelParams& p) {
    std::vector<ParamRef> refs;
    refs.push_back({"embeddings", p.embeddings.data(), p.embeddings.size(), p.embeddings.rows,
                    p.embeddings.cols});
    for (ParamRef& ref : param_refs(p.block)) refs.push_back(std::move(ref));
    refs.push_back({"classifier_w", p.classifier_w.data(), p.classifier_w.size(),
                    p.classifier_w.rows, p.classifier_w.cols});
    refs.push_back({"classifier_b", p.classifier_b.data(), p.classifier_b.size(),
                    p.classifier_b.rows, p.classifier_b.cols});
    return refs;
}

void adam_step(const std::vector<ParamRef>& params, const std::vector<ParamRef>& grads,
               AdamState& state) {
    if (params.size() != grads.size()) {
        throw std::invalid_argument("adam_step: parameter/gradient list size mismatch");
    }
    if (state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(params[i].size, 0.0);
            state.v[i].assign(params[i].size, 0.0);
        }
    }
    if (state.m.size() != params.size()) {
        throw std::invalid_argument("adam_step: state does not match parameter list");
    }

    ++state.step;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].size != grads[i].size || state.m[i].size() != params[i].size) {
            throw std::invalid_argument("adam_step: size mismatch for " + params[i].name);
        }
        double* theta = params[i].data;
        const double* g = grads[i].data;
        double* m = state.m[i].data();
        double* v = state.v[i].data();
        for (std::size_t j = 0; j < params[i].size; ++j) {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
            const double m_hat = m[j] / bc1;
            const double v_hat = v[j] / bc2;
            theta[j] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
        }
    }
}

namespace {

void zero_params(ModelParams& p) {
    for (ParamRef& ref : param_refs(p)) std::fill(ref.data, ref.data + ref.size, 0.0);
}

void fold_params(ModelParams& dst, ModelParams& src) {
    auto dst_refs = param_refs(dst);
    auto src_refs = param_refs(src);
    for (std::size_t i = 0; i < dst_refs.size(); ++i) {
        double* d = dst_refs[i].data;
        const double* s = src_refs[i].data;
        for (std::size_t j = 0; j < dst_refs[i].size; ++j) d[j] += s[j];
    }
}

}  // namespace

EpochMetrics train_epoch(ModelParams& params, const ModelConfig& cfg, const Dataset& data,
                         AdamState& adam, int batch_size, rng::Engine& shuffle_rng,
                         int n_threads) {
    if (data.examples.empty()) throw std::invalid_argument("train_epoch: empty dataset");
    if (batch_size < 1) throw std::invalid_argument("train_epoch: batch_size must be >= 1");
    n_threads = std::max(1, n_threads);

    const std::size_t n = data.examples.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng::shuffle(order, shuffle_rng);

    // Per-example gradients land in wave-local buffers and are folded in
    // example order, so the reduction does not depend on the worker count.
    std::vector<ModelParams> buffers;
    std::vector<ExampleResult> results(static_cast<std::size_t>(n_threads));
    buffers.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) buffers.push_back(zeros_like(params));

    ModelParams batch_grads = zeros_like(params);
    auto batch_refs = param_refs(batch_grads);
    auto model_refs = param_refs(params);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t batch_index = 0;

    for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(n, begin + static_cast<std::size_t>(batch_size));
        const int batch_n = static_cast<int>(end - begin);
        zero_params(batch_grads);

        double batch_loss = 0.0;
        for (std::size_t wave = begin; wave < end; wave += static_cast<std::size_t>(n_threads)) {
            const int wave_n = static_cast<int>(
                std::min(end - wave, static_cast<std::size_t>(n_threads)));
            parallel_for(wave_n, n_threads, [&](int t) {
                ModelParams& buf = buffers[static_cast<std::size_t>(t)];
                zero_params(buf);
                const Example& ex = data.examples[order[wave + static_cast<std::size_t>(t)]];
                results[static_cast<std::size_t>(t)] = model_example_grad(params, cfg, ex, &buf);
            });
            for (int t = 0; t < wave_n; ++t) {
                fold_params(batch_grads, buffers[static_cast<std::size_t>(t)]);
                const ExampleResult& r = results[static_cast<std::size_t>(t)];
                batch_loss += r.loss;
                const Example& ex = data.examples[order[wave + static_cast<std::size_t>(t)]];
                if (r.predicted == ex.label) ++correct;
            }
        }

        const double mean_batch_loss = batch_loss / batch_n;
        if (!std::isfinite(mean_batch_loss)) {
            throw std::runtime_error("train_epoch: non-finite loss in batch " +
                                     std::to_string(batch_index) + " (divergence)");
        }
        loss_sum += batch_loss;

        const double inv_bn = 1.0 / batch_n;
        for (ParamRef& ref : batch_refs) {
            for (std::size_t j = 0; j < ref.size; ++j) ref.data[j] *= inv_bn;
        }
        adam_step(model_refs, batch_refs, adam);
        ++batch_index;
    }

    EpochMetrics metrics;
    metrics.mean_loss = loss_sum / static_cast<double>(n);
    metrics.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    return metrics;
}

double macro_f_score(const std::vector<int>& labels, const std::vector<int>& predictions,
                     int classes) {
    if (labels.size() != predictions.size()) {
        throw std::invalid_argument("macro_f_score: labels/predictions size mismatch");
    }
    std::vector<std::size_t> tp(static_cast<std::size_t>(classes), 0);
    std::vector<std::size_t> fp(static_cast<std::size_t>(classes), 0);
    std::vector<std::size_t> fn(static_cast<std::size_t>(classes), 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i];
        const int p = predictions[i];
        if (y < 0 || y >= classes || p < 0 || p >= classes) {
            throw std::out_of_range("macro_f_score: class index out of range");
        }
        if (y == p) {
            ++tp[static_cast<std::size_t>(y)];
        } else {
            ++fn[static_cast<std::size_t>(y)];
            ++fp[static_cast<std::size_t>(p)];
        }
    }
    double f_sum = 0.0;
    int participating = 0;
    for (int c = 0; c < classes; ++c) {
        const std::size_t t = tp[static_cast<std::size_t>(c)];
        const std::size_t denom = 2 * t + fp[static_cast<std::size_t>(c)] + fn[static_cast<std::size_t>(c)];
        if (denom == 0) continue;  // class absent from labels and predictions
        f_sum += (2.0 * static_cast<double>(t)) / static_cast<double>(denom);
        ++participating;
    }
    return participating > 0 ? f_sum / participating : 0.0;
}

EvalMetrics evaluate(const ModelParams& params, const ModelConfig& cfg, const Dataset& data,
                     int n_threads) {
    if (data.examples.empty()) throw std::invalid_argument("evaluate: empty dataset");
    const std::size_t n = data.examples.size();
    std::vector<int> predictions(n, -1);
    parallel_for(static_cast<int>(n), std::max(1, n_threads), [&](int i) {
        const Matrix logits =
            model_forward(params, cfg, data.examples[static_cast<std::size_t>(i)].tokens);
        int best = 0;
        for (int j = 1; j < logits.cols; ++j) {
            if (logits(0, j) > logits(0, best)) best = j;
        }
        predictions[static_cast<std::size_t>(i)] = best;
    });

    std::vector<int> labels(n);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        labels[i] = data.examples[i].label;
        if (predictions[i] == labels[i]) ++correct;
    }
    EvalMetrics metrics;
    metrics.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    metrics.macro_f = macro_f_score(labels, predictions, data.classes);
    return metrics;
}

// ---- checkpoint I/O ----

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

constexpr char kMagic[4] = {'D', 'A', 'T', 'F'};
constexpr std::uint32_t kVersion = 1;

class Writer {
  public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    }
    void bytes(const void* p, std::size_t n) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        offset_ += n;
    }
    void u8(std::uint8_t x) { bytes(&x, 1); }
    void u32(std::uint32_t x) { bytes(&x, 4); }
    void u64(std::uint64_t x) { bytes(&x, 8); }
    void i32(std::int32_t x) { bytes(&x, 4); }
    void f64(double x) { bytes(&x, 8); }
    void doubles(const double* p, std::size_t n) { bytes(p, n * sizeof(double)); }
    void finish(const std::string& path) {
        out_.flush();
        if (!out_) throw std::runtime_error("checkpoint: write failed for " + path);
    }

  private:
    std::ofstream out_;
    std::size_t offset_ = 0;
};

class Reader {
  public:
    explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw std::runtime_error("checkpoint: cannot open " + path);
    }
    void bytes(void* p, std::size_t n, const char* what) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) {
            throw std::runtime_error("checkpoint: " + path_ + ": truncated file at offset " +
                                     std::to_string(offset_) + " while reading " + what);
        }
        offset_ += n;
    }
    std::uint8_t u8(const char* what) { std::uint8_t x; bytes(&x, 1, what); return x; }
    std::uint32_t u32(const char* what) { std::uint32_t x; bytes(&x, 4, what); return x; }
    std::uint64_t u64(const char* what) { std::uint64_t x; bytes(&x, 8, what); return x; }
    std::int32_t i32(const char* what) { std::int32_t x; bytes(&x, 4, what); return x; }
    double f64(const char* what) { double x; bytes(&x, 8, what); return x; }
    void doubles(double* p, std::size_t n, const char* what) { bytes(p, n * sizeof(double), what); }
    std::size_t offset() const { return offset_; }
    bool at_eof() {
        in_.peek();
        return in_.eof();
    }

  private:
    std::ifstream in_;
    std::string path_;
    std::size_t offset_ = 0;
};

void write_config(Writer& w, const ModelConfig& cfg) {
    w.i32(cfg.vocab);
    w.i32(cfg.d_model);
    w.i32(cfg.heads);
    w.i32(cfg.head_dim);
    w.i32(cfg.d_ff);
    w.i32(cfg.classes);
    w.i32(cfg.max_len);
    w.u8(cfg.use_sinusoidal_pos ? 1 : 0);
    w.u8(static_cast<std::uint8_t>(cfg.mapping.type));
    w.f64(cfg.mapping.clip_threshold);
    w.f64(cfg.mapping.linear_k);
    w.f64(cfg.mapping.linear_b);
    w.u8(static_cast<std::uint8_t>(cfg.strategy));
}

ModelConfig read_config(Reader& r) {
    ModelConfig cfg;
    cfg.vocab = r.i32("vocab");
    cfg.d_model = r.i32("d_model");
    cfg.heads = r.i32("heads");
    cfg.head_dim = r.i32("head_dim");
    cfg.d_ff = r.i32("d_ff");
    cfg.classes = r.i32("classes");
    cfg.max_len = r.i32("max_len");
    cfg.use_sinusoidal_pos = r.u8("use_sinusoidal_pos") != 0;
    const std::uint8_t mapping = r.u8("mapping");
    if (mapping > 4) {
        throw std::runtime_error("checkpoint: invalid mapping kind " + std::to_string(mapping) +
                                 " at offset " + std::to_string(r.offset() - 1));
    }
    cfg.mapping.type = static_cast<MappingKind::Type>(mapping);
    cfg.mapping.clip_threshold = r.f64("clip_threshold");
    cfg.mapping.linear_k = r.f64("linear_k");
    cfg.mapping.linear_b = r.f64("linear_b");
    const std::uint8_t strategy = r.u8("strategy");
    if (strategy > 4) {
        throw std::runtime_error("checkpoint: invalid strategy " + std::to_string(strategy) +
                                 " at offset " + std::to_string(r.offset() - 1));
    }
    cfg.strategy = static_cast<AdjustmentStrategy>(strategy);
    return cfg;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const ModelConfig& cfg, const AdamState* adam,
                     const std::string& path) {
    cfg.validate();
    Writer w(path);
    w.bytes(kMagic, 4);
    w.u32(kVersion);
    write_config(w, cfg);

    auto refs = param_refs(const_cast<ModelParams&>(params));
    w.u32(static_cast<std::uint32_t>(refs.size()));
    for (const ParamRef& ref : refs) {
        w.u32(static_cast<std::uint32_t>(ref.rows));
        w.u32(static_cast<std::uint32_t>(ref.cols));
        w.doubles(ref.data, ref.size);
    }

    if (adam) {
        w.u8(1);
        w.u64(adam->step);
        w.f64(adam->lr);
        w.f64(adam->beta1);
        w.f64(adam->beta2);
        w.f64(adam->eps);
        for (std::size_t i = 0; i < refs.size(); ++i) {
            if (!adam->m.empty() && adam->m[i].size() == refs[i].size) {
                w.doubles(adam->m[i].data(), refs[i].size);
                w.doubles(adam->v[i].data(), refs[i].size);
            } else {
                const std::vector<double> zeros(refs[i].size, 0.0);
                w.doubles(zeros.data(), zeros.size());
                w.doubles(zeros.data(), zeros.size());
            }
        }
    } else {
        w.u8(0);
    }
    w.finish(path);
}

Checkpoint load_checkpoint(const std::string& path, const ModelConfig* expected) {
    Reader r(path);
    char magic[4];
    r.bytes(magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error("checkpoint: " + path + ": bad magic at offset 0");
    }
    const std::uint32_t version = r.u32("version");
    if (version != kVersion) {
        throw std::runtime_error("checkpoint: " + path + ": unsupported format version " +
                                 std::to_string(version));
    }

    Checkpoint ckpt;
    ckpt.config = read_config(r);
    ckpt.config.validate();
    if (expected) {
        auto differs = [&](auto a, auto b) { return a != b; };
        const ModelConfig& e = *expected;
        const ModelConfig& c = ckpt.config;
        if (differs(e.vocab, c.vocab) || differs(e.d_model, c.d_model) ||
            differs(e.heads, c.heads) || differs(e.head_dim, c.head_dim) ||
            differs(e.d_ff, c.d_ff) || differs(e.classes, c.classes) ||
            differs(e.max_len, c.max_len)) {
            throw std::runtime_error("checkpoint: " + path +
                                     ": model shape does not match the expected config");
        }
    }

    ckpt.params = make_params_shell(ckpt.config);
    auto refs = param_refs(ckpt.params);
    const std::uint32_t count = r.u32("param count");
    if (count != refs.size()) {
        throw std::runtime_error("checkpoint: " + path + ": expected " +
                                 std::to_string(refs.size()) + " parameter arrays, found " +
                                 std::to_string(count));
    }
    for (ParamRef& ref : refs) {
        const std::uint32_t rows = r.u32("param rows");
        const std::uint32_t cols = r.u32("param cols");
        if (rows != static_cast<std::uint32_t>(ref.rows) ||
            cols != static_cast<std::uint32_t>(ref.cols)) {
            throw std::runtime_error("checkpoint: " + path + ": shape mismatch for parameter '" +
                                     ref.name + "' (file has " + std::to_string(rows) + "x" +
                                     std::to_string(cols) + ", model needs " +
                                     std::to_string(ref.rows) + "x" + std::to_string(ref.cols) +
                                     ")");
        }
        r.doubles(ref.data, ref.size, ref.name.c_str());
    }

    ckpt.has_adam = r.u8("adam flag") != 0;
    if (ckpt.has_adam) {
        ckpt.adam.step = r.u64("adam step");
        ckpt.adam.lr = r.f64("adam lr");
        ckpt.adam.beta1 = r.f64("adam beta1");
        ckpt.adam.beta2 = r.f64("adam beta2");
        ckpt.adam.eps = r.f64("adam eps");
        ckpt.adam.m.resize(refs.size());
        ckpt.adam.v.resize(refs.size());
        for (std::size_t i = 0; i < refs.size(); ++i) {
            ckpt.adam.m[i].resize(refs[i].size);
            ckpt.adam.v[i].resize(refs[i].size);
            r.doubles(ckpt.adam.m[i].data(), refs[i].size, "adam m");
            r.doubles(ckpt.adam.v[i].data(), refs[i].size, "adam v");
        }
    }
    return ckpt;
}

}  // namespace datf
