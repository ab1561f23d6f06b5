#include "datf/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "datf/gradcheck_suite.hpp"
#include "datf/parallel.hpp"

namespace datf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void require_keys(const json& obj, const std::string& context,
                  const std::set<std::string>& allowed) {
    if (!obj.is_object()) {
        throw std::invalid_argument("config: '" + context + "' must be a JSON object");
    }
    for (const auto& item : obj.items()) {
        if (!allowed.count(item.key())) {
            std::string list;
            for (const std::string& key : allowed) list += (list.empty() ? "" : ", ") + key;
            throw std::invalid_argument("config: unknown key '" + item.key() + "' in '" +
                                        context + "' (allowed: " + list + ")");
        }
    }
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
    if (!obj.contains(key)) return fallback;
    return obj.at(key).get<T>();
}

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

std::string hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << content;
    if (!out.good()) throw std::runtime_error("write failed for " + path.string());
}

double median_of(std::vector<double> samples) {
    std::sort(samples.begin(), samples.end());
    return samples[samples.size() / 2];
}

}  // namespace

ExperimentConfig parse_experiment_config(const json& j) {
    require_keys(j, "root", {"task", "model", "optimizer", "training", "seed", "out_dir"});
    ExperimentConfig cfg;

    if (!j.contains("task")) throw std::invalid_argument("config: missing 'task'");
    const json& task = j.at("task");
    const std::string kind = task.value("kind", std::string("longrange"));
    if (kind == "local" || kind == "longrange") {
        require_keys(task, "task",
                     {"kind", "seq_len", "vocab", "train_examples", "dev_examples",
                      "test_examples"});
        cfg.task.kind = kind == "local" ? TaskConfig::Kind::Local : TaskConfig::Kind::LongRange;
        cfg.task.seq_len = get_or(task, "seq_len", cfg.task.seq_len);
        cfg.task.vocab = get_or(task, "vocab", cfg.task.vocab);
        cfg.task.train_examples = get_or(task, "train_examples", cfg.task.train_examples);
        cfg.task.dev_examples = get_or(task, "dev_examples", cfg.task.dev_examples);
        cfg.task.test_examples = get_or(task, "test_examples", cfg.task.test_examples);
    } else if (kind == "tsv") {
        require_keys(task, "task",
                     {"kind", "train_path", "dev_path", "test_path", "vocab_path", "max_len"});
        cfg.task.kind = TaskConfig::Kind::Tsv;
        cfg.task.train_path = task.at("train_path").get<std::string>();
        cfg.task.dev_path = get_or(task, "dev_path", std::string());
        cfg.task.test_path = task.at("test_path").get<std::string>();
        cfg.task.vocab_path = task.at("vocab_path").get<std::string>();
        cfg.task.max_len = get_or(task, "max_len", cfg.task.max_len);
    } else {
        throw std::invalid_argument("config: unknown task kind '" + kind +
                                    "' (expected local|longrange|tsv)");
    }

    if (j.contains("model")) {
        const json& model = j.at("model");
        require_keys(model, "model",
                     {"heads", "head_dim", "d_model", "d_ff", "mapping", "clip_threshold",
                      "linear_k", "linear_b", "strategy", "use_sinusoidal_pos"});
        cfg.heads = get_or(model, "heads", cfg.heads);
        cfg.head_dim = get_or(model, "head_dim", cfg.head_dim);
        cfg.d_ff = get_or(model, "d_ff", cfg.d_ff);
        if (model.contains("d_model") &&
            model.at("d_model").get<int>() != cfg.heads * cfg.head_dim) {
            throw std::invalid_argument("config: d_model must equal heads * head_dim");
        }
        cfg.mapping = MappingKind::parse(get_or(model, "mapping", cfg.mapping.name()));
        cfg.mapping.clip_threshold = get_or(model, "clip_threshold", cfg.mapping.clip_threshold);
        cfg.mapping.linear_k = get_or(model, "linear_k", cfg.mapping.linear_k);
        cfg.mapping.linear_b = get_or(model, "linear_b", cfg.mapping.linear_b);
        cfg.strategy = parse_strategy(get_or(model, "strategy", strategy_name(cfg.strategy)));
        cfg.use_sinusoidal_pos = get_or(model, "use_sinusoidal_pos", cfg.use_sinusoidal_pos);
    }

    if (j.contains("optimizer")) {
        const json& opt = j.at("optimizer");
        require_keys(opt, "optimizer", {"lr", "beta1", "beta2", "eps"});
        cfg.lr = get_or(opt, "lr", cfg.lr);
        cfg.beta1 = get_or(opt, "beta1", cfg.beta1);
        cfg.beta2 = get_or(opt, "beta2", cfg.beta2);
        cfg.adam_eps = get_or(opt, "eps", cfg.adam_eps);
    }

    if (j.contains("training")) {
        const json& training = j.at("training");
        require_keys(training, "training", {"epochs", "batch_size", "early_stop_test_accuracy"});
        cfg.epochs = get_or(training, "epochs", cfg.epochs);
        cfg.batch_size = get_or(training, "batch_size", cfg.batch_size);
        cfg.early_stop_test_accuracy =
            get_or(training, "early_stop_test_accuracy", cfg.early_stop_test_accuracy);
    }

    cfg.seed = get_or(j, "seed", cfg.seed);
    cfg.out_dir = get_or(j, "out_dir", cfg.out_dir);

    if (cfg.epochs < 0) throw std::invalid_argument("config: epochs must be >= 0");
    if (cfg.batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    if (cfg.lr < 0.0) throw std::invalid_argument("config: lr must be >= 0");
    return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error("config parse error in " + path + ": " + e.what());
    }
    return parse_experiment_config(j);
}

json experiment_config_to_json(const ExperimentConfig& cfg) {
    json task;
    switch (cfg.task.kind) {
        case TaskConfig::Kind::Local:
        case TaskConfig::Kind::LongRange:
            task = {{"kind", cfg.task.kind == TaskConfig::Kind::Local ? "local" : "longrange"},
                    {"seq_len", cfg.task.seq_len},
                    {"vocab", cfg.task.vocab},
                    {"train_examples", cfg.task.train_examples},
                    {"dev_examples", cfg.task.dev_examples},
                    {"test_examples", cfg.task.test_examples}};
            break;
        case TaskConfig::Kind::Tsv:
            task = {{"kind", "tsv"},
                    {"train_path", cfg.task.train_path},
                    {"dev_path", cfg.task.dev_path},
                    {"test_path", cfg.task.test_path},
                    {"vocab_path", cfg.task.vocab_path},
                    {"max_len", cfg.task.max_len}};
            break;
    }
    return json{{"task", task},
                {"model",
                 {{"heads", cfg.heads},
                  {"head_dim", cfg.head_dim},
                  {"d_model", cfg.heads * cfg.head_dim},
                  {"d_ff", cfg.d_ff},
                  {"mapping", cfg.mapping.name()},
                  {"clip_threshold", cfg.mapping.clip_threshold},
                  {"linear_k", cfg.mapping.linear_k},
                  {"linear_b", cfg.mapping.linear_b},
                  {"strategy", strategy_name(cfg.strategy)},
                  {"use_sinusoidal_pos", cfg.use_sinusoidal_pos}}},
                {"optimizer",
                 {{"lr", cfg.lr}, {"beta1", cfg.beta1}, {"beta2", cfg.beta2},
                  {"eps", cfg.adam_eps}}},
                {"training",
                 {{"epochs", cfg.epochs},
                  {"batch_size", cfg.batch_size},
                  {"early_stop_test_accuracy", cfg.early_stop_test_accuracy}}},
                {"seed", cfg.seed},
                {"out_dir", cfg.out_dir}};
}

TaskData build_task_data(const TaskConfig& task, std::uint64_t seed) {
    TaskData data;
    switch (task.kind) {
        case TaskConfig::Kind::Local:
        case TaskConfig::Kind::LongRange: {
            auto gen = task.kind == TaskConfig::Kind::Local ? gen_local_task : gen_longrange_task;
            data.train = gen(rng::splitmix64(seed ^ 0xa11), task.train_examples, task.seq_len,
                             task.vocab);
            data.train.split = "train";
            if (task.dev_examples > 0) {
                data.dev = gen(rng::splitmix64(seed ^ 0xb22), task.dev_examples, task.seq_len,
                               task.vocab);
                data.dev.split = "dev";
            }
            data.test = gen(rng::splitmix64(seed ^ 0xc33), task.test_examples, task.seq_len,
                            task.vocab);
            data.test.split = "test";
            break;
        }
        case TaskConfig::Kind::Tsv: {
            data.train = load_tsv(task.train_path, task.vocab_path, task.max_len);
            data.train.split = "train";
            if (!task.dev_path.empty()) {
                data.dev = load_tsv(task.dev_path, task.vocab_path, task.max_len);
                data.dev.split = "dev";
            }
            data.test = load_tsv(task.test_path, task.vocab_path, task.max_len);
            data.test.split = "test";
            const int classes = std::max({data.train.classes, data.dev.classes,
                                          data.test.classes});
            data.train.classes = classes;
            data.dev.classes = classes;
            data.test.classes = classes;
            break;
        }
    }
    return data;
}

ModelConfig model_config_for(const ExperimentConfig& cfg, const TaskData& data) {
    ModelConfig mcfg;
    mcfg.vocab = data.train.vocab;
    mcfg.classes = data.train.classes;
    mcfg.heads = cfg.heads;
    mcfg.head_dim = cfg.head_dim;
    mcfg.d_model = cfg.heads * cfg.head_dim;
    mcfg.d_ff = cfg.d_ff;
    mcfg.mapping = cfg.mapping;
    mcfg.strategy = cfg.strategy;
    mcfg.use_sinusoidal_pos = cfg.use_sinusoidal_pos;
    mcfg.max_len =
        cfg.task.kind == TaskConfig::Kind::Tsv ? cfg.task.max_len : cfg.task.seq_len;
    return mcfg;
}

json RunReport::to_json() const {
    json epoch_array = json::array();
    for (const EpochRecord& rec : epochs) {
        epoch_array.push_back({{"epoch", rec.epoch},
                               {"train_loss", rec.train_loss},
                               {"train_accuracy", rec.train_accuracy},
                               {"test_accuracy", rec.test_accuracy}});
    }
    json final = {{"test_accuracy", test.accuracy}, {"test_macro_f", test.macro_f}};
    if (has_dev) {
        final["dev_accuracy"] = dev.accuracy;
        final["dev_macro_f"] = dev.macro_f;
    } else {
        final["dev_accuracy"] = nullptr;
        final["dev_macro_f"] = nullptr;
    }
    return json{{"run_id", run_id},
                {"config", config_echo},
                {"epochs_run", epochs_run},
                {"epochs", epoch_array},
                {"final", final},
                {"distance_params", {{"w", distance_w}, {"v", distance_v}}},
                {"timing",
                 {{"seconds_per_epoch", seconds_per_epoch}, {"total_seconds", total_seconds}}},
                {"timestamp", timestamp}};
}

std::string deterministic_report_bytes(const json& report) {
    json stripped = report;
    stripped.erase("timing");
    stripped.erase("timestamp");
    return stripped.dump(2);
}

RunReport run_training(const ExperimentConfig& cfg, ModelParams* out_params,
                       ModelConfig* out_model_cfg, const TaskData* premade,
                       AdamState* out_adam) {
    const auto start = std::chrono::steady_clock::now();
    const TaskData data = premade ? *premade : build_task_data(cfg.task, cfg.seed);
    const ModelConfig mcfg = model_config_for(cfg, data);
    mcfg.validate();

    ModelParams params = init_model(mcfg, cfg.seed);
    AdamState adam;
    adam.lr = cfg.lr;
    adam.beta1 = cfg.beta1;
    adam.beta2 = cfg.beta2;
    adam.eps = cfg.adam_eps;

    rng::Engine shuffle = rng::derive(cfg.seed, 0x5837);
    const int threads = env_thread_count();

    RunReport report;
    report.config_echo = experiment_config_to_json(cfg);
    report.run_id = hex64(fnv1a64(report.config_echo.dump()));
    report.timestamp = utc_timestamp();

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const EpochMetrics metrics =
            train_epoch(params, mcfg, data.train, adam, cfg.batch_size, shuffle, threads);
        const auto t1 = std::chrono::steady_clock::now();
        report.seconds_per_epoch.push_back(std::chrono::duration<double>(t1 - t0).count());

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = metrics.mean_loss;
        rec.train_accuracy = metrics.accuracy;
        rec.test_accuracy = evaluate(params, mcfg, data.test, threads).accuracy;
        report.epochs.push_back(rec);
        report.epochs_run = epoch;

        if (cfg.early_stop_test_accuracy > 0.0 &&
            rec.test_accuracy >= cfg.early_stop_test_accuracy) {
            break;
        }
    }

    report.test = evaluate(params, mcfg, data.test, threads);
    if (!data.dev.examples.empty()) {
        report.has_dev = true;
        report.dev = evaluate(params, mcfg, data.dev, threads);
    }
    for (const HeadDistanceParams& dp : params.block.attention.distance) {
        report.distance_w.push_back(dp.w);
        report.distance_v.push_back(dp.v);
    }
    report.total_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    if (out_adam) *out_adam = std::move(adam);
    if (out_params) *out_params = std::move(params);
    if (out_model_cfg) *out_model_cfg = mcfg;
    return report;
}

int cmd_train(const ExperimentConfig& cfg, const std::string& out_dir, std::ostream& log) {
    try {
        fs::create_directories(out_dir);
        ModelParams params;
        ModelConfig mcfg;
        AdamState adam;
        const RunReport report = run_training(cfg, &params, &mcfg, nullptr, &adam);
        write_text_file(fs::path(out_dir) / "report.json", report.to_json().dump(2) + "\n");
        save_checkpoint(params, mcfg, &adam, (fs::path(out_dir) / "checkpoint.datf").string());
        log << "run " << report.run_id << ": test_accuracy=" << report.test.accuracy
            << " test_macro_f=" << report.test.macro_f << " epochs_run=" << report.epochs_run
            << "\n";
        return 0;
    } catch (const std::exception& e) {
        log << "train failed: " << e.what() << "\n";
        return 1;
    }
}

int cmd_eval(const std::string& checkpoint_path, const ExperimentConfig& cfg,
             const std::string& out_dir, std::ostream& log) {
    try {
        const TaskData data = build_task_data(cfg.task, cfg.seed);
        const ModelConfig expected = model_config_for(cfg, data);
        const Checkpoint ckpt = load_checkpoint(checkpoint_path, &expected);
        const int threads = env_thread_count();
        const EvalMetrics test = evaluate(ckpt.params, ckpt.config, data.test, threads);
        json out = {{"test_accuracy", test.accuracy}, {"test_macro_f", test.macro_f}};
        if (!data.dev.examples.empty()) {
            const EvalMetrics dev = evaluate(ckpt.params, ckpt.config, data.dev, threads);
            out["dev_accuracy"] = dev.accuracy;
            out["dev_macro_f"] = dev.macro_f;
        }
        if (!out_dir.empty()) {
            fs::create_directories(out_dir);
            write_text_file(fs::path(out_dir) / "eval.json", out.dump(2) + "\n");
        }
        log << out.dump(2) << "\n";
        return 0;
    } catch (const std::exception& e) {
        log << "eval failed: " << e.what() << "\n";
        return 1;
    }
}

int cmd_ablate(const ExperimentConfig& base, const std::string& axis, int seeds,
               const std::string& out_dir, std::ostream& log) {
    if (seeds < 1) {
        log << "ablate: --seeds must be >= 1\n";
        return 1;
    }
    std::vector<std::pair<std::string, ExperimentConfig>> variants;
    if (axis == "mapping") {
        for (const char* name : {"learnable_sigmoid", "clip", "linear", "exponent", "sigmoid"}) {
            ExperimentConfig cfg = base;
            const MappingKind parsed = MappingKind::parse(name);
            cfg.mapping.type = parsed.type;
            variants.emplace_back(name, cfg);
        }
    } else if (axis == "adjustment") {
        for (const char* name :
             {"early_multiply", "early_add", "late_add", "late_multiply", "vanilla"}) {
            ExperimentConfig cfg = base;
            cfg.strategy = parse_strategy(name);
            variants.emplace_back(name, cfg);
        }
    } else {
        log << "ablate: unknown axis '" << axis << "' (expected mapping|adjustment)\n";
        return 1;
    }

    try {
        fs::create_directories(out_dir);
        std::ostringstream raw;
        raw << "axis,variant,seed,status,test_accuracy,test_macro_f\n";
        std::ostringstream aggregated;
        aggregated << "axis,variant,seeds_completed,seeds_failed,"
                      "accuracy_mean,accuracy_std,macro_f_mean,macro_f_std\n";

        for (const auto& [name, variant_cfg] : variants) {
            std::vector<double> accuracy, macro_f;
            int failed = 0;
            for (int s = 0; s < seeds; ++s) {
                ExperimentConfig cell = variant_cfg;
                cell.seed = base.seed + static_cast<std::uint64_t>(s);
                try {
                    const RunReport report = run_training(cell);
                    accuracy.push_back(report.test.accuracy);
                    macro_f.push_back(report.test.macro_f);
                    raw << axis << ',' << name << ',' << cell.seed << ",ok,"
                        << report.test.accuracy << ',' << report.test.macro_f << "\n";
                    log << "ablate " << axis << "/" << name << " seed " << cell.seed
                        << ": accuracy=" << report.test.accuracy << "\n";
                } catch (const std::exception& e) {
                    ++failed;
                    raw << axis << ',' << name << ',' << cell.seed << ",failed,,\n";
                    log << "ablate " << axis << "/" << name << " seed " << cell.seed
                        << " FAILED: " << e.what() << "\n";
                }
            }
            auto mean_of = [](const std::vector<double>& xs) {
                double m = 0.0;
                for (double x : xs) m += x;
                return xs.empty() ? 0.0 : m / static_cast<double>(xs.size());
            };
            auto std_of = [&mean_of](const std::vector<double>& xs) {
                if (xs.empty()) return 0.0;
                const double m = mean_of(xs);
                double s = 0.0;
                for (double x : xs) s += (x - m) * (x - m);
                return std::sqrt(s / static_cast<double>(xs.size()));
            };
            aggregated << axis << ',' << name << ',' << accuracy.size() << ',' << failed << ','
                       << mean_of(accuracy) << ',' << std_of(accuracy) << ',' << mean_of(macro_f)
                       << ',' << std_of(macro_f) << "\n";
        }
        write_text_file(fs::path(out_dir) / "metrics.csv", aggregated.str());
        write_text_file(fs::path(out_dir) / "metrics_raw.csv", raw.str());
        log << "ablate: wrote " << (fs::path(out_dir) / "metrics.csv").string() << "\n";
        return 0;
    } catch (const std::exception& e) {
        log << "ablate failed: " << e.what() << "\n";
        return 1;
    }
}

int cmd_gradcheck(std::ostream& log) {
    const auto checks = run_gradcheck_entries(standard_gradcheck_entries());
    return print_gradcheck_report(checks, log);
}

int cmd_inspect(const std::string& checkpoint_path, const std::string& out_dir,
                std::ostream& log) {
    try {
        const Checkpoint ckpt = load_checkpoint(checkpoint_path);
        std::vector<double> w, v;
        for (const HeadDistanceParams& dp : ckpt.params.block.attention.distance) {
            w.push_back(dp.w);
            v.push_back(dp.v);
        }
        std::vector<double> w_sorted = w, v_sorted = v;
        std::sort(w_sorted.begin(), w_sorted.end());
        std::sort(v_sorted.begin(), v_sorted.end());
        int positive = 0, negative = 0;
        for (double x : w) {
            if (x > 0.0) ++positive;
            else if (x < 0.0) ++negative;
        }

        const json out = {{"heads", static_cast<int>(w.size())},
                          {"w_sorted", w_sorted},
                          {"v_sorted", v_sorted},
                          {"positive_w", positive},
                          {"negative_w", negative}};
        std::ostringstream csv;
        csv << "rank,w_sorted,v_sorted\n";
        for (std::size_t i = 0; i < w_sorted.size(); ++i) {
            csv << i << ',' << w_sorted[i] << ',' << v_sorted[i] << "\n";
        }
        if (!out_dir.empty()) {
            fs::create_directories(out_dir);
            write_text_file(fs::path(out_dir) / "inspect.json", out.dump(2) + "\n");
            write_text_file(fs::path(out_dir) / "inspect.csv", csv.str());
        }
        log << out.dump(2) << "\n";
        return 0;
    } catch (const std::exception& e) {
        log << "inspect failed: " << e.what() << "\n";
        return 1;
    }
}

double mean_attention_entropy(const ModelParams& params, const ModelConfig& cfg,
                              const std::vector<int>& tokens) {
    ModelForwardCache cache;
    model_forward(params, cfg, tokens, &cache);
    double entropy_sum = 0.0;
    std::size_t rows = 0;
    for (const HeadAttentionCache& head : cache.block.mha.heads) {
        const Matrix& attn = head.weights();
        for (int i = 0; i < attn.rows; ++i) {
            double h = 0.0;
            for (int j = 0; j < attn.cols; ++j) {
                const double p = attn(i, j);
                if (p > 0.0) h -= p * std::log(p);
            }
            entropy_sum += h;
            ++rows;
        }
    }
    return rows > 0 ? entropy_sum / static_cast<double>(rows) : 0.0;
}

int cmd_export_attention(const std::string& checkpoint_path, const std::vector<int>& tokens,
                         const std::string& out_dir, std::ostream& log) {
    try {
        const Checkpoint ckpt = load_checkpoint(checkpoint_path);
        if (tokens.empty()) throw std::invalid_argument("export-attention: no tokens given");
        for (int t : tokens) {
            if (t < 0 || t >= ckpt.config.vocab) {
                throw std::invalid_argument("export-attention: token id " + std::to_string(t) +
                                            " outside the checkpoint vocab [0, " +
                                            std::to_string(ckpt.config.vocab) + ")");
            }
        }
        ModelForwardCache cache;
        model_forward(ckpt.params, ckpt.config, tokens, &cache);

        fs::create_directories(out_dir);
        json per_head = json::array();
        for (std::size_t h = 0; h < cache.block.mha.heads.size(); ++h) {
            const Matrix& attn = cache.block.mha.heads[h].weights();
            std::ostringstream csv;
            double head_entropy = 0.0;
            for (int i = 0; i < attn.rows; ++i) {
                double row_entropy = 0.0;
                for (int j = 0; j < attn.cols; ++j) {
                    char buf[32];
                    std::snprintf(buf, sizeof(buf), "%.17g", attn(i, j));
                    csv << (j > 0 ? "," : "") << buf;
                    if (attn(i, j) > 0.0) row_entropy -= attn(i, j) * std::log(attn(i, j));
                }
                csv << "\n";
                head_entropy += row_entropy;
            }
            head_entropy /= attn.rows;
            write_text_file(fs::path(out_dir) / ("heatmap_head" + std::to_string(h) + ".csv"),
                            csv.str());
            per_head.push_back({{"head", h}, {"mean_row_entropy", head_entropy}});
        }
        const json summary = {{"heads", static_cast<int>(cache.block.mha.heads.size())},
                              {"tokens", tokens},
                              {"mean_entropy",
                               mean_attention_entropy(ckpt.params, ckpt.config, tokens)},
                              {"per_head", per_head}};
        write_text_file(fs::path(out_dir) / "attention_summary.json", summary.dump(2) + "\n");
        log << "export-attention: wrote " << cache.block.mha.heads.size() << " heatmaps to "
            << out_dir << "\n";
        return 0;
    } catch (const std::exception& e) {
        log << "export-attention failed: " << e.what() << "\n";
        return 1;
    }
}

std::vector<BenchRow> run_bench(const std::vector<int>& n_values) {
    const int h = 16, d = 16, d_model = 256, d_ff = 512;
    TransformerBlockParams block;
    for (int i = 0; i < h; ++i) {
        block.attention.heads.push_back(
            {random_matrix(d_model, d, 7000 + 3 * i, -0.1, 0.1),
             random_matrix(d_model, d, 7001 + 3 * i, -0.1, 0.1),
             random_matrix(d_model, d, 7002 + 3 * i, -0.1, 0.1)});
        HeadDistanceParams dp;
        dp.w = (i % 2 == 0 ? 1.0 : -1.0) * (0.2 + 0.05 * i);
        dp.v = 0.1;
        block.attention.distance.push_back(dp);
    }
    block.attention.wo = random_matrix(h * d, d_model, 7100, -0.1, 0.1);
    block.ffn_w1 = random_matrix(d_model, d_ff, 7101, -0.1, 0.1);
    block.ffn_b1 = Matrix(1, d_ff);
    block.ffn_w2 = random_matrix(d_ff, d_model, 7102, -0.1, 0.1);
    block.ffn_b2 = Matrix(1, d_model);
    block.ln1_gain = Matrix::ones(1, d_model);
    block.ln1_bias = Matrix(1, d_model);
    block.ln2_gain = Matrix::ones(1, d_model);
    block.ln2_bias = Matrix(1, d_model);

    const MappingKind kind;
    std::vector<BenchRow> rows;
    for (int n : n_values) {
        const Matrix h_in = random_matrix(n, d_model, 7200 + n, -0.5, 0.5);
        double sink = 0.0;
        auto once = [&](AdjustmentStrategy strategy) {
            const auto t0 = std::chrono::steady_clock::now();
            sink += transformer_block(h_in, block, kind, strategy)(0, 0);
            const auto t1 = std::chrono::steady_clock::now();
            return std::chrono::duration<double, std::milli>(t1 - t0).count();
        };
        // Interleave the two paths so machine noise (frequency shifts, other
        // tenants) hits both sample sets alike; report median of 7 each.
        once(AdjustmentStrategy::Vanilla);
        once(AdjustmentStrategy::EarlyMultiply);
        std::vector<double> vanilla_samples, da_samples;
        for (int rep = 0; rep < 7; ++rep) {
            vanilla_samples.push_back(once(AdjustmentStrategy::Vanilla));
            da_samples.push_back(once(AdjustmentStrategy::EarlyMultiply));
        }
        if (!std::isfinite(sink)) vanilla_samples[0] = -1.0;  // keep evaluations observable
        BenchRow row;
        row.n = n;
        row.vanilla_ms = median_of(vanilla_samples);
        row.da_ms = median_of(da_samples);
        row.overhead_ratio = row.da_ms / row.vanilla_ms;
        rows.push_back(row);
    }
    return rows;
}

int cmd_bench(const std::vector<int>& n_values, const std::string& out_dir, std::ostream& log) {
    try {
        const std::vector<BenchRow> rows = run_bench(n_values);
        std::ostringstream csv;
        csv << "n,vanilla_ms,da_ms,overhead_ratio\n";
        for (const BenchRow& row : rows) {
            csv << row.n << ',' << row.vanilla_ms << ',' << row.da_ms << ','
                << row.overhead_ratio << "\n";
            log << "bench n=" << row.n << ": vanilla=" << row.vanilla_ms
                << "ms da=" << row.da_ms << "ms ratio=" << row.overhead_ratio << "\n";
        }
        if (!out_dir.empty()) {
            fs::create_directories(out_dir);
            write_text_file(fs::path(out_dir) / "bench.csv", csv.str());
        }
        return 0;
    } catch (const std::exception& e) {
        log << "bench failed: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace datf
