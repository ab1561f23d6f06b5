#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "datf/model.hpp"

namespace datf {

struct TaskConfig {
    enum class Kind { Local, LongRange, Tsv };
    Kind kind = Kind::LongRange;

    // synthetic tasks
    int seq_len = 32;
    int vocab = 16;
    int train_examples = 8000;
    int dev_examples = 500;
    int test_examples = 1000;

    // tsv task
    std::string train_path, dev_path, test_path, vocab_path;
    int max_len = 64;
};

struct ExperimentConfig {
    TaskConfig task;

    int heads = 16;
    int head_dim = 16;
    int d_ff = 512;
    MappingKind mapping;
    AdjustmentStrategy strategy = AdjustmentStrategy::EarlyMultiply;
    bool use_sinusoidal_pos = false;

    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;

    int epochs = 30;
    int batch_size = 32;
    // When > 0, evaluation runs per epoch and training stops once test
    // accuracy reaches the threshold.
    double early_stop_test_accuracy = 0.0;

    std::uint64_t seed = 1;
    std::string out_dir = "runs/out";
};

// Strict JSON parsing: unknown keys anywhere are an error.
ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);
nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg);

struct TaskData {
    Dataset train, dev, test;
};

// Synthetic splits come from disjoint derived seed streams; TSV splits from
// the configured paths (classes reconciled across splits).
TaskData build_task_data(const TaskConfig& task, std::uint64_t seed);

// ModelConfig implied by an experiment (vocab/classes/max_len from the data).
ModelConfig model_config_for(const ExperimentConfig& cfg, const TaskData& data);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
};

struct RunReport {
    std::string run_id;
    nlohmann::json config_echo;
    std::vector<EpochRecord> epochs;
    int epochs_run = 0;
    bool has_dev = false;
    EvalMetrics dev;
    EvalMetrics test;
    std::vector<double> distance_w;  // learned w_i, head order
    std::vector<double> distance_v;
    std::vector<double> seconds_per_epoch;
    double total_seconds = 0.0;
    std::string timestamp;

    nlohmann::json to_json() const;
};

// Full training run; optionally hands back the trained model and optimizer
// state for callers that keep working with them (acceptance suite,
// cmd_train's checkpoint).
RunReport run_training(const ExperimentConfig& cfg, ModelParams* out_params = nullptr,
                       ModelConfig* out_model_cfg = nullptr, const TaskData* premade = nullptr,
                       AdamState* out_adam = nullptr);

// The deterministic portion of a report (timing and timestamp stripped),
// serialized canonically. Two runs with the same config+seed match bytes.
std::string deterministic_report_bytes(const nlohmann::json& report);

// ---- CLI command cores (return process exit codes) ----

int cmd_train(const ExperimentConfig& cfg, const std::string& out_dir, std::ostream& log);
int cmd_eval(const std::string& checkpoint_path, const ExperimentConfig& cfg,
             const std::string& out_dir, std::ostream& log);
int cmd_ablate(const ExperimentConfig& base, const std::string& axis, int seeds,
               const std::string& out_dir, std::ostream& log);
int cmd_gradcheck(std::ostream& log);
int cmd_inspect(const std::string& checkpoint_path, const std::string& out_dir,
                std::ostream& log);
int cmd_export_attention(const std::string& checkpoint_path, const std::vector<int>& tokens,
                         const std::string& out_dir, std::ostream& log);

struct BenchRow {
    int n = 0;
    double vanilla_ms = 0.0;
    double da_ms = 0.0;
    double overhead_ratio = 0.0;
};
std::vector<BenchRow> run_bench(const std::vector<int>& n_values);
int cmd_bench(const std::vector<int>& n_values, const std::string& out_dir, std::ostream& log);

// Mean attention-row entropy (natural log) across heads for one forward
// pass; the interpretability exports and acceptance both use it.
double mean_attention_entropy(const ModelParams& params, const ModelConfig& cfg,
                              const std::vector<int>& tokens);

}  // namespace datf
