#ifndef HISTO_TRAINER_HPP
#define HISTO_TRAINER_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "histo/model_zoo.hpp"
#include "histo/nn/adam.hpp"
#include "histo/pipeline.hpp"
#include "histo/tasks.hpp"

namespace histo {

enum class LossKind { binary_crossentropy, categorical_crossentropy };

std::string loss_name(LossKind kind);

// Two-class tasks train with binary cross-entropy over the 2-unit softmax,
// the three-class task with categorical cross-entropy. Over softmax outputs
// and one-hot targets both reduce to -log p(true class).
LossKind select_loss(const TaskSpec& task);

// -log p(true class) averaged over the batch. When dlogits is given it
// receives the fused softmax/cross-entropy gradient (p - onehot)/batch.
double cross_entropy(const nn::Tensor& probs, std::span<const int> labels,
                     nn::Tensor* dlogits = nullptr);

struct BatchSizes {
    int train = 80;
    int val = 28;
    int test = 16;
};

struct TrainConfig {
    double learning_rate = 0.01;
    int max_epochs = 1500;
    BatchSizes batch_sizes;
    double early_stop_val_acc = 0.98;
    nn::AdamParams adam; // beta/epsilon; learning_rate above wins
    std::uint64_t seed = 0;

    void validate() const; // throws ConfigurationError
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& doc);
};

struct EpochStats {
    int epoch = 0; // 1-based
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
};

enum class StopReason { early_stop, max_epochs, error };

std::string stop_reason_str(StopReason reason);

struct TrainRunRecord {
    std::string run_id;
    TaskName task = TaskName::MULTICLASS;
    ModelConfig model_config;
    TrainConfig train_config;
    AugmentConfig augment_config;
    std::vector<EpochStats> epoch_history;
    StopReason stop_reason = StopReason::max_epochs;
    std::string checkpoint_path;
    double wall_clock_seconds = 0.0;
    int best_epoch = 0;     // highest val accuracy, earliest on ties
    int error_epoch = -1;   // set when stop_reason == error
    std::string error_message;

    nlohmann::json to_json() const;
    static TrainRunRecord from_json(const nlohmann::json& doc);
};

// Runs one training job. Validation accuracy is evaluated after every epoch
// over the full validation partition in eval mode; training stops the first
// time it exceeds cfg.early_stop_val_acc. The best-validation weights are
// restored into `model` and checkpointed at <out_dir>/model.ckpt.
// With a frozen backbone and identity augmentation, backbone features are
// computed once per tile and reused across epochs (identical results, far
// less compute).
TrainRunRecord train(ModelHandle& model, BatchStream& train_stream, BatchStream& val_stream,
                     const TrainConfig& cfg, const TaskSpec& task, const std::string& run_id,
                     const std::filesystem::path& out_dir);

struct Predictions {
    nn::Tensor probabilities; // [N, n_classes], stream order
    std::vector<int> predicted;
    std::vector<int> truth;
};

Predictions predict(ModelHandle& model, BatchStream& eval_stream);

// run.json plus the epoch history mirrored to history.csv.
void save_run_record(const TrainRunRecord& record, const std::filesystem::path& run_dir);
TrainRunRecord load_run_record(const std::filesystem::path& run_dir);

nlohmann::json augment_config_to_json(const AugmentConfig& cfg);
AugmentConfig augment_config_from_json(const nlohmann::json& doc);

} // namespace histo

#endif
