#include "histo/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "histo/errors.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace histo {

std::string loss_name(LossKind kind) {
    return kind == LossKind::binary_crossentropy ? "binary_crossentropy"
                                                 : "categorical_crossentropy";
}

LossKind select_loss(const TaskSpec& task) {
    if (task.n_classes == 2)
        return LossKind::binary_crossentropy;
    if (task.n_classes == 3)
        return LossKind::categorical_crossentropy;
    throw ConfigurationError("no loss defined for " + std::to_string(task.n_classes) +
                             "-class tasks");
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0))
        throw ConfigurationError("learning_rate must be positive");
    if (max_epochs < 1)
        throw ConfigurationError("max_epochs must be >= 1");
    if (early_stop_val_acc < 0.0 || early_stop_val_acc > 1.0)
        throw ConfigurationError("early_stop_val_acc must be in [0,1]");
    if (batch_sizes.train < 1 || batch_sizes.val < 1 || batch_sizes.test < 1)
        throw ConfigurationError("batch sizes must be >= 1");
}

std::string stop_reason_str(StopReason reason) {
    switch (reason) {
    case StopReason::early_stop: return "early_stop";
    case StopReason::max_epochs: return "max_epochs";
    case StopReason::error: return "error";
    }
    return "?";
}

static StopReason parse_stop_reason(const std::string& s) {
    if (s == "early_stop")
        return StopReason::early_stop;
    if (s == "max_epochs")
        return StopReason::max_epochs;
    return StopReason::error;
}

json TrainConfig::to_json() const {
    return {
        {"learning_rate", learning_rate},
        {"max_epochs", max_epochs},
        {"batch_sizes",
         {{"train", batch_sizes.train}, {"val", batch_sizes.val}, {"test", batch_sizes.test}}},
        {"early_stop_val_acc", early_stop_val_acc},
        {"optimizer", "adam"},
        {"adam",
         {{"beta1", adam.beta1}, {"beta2", adam.beta2}, {"epsilon", adam.epsilon}}},
        {"seed", seed},
    };
}

TrainConfig TrainConfig::from_json(const json& doc) {
    TrainConfig cfg;
    cfg.learning_rate = doc.at("learning_rate").get<double>();
    cfg.max_epochs = doc.at("max_epochs").get<int>();
    cfg.batch_sizes.train = doc.at("batch_sizes").at("train").get<int>();
    cfg.batch_sizes.val = doc.at("batch_sizes").at("val").get<int>();
    cfg.batch_sizes.test = doc.at("batch_sizes").at("test").get<int>();
    cfg.early_stop_val_acc = doc.at("early_stop_val_acc").get<double>();
    cfg.adam.beta1 = doc.at("adam").at("beta1").get<double>();
    cfg.adam.beta2 = doc.at("adam").at("beta2").get<double>();
    cfg.adam.epsilon = doc.at("adam").at("epsilon").get<double>();
    cfg.seed = doc.at("seed").get<std::uint64_t>();
    return cfg;
}

static std::string fill_mode_str(FillMode m) {
    switch (m) {
    case FillMode::nearest: return "nearest";
    case FillMode::reflect: return "reflect";
    case FillMode::constant: return "constant";
    }
    return "?";
}

json augment_config_to_json(const AugmentConfig& cfg) {
    return {
        {"rotation_max_deg", cfg.rotation_max_deg},
        {"width_shift_frac", cfg.width_shift_frac},
        {"height_shift_frac", cfg.height_shift_frac},
        {"horizontal_flip", cfg.horizontal_flip},
        {"vertical_flip", cfg.vertical_flip},
        {"fill_mode", fill_mode_str(cfg.fill_mode)},
        {"fill_value", cfg.fill_value},
        {"rng_seed", cfg.rng_seed},
    };
}

AugmentConfig augment_config_from_json(const json& doc) {
    AugmentConfig cfg;
    cfg.rotation_max_deg = doc.at("rotation_max_deg").get<double>();
    cfg.width_shift_frac = doc.at("width_shift_frac").get<double>();
    cfg.height_shift_frac = doc.at("height_shift_frac").get<double>();
    cfg.horizontal_flip = doc.at("horizontal_flip").get<bool>();
    cfg.vertical_flip = doc.at("vertical_flip").get<bool>();
    const std::string fill = doc.at("fill_mode").get<std::string>();
    cfg.fill_mode = fill == "reflect"    ? FillMode::reflect
                    : fill == "constant" ? FillMode::constant
                                         : FillMode::nearest;
    cfg.fill_value = doc.at("fill_value").get<float>();
    cfg.rng_seed = doc.at("rng_seed").get<std::uint64_t>();
    return cfg;
}

json TrainRunRecord::to_json() const {
    json history = json::array();
    for (const EpochStats& e : epoch_history)
        history.push_back({{"epoch", e.epoch},
                           {"train_loss", e.train_loss},
                           {"train_acc", e.train_acc},
                           {"val_loss", e.val_loss},
                           {"val_acc", e.val_acc}});
    json doc = {
        {"run_id", run_id},
        {"task", task_name_str(task)},
        {"model_config", model_config.to_json()},
        {"train_config", train_config.to_json()},
        {"augment_config", augment_config_to_json(augment_config)},
        {"epoch_history", history},
        {"stop_reason", stop_reason_str(stop_reason)},
        {"checkpoint_path", checkpoint_path},
        {"wall_clock_seconds", wall_clock_seconds},
        {"best_epoch", best_epoch},
        {"metadata",
         {{"resampling", "bilinear"}, {"best_checkpoint_rule", "max_val_acc_earliest_epoch"}}},
    };
    if (stop_reason == StopReason::error) {
        doc["error_epoch"] = error_epoch;
        doc["error_message"] = error_message;
    }
    return doc;
}

TrainRunRecord TrainRunRecord::from_json(const json& doc) {
    TrainRunRecord rec;
    rec.run_id = doc.at("run_id").get<std::string>();
    auto task = try_parse_task_name(doc.at("task").get<std::string>());
    if (!task)
        throw ConfigurationError("unknown task in run record");
    rec.task = *task;
    rec.model_config = ModelConfig::from_json(doc.at("model_config"));
    rec.train_config = TrainConfig::from_json(doc.at("train_config"));
    rec.augment_config = augment_config_from_json(doc.at("augment_config"));
    for (const auto& e : doc.at("epoch_history"))
        rec.epoch_history.push_back({e.at("epoch").get<int>(),
                                     e.value("train_loss", 0.0),
                                     e.value("train_acc", 0.0),
                                     e.value("val_loss", 0.0),
                                     e.value("val_acc", 0.0)});
    rec.stop_reason = parse_stop_reason(doc.at("stop_reason").get<std::string>());
    rec.checkpoint_path = doc.at("checkpoint_path").get<std::string>();
    rec.wall_clock_seconds = doc.at("wall_clock_seconds").get<double>();
    rec.best_epoch = doc.at("best_epoch").get<int>();
    rec.error_epoch = doc.value("error_epoch", -1);
    rec.error_message = doc.value("error_message", std::string());
    return rec;
}

namespace {

inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

} // namespace

double cross_entropy(const nn::Tensor& probs, std::span<const int> labels,
                     nn::Tensor* dlogits) {
    const int n_classes = probs.shape.back();
    const std::size_t n = labels.size();
    double loss = 0.0;
    if (dlogits)
        *dlogits = nn::Tensor(probs.shape);
    for (std::size_t i = 0; i < n; ++i) {
        const float* row = probs.ptr() + i * std::size_t(n_classes);
        const float p_true = std::max(row[labels[i]], 1e-12f);
        loss -= std::log(double(p_true));
        if (dlogits) {
            float* d = dlogits->ptr() + i * std::size_t(n_classes);
            for (int c = 0; c < n_classes; ++c)
                d[c] = (row[c] - (c == labels[i] ? 1.0f : 0.0f)) / float(n);
        }
    }
    return loss / double(n);
}

namespace {

std::size_t count_correct(const nn::Tensor& probs, const std::vector<int>& labels) {
    const int n_classes = probs.shape.back();
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const float* row = probs.ptr() + i * std::size_t(n_classes);
        int best = 0;
        for (int c = 1; c < n_classes; ++c)
            if (row[c] > row[best])
                best = c;
        correct += best == labels[i];
    }
    return correct;
}

// Per-tile backbone features of every stream item, eval preprocessing, in
// item order.
nn::Tensor cache_features(ModelHandle& model, const BatchStream& stream) {
    const auto& items = stream.items();
    nn::Tensor features({int(items.size()), model.feature_dim()});
    constexpr std::size_t kChunk = 8;
    for (std::size_t at = 0; at < items.size(); at += kChunk) {
        const std::size_t take = std::min(kChunk, items.size() - at);
        nn::Tensor batch({int(take), kInputSize, kInputSize, 3});
        const std::size_t image_floats = std::size_t(kInputSize) * kInputSize * 3;
        for (std::size_t k = 0; k < take; ++k) {
            nn::Tensor img = preprocess(decode_image(items[at + k].first));
            std::copy(img.data.begin(), img.data.end(),
                      batch.data.begin() + k * image_floats);
        }
        nn::Tensor out = model.extract_features(batch);
        std::copy(out.data.begin(), out.data.end(),
                  features.data.begin() + at * std::size_t(model.feature_dim()));
    }
    return features;
}

nn::Tensor gather_rows(const nn::Tensor& features, const std::vector<std::size_t>& rows) {
    const int dim = features.shape.back();
    nn::Tensor out({int(rows.size()), dim});
    for (std::size_t k = 0; k < rows.size(); ++k)
        std::copy_n(features.data.begin() + rows[k] * std::size_t(dim), std::size_t(dim),
                    out.data.begin() + k * std::size_t(dim));
    return out;
}

struct EpochResult {
    double loss = 0.0;
    double acc = 0.0;
};

} // namespace

TrainRunRecord train(ModelHandle& model, BatchStream& train_stream, BatchStream& val_stream,
                     const TrainConfig& cfg, const TaskSpec& task, const std::string& run_id,
                     const fs::path& out_dir) {
    cfg.validate();
    if (model.config().n_classes != task.n_classes)
        throw ConfigurationError("model has " + std::to_string(model.config().n_classes) +
                                 " classes but task " + task_name_str(task.name) + " needs " +
                                 std::to_string(task.n_classes));
    const auto t0 = std::chrono::steady_clock::now();

    TrainRunRecord record;
    record.run_id = run_id;
    record.task = task.name;
    record.model_config = model.config();
    record.train_config = cfg;
    record.augment_config = train_stream.augment_config();
    record.stop_reason = StopReason::max_epochs;

    nn::AdamParams adam_hp = cfg.adam;
    adam_hp.learning_rate = cfg.learning_rate;
    nn::Adam adam(model.graph().trainable_params(), adam_hp);
    std::mt19937_64 dropout_rng(mix64(cfg.seed) ^ 0x5EEDD'00DULL);
    select_loss(task); // validates arity

    const bool frozen = model.config().freeze_backbone;
    const bool cacheable = frozen && train_stream.augment_config().is_identity();

    nn::Tensor train_features, val_features;
    std::vector<int> train_labels, val_labels;
    if (cacheable) {
        train_features = cache_features(model, train_stream);
        val_features = cache_features(model, val_stream);
        for (const auto& [path, cls] : train_stream.items())
            train_labels.push_back(cls);
        for (const auto& [path, cls] : val_stream.items())
            val_labels.push_back(cls);
    }

    auto run_train_epoch = [&](int epoch) -> EpochResult {
        double loss_sum = 0.0;
        std::size_t correct = 0, seen = 0;
        if (cacheable) {
            const auto order = train_stream.epoch_order(std::size_t(epoch - 1));
            const std::size_t bs = std::size_t(cfg.batch_sizes.train);
            for (std::size_t at = 0; at < order.size(); at += bs) {
                const std::size_t take = std::min(bs, order.size() - at);
                std::vector<std::size_t> rows(order.begin() + long(at),
                                              order.begin() + long(at + take));
                nn::Tensor feats = gather_rows(train_features, rows);
                std::vector<int> labels(take);
                for (std::size_t k = 0; k < take; ++k)
                    labels[k] = train_labels[rows[k]];
                nn::Tensor probs = model.head_forward(feats, true, &dropout_rng, true);
                nn::Tensor dlogits;
                const double loss = cross_entropy(probs, labels, &dlogits);
                adam.zero_grad();
                model.head_backward(dlogits);
                adam.step();
                loss_sum += loss * double(take);
                correct += count_correct(probs, labels);
                seen += take;
            }
        } else {
            train_stream.begin_epoch(std::size_t(epoch - 1));
            Batch batch;
            while (train_stream.next(batch)) {
                nn::Tensor probs;
                if (frozen) {
                    nn::Tensor feats = model.extract_features(batch.images);
                    probs = model.head_forward(feats, true, &dropout_rng, true);
                } else {
                    probs = model.train_forward(batch.images, &dropout_rng);
                }
                nn::Tensor dlogits;
                const double loss = cross_entropy(probs, batch.labels, &dlogits);
                adam.zero_grad();
                if (frozen)
                    model.head_backward(dlogits);
                else
                    model.train_backward(dlogits);
                adam.step();
                loss_sum += loss * double(batch.labels.size());
                correct += count_correct(probs, batch.labels);
                seen += batch.labels.size();
            }
        }
        return {loss_sum / double(seen), double(correct) / double(seen)};
    };

    auto run_val_epoch = [&]() -> EpochResult {
        double loss_sum = 0.0;
        std::size_t correct = 0, seen = 0;
        if (cacheable) {
            const std::size_t bs = std::size_t(cfg.batch_sizes.val);
            for (std::size_t at = 0; at < val_labels.size(); at += bs) {
                const std::size_t take = std::min(bs, val_labels.size() - at);
                std::vector<std::size_t> rows(take);
                for (std::size_t k = 0; k < take; ++k)
                    rows[k] = at + k;
                nn::Tensor feats = gather_rows(val_features, rows);
                std::vector<int> labels(val_labels.begin() + long(at),
                                        val_labels.begin() + long(at + take));
                nn::Tensor probs = model.head_forward(feats, false, nullptr, false);
                loss_sum += cross_entropy(probs, labels, nullptr) * double(take);
                correct += count_correct(probs, labels);
                seen += take;
            }
        } else {
            val_stream.begin_epoch(0);
            Batch batch;
            while (val_stream.next(batch)) {
                nn::Tensor probs = model.predict_probs(batch.images);
                loss_sum += cross_entropy(probs, batch.labels, nullptr) *
                            double(batch.labels.size());
                correct += count_correct(probs, batch.labels);
                seen += batch.labels.size();
            }
        }
        return {loss_sum / double(seen), double(correct) / double(seen)};
    };

    auto trainable = model.graph().trainable_params();
    std::vector<std::vector<float>> best_snapshot;
    double best_val_acc = -1.0;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const EpochResult tr = run_train_epoch(epoch);
        const EpochResult va = run_val_epoch();
        record.epoch_history.push_back({epoch, tr.loss, tr.acc, va.loss, va.acc});

        if (!std::isfinite(tr.loss) || !std::isfinite(va.loss)) {
            record.stop_reason = StopReason::error;
            record.error_epoch = epoch;
            record.error_message = "non-finite loss";
            break;
        }
        if (va.acc > best_val_acc) {
            best_val_acc = va.acc;
            best_snapshot = snapshot_params(trainable);
            record.best_epoch = epoch;
        }
        if (va.acc > cfg.early_stop_val_acc) {
            record.stop_reason = StopReason::early_stop;
            break;
        }
    }

    if (!best_snapshot.empty())
        restore_params(trainable, best_snapshot);
    model.graph().drop_activations();

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        const fs::path ckpt = out_dir / "model.ckpt";
        save_checkpoint(model, ckpt);
        record.checkpoint_path = ckpt.string();
    }
    record.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return record;
}

Predictions predict(ModelHandle& model, BatchStream& eval_stream) {
    if (eval_stream.n_task_classes() > model.config().n_classes)
        throw PredictionError("stream carries task-class indices up to " +
                              std::to_string(eval_stream.n_task_classes() - 1) +
                              " but the model has " +
                              std::to_string(model.config().n_classes) + " classes");
    Predictions out;
    const int n_classes = model.config().n_classes;
    out.probabilities = nn::Tensor({int(eval_stream.size()), n_classes});
    eval_stream.begin_epoch(0);
    Batch batch;
    std::size_t at = 0;
    while (eval_stream.next(batch)) {
        nn::Tensor probs = model.predict_probs(batch.images);
        std::copy(probs.data.begin(), probs.data.end(),
                  out.probabilities.data.begin() + at * std::size_t(n_classes));
        for (std::size_t i = 0; i < batch.labels.size(); ++i) {
            const float* row = probs.ptr() + i * std::size_t(n_classes);
            int best = 0;
            for (int c = 1; c < n_classes; ++c)
                if (row[c] > row[best])
                    best = c;
            out.predicted.push_back(best);
            out.truth.push_back(batch.labels[i]);
        }
        at += batch.labels.size();
    }
    return out;
}

void save_run_record(const TrainRunRecord& record, const fs::path& run_dir) {
    fs::create_directories(run_dir);
    std::ofstream out(run_dir / "run.json", std::ios::binary);
    if (!out)
        throw ConfigurationError("cannot write run record: " + (run_dir / "run.json").string());
    out << record.to_json().dump(2) << "\n";

    std::ofstream csv(run_dir / "history.csv", std::ios::binary);
    csv << "epoch,train_loss,train_acc,val_loss,val_acc\n";
    csv.precision(17);
    for (const EpochStats& e : record.epoch_history)
        csv << e.epoch << "," << e.train_loss << "," << e.train_acc << "," << e.val_loss << ","
            << e.val_acc << "\n";
}

TrainRunRecord load_run_record(const fs::path& run_dir) {
    std::ifstream in(run_dir / "run.json");
    if (!in)
        throw ConfigurationError("cannot open run record: " + (run_dir / "run.json").string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ConfigurationError("malformed run record in " + run_dir.string() + ": " +
                                 e.what());
    }
    return TrainRunRecord::from_json(doc);
}

} // namespace histo
