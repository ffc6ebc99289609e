#include "histo/model_zoo.hpp"

#include <algorithm>
#include <memory>

#include "histo/errors.hpp"

namespace histo {

namespace detail {
int build_backbone(nn::Graph& g, Backbone backbone);
void load_weight_pack(ModelHandle& model, const std::filesystem::path& path);
} // namespace detail

std::string backbone_name(Backbone b) {
    switch (b) {
    case Backbone::VGG16: return "VGG16";
    case Backbone::VGG19: return "VGG19";
    case Backbone::ResNet50: return "ResNet50";
    case Backbone::InceptionV3: return "InceptionV3";
    case Backbone::DenseNet201: return "DenseNet201";
    case Backbone::NASNetLarge: return "NASNetLarge";
    }
    return "?";
}

std::optional<Backbone> try_parse_backbone(const std::string& name) {
    for (Backbone b : kAllBackbones)
        if (backbone_name(b) == name)
            return b;
    return std::nullopt;
}

Backbone parse_backbone(const std::string& name) {
    auto b = try_parse_backbone(name);
    if (!b)
        throw RegistryError("unknown backbone: \"" + name + "\"");
    return *b;
}

void ModelConfig::validate() const {
    if (n_classes != 2 && n_classes != 3)
        throw ConfigurationError("n_classes must be 2 or 3, got " + std::to_string(n_classes));
    if (fc1_units < 1 || fc2_units < 1)
        throw ConfigurationError("fc1_units and fc2_units must be >= 1");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
        throw ConfigurationError("dropout_rate must be in [0,1)");
    if (input_size[2] != 3)
        throw ConfigurationError("input must have 3 channels");
    if (input_size[0] < 32 || input_size[1] < 32)
        throw ConfigurationError("input spatial size too small");
}

nlohmann::json ModelConfig::to_json() const {
    return {
        {"backbone", backbone_name(backbone)},
        {"n_classes", n_classes},
        {"fc1_units", fc1_units},
        {"fc2_units", fc2_units},
        {"dropout_rate", dropout_rate},
        {"freeze_backbone", freeze_backbone},
        {"input_size", input_size},
        {"weights_path", weights_path},
        {"init_seed", init_seed},
    };
}

ModelConfig ModelConfig::from_json(const nlohmann::json& doc) {
    ModelConfig cfg;
    cfg.backbone = parse_backbone(doc.at("backbone").get<std::string>());
    cfg.n_classes = doc.at("n_classes").get<int>();
    cfg.fc1_units = doc.at("fc1_units").get<int>();
    cfg.fc2_units = doc.at("fc2_units").get<int>();
    cfg.dropout_rate = doc.at("dropout_rate").get<double>();
    cfg.freeze_backbone = doc.at("freeze_backbone").get<bool>();
    cfg.input_size = doc.at("input_size").get<std::array<int, 3>>();
    cfg.weights_path = doc.value("weights_path", std::string());
    cfg.init_seed = doc.value("init_seed", std::uint64_t(0));
    return cfg;
}

bool ModelConfig::same_architecture(const ModelConfig& other) const {
    return backbone == other.backbone && n_classes == other.n_classes &&
           fc1_units == other.fc1_units && fc2_units == other.fc2_units &&
           input_size == other.input_size;
}

ModelHandle build_model(const ModelConfig& cfg) {
    cfg.validate();
    ModelHandle model;
    model.config_ = cfg;
    nn::Graph& g = model.graph_;
    // Shapes are inferred with a placeholder batch of 1; runtime batches
    // may be any size.
    g.set_input_shape({1, cfg.input_size[0], cfg.input_size[1], cfg.input_size[2]});

    const int backbone_out = detail::build_backbone(g, cfg.backbone);
    for (nn::Param* p : g.params())
        model.backbone_params_.push_back(p);

    // Custom head: flatten the final pooling output, two rectified dense
    // layers with dropout after each, softmax sized by the task.
    model.flatten_node_ = g.add(std::make_unique<nn::Flatten>("head_flatten"), {backbone_out});
    model.feature_dim_ = g.output_shape(model.flatten_node_)[1];
    int x = g.add(std::make_unique<nn::Dense>("head_fc1", model.feature_dim_, cfg.fc1_units),
                  {model.flatten_node_});
    x = g.add(std::make_unique<nn::ReLU>("head_fc1_relu"), {x});
    x = g.add(std::make_unique<nn::Dropout>("head_dropout1", float(cfg.dropout_rate)), {x});
    x = g.add(std::make_unique<nn::Dense>("head_fc2", cfg.fc1_units, cfg.fc2_units), {x});
    x = g.add(std::make_unique<nn::ReLU>("head_fc2_relu"), {x});
    x = g.add(std::make_unique<nn::Dropout>("head_dropout2", float(cfg.dropout_rate)), {x});
    x = g.add(std::make_unique<nn::Dense>("head_predictions", cfg.fc2_units, cfg.n_classes),
              {x});
    model.softmax_node_ = g.add(std::make_unique<nn::Softmax>("head_softmax"), {x});

    for (nn::Param* p : g.params())
        if (std::find(model.backbone_params_.begin(), model.backbone_params_.end(), p) ==
            model.backbone_params_.end())
            model.head_params_.push_back(p);

    g.init_params(cfg.init_seed);
    if (!cfg.weights_path.empty())
        detail::load_weight_pack(model, cfg.weights_path);

    if (cfg.freeze_backbone)
        for (nn::Param* p : model.backbone_params_)
            p->trainable = false;

    for (nn::Param* p : model.backbone_params_)
        model.counts_.backbone_params += p->value.numel();
    for (nn::Param* p : model.head_params_)
        model.counts_.head_params += p->value.numel();
    for (nn::Param* p : g.trainable_params())
        model.counts_.trainable_params += p->value.numel();
    return model;
}

namespace {

constexpr int kMicroBatch = 4; // bounds activation memory on full forwards

nn::Tensor slice_batch(const nn::Tensor& batch, int from, int count) {
    auto shape = batch.shape;
    shape[0] = count;
    nn::Tensor out(shape);
    const std::size_t stride = batch.numel() / std::size_t(batch.dim(0));
    std::copy_n(batch.data.begin() + std::size_t(from) * stride, std::size_t(count) * stride,
                out.data.begin());
    return out;
}

} // namespace

nn::Tensor ModelHandle::predict_probs(const nn::Tensor& batch) {
    const int n = batch.dim(0);
    nn::ExecContext ctx;
    nn::Tensor probs({n, config_.n_classes});
    for (int at = 0; at < n; at += kMicroBatch) {
        const int take = std::min(kMicroBatch, n - at);
        nn::Tensor chunk = slice_batch(batch, at, take);
        nn::Tensor out = graph_.run(chunk, ctx, false);
        std::copy(out.data.begin(), out.data.end(),
                  probs.data.begin() + std::size_t(at) * config_.n_classes);
    }
    return probs;
}

nn::Tensor ModelHandle::extract_features(const nn::Tensor& batch) {
    const int n = batch.dim(0);
    nn::ExecContext ctx;
    nn::Tensor features({n, feature_dim_});
    for (int at = 0; at < n; at += kMicroBatch) {
        const int take = std::min(kMicroBatch, n - at);
        nn::Tensor chunk = slice_batch(batch, at, take);
        nn::Tensor out = graph_.run(chunk, ctx, false, 0, flatten_node_);
        std::copy(out.data.begin(), out.data.end(),
                  features.data.begin() + std::size_t(at) * feature_dim_);
    }
    return features;
}

nn::Tensor ModelHandle::head_forward(const nn::Tensor& features, bool training,
                                     std::mt19937_64* rng, bool record) {
    nn::ExecContext ctx{training, rng};
    return graph_.run(features, ctx, record, flatten_node_ + 1, softmax_node_);
}

void ModelHandle::head_backward(const nn::Tensor& dlogits) {
    nn::ExecContext ctx{true, nullptr};
    // Gradient enters below the softmax; see the fused cross-entropy in the
    // trainer.
    graph_.backward_through(dlogits, logits_node(), ctx);
}

nn::Tensor ModelHandle::train_forward(const nn::Tensor& batch, std::mt19937_64* rng) {
    nn::ExecContext ctx{true, rng};
    return graph_.run(batch, ctx, true, 0, softmax_node_);
}

void ModelHandle::train_backward(const nn::Tensor& dlogits) {
    nn::ExecContext ctx{true, nullptr};
    graph_.backward_through(dlogits, logits_node(), ctx);
}

std::vector<std::vector<float>> snapshot_params(const std::vector<nn::Param*>& params) {
    std::vector<std::vector<float>> snap;
    snap.reserve(params.size());
    for (const nn::Param* p : params)
        snap.push_back(p->value.data);
    return snap;
}

void restore_params(const std::vector<nn::Param*>& params,
                    const std::vector<std::vector<float>>& snapshot) {
    for (std::size_t i = 0; i < params.size(); ++i)
        params[i]->value.data = snapshot[i];
}

} // namespace histo
