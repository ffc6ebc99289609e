#ifndef HISTO_MODEL_ZOO_HPP
#define HISTO_MODEL_ZOO_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "histo/nn/net.hpp"

namespace histo {

enum class Backbone { VGG16, VGG19, ResNet50, InceptionV3, DenseNet201, NASNetLarge };

inline constexpr std::array<Backbone, 6> kAllBackbones = {
    Backbone::VGG16,       Backbone::VGG19,       Backbone::ResNet50,
    Backbone::InceptionV3, Backbone::DenseNet201, Backbone::NASNetLarge,
};

std::string backbone_name(Backbone b);
std::optional<Backbone> try_parse_backbone(const std::string& name);
Backbone parse_backbone(const std::string& name); // throws RegistryError

struct ModelConfig {
    Backbone backbone = Backbone::VGG19;
    int n_classes = 3;
    int fc1_units = 512;
    int fc2_units = 1024;
    double dropout_rate = 0.5;
    bool freeze_backbone = true;
    std::array<int, 3> input_size = {375, 375, 3};
    // Path to a weight pack for the pre-trained backbone. Empty selects
    // seeded random initialization (the desk-scale mode; converted
    // pre-trained packs load through the same container format).
    std::string weights_path;
    std::uint64_t init_seed = 0;

    void validate() const; // throws ConfigurationError
    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& doc);
    // Structural identity: fields that determine tensor shapes.
    bool same_architecture(const ModelConfig& other) const;
};

struct ParameterCounts {
    std::size_t backbone_params = 0;
    std::size_t head_params = 0;
    std::size_t trainable_params = 0;
};

// A constructed network: backbone feature stack up to and including its
// final pooling layer, then flatten -> FC1 -> dropout -> FC2 -> dropout ->
// softmax. The flatten node splits backbone from head.
class ModelHandle {
public:
    const ModelConfig& config() const { return config_; }
    const ParameterCounts& parameter_counts() const { return counts_; }
    nn::Graph& graph() { return graph_; }
    const nn::Graph& graph() const { return graph_; }

    int flatten_node() const { return flatten_node_; }
    int softmax_node() const { return softmax_node_; }
    int logits_node() const { return softmax_node_ - 1; }
    int feature_dim() const { return feature_dim_; }

    std::vector<nn::Param*> backbone_params() { return backbone_params_; }
    std::vector<nn::Param*> head_params() { return head_params_; }

    // Eval-mode probabilities [B, n_classes]; batches are internally split
    // to bound activation memory.
    nn::Tensor predict_probs(const nn::Tensor& batch);

    // Backbone features [B, feature_dim] (output of the flatten node).
    nn::Tensor extract_features(const nn::Tensor& batch);

    // Head-only forward from cached features; record=true retains
    // activations for head_backward.
    nn::Tensor head_forward(const nn::Tensor& features, bool training, std::mt19937_64* rng,
                            bool record);
    void head_backward(const nn::Tensor& dlogits);

    // Full-graph training forward (unfrozen fine-tuning path).
    nn::Tensor train_forward(const nn::Tensor& batch, std::mt19937_64* rng);
    void train_backward(const nn::Tensor& dlogits);

    friend ModelHandle build_model(const ModelConfig& cfg);
    friend ModelHandle load_checkpoint(const std::filesystem::path& path,
                                       const std::optional<ModelConfig>& expected);

private:
    ModelConfig config_;
    nn::Graph graph_;
    int flatten_node_ = -1;
    int softmax_node_ = -1;
    int feature_dim_ = 0;
    ParameterCounts counts_;
    std::vector<nn::Param*> backbone_params_;
    std::vector<nn::Param*> head_params_;
};

ModelHandle build_model(const ModelConfig& cfg);

void save_checkpoint(ModelHandle& model, const std::filesystem::path& path);
// expected, when given, must structurally match the stored config.
ModelHandle load_checkpoint(const std::filesystem::path& path,
                            const std::optional<ModelConfig>& expected = std::nullopt);

// Copies of all weights, for bit-identity assertions and best-epoch
// snapshots.
std::vector<std::vector<float>> snapshot_params(const std::vector<nn::Param*>& params);
void restore_params(const std::vector<nn::Param*>& params,
                    const std::vector<std::vector<float>>& snapshot);

} // namespace histo

#endif
