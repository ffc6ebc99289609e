#ifndef HISTO_PIPELINE_HPP
#define HISTO_PIPELINE_HPP

#include <cstdint>
#include <filesystem>
#include <random>
#include <utility>
#include <vector>

#include "histo/image.hpp"
#include "histo/nn/tensor.hpp"

namespace histo {

// Model input edge length; every tile is resampled to this size.
inline constexpr int kInputSize = 375;

enum class FillMode { nearest, reflect, constant };

struct AugmentConfig {
    double rotation_max_deg = 40.0;
    double width_shift_frac = 0.2;
    double height_shift_frac = 0.2;
    bool horizontal_flip = true;
    bool vertical_flip = true;
    FillMode fill_mode = FillMode::nearest;
    float fill_value = 0.0f; // constant mode only
    std::uint64_t rng_seed = 0;

    void validate() const; // throws ConfigurationError
    bool is_identity() const {
        return rotation_max_deg == 0.0 && width_shift_frac == 0.0 &&
               height_shift_frac == 0.0 && !horizontal_flip && !vertical_flip;
    }
    static AugmentConfig identity(std::uint64_t seed = 0) {
        return {0.0, 0.0, 0.0, false, false, FillMode::nearest, 0.0f, seed};
    }
};

// One concrete draw of augmentation parameters. Applied in fixed order:
// rotation, then shifts, then flips.
struct AugmentParams {
    double angle_deg = 0.0;
    double shift_x_frac = 0.0;
    double shift_y_frac = 0.0;
    bool hflip = false;
    bool vflip = false;
};

AugmentParams draw_augment_params(const AugmentConfig& cfg, std::mt19937_64& rng);

// Deterministic warp of a preprocessed (H,W,3) tensor; values stay in [0,1]
// and the shape is unchanged.
nn::Tensor apply_augment(const nn::Tensor& img, const AugmentParams& params, FillMode fill,
                         float fill_value);

inline nn::Tensor augment(const nn::Tensor& img, const AugmentConfig& cfg,
                          std::mt19937_64& rng) {
    return apply_augment(img, draw_augment_params(cfg, rng), cfg.fill_mode, cfg.fill_value);
}

// Decoded 8-bit RGB -> bilinear resample to kInputSize -> scale to [0,1].
nn::Tensor preprocess(const ImageU8& raw);

struct Batch {
    nn::Tensor images; // [B, kInputSize, kInputSize, 3]
    std::vector<int> labels;
    std::vector<std::size_t> indices; // positions in the stream's item list
};

// Iterates one partition of a task dataset. Train mode reshuffles every
// epoch (seeded) and applies augmentation; eval mode preserves order and
// never augments. The final partial batch is emitted.
class BatchStream {
public:
    enum class Mode { train, eval };

    BatchStream(std::vector<std::pair<std::filesystem::path, int>> items, int batch_size,
                Mode mode, AugmentConfig cfg);

    std::size_t size() const { return items_.size(); }
    std::size_t batches_per_epoch() const {
        return (items_.size() + std::size_t(batch_size_) - 1) / std::size_t(batch_size_);
    }
    int batch_size() const { return batch_size_; }
    Mode mode() const { return mode_; }
    const AugmentConfig& augment_config() const { return cfg_; }
    const std::vector<std::pair<std::filesystem::path, int>>& items() const { return items_; }
    int n_task_classes() const;

    // The visiting order for an epoch (shuffled in train mode), without
    // touching stream state; begin_epoch uses the same rule.
    std::vector<std::size_t> epoch_order(std::size_t epoch) const;

    void begin_epoch(std::size_t epoch);
    bool next(Batch& out);

private:
    std::vector<std::pair<std::filesystem::path, int>> items_;
    int batch_size_;
    Mode mode_;
    AugmentConfig cfg_;
    std::vector<std::size_t> order_;
    std::size_t cursor_ = 0;
    std::mt19937_64 augment_rng_;
};

} // namespace histo

#endif
