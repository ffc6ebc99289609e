#include "histo/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "histo/errors.hpp"

namespace histo {

void AugmentConfig::validate() const {
    if (!(rotation_max_deg >= 0.0) || !std::isfinite(rotation_max_deg))
        throw ConfigurationError("rotation_max_deg must be finite and >= 0");
    auto check_frac = [](double v, const char* what) {
        if (!(v >= 0.0) || v >= 1.0 || !std::isfinite(v))
            throw ConfigurationError(std::string(what) + " must be in [0,1)");
    };
    check_frac(width_shift_frac, "width_shift_frac");
    check_frac(height_shift_frac, "height_shift_frac");
    if (fill_value < 0.0f || fill_value > 1.0f)
        throw ConfigurationError("fill_value must be in [0,1]");
}

nn::Tensor preprocess(const ImageU8& raw) {
    if (raw.channels != 3)
        throw PreprocessError("expected an RGB raster, got " + std::to_string(raw.channels) +
                              " channel(s)");
    if (raw.width <= 0 || raw.height <= 0)
        throw PreprocessError("zero-area input image");

    nn::Tensor out({kInputSize, kInputSize, 3});
    const double scale_y = double(raw.height) / kInputSize;
    const double scale_x = double(raw.width) / kInputSize;
    const float inv255 = 1.0f / 255.0f;
    for (int oy = 0; oy < kInputSize; ++oy) {
        double sy = (oy + 0.5) * scale_y - 0.5;
        sy = std::clamp(sy, 0.0, double(raw.height - 1));
        const int y0 = int(sy);
        const int y1 = std::min(y0 + 1, raw.height - 1);
        const float fy = float(sy - y0);
        for (int ox = 0; ox < kInputSize; ++ox) {
            double sx = (ox + 0.5) * scale_x - 0.5;
            sx = std::clamp(sx, 0.0, double(raw.width - 1));
            const int x0 = int(sx);
            const int x1 = std::min(x0 + 1, raw.width - 1);
            const float fx = float(sx - x0);
            float* dst = out.ptr() + (std::size_t(oy) * kInputSize + ox) * 3;
            for (int c = 0; c < 3; ++c) {
                const float v00 = raw.at(y0, x0, c), v01 = raw.at(y0, x1, c);
                const float v10 = raw.at(y1, x0, c), v11 = raw.at(y1, x1, c);
                const float top = v00 + (v01 - v00) * fx;
                const float bot = v10 + (v11 - v10) * fx;
                dst[c] = (top + (bot - top) * fy) * inv255;
            }
        }
    }
    return out;
}

AugmentParams draw_augment_params(const AugmentConfig& cfg, std::mt19937_64& rng) {
    auto uniform = [&rng] { return (rng() >> 11) * 0x1.0p-53; };
    AugmentParams p;
    if (cfg.rotation_max_deg > 0.0)
        p.angle_deg = (uniform() * 2.0 - 1.0) * cfg.rotation_max_deg;
    if (cfg.width_shift_frac > 0.0)
        p.shift_x_frac = (uniform() * 2.0 - 1.0) * cfg.width_shift_frac;
    if (cfg.height_shift_frac > 0.0)
        p.shift_y_frac = (uniform() * 2.0 - 1.0) * cfg.height_shift_frac;
    if (cfg.horizontal_flip)
        p.hflip = uniform() < 0.5;
    if (cfg.vertical_flip)
        p.vflip = uniform() < 0.5;
    return p;
}

namespace {

inline int map_index(int i, int n, FillMode fill) {
    switch (fill) {
    case FillMode::nearest: return std::clamp(i, 0, n - 1);
    case FillMode::reflect: {
        // duplicated-edge mirror: ...cba|abc...cba|abc...
        const int period = 2 * n;
        int r = i % period;
        if (r < 0)
            r += period;
        return r < n ? r : period - 1 - r;
    }
    case FillMode::constant: return i; // caller handles out-of-range
    }
    return i;
}

inline float sample_at(const nn::Tensor& img, int y, int x, int c, FillMode fill,
                       float fill_value) {
    const int h = img.dim(0), w = img.dim(1);
    if (fill == FillMode::constant) {
        if (y < 0 || y >= h || x < 0 || x >= w)
            return fill_value;
    } else {
        y = map_index(y, h, fill);
        x = map_index(x, w, fill);
    }
    return img.data[(std::size_t(y) * w + x) * 3 + c];
}

} // namespace

nn::Tensor apply_augment(const nn::Tensor& img, const AugmentParams& params, FillMode fill,
                         float fill_value) {
    if (img.shape.size() != 3 || img.dim(2) != 3)
        throw PreprocessError("augment expects a (H,W,3) tensor");
    const int h = img.dim(0), w = img.dim(1);

    nn::Tensor warped = img;
    const bool warp_needed =
        params.angle_deg != 0.0 || params.shift_x_frac != 0.0 || params.shift_y_frac != 0.0;
    if (warp_needed) {
        warped = nn::Tensor(img.shape);
        const double theta = params.angle_deg * M_PI / 180.0;
        const double cos_t = std::cos(theta), sin_t = std::sin(theta);
        const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
        const double tx = params.shift_x_frac * w;
        const double ty = params.shift_y_frac * h;
        for (int oy = 0; oy < h; ++oy) {
            for (int ox = 0; ox < w; ++ox) {
                // out = R(in - c) + c + t  =>  in = R^T(out - c - t) + c
                const double dx = ox - cx - tx;
                const double dy = oy - cy - ty;
                const double sx = cos_t * dx + sin_t * dy + cx;
                const double sy = -sin_t * dx + cos_t * dy + cy;
                const int x0 = int(std::floor(sx)), y0 = int(std::floor(sy));
                const float fx = float(sx - x0), fy = float(sy - y0);
                float* dst = warped.ptr() + (std::size_t(oy) * w + ox) * 3;
                for (int c = 0; c < 3; ++c) {
                    const float v00 = sample_at(img, y0, x0, c, fill, fill_value);
                    const float v01 = sample_at(img, y0, x0 + 1, c, fill, fill_value);
                    const float v10 = sample_at(img, y0 + 1, x0, c, fill, fill_value);
                    const float v11 = sample_at(img, y0 + 1, x0 + 1, c, fill, fill_value);
                    const float top = v00 + (v01 - v00) * fx;
                    const float bot = v10 + (v11 - v10) * fx;
                    dst[c] = top + (bot - top) * fy;
                }
            }
        }
    }

    if (!params.hflip && !params.vflip)
        return warped;
    nn::Tensor flipped(warped.shape);
    for (int y = 0; y < h; ++y) {
        const int sy = params.vflip ? h - 1 - y : y;
        for (int x = 0; x < w; ++x) {
            const int sx = params.hflip ? w - 1 - x : x;
            const float* src = warped.ptr() + (std::size_t(sy) * w + sx) * 3;
            float* dst = flipped.ptr() + (std::size_t(y) * w + x) * 3;
            dst[0] = src[0];
            dst[1] = src[1];
            dst[2] = src[2];
        }
    }
    return flipped;
}

namespace {

inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

} // namespace

BatchStream::BatchStream(std::vector<std::pair<std::filesystem::path, int>> items,
                         int batch_size, Mode mode, AugmentConfig cfg)
    : items_(std::move(items)), batch_size_(batch_size), mode_(mode), cfg_(cfg) {
    if (items_.empty())
        throw StreamError("batch stream over an empty dataset");
    if (batch_size_ < 1)
        throw StreamError("batch_size must be >= 1");
    cfg_.validate();
    begin_epoch(0);
}

int BatchStream::n_task_classes() const {
    int mx = 0;
    for (const auto& [path, cls] : items_)
        mx = std::max(mx, cls);
    return mx + 1;
}

std::vector<std::size_t> BatchStream::epoch_order(std::size_t epoch) const {
    std::vector<std::size_t> order(items_.size());
    for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    if (mode_ == Mode::train) {
        std::mt19937_64 rng(mix64(cfg_.rng_seed) ^ mix64(epoch));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng() % i]);
    }
    return order;
}

void BatchStream::begin_epoch(std::size_t epoch) {
    order_ = epoch_order(epoch);
    if (mode_ == Mode::train)
        augment_rng_.seed(mix64(cfg_.rng_seed ^ 0xA5A5A5A5ULL) ^ mix64(epoch));
    cursor_ = 0;
}

bool BatchStream::next(Batch& out) {
    if (cursor_ >= order_.size())
        return false;
    const std::size_t take = std::min(std::size_t(batch_size_), order_.size() - cursor_);
    out.images = nn::Tensor({int(take), kInputSize, kInputSize, 3});
    out.labels.resize(take);
    out.indices.resize(take);
    const std::size_t image_floats = std::size_t(kInputSize) * kInputSize * 3;

    // Parameters are drawn sequentially before decode so the stream stays
    // deterministic regardless of how loading is scheduled.
    std::vector<AugmentParams> params(take);
    if (mode_ == Mode::train)
        for (std::size_t k = 0; k < take; ++k)
            params[k] = draw_augment_params(cfg_, augment_rng_);

    for (std::size_t k = 0; k < take; ++k) {
        const std::size_t idx = order_[cursor_ + k];
        const auto& [path, cls] = items_[idx];
        nn::Tensor img = preprocess(decode_image(path));
        if (mode_ == Mode::train)
            img = apply_augment(img, params[k], cfg_.fill_mode, cfg_.fill_value);
        std::copy(img.data.begin(), img.data.end(),
                  out.images.data.begin() + k * image_floats);
        out.labels[k] = cls;
        out.indices[k] = idx;
    }
    cursor_ += take;
    return true;
}

} // namespace histo
