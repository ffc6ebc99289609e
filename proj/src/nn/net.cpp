#include "histo/nn/net.hpp"

#include <algorithm>
#include <cblas.h>
#include <cmath>
#include <cstring>

#include "histo/errors.hpp"

namespace histo::nn {

std::string shape_str(const std::vector<int>& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i)
            s += ",";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

void Op::backward(const std::vector<const Tensor*>&, const Tensor&, const Tensor&,
                  const std::vector<Tensor*>&, ExecContext&) {
    throw Error("backward not implemented for op " + name());
}

void resolve_padding(PadMode mode, int in_h, int in_w, int kh, int kw, int stride, Pad& pad,
                     int& out_h, int& out_w) {
    if (mode == PadMode::valid) {
        pad = {};
        out_h = (in_h - kh) / stride + 1;
        out_w = (in_w - kw) / stride + 1;
        if (out_h < 1 || out_w < 1)
            throw Error("valid padding leaves no output pixels");
        return;
    }
    out_h = (in_h + stride - 1) / stride;
    out_w = (in_w + stride - 1) / stride;
    const int pad_h = std::max((out_h - 1) * stride + kh - in_h, 0);
    const int pad_w = std::max((out_w - 1) * stride + kw - in_w, 0);
    pad.top = pad_h / 2;
    pad.bottom = pad_h - pad.top;
    pad.left = pad_w / 2;
    pad.right = pad_w - pad.left;
}

// ---- Graph ----

int Graph::add(std::unique_ptr<Op> op, std::vector<int> inputs) {
    std::vector<std::vector<int>> in_shapes;
    for (int id : inputs) {
        if (id == -1)
            in_shapes.push_back(input_shape_);
        else
            in_shapes.push_back(output_shape(id));
    }
    NodeEntry entry;
    entry.shape = op->infer_shape(in_shapes);
    entry.op = std::move(op);
    entry.inputs = std::move(inputs);
    nodes_.push_back(std::move(entry));
    return static_cast<int>(nodes_.size()) - 1;
}

const std::vector<int>& Graph::output_shape(int node) const {
    return nodes_[static_cast<std::size_t>(node)].shape;
}

std::vector<Param*> Graph::params() {
    std::vector<Param*> out;
    for (auto& n : nodes_)
        for (Param* p : n.op->params())
            out.push_back(p);
    return out;
}

std::vector<Param*> Graph::trainable_params() {
    std::vector<Param*> out;
    for (Param* p : params())
        if (p->trainable)
            out.push_back(p);
    return out;
}

namespace {

inline std::uint64_t mix64(std::uint64_t x) {
    // splitmix64 finalizer
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

struct Gauss {
    std::mt19937_64 rng;
    bool has_spare = false;
    double spare = 0.0;
    explicit Gauss(std::uint64_t seed) : rng(seed) {}
    double uniform() { return (rng() >> 11) * 0x1.0p-53; }
    // Box-Muller, pinned so initialization does not depend on the standard
    // library's normal_distribution implementation.
    double normal() {
        if (has_spare) {
            has_spare = false;
            return spare;
        }
        double u1 = 0.0;
        while (u1 <= 1e-300)
            u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare = r * std::sin(2.0 * M_PI * u2);
        has_spare = true;
        return r * std::cos(2.0 * M_PI * u2);
    }
};

std::size_t fan_in_of(const Param& p) {
    const auto& s = p.value.shape;
    if (s.size() == 4) // conv kernel [kh,kw,cin,cout]
        return std::size_t(s[0]) * s[1] * s[2];
    if (s.size() == 3) // depthwise kernel [kh,kw,c]
        return std::size_t(s[0]) * s[1];
    if (s.size() == 2) // dense kernel [in,out]
        return std::size_t(s[0]);
    return p.value.numel();
}

std::size_t fan_out_of(const Param& p) {
    const auto& s = p.value.shape;
    if (s.size() == 4)
        return std::size_t(s[0]) * s[1] * s[3];
    if (s.size() == 3)
        return std::size_t(s[0]) * s[1];
    if (s.size() == 2)
        return std::size_t(s[1]);
    return p.value.numel();
}

} // namespace

void Graph::init_params(std::uint64_t seed) {
    std::uint64_t ordinal = 0;
    for (Param* p : params()) {
        Gauss g(mix64(seed) ^ mix64(ordinal++));
        switch (p->init) {
        case Init::zeros:
            std::fill(p->value.data.begin(), p->value.data.end(), 0.0f);
            break;
        case Init::ones:
            std::fill(p->value.data.begin(), p->value.data.end(), 1.0f);
            break;
        case Init::he_normal: {
            const double stddev = std::sqrt(2.0 / double(fan_in_of(*p)));
            for (float& v : p->value.data)
                v = static_cast<float>(g.normal() * stddev);
            break;
        }
        case Init::glorot_uniform: {
            const double limit =
                std::sqrt(6.0 / double(fan_in_of(*p) + fan_out_of(*p)));
            for (float& v : p->value.data)
                v = static_cast<float>((g.uniform() * 2.0 - 1.0) * limit);
            break;
        }
        }
    }
}

Tensor Graph::run(const Tensor& source, ExecContext& ctx, bool record, int first, int last) {
    if (last < 0)
        last = size() - 1;
    std::vector<Tensor> outputs(static_cast<std::size_t>(size()));
    std::vector<int> pending(static_cast<std::size_t>(size()), 0);
    for (int i = first; i <= last; ++i)
        for (int in : nodes_[std::size_t(i)].inputs)
            if (in >= first)
                ++pending[std::size_t(in)];

    for (int i = first; i <= last; ++i) {
        auto& node = nodes_[std::size_t(i)];
        std::vector<const Tensor*> ins;
        for (int in : node.inputs) {
            if (in < first) {
                ins.push_back(&source); // range source feeds all outside refs
            } else {
                ins.push_back(&outputs[std::size_t(in)]);
            }
        }
        node.op->forward(ins, outputs[std::size_t(i)], ctx);
        if (!record) {
            for (int in : node.inputs)
                if (in >= first && --pending[std::size_t(in)] == 0)
                    outputs[std::size_t(in)].release();
        }
    }

    Tensor result = outputs[std::size_t(last)]; // copy; acts_ keeps the original
    if (record) {
        acts_ = std::move(outputs);
        recorded_source_ = source;
        rec_first_ = first;
        rec_last_ = last;
    }
    return result;
}

Tensor Graph::backward(const Tensor& dout, ExecContext& ctx, bool want_source_grad) {
    return backward_through(dout, rec_last_, ctx, want_source_grad);
}

Tensor Graph::backward_through(const Tensor& dout, int node, ExecContext& ctx,
                               bool want_source_grad) {
    if (acts_.empty())
        throw Error("backward called without a recorded forward");
    const int first = rec_first_, last = node;

    // A node needs a gradient when it holds trainable params or feeds one
    // that does; everything else (e.g. a frozen backbone below the head) is
    // skipped entirely.
    std::vector<char> has_trainable(std::size_t(size()), 0);
    std::vector<char> needs_grad(std::size_t(size()), 0);
    for (int i = first; i <= last; ++i) {
        for (Param* p : nodes_[std::size_t(i)].op->params())
            if (p->trainable)
                has_trainable[std::size_t(i)] = 1;
        bool needs = has_trainable[std::size_t(i)] != 0;
        for (int in : nodes_[std::size_t(i)].inputs) {
            if (in < first)
                needs = needs || want_source_grad;
            else
                needs = needs || needs_grad[std::size_t(in)];
        }
        needs_grad[std::size_t(i)] = needs ? 1 : 0;
    }

    std::vector<Tensor> grads(static_cast<std::size_t>(size()));
    Tensor source_grad;
    if (want_source_grad) {
        source_grad.shape = recorded_source_.shape;
        source_grad.data.assign(recorded_source_.numel(), 0.0f);
    }
    grads[std::size_t(last)] = dout;

    for (int i = last; i >= first; --i) {
        auto& entry = nodes_[std::size_t(i)];
        Tensor& g = grads[std::size_t(i)];
        if (g.empty())
            continue; // node does not influence the output
        std::vector<const Tensor*> ins;
        std::vector<Tensor*> dins;
        bool any_din = false;
        for (int in : entry.inputs) {
            if (in < first) {
                ins.push_back(&recorded_source_);
                dins.push_back(want_source_grad ? &source_grad : nullptr);
                any_din = any_din || want_source_grad;
            } else {
                ins.push_back(&acts_[std::size_t(in)]);
                if (needs_grad[std::size_t(in)]) {
                    Tensor& gin = grads[std::size_t(in)];
                    if (gin.empty()) {
                        gin.shape = acts_[std::size_t(in)].shape;
                        gin.data.assign(acts_[std::size_t(in)].numel(), 0.0f);
                    }
                    dins.push_back(&gin);
                    any_din = true;
                } else {
                    dins.push_back(nullptr);
                }
            }
        }
        if (has_trainable[std::size_t(i)] || any_din)
            entry.op->backward(ins, acts_[std::size_t(i)], g, dins, ctx);
        g.release();
    }
    return source_grad;
}

void Graph::drop_activations() {
    acts_.clear();
    recorded_source_.release();
}

// ---- Dense ----

Dense::Dense(std::string name, int in_features, int out_features, bool bias)
    : Op(std::move(name)), in_features(in_features), out_features(out_features),
      has_bias(bias) {
    kernel.name = this->name() + "/kernel";
    kernel.value = Tensor({in_features, out_features});
    kernel.init = Init::he_normal;
    if (has_bias) {
        this->bias.name = this->name() + "/bias";
        this->bias.value = Tensor({out_features});
        this->bias.init = Init::zeros;
    }
}

std::vector<int> Dense::infer_shape(const std::vector<std::vector<int>>& in) {
    if (in.size() != 1 || in[0].size() != 2 || in[0][1] != in_features)
        throw Error(name() + ": expected input (B," + std::to_string(in_features) + "), got " +
                    shape_str(in[0]));
    return {in[0][0], out_features};
}

void Dense::forward(const std::vector<const Tensor*>& in, Tensor& out, ExecContext&) {
    const Tensor& x = *in[0];
    const int batch = x.dim(0);
    out = Tensor({batch, out_features});
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, batch, out_features, in_features,
                1.0f, x.ptr(), in_features, kernel.value.ptr(), out_features, 0.0f, out.ptr(),
                out_features);
    if (has_bias)
        for (int b = 0; b < batch; ++b)
            for (int j = 0; j < out_features; ++j)
                out.data[std::size_t(b) * out_features + j] += bias.value.data[std::size_t(j)];
}

void Dense::backward(const std::vector<const Tensor*>& in, const Tensor&, const Tensor& dout,
                     const std::vector<Tensor*>& din, ExecContext&) {
    const Tensor& x = *in[0];
    const int batch = x.dim(0);
    if (kernel.trainable) {
        kernel.ensure_grad();
        cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, in_features, out_features, batch,
                    1.0f, x.ptr(), in_features, dout.ptr(), out_features, 1.0f,
                    kernel.grad.ptr(), out_features);
        if (has_bias) {
            bias.ensure_grad();
            for (int b = 0; b < batch; ++b)
                for (int j = 0; j < out_features; ++j)
                    bias.grad.data[std::size_t(j)] +=
                        dout.data[std::size_t(b) * out_features + j];
        }
    }
    if (din[0]) {
        cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, batch, in_features, out_features,
                    1.0f, dout.ptr(), out_features, kernel.value.ptr(), out_features, 1.0f,
                    din[0]->ptr(), in_features);
    }
}

std::vector<Param*> Dense::params() {
    std::vector<Param*> p{&kernel};
    if (has_bias)
        p.push_back(&bias);
    return p;
}

// ---- BatchNorm ----

BatchNorm::BatchNorm(std::string name, int channels, float epsilon)
    : Op(std::move(name)), channels(channels), epsilon(epsilon) {
    auto make = [&](Param& p, const char* suffix, Init init, bool trainable) {
        p.name = this->name() + "/" + suffix;
        p.value = Tensor({channels});
        p.init = init;
        p.trainable = trainable;
    };
    make(gamma, "gamma", Init::ones, true);
    make(beta, "beta", Init::zeros, true);
    make(moving_mean, "moving_mean", Init::zeros, false);
    make(moving_var, "moving_var", Init::ones, false);
}

std::vector<int> BatchNorm::infer_shape(const std::vector<std::vector<int>>& in) {
    if (in[0].back() != channels)
        throw Error(name() + ": channel mismatch, got " + shape_str(in[0]));
    return in[0];
}

void BatchNorm::forward(const std::vector<const Tensor*>& in, Tensor& out, ExecContext&) {
    const Tensor& x = *in[0];
    out = Tensor(x.shape);
    const std::size_t rows = x.numel() / std::size_t(channels);
    std::vector<float> scale(static_cast<std::size_t>(channels));
    std::vector<float> shift(static_cast<std::size_t>(channels));
    for (int c = 0; c < channels; ++c) {
        const float inv = 1.0f / std::sqrt(moving_var.value.data[std::size_t(c)] + epsilon);
        scale[std::size_t(c)] = gamma.value.data[std::size_t(c)] * inv;
        shift[std::size_t(c)] = beta.value.data[std::size_t(c)] -
                                moving_mean.value.data[std::size_t(c)] * scale[std::size_t(c)];
    }
    const float* xp = x.ptr();
    float* op = out.ptr();
    for (std::size_t r = 0; r < rows; ++r)
        for (int c = 0; c < channels; ++c, ++xp, ++op)
            *op = *xp * scale[std::size_t(c)] + shift[std::size_t(c)];
}

void BatchNorm::backward(const std::vector<const Tensor*>& in, const Tensor&,
                         const Tensor& dout, const std::vector<Tensor*>& din, ExecContext&) {
    const Tensor& x = *in[0];
    const std::size_t rows = x.numel() / std::size_t(channels);
    std::vector<float> inv_std(static_cast<std::size_t>(channels));
    for (int c = 0; c < channels; ++c)
        inv_std[std::size_t(c)] =
            1.0f / std::sqrt(moving_var.value.data[std::size_t(c)] + epsilon);

    if (gamma.trainable) {
        gamma.ensure_grad();
        beta.ensure_grad();
        const float* xp = x.ptr();
        const float* dp = dout.ptr();
        for (std::size_t r = 0; r < rows; ++r)
            for (int c = 0; c < channels; ++c, ++xp, ++dp) {
                const float xhat = (*xp - moving_mean.value.data[std::size_t(c)]) *
                                   inv_std[std::size_t(c)];
                gamma.grad.data[std::size_t(c)] += *dp * xhat;
                beta.grad.data[std::size_t(c)] += *dp;
            }
    }
    if (din[0]) {
        float* gp = din[0]->ptr();
        const float* dp = dout.ptr();
        for (std::size_t r = 0; r < rows; ++r)
            for (int c = 0; c < channels; ++c, ++gp, ++dp)
                *gp += *dp * gamma.value.data[std::size_t(c)] * inv_std[std::size_t(c)];
    }
}

std::vector<Param*> BatchNorm::params() {
    return {&gamma, &beta, &moving_mean, &moving_var};
}

// ---- ReLU / Softmax ----

std::vector<int> ReLU::infer_shape(const std::vector<std::vector<int>>& in) { return in[0]; }

void ReLU::forward(const std::vector<const Tensor*>& in, Tensor& out, ExecContext&) {
    out = Tensor(in[0]->shape);
    const float* xp = in[0]->ptr();
    float* op = out.ptr();
    const std::size_t n = in[0]->numel();
    for (std::size_t i = 0; i < n; ++i)
        op[i] = xp[i] > 0.0f ? xp[i] : 0.0f;
}

void ReLU::backward(const std::vector<const Tensor*>&, const Tensor& out, const Tensor& dout,
                    const std::vector<Tensor*>& din, ExecContext&) {
    if (!din[0])
        return;
    float* gp = din[0]->ptr();
    const float* op = out.ptr();
    const float* dp = dout.ptr();
    const std::size_t n = out.numel();
    for (std::size_t i = 0; i < n; ++i)
        gp[i] += op[i] > 0.0f ? dp[i] : 0.0f;
}

std::vector<int> Softmax::infer_shape(const std::vector<std::vector<int>>& in) { return in[0]; }

void Softmax::forward(const std::vector<const Tensor*>& in, Tensor& out, ExecContext&) {
    const Tensor& x = *in[0];
    out = Tensor(x.shape);
    const int cols = x.shape.back();
    const std::size_t rows = x.numel() / std::size_t(cols);
    for (std::size_t r = 0; r < rows; ++r) {
        const float* xp = x.ptr() + r * std::size_t(cols);
        float* op = out.ptr() + r * std::size_t(cols);
        float mx = xp[0];
        for (int c = 1; c < cols; ++c)
            mx = std::max(mx, xp[c]);
        float sum = 0.0f;
        for (int c = 0; c < cols; ++c) {
            op[c] = std::exp(xp[c] - mx);
            sum += op[c];
        }
        for (int c = 0; c < cols; ++c)
            op[c] /= sum;
    }
}

void Softmax::backward(const std::vector<const Tensor*>&, const Tensor& out,
                       const Tensor& dout, const std::vector<Tensor*>& din, ExecContext&) {
    if (!din[0])
        return;
    const int cols = out.shape.back();
    const std::size_t rows = out.numel() / std::size_t(cols);
    for (std::size_t r = 0; r < rows; ++r) {
        const float* p = out.ptr() + r * std::size_t(cols);
        const float* dp = dout.ptr() + r * std::size_t(cols);
        float* gp = din[0]->ptr() + r * std::size_t(cols);
        float dot = 0.0f;
        for (int c = 0; c < cols; ++c)
            dot += dp[c] * p[c];
        for (int c = 0; c < cols; ++c)
            gp[c] += p[c] * (dp[c] - dot);
    }
}

// ---- GlobalAvgPool / Flatten / Dropout ----

std::vector<int> GlobalAvgPool::infer_shape(const std::vector<std::vector<int>>& in) {
    if (in[0].size() != 4)
        throw Error(name() + ": expected NHWC input");
    return {in[0][0], in[0][3]};
}

void GlobalAvgPool::forward(const std::vector<const Tensor*>& in, Tensor& out, ExecContext&) {
    const Tensor& x = *in[0];
    const int batch = x.dim(0), h = x.dim(1), w = x.dim(2), ch = x.dim(3);
    out = Tensor({batch, ch});
    const float inv = 1.0f / float(h * w);
    for (int b = 0; b < batch; ++b) {
        const float* xp = x.ptr() + std::size_t(b) * h * w * ch;
        float* op = out.ptr() + std::size_t(b) * ch;
        for (int i = 0; i < h * w; ++i)
            for (int c = 0; c < ch; ++c)
                op[c] += xp[std::size_t(i) * ch + c];
        for (int c = 0; c < ch; ++c)
            op[c] *= inv;
    }
}

void GlobalAvgPool::backward(const std::vector<const Tensor*>& in, const Tensor&,
                             const Tensor& dout, const std::vector<Tensor*>& din,
                             ExecContext&) {
    if (!din[0])
        return;
    const Tensor& x = *in[0];
    const int batch = x.dim(0), h = x.dim(1), w = x.dim(2), ch = x.dim(3);
    const float inv = 1.0f / float(h * w);
    for (int b = 0; b < batch; ++b) {
        const float* dp = dout.ptr() + std::size_t(b) * ch;
        float* gp = din[0]->ptr() + std::size_t(b) * h * w * ch;
        for (int i = 0; i < h * w; ++i)
            for (int c = 0; c < ch; ++c)
                gp[std::size_t(i) * ch + c] += dp[c] * inv;
    }
}

std::vector<int> Flatten::infer_shape(const std::vector<std::vector<int>>& in) {
    int features = 1;
    for (std::size_t i = 1; i < in[0].size(); ++i)
        features *= in[0][i];
    return {in[0][0], features};
}

void Flatten::forward(const std::vector<const Tensor*>& in, Tensor& out, ExecContext&) {
    out = *in[0];
    const int batch = out.dim(0);
    out.shape = {batch, static_cast<int>(out.numel() / std::size_t(batch))};
}

void Flatten::backward(const std::vector<const Tensor*>& in, const Tensor&,
                       const Tensor& dout, const std::vector<Tensor*>& din, ExecContext&) {
    if (!din[0])
        return;
    for (std::size_t i = 0; i < dout.numel(); ++i)
        din[0]->data[i] += dout.data[i];
    (void)in;
}

std::vector<int> Dropout::infer_shape(const std::vector<std::vector<int>>& in) { return in[0]; }

void Dropout::forward(const std::vector<const Tensor*>& in, Tensor& out, ExecContext& ctx) {
    if (!ctx.training || rate <= 0.0f) {
        out = *in[0];
        mask_.clear();
        return;
    }
    if (!ctx.rng)
        throw Error(name() + ": training forward needs an rng");
    out = Tensor(in[0]->shape);
    const float keep = 1.0f - rate;
    const float scale = 1.0f / keep;
    mask_.resize(out.numel());
    for (std::size_t i = 0; i < out.numel(); ++i) {
        const double u = ((*ctx.rng)() >> 11) * 0x1.0p-53;
        mask_[i] = u < keep ? scale : 0.0f;
        out.data[i] = in[0]->data[i] * mask_[i];
    }
}

void Dropout::backward(const std::vector<const Tensor*>&, const Tensor&, const Tensor& dout,
                       const std::vector<Tensor*>& din, ExecContext&) {
    if (!din[0])
        return;
    if (mask_.empty()) {
        for (std::size_t i = 0; i < dout.numel(); ++i)
            din[0]->data[i] += dout.data[i];
        return;
    }
    for (std::size_t i = 0; i < dout.numel(); ++i)
        din[0]->data[i] += dout.data[i] * mask_[i];
}

// ---- Concat / Add / ZeroPad2D / Crop2D ----

std::vector<int> Concat::infer_shape(const std::vector<std::vector<int>>& in) {
    auto out = in[0];
    for (std::size_t i = 1; i < in.size(); ++i) {
        for (std::size_t d = 0; d + 1 < out.size(); ++d)
            if (in[i][d] != out[d])
                throw Error(name() + ": concat shape mismatch");
        out.back() += in[i].back();
    }
    return out;
}

void Concat::forward(const std::vector<const Tensor*>& in, Tensor& out, ExecContext&) {
    int total_c = 0;
    for (const Tensor* t : in)
        total_c += t->shape.back();
    auto out_shape = in[0]->shape;
    out_shape.back() = total_c;
    out = Tensor(out_shape);
    const std::size_t rows = out.numel() / std::size_t(total_c);
    std::size_t offset = 0;
    for (const Tensor* t : in) {
        const int c = t->shape.back();
        for (std::size_t r = 0; r < rows; ++r)
            std::memcpy(out.ptr() + r * std::size_t(total_c) + offset,
                        t->ptr() + r * std::size_t(c), std::size_t(c) * sizeof(float));
        offset += std::size_t(c);
    }
}

void Concat::backward(const std::vector<const Tensor*>& in, const Tensor& out,
                      const Tensor& dout, const std::vector<Tensor*>& din, ExecContext&) {
    const int total_c = out.shape.back();
    const std::size_t rows = out.numel() / std::size_t(total_c);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < in.size(); ++k) {
        const int c = in[k]->shape.back();
        if (din[k])
            for (std::size_t r = 0; r < rows; ++r) {
                const float* src = dout.ptr() + r * std::size_t(total_c) + offset;
                float* dst = din[k]->ptr() + r * std::size_t(c);
                for (int i = 0; i < c; ++i)
                    dst[i] += src[i];
            }
        offset += std::size_t(c);
    }
}

std::vector<int> Add::infer_shape(const std::vector<std::vector<int>>& in) {
    for (std::size_t i = 1; i < in.size(); ++i)
        if (in[i] != in[0])
            throw Error(name() + ": add shape mismatch " + shape_str(in[0]) + " vs " +
                        shape_str(in[i]));
    return in[0];
}

void Add::forward(const std::vector<const Tensor*>& in, Tensor& out, ExecContext&) {
    out = *in[0];
    for (std::size_t k = 1; k < in.size(); ++k)
        for (std::size_t i = 0; i < out.numel(); ++i)
            out.data[i] += in[k]->data[i];
}

void Add::backward(const std::vector<const Tensor*>&, const Tensor&, const Tensor& dout,
                   const std::vector<Tensor*>& din, ExecContext&) {
    for (Tensor* g : din) {
        if (!g)
            continue;
        for (std::size_t i = 0; i < dout.numel(); ++i)
            g->data[i] += dout.data[i];
    }
}

std::vector<int> ZeroPad2D::infer_shape(const std::vector<std::vector<int>>& in) {
    return {in[0][0], in[0][1] + pad.top + pad.bottom, in[0][2] + pad.left + pad.right,
            in[0][3]};
}

void ZeroPad2D::forward(const std::vector<const Tensor*>& in, Tensor& out, ExecContext&) {
    const Tensor& x = *in[0];
    const int batch = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    out = Tensor({batch, h + pad.top + pad.bottom, w + pad.left + pad.right, c});
    const int ow = out.dim(2);
    for (int b = 0; b < batch; ++b)
        for (int y = 0; y < h; ++y)
            std::memcpy(out.ptr() +
                            ((std::size_t(b) * out.dim(1) + y + pad.top) * ow + pad.left) * c,
                        x.ptr() + (std::size_t(b) * h + y) * w * c,
                        std::size_t(w) * c * sizeof(float));
}

void ZeroPad2D::backward(const std::vector<const Tensor*>& in, const Tensor& out,
                         const Tensor& dout, const std::vector<Tensor*>& din, ExecContext&) {
    if (!din[0])
        return;
    const Tensor& x = *in[0];
    const int batch = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    const int ow = out.dim(2);
    for (int b = 0; b < batch; ++b)
        for (int y = 0; y < h; ++y) {
            const float* src =
                dout.ptr() + ((std::size_t(b) * out.dim(1) + y + pad.top) * ow + pad.left) * c;
            float* dst = din[0]->ptr() + (std::size_t(b) * h + y) * w * c;
            for (int i = 0; i < w * c; ++i)
                dst[i] += src[i];
        }
}

std::vector<int> Crop2D::infer_shape(const std::vector<std::vector<int>>& in) {
    return {in[0][0], in[0][1] - crop.top - crop.bottom, in[0][2] - crop.left - crop.right,
            in[0][3]};
}

void Crop2D::forward(const std::vector<const Tensor*>& in, Tensor& out, ExecContext&) {
    const Tensor& x = *in[0];
    const int batch = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    const int oh = h - crop.top - crop.bottom, ow = w - crop.left - crop.right;
    out = Tensor({batch, oh, ow, c});
    for (int b = 0; b < batch; ++b)
        for (int y = 0; y < oh; ++y)
            std::memcpy(out.ptr() + (std::size_t(b) * oh + y) * ow * c,
                        x.ptr() + ((std::size_t(b) * h + y + crop.top) * w + crop.left) * c,
                        std::size_t(ow) * c * sizeof(float));
}

void Crop2D::backward(const std::vector<const Tensor*>& in, const Tensor& out,
                      const Tensor& dout, const std::vector<Tensor*>& din, ExecContext&) {
    if (!din[0])
        return;
    const Tensor& x = *in[0];
    const int h = x.dim(1), w = x.dim(2), c = x.dim(3);
    const int oh = out.dim(1), ow = out.dim(2);
    for (int b = 0; b < out.dim(0); ++b)
        for (int y = 0; y < oh; ++y) {
            const float* src = dout.ptr() + (std::size_t(b) * oh + y) * ow * c;
            float* dst =
                din[0]->ptr() + ((std::size_t(b) * h + y + crop.top) * w + crop.left) * c;
            for (int i = 0; i < ow * c; ++i)
                dst[i] += src[i];
        }
}

} // namespace histo::nn
