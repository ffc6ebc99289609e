#ifndef HISTO_NN_NET_HPP
#define HISTO_NN_NET_HPP

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "histo/nn/tensor.hpp"

namespace histo::nn {

enum class Init { he_normal, glorot_uniform, zeros, ones };

struct Param {
    std::string name;
    Tensor value;
    Tensor grad; // allocated on first accumulate
    bool trainable = true;
    Init init = Init::zeros;

    void ensure_grad() {
        if (grad.shape != value.shape) {
            grad.shape = value.shape;
            grad.data.assign(value.numel(), 0.0f);
        }
    }
};

struct ExecContext {
    bool training = false;
    std::mt19937_64* rng = nullptr; // dropout draws in training mode
};

enum class PadMode { same, valid };

struct Pad {
    int top = 0, bottom = 0, left = 0, right = 0;
};

// A node of the static compute DAG. Shapes are resolved once at build time
// (infer_shape), which also fixes any 'same' padding amounts. Ops that need
// per-forward state for backward (pool argmax, dropout masks) stash it in
// the op; a graph being trained is owned by a single run.
class Op {
public:
    explicit Op(std::string name) : name_(std::move(name)) {}
    virtual ~Op() = default;
    const std::string& name() const { return name_; }

    virtual std::vector<int> infer_shape(const std::vector<std::vector<int>>& in) = 0;
    virtual void forward(const std::vector<const Tensor*>& in, Tensor& out,
                         ExecContext& ctx) = 0;
    // dout is the gradient at this op's output; implementations accumulate
    // (+=) into din[i] (already zero-initialized) and into param grads.
    virtual void backward(const std::vector<const Tensor*>& in, const Tensor& out,
                          const Tensor& dout, const std::vector<Tensor*>& din,
                          ExecContext& ctx);
    virtual std::vector<Param*> params() { return {}; }

private:
    std::string name_;
};

class Graph {
public:
    // Returns the node id of the added op. `inputs` are producer node ids;
    // id -1 denotes the graph input tensor.
    int add(std::unique_ptr<Op> op, std::vector<int> inputs);

    void set_input_shape(std::vector<int> shape) { input_shape_ = std::move(shape); }
    const std::vector<int>& input_shape() const { return input_shape_; }
    const std::vector<int>& output_shape(int node) const;
    int size() const { return static_cast<int>(nodes_.size()); }
    Op& op(int node) { return *nodes_[static_cast<std::size_t>(node)].op; }
    const std::vector<int>& inputs_of(int node) const {
        return nodes_[static_cast<std::size_t>(node)].inputs;
    }

    std::vector<Param*> params();
    std::vector<Param*> trainable_params();

    // Deterministic initialization: each param gets its own stream derived
    // from (seed, param ordinal).
    void init_params(std::uint64_t seed);

    // Executes ops [first, last]. `source` feeds every reference to node
    // first-1 (or the graph input when first == 0). With record=true all
    // activations in the range are retained for a following backward();
    // otherwise tensors are freed as soon as their consumers are done.
    Tensor run(const Tensor& source, ExecContext& ctx, bool record, int first = 0,
               int last = -1);

    // Backward over the recorded range; dout is the gradient at node
    // `last`'s output. Accumulates into param grads. Returns the gradient
    // w.r.t. the range's source when want_source_grad.
    Tensor backward(const Tensor& dout, ExecContext& ctx, bool want_source_grad = false);

    // Backward with the gradient injected at `node`'s output; recorded
    // nodes after it are skipped (fused softmax/cross-entropy entry).
    Tensor backward_through(const Tensor& dout, int node, ExecContext& ctx,
                            bool want_source_grad = false);

    const Tensor& activation(int node) const {
        return acts_[static_cast<std::size_t>(node)];
    }
    void drop_activations();

private:
    struct NodeEntry {
        std::unique_ptr<Op> op;
        std::vector<int> inputs;
        std::vector<int> shape;
    };
    std::vector<NodeEntry> nodes_;
    std::vector<int> input_shape_;

    // recorded state for backward
    std::vector<Tensor> acts_;
    Tensor recorded_source_;
    int rec_first_ = 0, rec_last_ = -1;
};

// ---- ops ----

struct Conv2D : Op {
    Conv2D(std::string name, int kh, int kw, int in_channels, int out_channels, int stride,
           PadMode pad, bool bias);
    std::vector<int> infer_shape(const std::vector<std::vector<int>>& in) override;
    void forward(const std::vector<const Tensor*>& in, Tensor& out, ExecContext& ctx) override;
    void backward(const std::vector<const Tensor*>& in, const Tensor& out, const Tensor& dout,
                  const std::vector<Tensor*>& din, ExecContext& ctx) override;
    std::vector<Param*> params() override;

    int kh, kw, cin, cout, stride;
    PadMode pad_mode;
    Pad pad;
    bool has_bias;
    Param kernel; // [kh, kw, cin, cout]
    Param bias;
};

struct DepthwiseConv2D : Op {
    DepthwiseConv2D(std::string name, int kh, int kw, int channels, int stride, PadMode pad);
    std::vector<int> infer_shape(const std::vector<std::vector<int>>& in) override;
    void forward(const std::vector<const Tensor*>& in, Tensor& out, ExecContext& ctx) override;
    void backward(const std::vector<const Tensor*>& in, const Tensor& out, const Tensor& dout,
                  const std::vector<Tensor*>& din, ExecContext& ctx) override;
    std::vector<Param*> params() override;

    int kh, kw, channels, stride;
    PadMode pad_mode;
    Pad pad;
    Param kernel; // [kh, kw, channels]
};

struct Dense : Op {
    Dense(std::string name, int in_features, int out_features, bool bias = true);
    std::vector<int> infer_shape(const std::vector<std::vector<int>>& in) override;
    void forward(const std::vector<const Tensor*>& in, Tensor& out, ExecContext& ctx) override;
    void backward(const std::vector<const Tensor*>& in, const Tensor& out, const Tensor& dout,
                  const std::vector<Tensor*>& din, ExecContext& ctx) override;
    std::vector<Param*> params() override;

    int in_features, out_features;
    bool has_bias;
    Param kernel; // [in, out]
    Param bias;
};

// Inference-style normalization: stored moving statistics are never updated;
// gamma/beta follow the enclosing stack's trainability.
struct BatchNorm : Op {
    BatchNorm(std::string name, int channels, float epsilon = 1e-3f);
    std::vector<int> infer_shape(const std::vector<std::vector<int>>& in) override;
    void forward(const std::vector<const Tensor*>& in, Tensor& out, ExecContext& ctx) override;
    void backward(const std::vector<const Tensor*>& in, const Tensor& out, const Tensor& dout,
                  const std::vector<Tensor*>& din, ExecContext& ctx) override;
    std::vector<Param*> params() override;

    int channels;
    float epsilon;
    Param gamma, beta, moving_mean, moving_var;
};

struct ReLU : Op {
    explicit ReLU(std::string name) : Op(std::move(name)) {}
    std::vector<int> infer_shape(const std::vector<std::vector<int>>& in) override;
    void forward(const std::vector<const Tensor*>& in, Tensor& out, ExecContext& ctx) override;
    void backward(const std::vector<const Tensor*>& in, const Tensor& out, const Tensor& dout,
                  const std::vector<Tensor*>& din, ExecContext& ctx) override;
};

struct Softmax : Op {
    explicit Softmax(std::string name) : Op(std::move(name)) {}
    std::vector<int> infer_shape(const std::vector<std::vector<int>>& in) override;
    void forward(const std::vector<const Tensor*>& in, Tensor& out, ExecContext& ctx) override;
    void backward(const std::vector<const Tensor*>& in, const Tensor& out, const Tensor& dout,
                  const std::vector<Tensor*>& din, ExecContext& ctx) override;
};

struct MaxPool : Op {
    MaxPool(std::string name, int kh, int kw, int stride, PadMode pad);
    std::vector<int> infer_shape(const std::vector<std::vector<int>>& in) override;
    void forward(const std::vector<const Tensor*>& in, Tensor& out, ExecContext& ctx) override;
    void backward(const std::vector<const Tensor*>& in, const Tensor& out, const Tensor& dout,
                  const std::vector<Tensor*>& din, ExecContext& ctx) override;

    int kh, kw, stride;
    PadMode pad_mode;
    Pad pad;
    std::vector<std::int64_t> argmax_; // recorded in training forward
};

// Average pooling that excludes padding from the divisor.
struct AvgPool : Op {
    AvgPool(std::string name, int kh, int kw, int stride, PadMode pad);
    std::vector<int> infer_shape(const std::vector<std::vector<int>>& in) override;
    void forward(const std::vector<const Tensor*>& in, Tensor& out, ExecContext& ctx) override;
    void backward(const std::vector<const Tensor*>& in, const Tensor& out, const Tensor& dout,
                  const std::vector<Tensor*>& din, ExecContext& ctx) override;

    int kh, kw, stride;
    PadMode pad_mode;
    Pad pad;
};

struct GlobalAvgPool : Op {
    explicit GlobalAvgPool(std::string name) : Op(std::move(name)) {}
    std::vector<int> infer_shape(const std::vector<std::vector<int>>& in) override;
    void forward(const std::vector<const Tensor*>& in, Tensor& out, ExecContext& ctx) override;
    void backward(const std::vector<const Tensor*>& in, const Tensor& out, const Tensor& dout,
                  const std::vector<Tensor*>& din, ExecContext& ctx) override;
};

struct Flatten : Op {
    explicit Flatten(std::string name) : Op(std::move(name)) {}
    std::vector<int> infer_shape(const std::vector<std::vector<int>>& in) override;
    void forward(const std::vector<const Tensor*>& in, Tensor& out, ExecContext& ctx) override;
    void backward(const std::vector<const Tensor*>& in, const Tensor& out, const Tensor& dout,
                  const std::vector<Tensor*>& din, ExecContext& ctx) override;
};

struct Dropout : Op {
    Dropout(std::string name, float rate) : Op(std::move(name)), rate(rate) {}
    std::vector<int> infer_shape(const std::vector<std::vector<int>>& in) override;
    void forward(const std::vector<const Tensor*>& in, Tensor& out, ExecContext& ctx) override;
    void backward(const std::vector<const Tensor*>& in, const Tensor& out, const Tensor& dout,
                  const std::vector<Tensor*>& din, ExecContext& ctx) override;

    float rate;
    std::vector<float> mask_; // inverted-dropout scaling factors
};

struct Concat : Op {
    explicit Concat(std::string name) : Op(std::move(name)) {}
    std::vector<int> infer_shape(const std::vector<std::vector<int>>& in) override;
    void forward(const std::vector<const Tensor*>& in, Tensor& out, ExecContext& ctx) override;
    void backward(const std::vector<const Tensor*>& in, const Tensor& out, const Tensor& dout,
                  const std::vector<Tensor*>& din, ExecContext& ctx) override;
};

struct Add : Op {
    explicit Add(std::string name) : Op(std::move(name)) {}
    std::vector<int> infer_shape(const std::vector<std::vector<int>>& in) override;
    void forward(const std::vector<const Tensor*>& in, Tensor& out, ExecContext& ctx) override;
    void backward(const std::vector<const Tensor*>& in, const Tensor& out, const Tensor& dout,
                  const std::vector<Tensor*>& din, ExecContext& ctx) override;
};

struct ZeroPad2D : Op {
    ZeroPad2D(std::string name, Pad pad) : Op(std::move(name)), pad(pad) {}
    std::vector<int> infer_shape(const std::vector<std::vector<int>>& in) override;
    void forward(const std::vector<const Tensor*>& in, Tensor& out, ExecContext& ctx) override;
    void backward(const std::vector<const Tensor*>& in, const Tensor& out, const Tensor& dout,
                  const std::vector<Tensor*>& din, ExecContext& ctx) override;
    Pad pad;
};

struct Crop2D : Op {
    Crop2D(std::string name, Pad crop) : Op(std::move(name)), crop(crop) {}
    std::vector<int> infer_shape(const std::vector<std::vector<int>>& in) override;
    void forward(const std::vector<const Tensor*>& in, Tensor& out, ExecContext& ctx) override;
    void backward(const std::vector<const Tensor*>& in, const Tensor& out, const Tensor& dout,
                  const std::vector<Tensor*>& din, ExecContext& ctx) override;
    Pad crop;
};

// Resolves TF-style 'same'/'valid' geometry for a kernel/stride pair.
void resolve_padding(PadMode mode, int in_h, int in_w, int kh, int kw, int stride, Pad& pad,
                     int& out_h, int& out_w);

} // namespace histo::nn

#endif
