#include <cblas.h>
#include <cmath>
#include <cstring>
#include <limits>

#include "histo/errors.hpp"
#include "histo/nn/net.hpp"

namespace histo::nn {

namespace {

constexpr std::size_t kChunkBytes = 48u << 20; // im2col working-set cap

// Columns for output rows [oy0, oy1). Layout per output pixel:
// (ky*kw + kx)*C + c, matching a [kh,kw,cin,cout] kernel flattened row-major.
void im2col_chunk(const float* x, int h, int w, int c, int kh, int kw, int stride,
                  const Pad& pad, int out_w, int oy0, int oy1, float* col) {
    const std::size_t k_cols = std::size_t(kh) * kw * c;
    for (int oy = oy0; oy < oy1; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
            float* dst = col + (std::size_t(oy - oy0) * out_w + ox) * k_cols;
            const int iy0 = oy * stride - pad.top;
            const int ix0 = ox * stride - pad.left;
            for (int ky = 0; ky < kh; ++ky) {
                const int iy = iy0 + ky;
                float* drow = dst + std::size_t(ky) * kw * c;
                if (iy < 0 || iy >= h) {
                    std::memset(drow, 0, std::size_t(kw) * c * sizeof(float));
                    continue;
                }
                for (int kx = 0; kx < kw; ++kx) {
                    const int ix = ix0 + kx;
                    float* d = drow + std::size_t(kx) * c;
                    if (ix < 0 || ix >= w)
                        std::memset(d, 0, std::size_t(c) * sizeof(float));
                    else
                        std::memcpy(d, x + (std::size_t(iy) * w + ix) * c,
                                    std::size_t(c) * sizeof(float));
                }
            }
        }
    }
}

void col2im_add_chunk(const float* col, int h, int w, int c, int kh, int kw, int stride,
                      const Pad& pad, int out_w, int oy0, int oy1, float* dx) {
    const std::size_t k_cols = std::size_t(kh) * kw * c;
    for (int oy = oy0; oy < oy1; ++oy) {
        for (int ox = 0; ox < out_w; ++ox) {
            const float* src = col + (std::size_t(oy - oy0) * out_w + ox) * k_cols;
            const int iy0 = oy * stride - pad.top;
            const int ix0 = ox * stride - pad.left;
            for (int ky = 0; ky < kh; ++ky) {
                const int iy = iy0 + ky;
                if (iy < 0 || iy >= h)
                    continue;
                for (int kx = 0; kx < kw; ++kx) {
                    const int ix = ix0 + kx;
                    if (ix < 0 || ix >= w)
                        continue;
                    const float* s = src + (std::size_t(ky) * kw + kx) * c;
                    float* d = dx + (std::size_t(iy) * w + ix) * c;
                    for (int i = 0; i < c; ++i)
                        d[i] += s[i];
                }
            }
        }
    }
}

int rows_per_chunk(int out_h, int out_w, std::size_t k_cols) {
    const std::size_t row_bytes = std::size_t(out_w) * k_cols * sizeof(float);
    int rows = row_bytes ? int(kChunkBytes / row_bytes) : out_h;
    return std::max(1, std::min(rows, out_h));
}

} // namespace

// ---- Conv2D ----

Conv2D::Conv2D(std::string name, int kh, int kw, int in_channels, int out_channels,
               int stride, PadMode pad, bool bias)
    : Op(std::move(name)), kh(kh), kw(kw), cin(in_channels), cout(out_channels),
      stride(stride), pad_mode(pad), has_bias(bias) {
    kernel.name = this->name() + "/kernel";
    kernel.value = Tensor({kh, kw, cin, cout});
    kernel.init = Init::he_normal;
    if (has_bias) {
        this->bias.name = this->name() + "/bias";
        this->bias.value = Tensor({cout});
        this->bias.init = Init::zeros;
    }
}

std::vector<int> Conv2D::infer_shape(const std::vector<std::vector<int>>& in) {
    if (in.size() != 1 || in[0].size() != 4 || in[0][3] != cin)
        throw Error(name() + ": expected NHWC input with " + std::to_string(cin) +
                    " channels, got " + shape_str(in[0]));
    int out_h = 0, out_w = 0;
    resolve_padding(pad_mode, in[0][1], in[0][2], kh, kw, stride, pad, out_h, out_w);
    return {in[0][0], out_h, out_w, cout};
}

void Conv2D::forward(const std::vector<const Tensor*>& in, Tensor& out, ExecContext&) {
    const Tensor& x = *in[0];
    const int batch = x.dim(0), h = x.dim(1), w = x.dim(2);
    int out_h = 0, out_w = 0;
    Pad p;
    resolve_padding(pad_mode, h, w, kh, kw, stride, p, out_h, out_w);
    out = Tensor({batch, out_h, out_w, cout});

    const std::size_t k_cols = std::size_t(kh) * kw * cin;
    const int chunk = rows_per_chunk(out_h, out_w, k_cols);
    std::vector<float> col(std::size_t(chunk) * out_w * k_cols);

    for (int b = 0; b < batch; ++b) {
        const float* xb = x.ptr() + std::size_t(b) * h * w * cin;
        float* ob = out.ptr() + std::size_t(b) * out_h * out_w * cout;
        for (int oy0 = 0; oy0 < out_h; oy0 += chunk) {
            const int oy1 = std::min(oy0 + chunk, out_h);
            const int rows = (oy1 - oy0) * out_w;
            im2col_chunk(xb, h, w, cin, kh, kw, stride, p, out_w, oy0, oy1, col.data());
            cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, rows, cout, int(k_cols),
                        1.0f, col.data(), int(k_cols), kernel.value.ptr(), cout, 0.0f,
                        ob + std::size_t(oy0) * out_w * cout, cout);
        }
        if (has_bias) {
            float* op = ob;
            for (int i = 0; i < out_h * out_w; ++i, op += cout)
                for (int j = 0; j < cout; ++j)
                    op[j] += bias.value.data[std::size_t(j)];
        }
    }
}

void Conv2D::backward(const std::vector<const Tensor*>& in, const Tensor& out,
                      const Tensor& dout, const std::vector<Tensor*>& din, ExecContext&) {
    const Tensor& x = *in[0];
    const int batch = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int out_h = out.dim(1), out_w = out.dim(2);
    Pad p;
    int oh = 0, ow = 0;
    resolve_padding(pad_mode, h, w, kh, kw, stride, p, oh, ow);

    const std::size_t k_cols = std::size_t(kh) * kw * cin;
    const int chunk = rows_per_chunk(out_h, out_w, k_cols);
    std::vector<float> col(std::size_t(chunk) * out_w * k_cols);
    std::vector<float> dcol;
    if (din[0])
        dcol.resize(std::size_t(chunk) * out_w * k_cols);

    const bool want_kernel = kernel.trainable;
    if (want_kernel) {
        kernel.ensure_grad();
        if (has_bias)
            bias.ensure_grad();
    }

    for (int b = 0; b < batch; ++b) {
        const float* xb = x.ptr() + std::size_t(b) * h * w * cin;
        const float* db = dout.ptr() + std::size_t(b) * out_h * out_w * cout;
        for (int oy0 = 0; oy0 < out_h; oy0 += chunk) {
            const int oy1 = std::min(oy0 + chunk, out_h);
            const int rows = (oy1 - oy0) * out_w;
            const float* dchunk = db + std::size_t(oy0) * out_w * cout;
            if (want_kernel) {
                im2col_chunk(xb, h, w, cin, kh, kw, stride, p, out_w, oy0, oy1, col.data());
                cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, int(k_cols), cout, rows,
                            1.0f, col.data(), int(k_cols), dchunk, cout, 1.0f,
                            kernel.grad.ptr(), cout);
            }
            if (din[0]) {
                cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, rows, int(k_cols), cout,
                            1.0f, dchunk, cout, kernel.value.ptr(), cout, 0.0f, dcol.data(),
                            int(k_cols));
                col2im_add_chunk(dcol.data(), h, w, cin, kh, kw, stride, p, out_w, oy0, oy1,
                                 din[0]->ptr() + std::size_t(b) * h * w * cin);
            }
        }
        if (want_kernel && has_bias) {
            const float* dp = db;
            for (int i = 0; i < out_h * out_w; ++i, dp += cout)
                for (int j = 0; j < cout; ++j)
                    bias.grad.data[std::size_t(j)] += dp[j];
        }
    }
}

std::vector<Param*> Conv2D::params() {
    std::vector<Param*> out{&kernel};
    if (has_bias)
        out.push_back(&bias);
    return out;
}

// ---- DepthwiseConv2D ----

DepthwiseConv2D::DepthwiseConv2D(std::string name, int kh, int kw, int channels, int stride,
                                 PadMode pad)
    : Op(std::move(name)), kh(kh), kw(kw), channels(channels), stride(stride), pad_mode(pad) {
    kernel.name = this->name() + "/depthwise_kernel";
    kernel.value = Tensor({kh, kw, channels});
    kernel.init = Init::he_normal;
}

std::vector<int> DepthwiseConv2D::infer_shape(const std::vector<std::vector<int>>& in) {
    if (in[0][3] != channels)
        throw Error(name() + ": channel mismatch, got " + shape_str(in[0]));
    int out_h = 0, out_w = 0;
    resolve_padding(pad_mode, in[0][1], in[0][2], kh, kw, stride, pad, out_h, out_w);
    return {in[0][0], out_h, out_w, channels};
}

void DepthwiseConv2D::forward(const std::vector<const Tensor*>& in, Tensor& out,
                              ExecContext&) {
    const Tensor& x = *in[0];
    const int batch = x.dim(0), h = x.dim(1), w = x.dim(2), c = channels;
    int out_h = 0, out_w = 0;
    Pad p;
    resolve_padding(pad_mode, h, w, kh, kw, stride, p, out_h, out_w);
    out = Tensor({batch, out_h, out_w, c});
    for (int b = 0; b < batch; ++b) {
        const float* xb = x.ptr() + std::size_t(b) * h * w * c;
        float* ob = out.ptr() + std::size_t(b) * out_h * out_w * c;
        for (int oy = 0; oy < out_h; ++oy)
            for (int ox = 0; ox < out_w; ++ox) {
                float* o = ob + (std::size_t(oy) * out_w + ox) * c;
                const int iy0 = oy * stride - p.top;
                const int ix0 = ox * stride - p.left;
                for (int ky = 0; ky < kh; ++ky) {
                    const int iy = iy0 + ky;
                    if (iy < 0 || iy >= h)
                        continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int ix = ix0 + kx;
                        if (ix < 0 || ix >= w)
                            continue;
                        const float* xr = xb + (std::size_t(iy) * w + ix) * c;
                        const float* kr = kernel.value.ptr() + (std::size_t(ky) * kw + kx) * c;
                        for (int i = 0; i < c; ++i)
                            o[i] += xr[i] * kr[i];
                    }
                }
            }
    }
}

void DepthwiseConv2D::backward(const std::vector<const Tensor*>& in, const Tensor& out,
                               const Tensor& dout, const std::vector<Tensor*>& din,
                               ExecContext&) {
    const Tensor& x = *in[0];
    const int batch = x.dim(0), h = x.dim(1), w = x.dim(2), c = channels;
    const int out_h = out.dim(1), out_w = out.dim(2);
    Pad p;
    int oh = 0, ow = 0;
    resolve_padding(pad_mode, h, w, kh, kw, stride, p, oh, ow);
    if (kernel.trainable)
        kernel.ensure_grad();
    for (int b = 0; b < batch; ++b) {
        const float* xb = x.ptr() + std::size_t(b) * h * w * c;
        const float* db = dout.ptr() + std::size_t(b) * out_h * out_w * c;
        float* gx = din[0] ? din[0]->ptr() + std::size_t(b) * h * w * c : nullptr;
        for (int oy = 0; oy < out_h; ++oy)
            for (int ox = 0; ox < out_w; ++ox) {
                const float* d = db + (std::size_t(oy) * out_w + ox) * c;
                const int iy0 = oy * stride - p.top;
                const int ix0 = ox * stride - p.left;
                for (int ky = 0; ky < kh; ++ky) {
                    const int iy = iy0 + ky;
                    if (iy < 0 || iy >= h)
                        continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int ix = ix0 + kx;
                        if (ix < 0 || ix >= w)
                            continue;
                        const float* xr = xb + (std::size_t(iy) * w + ix) * c;
                        const std::size_t koff = (std::size_t(ky) * kw + kx) * c;
                        if (kernel.trainable) {
                            float* kg = kernel.grad.ptr() + koff;
                            for (int i = 0; i < c; ++i)
                                kg[i] += d[i] * xr[i];
                        }
                        if (gx) {
                            const float* kv = kernel.value.ptr() + koff;
                            float* g = gx + (std::size_t(iy) * w + ix) * c;
                            for (int i = 0; i < c; ++i)
                                g[i] += d[i] * kv[i];
                        }
                    }
                }
            }
    }
}

std::vector<Param*> DepthwiseConv2D::params() { return {&kernel}; }

// ---- MaxPool ----

MaxPool::MaxPool(std::string name, int kh, int kw, int stride, PadMode pad)
    : Op(std::move(name)), kh(kh), kw(kw), stride(stride), pad_mode(pad) {}

std::vector<int> MaxPool::infer_shape(const std::vector<std::vector<int>>& in) {
    int out_h = 0, out_w = 0;
    resolve_padding(pad_mode, in[0][1], in[0][2], kh, kw, stride, pad, out_h, out_w);
    return {in[0][0], out_h, out_w, in[0][3]};
}

void MaxPool::forward(const std::vector<const Tensor*>& in, Tensor& out, ExecContext& ctx) {
    const Tensor& x = *in[0];
    const int batch = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    int out_h = 0, out_w = 0;
    Pad p;
    resolve_padding(pad_mode, h, w, kh, kw, stride, p, out_h, out_w);
    out = Tensor({batch, out_h, out_w, c});
    const bool record = ctx.training;
    if (record)
        argmax_.assign(out.numel(), -1);
    else
        argmax_.clear();

    for (int b = 0; b < batch; ++b) {
        const float* xb = x.ptr() + std::size_t(b) * h * w * c;
        for (int oy = 0; oy < out_h; ++oy)
            for (int ox = 0; ox < out_w; ++ox) {
                const std::size_t obase =
                    ((std::size_t(b) * out_h + oy) * out_w + ox) * c;
                float* o = out.ptr() + obase;
                for (int i = 0; i < c; ++i)
                    o[i] = -std::numeric_limits<float>::infinity();
                const int iy0 = oy * stride - p.top;
                const int ix0 = ox * stride - p.left;
                for (int ky = 0; ky < kh; ++ky) {
                    const int iy = iy0 + ky;
                    if (iy < 0 || iy >= h)
                        continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int ix = ix0 + kx;
                        if (ix < 0 || ix >= w)
                            continue;
                        const std::size_t ibase = (std::size_t(iy) * w + ix) * c;
                        const float* xr = xb + ibase;
                        for (int i = 0; i < c; ++i)
                            if (xr[i] > o[i]) {
                                o[i] = xr[i];
                                if (record)
                                    argmax_[obase + std::size_t(i)] =
                                        std::int64_t(std::size_t(b) * h * w * c + ibase + i);
                            }
                    }
                }
            }
    }
}

void MaxPool::backward(const std::vector<const Tensor*>&, const Tensor& out,
                       const Tensor& dout, const std::vector<Tensor*>& din, ExecContext&) {
    if (!din[0])
        return;
    if (argmax_.size() != out.numel())
        throw Error(name() + ": backward without recorded argmax");
    for (std::size_t i = 0; i < dout.numel(); ++i)
        if (argmax_[i] >= 0)
            din[0]->data[std::size_t(argmax_[i])] += dout.data[i];
}

// ---- AvgPool ----

AvgPool::AvgPool(std::string name, int kh, int kw, int stride, PadMode pad)
    : Op(std::move(name)), kh(kh), kw(kw), stride(stride), pad_mode(pad) {}

std::vector<int> AvgPool::infer_shape(const std::vector<std::vector<int>>& in) {
    int out_h = 0, out_w = 0;
    resolve_padding(pad_mode, in[0][1], in[0][2], kh, kw, stride, pad, out_h, out_w);
    return {in[0][0], out_h, out_w, in[0][3]};
}

void AvgPool::forward(const std::vector<const Tensor*>& in, Tensor& out, ExecContext&) {
    const Tensor& x = *in[0];
    const int batch = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
    int out_h = 0, out_w = 0;
    Pad p;
    resolve_padding(pad_mode, h, w, kh, kw, stride, p, out_h, out_w);
    out = Tensor({batch, out_h, out_w, c});
    for (int b = 0; b < batch; ++b) {
        const float* xb = x.ptr() + std::size_t(b) * h * w * c;
        for (int oy = 0; oy < out_h; ++oy)
            for (int ox = 0; ox < out_w; ++ox) {
                float* o = out.ptr() + ((std::size_t(b) * out_h + oy) * out_w + ox) * c;
                const int iy0 = oy * stride - p.top;
                const int ix0 = ox * stride - p.left;
                int count = 0;
                for (int ky = 0; ky < kh; ++ky) {
                    const int iy = iy0 + ky;
                    if (iy < 0 || iy >= h)
                        continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int ix = ix0 + kx;
                        if (ix < 0 || ix >= w)
                            continue;
                        ++count;
                        const float* xr = xb + (std::size_t(iy) * w + ix) * c;
                        for (int i = 0; i < c; ++i)
                            o[i] += xr[i];
                    }
                }
                const float inv = count ? 1.0f / float(count) : 0.0f;
                for (int i = 0; i < c; ++i)
                    o[i] *= inv;
            }
    }
}

void AvgPool::backward(const std::vector<const Tensor*>& in, const Tensor& out,
                       const Tensor& dout, const std::vector<Tensor*>& din, ExecContext&) {
    if (!din[0])
        return;
    const Tensor& x = *in[0];
    const int h = x.dim(1), w = x.dim(2), c = x.dim(3);
    const int out_h = out.dim(1), out_w = out.dim(2);
    Pad p;
    int oh = 0, ow = 0;
    resolve_padding(pad_mode, h, w, kh, kw, stride, p, oh, ow);
    for (int b = 0; b < out.dim(0); ++b) {
        float* gb = din[0]->ptr() + std::size_t(b) * h * w * c;
        const float* db = dout.ptr() + std::size_t(b) * out_h * out_w * c;
        for (int oy = 0; oy < out_h; ++oy)
            for (int ox = 0; ox < out_w; ++ox) {
                const float* d = db + (std::size_t(oy) * out_w + ox) * c;
                const int iy0 = oy * stride - p.top;
                const int ix0 = ox * stride - p.left;
                int count = 0;
                for (int ky = 0; ky < kh; ++ky) {
                    const int iy = iy0 + ky;
                    if (iy < 0 || iy >= h)
                        continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int ix = ix0 + kx;
                        if (ix >= 0 && ix < w)
                            ++count;
                    }
                }
                if (!count)
                    continue;
                const float inv = 1.0f / float(count);
                for (int ky = 0; ky < kh; ++ky) {
                    const int iy = iy0 + ky;
                    if (iy < 0 || iy >= h)
                        continue;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int ix = ix0 + kx;
                        if (ix < 0 || ix >= w)
                            continue;
                        float* g = gb + (std::size_t(iy) * w + ix) * c;
                        for (int i = 0; i < c; ++i)
                            g[i] += d[i] * inv;
                    }
                }
            }
    }
}

} // namespace histo::nn
