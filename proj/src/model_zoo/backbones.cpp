// Feature stacks of the six registry backbones, each ending at its final
// pooling layer (the last maxpool for the VGGs, the global average pool for
// the rest). Layouts follow the published architectures; stride-2 'same'
// geometry follows the TF convention throughout.

#include <memory>
#include <string>
#include <utility>

#include "histo/errors.hpp"
#include "histo/model_zoo.hpp"
#include "histo/nn/net.hpp"

namespace histo::detail {

using namespace histo::nn;

namespace {

struct NetBuilder {
    Graph& g;

    int channels_of(int node) const {
        return node == -1 ? g.input_shape().back() : g.output_shape(node).back();
    }

    int conv(int in, const std::string& name, int filters, int kh, int kw, int stride,
             PadMode pad, bool bias) {
        return g.add(
            std::make_unique<Conv2D>(name, kh, kw, channels_of(in), filters, stride, pad, bias),
            {in});
    }
    int bn(int in, const std::string& name, float eps) {
        return g.add(std::make_unique<BatchNorm>(name, channels_of(in), eps), {in});
    }
    int relu(int in, const std::string& name) {
        return g.add(std::make_unique<ReLU>(name), {in});
    }
    int maxpool(int in, const std::string& name, int k, int stride, PadMode pad) {
        return g.add(std::make_unique<MaxPool>(name, k, k, stride, pad), {in});
    }
    int avgpool(int in, const std::string& name, int k, int stride, PadMode pad) {
        return g.add(std::make_unique<AvgPool>(name, k, k, stride, pad), {in});
    }
    int gap(int in, const std::string& name) {
        return g.add(std::make_unique<GlobalAvgPool>(name), {in});
    }
    int add_nodes(const std::string& name, std::vector<int> ins) {
        return g.add(std::make_unique<Add>(name), std::move(ins));
    }
    int concat(const std::string& name, std::vector<int> ins) {
        return g.add(std::make_unique<Concat>(name), std::move(ins));
    }
    int zeropad(int in, const std::string& name, Pad pad) {
        return g.add(std::make_unique<ZeroPad2D>(name, pad), {in});
    }
    int crop(int in, const std::string& name, Pad c) {
        return g.add(std::make_unique<Crop2D>(name, c), {in});
    }
    int depthwise(int in, const std::string& name, int k, int stride, PadMode pad) {
        return g.add(std::make_unique<DepthwiseConv2D>(name, k, k, channels_of(in), stride, pad),
                     {in});
    }
    // conv -> bn -> relu, no conv bias (Inception/DenseNet/NASNet idiom)
    int conv_bn_relu(int in, const std::string& name, int filters, int kh, int kw, int stride,
                     PadMode pad, float bn_eps) {
        int x = conv(in, name + "_conv", filters, kh, kw, stride, pad, false);
        x = bn(x, name + "_bn", bn_eps);
        return relu(x, name + "_relu");
    }
};

// ---- VGG ----

int build_vgg(NetBuilder& b, bool deep19) {
    const int block_filters[5] = {64, 128, 256, 512, 512};
    const int convs16[5] = {2, 2, 3, 3, 3};
    const int convs19[5] = {2, 2, 4, 4, 4};
    const int* convs = deep19 ? convs19 : convs16;
    int x = -1;
    for (int blk = 0; blk < 5; ++blk) {
        for (int i = 0; i < convs[blk]; ++i) {
            const std::string name =
                "block" + std::to_string(blk + 1) + "_conv" + std::to_string(i + 1);
            x = b.conv(x, name, block_filters[blk], 3, 3, 1, PadMode::same, true);
            x = b.relu(x, name + "_relu");
        }
        x = b.maxpool(x, "block" + std::to_string(blk + 1) + "_pool", 2, 2, PadMode::valid);
    }
    return x;
}

// ---- ResNet50 ----

constexpr float kResNetEps = 1.001e-5f;

int resnet_block(NetBuilder& b, int x, int filters, int stride, bool conv_shortcut,
                 const std::string& name) {
    int shortcut = x;
    if (conv_shortcut) {
        shortcut = b.conv(x, name + "_0_conv", 4 * filters, 1, 1, stride, PadMode::valid, true);
        shortcut = b.bn(shortcut, name + "_0_bn", kResNetEps);
    }
    int y = b.conv(x, name + "_1_conv", filters, 1, 1, stride, PadMode::valid, true);
    y = b.bn(y, name + "_1_bn", kResNetEps);
    y = b.relu(y, name + "_1_relu");
    y = b.conv(y, name + "_2_conv", filters, 3, 3, 1, PadMode::same, true);
    y = b.bn(y, name + "_2_bn", kResNetEps);
    y = b.relu(y, name + "_2_relu");
    y = b.conv(y, name + "_3_conv", 4 * filters, 1, 1, 1, PadMode::valid, true);
    y = b.bn(y, name + "_3_bn", kResNetEps);
    y = b.add_nodes(name + "_add", {shortcut, y});
    return b.relu(y, name + "_out");
}

int build_resnet50(NetBuilder& b) {
    int x = b.zeropad(-1, "conv1_pad", {3, 3, 3, 3});
    x = b.conv(x, "conv1_conv", 64, 7, 7, 2, PadMode::valid, true);
    x = b.bn(x, "conv1_bn", kResNetEps);
    x = b.relu(x, "conv1_relu");
    x = b.zeropad(x, "pool1_pad", {1, 1, 1, 1});
    x = b.maxpool(x, "pool1_pool", 3, 2, PadMode::valid);
    const int stage_filters[4] = {64, 128, 256, 512};
    const int stage_blocks[4] = {3, 4, 6, 3};
    for (int s = 0; s < 4; ++s) {
        const std::string stage = "conv" + std::to_string(s + 2);
        x = resnet_block(b, x, stage_filters[s], s == 0 ? 1 : 2, true, stage + "_block1");
        for (int i = 1; i < stage_blocks[s]; ++i)
            x = resnet_block(b, x, stage_filters[s], 1, false,
                             stage + "_block" + std::to_string(i + 1));
    }
    return b.gap(x, "avg_pool");
}

// ---- InceptionV3 ----

constexpr float kInceptionEps = 1e-3f;

int icb(NetBuilder& b, int in, const std::string& name, int filters, int kh, int kw,
        int stride = 1, PadMode pad = PadMode::same) {
    int x = b.g.add(std::make_unique<Conv2D>(name + "_conv", kh, kw, b.channels_of(in), filters,
                                             stride, pad, false),
                    {in});
    x = b.bn(x, name + "_bn", kInceptionEps);
    return b.relu(x, name + "_relu");
}

int inception_a(NetBuilder& b, int x, const std::string& name, int pool_proj) {
    int b1 = icb(b, x, name + "_1x1", 64, 1, 1);
    int b5 = icb(b, x, name + "_5x5_a", 48, 1, 1);
    b5 = icb(b, b5, name + "_5x5_b", 64, 5, 5);
    int b3 = icb(b, x, name + "_3x3dbl_a", 64, 1, 1);
    b3 = icb(b, b3, name + "_3x3dbl_b", 96, 3, 3);
    b3 = icb(b, b3, name + "_3x3dbl_c", 96, 3, 3);
    int bp = b.avgpool(x, name + "_pool", 3, 1, PadMode::same);
    bp = icb(b, bp, name + "_pool_proj", pool_proj, 1, 1);
    return b.concat(name, {b1, b5, b3, bp});
}

int inception_b(NetBuilder& b, int x, const std::string& name, int c7) {
    int b1 = icb(b, x, name + "_1x1", 192, 1, 1);
    int b7 = icb(b, x, name + "_7x7_a", c7, 1, 1);
    b7 = icb(b, b7, name + "_7x7_b", c7, 1, 7);
    b7 = icb(b, b7, name + "_7x7_c", 192, 7, 1);
    int bd = icb(b, x, name + "_7x7dbl_a", c7, 1, 1);
    bd = icb(b, bd, name + "_7x7dbl_b", c7, 7, 1);
    bd = icb(b, bd, name + "_7x7dbl_c", c7, 1, 7);
    bd = icb(b, bd, name + "_7x7dbl_d", c7, 7, 1);
    bd = icb(b, bd, name + "_7x7dbl_e", 192, 1, 7);
    int bp = b.avgpool(x, name + "_pool", 3, 1, PadMode::same);
    bp = icb(b, bp, name + "_pool_proj", 192, 1, 1);
    return b.concat(name, {b1, b7, bd, bp});
}

int inception_c(NetBuilder& b, int x, const std::string& name) {
    int b1 = icb(b, x, name + "_1x1", 320, 1, 1);
    int b3 = icb(b, x, name + "_3x3_a", 384, 1, 1);
    int b3a = icb(b, b3, name + "_3x3_1x3", 384, 1, 3);
    int b3b = icb(b, b3, name + "_3x3_3x1", 384, 3, 1);
    int b3c = b.concat(name + "_3x3", {b3a, b3b});
    int bd = icb(b, x, name + "_3x3dbl_a", 448, 1, 1);
    bd = icb(b, bd, name + "_3x3dbl_b", 384, 3, 3);
    int bda = icb(b, bd, name + "_3x3dbl_1x3", 384, 1, 3);
    int bdb = icb(b, bd, name + "_3x3dbl_3x1", 384, 3, 1);
    int bdc = b.concat(name + "_3x3dbl", {bda, bdb});
    int bp = b.avgpool(x, name + "_pool", 3, 1, PadMode::same);
    bp = icb(b, bp, name + "_pool_proj", 192, 1, 1);
    return b.concat(name, {b1, b3c, bdc, bp});
}

int build_inception_v3(NetBuilder& b) {
    int x = icb(b, -1, "stem1", 32, 3, 3, 2, PadMode::valid);
    x = icb(b, x, "stem2", 32, 3, 3, 1, PadMode::valid);
    x = icb(b, x, "stem3", 64, 3, 3);
    x = b.maxpool(x, "stem_pool1", 3, 2, PadMode::valid);
    x = icb(b, x, "stem4", 80, 1, 1, 1, PadMode::valid);
    x = icb(b, x, "stem5", 192, 3, 3, 1, PadMode::valid);
    x = b.maxpool(x, "stem_pool2", 3, 2, PadMode::valid);

    x = inception_a(b, x, "mixed0", 32);
    x = inception_a(b, x, "mixed1", 64);
    x = inception_a(b, x, "mixed2", 64);

    { // mixed3: grid reduction
        int b3 = icb(b, x, "mixed3_3x3", 384, 3, 3, 2, PadMode::valid);
        int bd = icb(b, x, "mixed3_3x3dbl_a", 64, 1, 1);
        bd = icb(b, bd, "mixed3_3x3dbl_b", 96, 3, 3);
        bd = icb(b, bd, "mixed3_3x3dbl_c", 96, 3, 3, 2, PadMode::valid);
        int bp = b.maxpool(x, "mixed3_pool", 3, 2, PadMode::valid);
        x = b.concat("mixed3", {b3, bd, bp});
    }

    x = inception_b(b, x, "mixed4", 128);
    x = inception_b(b, x, "mixed5", 160);
    x = inception_b(b, x, "mixed6", 160);
    x = inception_b(b, x, "mixed7", 192);

    { // mixed8: grid reduction
        int b3 = icb(b, x, "mixed8_3x3_a", 192, 1, 1);
        b3 = icb(b, b3, "mixed8_3x3_b", 320, 3, 3, 2, PadMode::valid);
        int b7 = icb(b, x, "mixed8_7x7x3_a", 192, 1, 1);
        b7 = icb(b, b7, "mixed8_7x7x3_b", 192, 1, 7);
        b7 = icb(b, b7, "mixed8_7x7x3_c", 192, 7, 1);
        b7 = icb(b, b7, "mixed8_7x7x3_d", 192, 3, 3, 2, PadMode::valid);
        int bp = b.maxpool(x, "mixed8_pool", 3, 2, PadMode::valid);
        x = b.concat("mixed8", {b3, b7, bp});
    }

    x = inception_c(b, x, "mixed9");
    x = inception_c(b, x, "mixed10");
    return b.gap(x, "avg_pool");
}

// ---- DenseNet201 ----

constexpr float kDenseNetEps = 1.001e-5f;

int dense_block(NetBuilder& b, int x, int layers, const std::string& name) {
    for (int i = 0; i < layers; ++i) {
        const std::string blk = name + "_block" + std::to_string(i + 1);
        int y = b.bn(x, blk + "_0_bn", kDenseNetEps);
        y = b.relu(y, blk + "_0_relu");
        y = b.conv(y, blk + "_1_conv", 128, 1, 1, 1, PadMode::valid, false);
        y = b.bn(y, blk + "_1_bn", kDenseNetEps);
        y = b.relu(y, blk + "_1_relu");
        y = b.conv(y, blk + "_2_conv", 32, 3, 3, 1, PadMode::same, false);
        x = b.concat(blk + "_concat", {x, y});
    }
    return x;
}

int build_densenet201(NetBuilder& b) {
    int x = b.zeropad(-1, "conv1_pad", {3, 3, 3, 3});
    x = b.conv(x, "conv1_conv", 64, 7, 7, 2, PadMode::valid, false);
    x = b.bn(x, "conv1_bn", kDenseNetEps);
    x = b.relu(x, "conv1_relu");
    x = b.zeropad(x, "pool1_pad", {1, 1, 1, 1});
    x = b.maxpool(x, "pool1_pool", 3, 2, PadMode::valid);
    const int block_layers[4] = {6, 12, 48, 32};
    for (int blk = 0; blk < 4; ++blk) {
        x = dense_block(b, x, block_layers[blk], "conv" + std::to_string(blk + 2));
        if (blk < 3) {
            const std::string name = "pool" + std::to_string(blk + 2);
            x = b.bn(x, name + "_bn", kDenseNetEps);
            x = b.relu(x, name + "_relu");
            x = b.conv(x, name + "_conv", b.channels_of(x) / 2, 1, 1, 1, PadMode::valid, false);
            x = b.avgpool(x, name + "_pool", 2, 2, PadMode::valid);
        }
    }
    x = b.bn(x, "bn", kDenseNetEps);
    x = b.relu(x, "relu");
    return b.gap(x, "avg_pool");
}

// ---- NASNetLarge (NASNet-A 6 @ 4032) ----

constexpr float kNasNetEps = 1e-3f;

// relu -> sepconv(k, stride) -> bn -> relu -> sepconv(k, 1) -> bn
int nas_sep_block(NetBuilder& b, int x, int filters, int k, int stride,
                  const std::string& name) {
    x = b.relu(x, name + "_relu1");
    x = b.depthwise(x, name + "_dw1", k, stride, PadMode::same);
    x = b.conv(x, name + "_pw1", filters, 1, 1, 1, PadMode::valid, false);
    x = b.bn(x, name + "_bn1", kNasNetEps);
    x = b.relu(x, name + "_relu2");
    x = b.depthwise(x, name + "_dw2", k, 1, PadMode::same);
    x = b.conv(x, name + "_pw2", filters, 1, 1, 1, PadMode::valid, false);
    return b.bn(x, name + "_bn2", kNasNetEps);
}

// Brings the previous hidden state to the current cell's spatial size and
// channel width (factorized reduction when spatial sizes differ).
int nas_adjust(NetBuilder& b, int p, int ip, int filters, const std::string& name) {
    const auto& p_shape = b.g.output_shape(p);
    const auto& ip_shape = ip == -1 ? b.g.input_shape() : b.g.output_shape(ip);
    if (p_shape[1] != ip_shape[1]) {
        int r = b.relu(p, name + "_relu");
        int p1 = b.avgpool(r, name + "_pool1", 1, 2, PadMode::valid);
        p1 = b.conv(p1, name + "_conv1", filters / 2, 1, 1, 1, PadMode::valid, false);
        int p2 = b.zeropad(r, name + "_pad", {0, 1, 0, 1});
        p2 = b.crop(p2, name + "_crop", {1, 0, 1, 0});
        p2 = b.avgpool(p2, name + "_pool2", 1, 2, PadMode::valid);
        p2 = b.conv(p2, name + "_conv2", filters - filters / 2, 1, 1, 1, PadMode::valid, false);
        int cat = b.concat(name + "_concat", {p1, p2});
        return b.bn(cat, name + "_bn", kNasNetEps);
    }
    if (p_shape[3] != filters) {
        int r = b.relu(p, name + "_relu");
        r = b.conv(r, name + "_conv", filters, 1, 1, 1, PadMode::valid, false);
        return b.bn(r, name + "_bn", kNasNetEps);
    }
    return p;
}

std::pair<int, int> nas_normal_cell(NetBuilder& b, int ip, int p, int filters,
                                    const std::string& name) {
    p = nas_adjust(b, p < 0 ? ip : p, ip, filters, name + "_adjust");
    int h = b.relu(ip, name + "_relu");
    h = b.conv(h, name + "_conv1", filters, 1, 1, 1, PadMode::valid, false);
    h = b.bn(h, name + "_bn1", kNasNetEps);

    int x1 = b.add_nodes(name + "_add1", {nas_sep_block(b, h, filters, 5, 1, name + "_left1"),
                                          nas_sep_block(b, p, filters, 3, 1, name + "_right1")});
    int x2 = b.add_nodes(name + "_add2", {nas_sep_block(b, p, filters, 5, 1, name + "_left2"),
                                          nas_sep_block(b, p, filters, 3, 1, name + "_right2")});
    int x3 = b.add_nodes(name + "_add3", {b.avgpool(h, name + "_left3", 3, 1, PadMode::same), p});
    int x4 = b.add_nodes(name + "_add4", {b.avgpool(p, name + "_left4", 3, 1, PadMode::same),
                                          b.avgpool(p, name + "_right4", 3, 1, PadMode::same)});
    int x5 = b.add_nodes(name + "_add5",
                         {nas_sep_block(b, h, filters, 3, 1, name + "_left5"), h});
    int out = b.concat(name + "_concat", {p, x1, x2, x3, x4, x5});
    return {out, ip};
}

std::pair<int, int> nas_reduction_cell(NetBuilder& b, int ip, int p, int filters,
                                       const std::string& name) {
    p = nas_adjust(b, p < 0 ? ip : p, ip, filters, name + "_adjust");
    int h = b.relu(ip, name + "_relu");
    h = b.conv(h, name + "_conv1", filters, 1, 1, 1, PadMode::valid, false);
    h = b.bn(h, name + "_bn1", kNasNetEps);

    int x1 = b.add_nodes(name + "_add1", {nas_sep_block(b, h, filters, 5, 2, name + "_left1"),
                                          nas_sep_block(b, p, filters, 7, 2, name + "_right1")});
    int x2 = b.add_nodes(name + "_add2", {b.maxpool(h, name + "_left2", 3, 2, PadMode::same),
                                          nas_sep_block(b, p, filters, 7, 2, name + "_right2")});
    int x3 = b.add_nodes(name + "_add3", {b.avgpool(h, name + "_left3", 3, 2, PadMode::same),
                                          nas_sep_block(b, p, filters, 5, 2, name + "_right3")});
    int x4 = b.add_nodes(name + "_add4", {b.avgpool(x1, name + "_left4", 3, 1, PadMode::same), x2});
    int x5 = b.add_nodes(name + "_add5", {nas_sep_block(b, x1, filters, 3, 1, name + "_left5"),
                                          b.maxpool(h, name + "_right5", 3, 2, PadMode::same)});
    int out = b.concat(name + "_concat", {x2, x3, x4, x5});
    return {out, ip};
}

int build_nasnet_large(NetBuilder& b) {
    constexpr int kPenultimate = 4032;
    constexpr int kBlocks = 6;
    const int filters = kPenultimate / 24; // 168

    int x = b.conv(-1, "stem_conv1", 96, 3, 3, 2, PadMode::valid, false);
    x = b.bn(x, "stem_bn1", kNasNetEps);

    int p = -1;
    std::tie(x, p) = nas_reduction_cell(b, x, p, filters / 4, "stem1");
    std::tie(x, p) = nas_reduction_cell(b, x, p, filters / 2, "stem2");

    for (int i = 0; i < kBlocks; ++i)
        std::tie(x, p) = nas_normal_cell(b, x, p, filters, "normal" + std::to_string(i));
    std::tie(x, std::ignore) = nas_reduction_cell(b, x, p, filters * 2, "reduce6");
    for (int i = 0; i < kBlocks; ++i)
        std::tie(x, p) =
            nas_normal_cell(b, x, p, filters * 2, "normal" + std::to_string(kBlocks + i + 1));
    std::tie(x, std::ignore) = nas_reduction_cell(b, x, p, filters * 4, "reduce12");
    for (int i = 0; i < kBlocks; ++i)
        std::tie(x, p) = nas_normal_cell(b, x, p, filters * 4,
                                         "normal" + std::to_string(2 * kBlocks + i + 2));
    x = b.relu(x, "final_relu");
    return b.gap(x, "avg_pool");
}

} // namespace

int build_backbone(nn::Graph& g, Backbone backbone) {
    NetBuilder b{g};
    switch (backbone) {
    case Backbone::VGG16: return build_vgg(b, false);
    case Backbone::VGG19: return build_vgg(b, true);
    case Backbone::ResNet50: return build_resnet50(b);
    case Backbone::InceptionV3: return build_inception_v3(b);
    case Backbone::DenseNet201: return build_densenet201(b);
    case Backbone::NASNetLarge: return build_nasnet_large(b);
    }
    throw RegistryError("unknown backbone");
}

} // namespace histo::detail
