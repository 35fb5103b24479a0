#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "lka/exec.hpp"
#include "lka/lk_attention.hpp"
#include "lka/losses.hpp"

namespace lka {

struct UNetConfig {
    enum class Variant { Base, Full, Mid };
    enum class OutputNL { Softmax, Sigmoid };

    int in_channels = 4;
    int out_classes = 3;
    int num_scales = 6;
    int base_width = 32;
    int max_width = 512;
    Variant variant = Variant::Mid;
    struct {
        int kernel = 21;
        int dilation = 3;
    } mid_plan;
    bool deep_supervision = true;
    OutputNL output_nl = OutputNL::Softmax;
    int gn_groups = -1; // -1: min(8, C) per layer
    double lrelu_slope = 0.01;

    int width(int scale) const;
    /// Scale the Mid variant attaches to: the shallowest scale whose width
    /// reaches min(128, deepest width). Defaults give scale 2 (width 128);
    /// small toy ladders resolve to the bottleneck.
    int mid_scale() const;
    /// Output scales, full resolution first; everything but the two deepest
    /// scales when deep supervision is on, otherwise just scale 0.
    std::vector<int> head_scales() const;
    void validate() const;

    static UNetConfig toy(int in_ch = 1, int out_classes = 2, int scales = 3, int base_width = 8,
                          Variant v = Variant::Mid);
};

struct ConvLayer {
    ConvSpec spec;
    Parameter w;
    Parameter b;
};

struct NormAct {
    Parameter gamma;
    Parameter beta;
    int groups = 1;
    double eps = 1e-5;
};

/// conv-GN-lReLU twice.
struct ConvBlock {
    ConvLayer conv1;
    NormAct norm1;
    ConvLayer conv2;
    NormAct norm2;
};

/// Encoder/decoder with strided-conv downsampling, transposed-conv
/// upsampling, concatenation skips, optional attention modules on the decoder
/// path, and 1x1x1 output heads.
struct UNet3D {
    UNetConfig config;
    DType dtype = DType::F32;

    std::vector<ConvBlock> encoder;                     // per scale
    std::vector<ConvLayer> down;                        // scale s -> s+1
    std::vector<ConvLayer> up;                          // scale s+1 -> s (transposed)
    std::vector<ConvBlock> decoder;                     // per scale < num_scales-1
    std::vector<std::unique_ptr<LKAModule>> attention;  // indexed by scale
    std::vector<ConvLayer> heads;                       // parallel to config.head_scales()

    std::vector<Parameter*> parameters();
    std::int64_t param_count();
    /// Conv parameters of the attached attention modules (their normalization
    /// affine pairs excluded).
    std::int64_t attention_conv_param_count() const;
    void zero_grads();

    template <class Exec>
    std::vector<typename Exec::V> forward(Exec& ex, typename Exec::V x,
                                          std::vector<std::pair<int, typename Exec::V>>* attention_maps = nullptr) {
        using V = typename Exec::V;
        const Tensor& xv = ex.tensor(x);
        check_input(xv);
        const int S = config.num_scales;

        std::vector<V> skips(static_cast<std::size_t>(S));
        V h = x;
        for (int s = 0; s < S; ++s) {
            if (s > 0) h = ex.conv3d(h, down[static_cast<std::size_t>(s - 1)].spec,
                                     ex.param(down[static_cast<std::size_t>(s - 1)].w),
                                     ex.param(down[static_cast<std::size_t>(s - 1)].b));
            h = run_block(ex, encoder[static_cast<std::size_t>(s)], h);
            skips[static_cast<std::size_t>(s)] = h;
        }

        std::vector<V> feats(static_cast<std::size_t>(S));
        V d = skips[static_cast<std::size_t>(S - 1)];
        if (attention[static_cast<std::size_t>(S - 1)]) {
            auto [out, att] = attention[static_cast<std::size_t>(S - 1)]->forward(ex, d);
            d = out;
            if (attention_maps) attention_maps->emplace_back(S - 1, att);
        }
        feats[static_cast<std::size_t>(S - 1)] = d;
        for (int s = S - 2; s >= 0; --s) {
            auto& upl = up[static_cast<std::size_t>(s)];
            V u = ex.conv3d_transposed(d, upl.spec, ex.param(upl.w), ex.param(upl.b));
            if (attention[static_cast<std::size_t>(s)]) {
                auto [out, att] = attention[static_cast<std::size_t>(s)]->forward(ex, u);
                u = out;
                if (attention_maps) attention_maps->emplace_back(s, att);
            }
            d = run_block(ex, decoder[static_cast<std::size_t>(s)], ex.concat_channels(u, skips[static_cast<std::size_t>(s)]));
            feats[static_cast<std::size_t>(s)] = d;
        }

        std::vector<V> logits;
        const auto scales = config.head_scales();
        for (std::size_t i = 0; i < scales.size(); ++i) {
            auto& head = heads[i];
            logits.push_back(ex.conv3d(feats[static_cast<std::size_t>(scales[i])], head.spec, ex.param(head.w),
                                       ex.param(head.b)));
        }
        return logits;
    }

private:
    template <class Exec>
    typename Exec::V run_block(Exec& ex, ConvBlock& blk, typename Exec::V x) {
        auto h = ex.conv3d(x, blk.conv1.spec, ex.param(blk.conv1.w), ex.param(blk.conv1.b));
        h = ex.group_norm(h, blk.norm1.groups, blk.norm1.eps, ex.param(blk.norm1.gamma), ex.param(blk.norm1.beta));
        h = ex.leaky_relu(h, config.lrelu_slope);
        h = ex.conv3d(h, blk.conv2.spec, ex.param(blk.conv2.w), ex.param(blk.conv2.b));
        h = ex.group_norm(h, blk.norm2.groups, blk.norm2.eps, ex.param(blk.norm2.gamma), ex.param(blk.norm2.beta));
        return ex.leaky_relu(h, config.lrelu_slope);
    }

    void check_input(const Tensor& x) const;
};

UNet3D build_unet(const UNetConfig& config, Rng& rng, DType dtype = DType::F32);

/// Eager forward; logits per head, full resolution first. Optionally collects
/// the attention maps as (scale, tensor).
std::vector<Tensor> unet_forward(UNet3D& net, const Tensor& x,
                                 std::vector<std::pair<int, Tensor>>* attention_maps = nullptr);

/// Post-nonlinearity probabilities for one logits tensor.
Tensor output_probabilities(const UNetConfig& config, const Tensor& logits);

struct AdamOptions {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    Adam(std::vector<Parameter*> params, AdamOptions opts = {});
    void step();
    void zero_grad();

private:
    std::vector<Parameter*> params_;
    std::vector<Tensor> m_, v_;
    AdamOptions opts_;
    std::int64_t t_ = 0;
};

struct TrainOptions {
    double lr = 3e-4;
    int steps = 300;
    double smooth = 1e-5;
};

struct TrainRecord {
    int step = 0;
    double loss = 0.0;
    double dice = 0.0; // mean foreground dice of the argmax prediction
};

/// One-volume overfit loop: Adam (beta1 0.9, beta2 0.999, eps 1e-8, constant
/// lr), batch 1, deep-supervision weights proportional to 2^-k. Loss follows
/// the configured output nonlinearity. Aborts on non-finite loss.
std::vector<TrainRecord> train_toy(UNet3D& net,
                                   const std::vector<std::pair<Tensor, Tensor>>& dataset,
                                   const TrainOptions& opts = {});

/// Binary sphere phantom: image [1,1,n,n,n] f32 in {0,1}, labels u8 alike.
std::pair<Tensor, Tensor> synthetic_sphere_volume(int size, double radius_fraction = 0.3);

/// Mean Dice over non-background classes of argmax(head0) vs labels.
double argmax_dice(const UNetConfig& config, const Tensor& logits0, const Tensor& labels);

} // namespace lka
