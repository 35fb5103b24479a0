#include "lka/unet3d.hpp"

#include <algorithm>
#include <cmath>

#include "lka/parallel.hpp"

namespace lka {

int UNetConfig::width(int scale) const {
    return std::min(base_width << scale, max_width);
}

int UNetConfig::mid_scale() const {
    const int target = std::min(128, width(num_scales - 1));
    for (int s = 0; s < num_scales; ++s)
        if (width(s) >= target) return s;
    return num_scales - 1;
}

std::vector<int> UNetConfig::head_scales() const {
    if (!deep_supervision) return {0};
    std::vector<int> scales;
    for (int s = 0; s <= num_scales - 3; ++s) scales.push_back(s);
    if (scales.empty()) scales.push_back(0);
    return scales;
}

void UNetConfig::validate() const {
    if (in_channels < 1 || out_classes < 1)
        throw std::invalid_argument("UNetConfig: channels/classes must be >= 1");
    if (num_scales < 3) throw std::invalid_argument("UNetConfig: num_scales must be >= 3");
    if (base_width < 1 || max_width < base_width)
        throw std::invalid_argument("UNetConfig: bad width ladder");
    if (lrelu_slope < 0.0) throw std::invalid_argument("UNetConfig: negative slope");
    (void)plan_decomposition(mid_plan.kernel, mid_plan.dilation); // validates divisibility
}

UNetConfig UNetConfig::toy(int in_ch, int out_classes_, int scales, int base_width_, Variant v) {
    UNetConfig c;
    c.in_channels = in_ch;
    c.out_classes = out_classes_;
    c.num_scales = scales;
    c.base_width = base_width_;
    c.max_width = 512;
    c.variant = v;
    c.deep_supervision = true;
    c.output_nl = OutputNL::Softmax;
    return c;
}

namespace {

ConvLayer make_conv(const std::string& name, const ConvSpec& spec, Rng& rng, DType dtype) {
    auto w = ConvWeights::fan_in_uniform(spec, rng, dtype);
    ConvLayer layer;
    layer.spec = spec;
    layer.w = Parameter(name + ".weight", std::move(w.kernel));
    layer.b = Parameter(name + ".bias", std::move(w.bias));
    return layer;
}

NormAct make_norm(const std::string& name, int channels, int gn_groups, DType dtype) {
    NormAct n;
    n.groups = gn_groups > 0 ? gn_groups : default_gn_groups(channels);
    n.gamma = Parameter(name + ".gamma", Tensor::full(Shape{channels}, dtype, 1.0));
    n.beta = Parameter(name + ".beta", Tensor::zeros(Shape{channels}, dtype));
    return n;
}

ConvBlock make_block(const std::string& name, int in_ch, int out_ch, int gn_groups, Rng& rng, DType dtype) {
    ConvBlock b;
    b.conv1 = make_conv(name + ".conv1", ConvSpec::conv(in_ch, out_ch, 3, 1, 1), rng, dtype);
    b.norm1 = make_norm(name + ".norm1", out_ch, gn_groups, dtype);
    b.conv2 = make_conv(name + ".conv2", ConvSpec::conv(out_ch, out_ch, 3, 1, 1), rng, dtype);
    b.norm2 = make_norm(name + ".norm2", out_ch, gn_groups, dtype);
    return b;
}

void push_block(std::vector<Parameter*>& out, ConvBlock& b) {
    out.push_back(&b.conv1.w);
    out.push_back(&b.conv1.b);
    out.push_back(&b.norm1.gamma);
    out.push_back(&b.norm1.beta);
    out.push_back(&b.conv2.w);
    out.push_back(&b.conv2.b);
    out.push_back(&b.norm2.gamma);
    out.push_back(&b.norm2.beta);
}

} // namespace

void UNet3D::check_input(const Tensor& x) const {
    if (x.ndim() != 5)
        throw std::invalid_argument("unet_forward: input must be [N,C,H,W,D]");
    if (x.dim(1) != config.in_channels)
        throw std::invalid_argument("unet_forward: input has " + std::to_string(x.dim(1)) +
                                    " channels, config expects " + std::to_string(config.in_channels));
    const std::int64_t f = std::int64_t{1} << (config.num_scales - 1);
    for (int i = 2; i < 5; ++i)
        if (x.dim(i) % f != 0)
            throw std::invalid_argument("unet_forward: spatial dim " + std::to_string(x.dim(i)) +
                                        " not divisible by " + std::to_string(f));
}

std::vector<Parameter*> UNet3D::parameters() {
    std::vector<Parameter*> out;
    for (auto& b : encoder) push_block(out, b);
    for (auto& c : down) {
        out.push_back(&c.w);
        out.push_back(&c.b);
    }
    for (auto& c : up) {
        out.push_back(&c.w);
        out.push_back(&c.b);
    }
    for (auto& b : decoder) push_block(out, b);
    for (auto& a : attention)
        if (a)
            for (Parameter* p : a->parameters()) out.push_back(p);
    for (auto& c : heads) {
        out.push_back(&c.w);
        out.push_back(&c.b);
    }
    return out;
}

std::int64_t UNet3D::param_count() {
    std::int64_t n = 0;
    for (Parameter* p : parameters()) n += p->numel();
    return n;
}

std::int64_t UNet3D::attention_conv_param_count() const {
    std::int64_t n = 0;
    for (const auto& a : attention)
        if (a) n += a->conv_param_count();
    return n;
}

void UNet3D::zero_grads() {
    for (Parameter* p : parameters()) p->zero_grad();
}

UNet3D build_unet(const UNetConfig& config, Rng& rng, DType dtype) {
    config.validate();
    UNet3D net;
    net.config = config;
    net.dtype = dtype;
    const int S = config.num_scales;

    for (int s = 0; s < S; ++s) {
        const int in_ch = s == 0 ? config.in_channels : config.width(s);
        net.encoder.push_back(make_block("enc" + std::to_string(s), in_ch, config.width(s), config.gn_groups,
                                         rng, dtype));
        if (s + 1 < S)
            net.down.push_back(make_conv("down" + std::to_string(s),
                                         ConvSpec::conv(config.width(s), config.width(s + 1), 3, 2, 1), rng,
                                         dtype));
    }
    for (int s = 0; s < S - 1; ++s) {
        net.up.push_back(make_conv("up" + std::to_string(s),
                                   ConvSpec::deconv(config.width(s + 1), config.width(s), 4, 2, 1), rng,
                                   dtype));
        net.decoder.push_back(make_block("dec" + std::to_string(s), 2 * config.width(s), config.width(s),
                                         config.gn_groups, rng, dtype));
    }

    net.attention.resize(static_cast<std::size_t>(S));
    if (config.variant == UNetConfig::Variant::Full) {
        for (int s = 0; s < S - 1; ++s)
            net.attention[static_cast<std::size_t>(s)] = std::make_unique<LKAModule>(LKAModule::create(
                config.width(s), plan_for_scale(s), rng, dtype, config.gn_groups, "lka" + std::to_string(s)));
    } else if (config.variant == UNetConfig::Variant::Mid) {
        const int s = config.mid_scale();
        net.attention[static_cast<std::size_t>(s)] = std::make_unique<LKAModule>(
            LKAModule::create(config.width(s), plan_decomposition(config.mid_plan.kernel, config.mid_plan.dilation),
                              rng, dtype, config.gn_groups, "lka" + std::to_string(s)));
    }

    for (int s : config.head_scales())
        net.heads.push_back(make_conv("head" + std::to_string(s),
                                      ConvSpec::conv(config.width(s), config.out_classes, 1), rng, dtype));
    return net;
}

std::vector<Tensor> unet_forward(UNet3D& net, const Tensor& x,
                                 std::vector<std::pair<int, Tensor>>* attention_maps) {
    EagerExec ex;
    std::vector<std::pair<int, EagerExec::V>> atts;
    auto logits = net.forward(ex, &x, attention_maps ? &atts : nullptr);
    if (attention_maps)
        for (auto& [scale, v] : atts) attention_maps->emplace_back(scale, *v);
    std::vector<Tensor> out;
    out.reserve(logits.size());
    for (auto v : logits) out.push_back(*v);
    return out;
}

Tensor output_probabilities(const UNetConfig& config, const Tensor& logits) {
    return config.output_nl == UNetConfig::OutputNL::Softmax ? softmax(logits, 1) : sigmoid(logits);
}

Adam::Adam(std::vector<Parameter*> params, AdamOptions opts) : params_(std::move(params)), opts_(opts) {
    for (Parameter* p : params_) {
        m_.push_back(Tensor::zeros_like(p->value));
        v_.push_back(Tensor::zeros_like(p->value));
    }
}

void Adam::zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Parameter& p = *params_[i];
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        const std::int64_t n = p.value.numel();
        if (p.value.dtype() == DType::F32) {
            auto pv = p.value.f32();
            auto gv = p.grad.f32();
            auto mv = m.f32();
            auto vv = v.f32();
            parallel_for(n, [&](std::int64_t j) {
                const auto u = static_cast<std::size_t>(j);
                const float g = gv[u];
                mv[u] = static_cast<float>(opts_.beta1 * mv[u] + (1.0 - opts_.beta1) * g);
                vv[u] = static_cast<float>(opts_.beta2 * vv[u] + (1.0 - opts_.beta2) * g * g);
                const double mhat = mv[u] / bc1;
                const double vhat = vv[u] / bc2;
                pv[u] -= static_cast<float>(opts_.lr * mhat / (std::sqrt(vhat) + opts_.eps));
            });
        } else {
            auto pv = p.value.f64();
            auto gv = p.grad.f64();
            auto mv = m.f64();
            auto vv = v.f64();
            parallel_for(n, [&](std::int64_t j) {
                const auto u = static_cast<std::size_t>(j);
                const double g = gv[u];
                mv[u] = opts_.beta1 * mv[u] + (1.0 - opts_.beta1) * g;
                vv[u] = opts_.beta2 * vv[u] + (1.0 - opts_.beta2) * g * g;
                const double mhat = mv[u] / bc1;
                const double vhat = vv[u] / bc2;
                pv[u] -= opts_.lr * mhat / (std::sqrt(vhat) + opts_.eps);
            });
        }
    }
}

std::pair<Tensor, Tensor> synthetic_sphere_volume(int size, double radius_fraction) {
    if (size < 2) throw std::invalid_argument("synthetic_sphere_volume: size too small");
    Tensor image = Tensor::zeros(Shape{1, 1, size, size, size}, DType::F32);
    Tensor labels = Tensor::zeros(Shape{1, 1, size, size, size}, DType::U8);
    const double c = (size - 1) / 2.0;
    const double r = radius_fraction * size;
    auto img = image.f32();
    auto lab = labels.u8();
    std::int64_t i = 0;
    for (int h = 0; h < size; ++h)
        for (int w = 0; w < size; ++w)
            for (int d = 0; d < size; ++d, ++i) {
                const double dist = std::sqrt((h - c) * (h - c) + (w - c) * (w - c) + (d - c) * (d - c));
                if (dist <= r) {
                    img[static_cast<std::size_t>(i)] = 1.0f;
                    lab[static_cast<std::size_t>(i)] = 1;
                }
            }
    return {std::move(image), std::move(labels)};
}

double argmax_dice(const UNetConfig& config, const Tensor& logits0, const Tensor& labels) {
    const std::int64_t classes = logits0.dim(1);
    std::int64_t spatial = 1;
    for (int i = 2; i < logits0.ndim(); ++i) spatial *= logits0.dim(i);
    const std::int64_t n = logits0.dim(0);

    double total = 0.0;
    int counted = 0;
    for (std::int64_t c = 1; c < classes; ++c) {
        std::int64_t inter = 0, pred = 0, gt = 0;
        for (std::int64_t b = 0; b < n; ++b)
            for (std::int64_t s = 0; s < spatial; ++s) {
                std::int64_t best = 0;
                double bestv = logits0.get((b * classes + 0) * spatial + s);
                for (std::int64_t k = 1; k < classes; ++k) {
                    const double v = logits0.get((b * classes + k) * spatial + s);
                    if (v > bestv) {
                        bestv = v;
                        best = k;
                    }
                }
                const bool p = best == c;
                const bool g = static_cast<std::int64_t>(labels.get(b * spatial + s)) == c;
                inter += (p && g) ? 1 : 0;
                pred += p ? 1 : 0;
                gt += g ? 1 : 0;
            }
        if (pred + gt == 0)
            total += 1.0;
        else
            total += 2.0 * static_cast<double>(inter) / static_cast<double>(pred + gt);
        ++counted;
    }
    (void)config;
    return counted > 0 ? total / counted : 1.0;
}

std::vector<TrainRecord> train_toy(UNet3D& net, const std::vector<std::pair<Tensor, Tensor>>& dataset,
                                   const TrainOptions& opts) {
    if (dataset.empty()) throw std::invalid_argument("train_toy: empty dataset");
    Adam adam(net.parameters(), AdamOptions{opts.lr, 0.9, 0.999, 1e-8});
    const auto scales = net.config.head_scales();

    // 2^-k supervision weights over the available heads, normalized.
    std::vector<double> lambda;
    double lsum = 0.0;
    for (int s : scales) {
        lambda.push_back(std::pow(2.0, -s));
        lsum += lambda.back();
    }
    for (double& l : lambda) l /= lsum;

    std::vector<TrainRecord> history;
    history.reserve(static_cast<std::size_t>(opts.steps));
    for (int step = 0; step < opts.steps; ++step) {
        const auto& [image, labels] = dataset[static_cast<std::size_t>(step) % dataset.size()];

        ad::Tape tape;
        TapeExec ex(tape);
        ad::Var x = tape.constant(image.astype(net.dtype));
        auto logits = net.forward(ex, x);

        ad::Var total{};
        for (std::size_t i = 0; i < logits.size(); ++i) {
            const Tensor lab_k = downsample_labels(labels, scales[i]);
            const Tensor target = one_hot(lab_k, net.config.out_classes, net.dtype);
            ad::Var loss_k;
            if (net.config.output_nl == UNetConfig::OutputNL::Softmax) {
                const Tensor w = class_weights(lab_k, net.config.out_classes);
                ad::Var probs = ex.softmax(logits[i], 1);
                loss_k = soft_dice_loss(tape, probs, target, w, opts.smooth);
            } else {
                loss_k = bce_dice_loss(tape, logits[i], target, opts.smooth);
            }
            ad::Var weighted = ad::scale(tape, loss_k, lambda[i]);
            total = total.valid() ? ad::add(tape, total, weighted) : weighted;
        }

        const double loss = scalar_value(tape.value(total));
        if (!std::isfinite(loss))
            throw std::runtime_error("train_toy: non-finite loss at step " + std::to_string(step));

        tape.backward_scalar(total);
        adam.step();
        adam.zero_grad();

        TrainRecord rec;
        rec.step = step;
        rec.loss = loss;
        rec.dice = argmax_dice(net.config, tape.value(logits[0]), labels);
        history.push_back(rec);
    }
    return history;
}

} // namespace lka
