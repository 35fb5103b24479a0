#include "lka/losses.hpp"

#include <cmath>

namespace lka {

namespace {

struct LabelView {
    std::int64_t n = 1;
    std::int64_t spatial = 1;
    std::vector<std::int64_t> spatial_dims;
};

LabelView label_view(const Tensor& labels) {
    LabelView v;
    if (labels.ndim() < 1) throw std::invalid_argument("labels: bad rank");
    int first_spatial = 1;
    v.n = labels.dim(0);
    if (labels.ndim() >= 2 && labels.dim(1) == 1) first_spatial = 2; // [N,1,spatial...]
    for (int i = first_spatial; i < labels.ndim(); ++i) {
        v.spatial *= labels.dim(i);
        v.spatial_dims.push_back(labels.dim(i));
    }
    return v;
}

} // namespace

Tensor one_hot(const Tensor& labels, int num_classes, DType dtype) {
    if (num_classes < 1) throw std::invalid_argument("one_hot: num_classes must be >= 1");
    const LabelView v = label_view(labels);
    Shape shape{v.n, num_classes};
    for (auto d : v.spatial_dims) shape.push_back(d);
    Tensor out = Tensor::zeros(shape, dtype);
    for (std::int64_t n = 0; n < v.n; ++n)
        for (std::int64_t s = 0; s < v.spatial; ++s) {
            const auto cls = static_cast<std::int64_t>(labels.get(n * v.spatial + s));
            if (cls < 0 || cls >= num_classes)
                throw std::invalid_argument("one_hot: label " + std::to_string(cls) + " out of range");
            out.set((n * num_classes + cls) * v.spatial + s, 1.0);
        }
    return out;
}

Tensor class_weights(const Tensor& labels, int num_classes) {
    const LabelView v = label_view(labels);
    const std::int64_t total = v.n * v.spatial;
    std::vector<std::int64_t> fg(static_cast<std::size_t>(num_classes), 0);
    for (std::int64_t i = 0; i < total; ++i) {
        const auto cls = static_cast<std::int64_t>(labels.get(i));
        if (cls >= 0 && cls < num_classes) ++fg[static_cast<std::size_t>(cls)];
    }
    Tensor w = Tensor::zeros(Shape{num_classes}, DType::F64);
    for (int c = 0; c < num_classes; ++c) {
        const std::int64_t f = fg[static_cast<std::size_t>(c)];
        const std::int64_t b = total - f;
        const double wc = (b == 0) ? 0.0 : 1.0 - static_cast<double>(f) / static_cast<double>(b);
        w.set(c, std::max(0.0, wc));
    }
    return w;
}

ad::Var soft_dice_loss(ad::Tape& t, ad::Var probs, const Tensor& target_onehot, const Tensor& weights,
                       double smooth) {
    const Tensor& pv = t.value(probs);
    if (!same_shape(pv, target_onehot))
        throw std::invalid_argument("soft_dice_loss: probs/target shape mismatch");
    const std::int64_t classes = pv.dim(1);
    const Tensor tgt = target_onehot.astype(pv.dtype());

    ad::Var tgt_c = t.constant(tgt);
    ad::Var s_pg = ad::sum_per_channel(t, ad::mul(t, probs, tgt_c)); // [C]
    ad::Var s_p = ad::sum_per_channel(t, probs);
    const Tensor s_g = sum_per_channel(tgt);

    ad::Var num = ad::add_scalar(t, ad::scale(t, s_pg, 2.0), smooth);
    ad::Var den = ad::add_scalar(t, ad::add(t, s_p, t.constant(s_g)), smooth);
    ad::Var dice_term = ad::add_scalar(t, ad::scale(t, ad::div(t, num, den), -1.0), 1.0); // 1 - frac

    Tensor w = weights.numel() > 0 ? weights.astype(DType::F64)
                                   : Tensor::full(Shape{classes}, DType::F64, 1.0);
    if (w.numel() != classes) throw std::invalid_argument("soft_dice_loss: weights size mismatch");
    double wsum = 0.0;
    for (std::int64_t c = 0; c < classes; ++c) wsum += w.get(c);
    if (wsum <= 0.0) {
        w = Tensor::full(Shape{classes}, DType::F64, 1.0);
        wsum = static_cast<double>(classes);
    }
    for (std::int64_t c = 0; c < classes; ++c) w.set(c, w.get(c) / wsum);
    return ad::weighted_sum(t, dice_term, w);
}

double soft_dice_loss_value(const Tensor& probs, const Tensor& target_onehot, const Tensor& weights,
                            double smooth) {
    ad::Tape t;
    ad::Var p = t.constant(probs);
    return scalar_value(t.value(soft_dice_loss(t, p, target_onehot, weights, smooth)));
}

ad::Var bce_dice_loss(ad::Tape& t, ad::Var logits, const Tensor& target, double smooth) {
    const Tensor& lv = t.value(logits);
    if (!same_shape(lv, target)) throw std::invalid_argument("bce_dice_loss: shape mismatch");
    ad::Var bce = ad::bce_with_logits_mean(t, logits, target);
    ad::Var probs = ad::sigmoid(t, logits);
    ad::Var dice = soft_dice_loss(t, probs, target, Tensor(), smooth);
    return ad::add(t, bce, dice);
}

double bce_dice_loss_value(const Tensor& logits, const Tensor& target, double smooth) {
    ad::Tape t;
    ad::Var l = t.constant(logits);
    return scalar_value(t.value(bce_dice_loss(t, l, target, smooth)));
}

Tensor downsample_labels(const Tensor& labels, int k) {
    if (k == 0) return labels;
    const std::int64_t f = std::int64_t{1} << k;
    if (labels.ndim() < 3) throw std::invalid_argument("downsample_labels: need [N,1,spatial...]");
    Shape shape = labels.shape();
    for (int i = 2; i < labels.ndim(); ++i) {
        if (shape[static_cast<std::size_t>(i)] % f != 0)
            throw std::invalid_argument("downsample_labels: dims not divisible by 2^k");
        shape[static_cast<std::size_t>(i)] /= f;
    }
    Tensor out = Tensor::zeros(shape, labels.dtype());
    // rank [N,C,H,W,D] assumed for the strided gather
    const std::int64_t N = shape[0], C = shape[1], H = shape[2], W = shape[3], D = shape[4];
    const std::int64_t HI = labels.dim(2), WI = labels.dim(3), DI = labels.dim(4);
    for (std::int64_t n = 0; n < N; ++n)
        for (std::int64_t c = 0; c < C; ++c)
            for (std::int64_t h = 0; h < H; ++h)
                for (std::int64_t w = 0; w < W; ++w)
                    for (std::int64_t d = 0; d < D; ++d) {
                        const std::int64_t src = (((n * C + c) * HI + h * f) * WI + w * f) * DI + d * f;
                        out.set((((n * C + c) * H + h) * W + w) * D + d, labels.get(src));
                    }
    return out;
}

} // namespace lka
