#include "lka/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "lka/parallel.hpp"
#include "lka/rng.hpp"

namespace lka::ad {

namespace {

Tensor ones_scalar(DType dt) {
    Tensor t = Tensor::zeros(Shape{1}, dt);
    t.set(0, 1.0);
    return t;
}

} // namespace

Tape::Node& Tape::node(Var v) {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
        throw std::invalid_argument("Tape: var does not belong to this tape");
    return nodes_[static_cast<std::size_t>(v.id)];
}

const Tape::Node& Tape::node(Var v) const {
    if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
        throw std::invalid_argument("Tape: var does not belong to this tape");
    return nodes_[static_cast<std::size_t>(v.id)];
}

Var Tape::input(Tensor value, bool requires_grad) {
    Node n;
    n.op = "input";
    n.value = std::move(value);
    n.needs_grad_flag = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::param(Parameter& p) {
    Var v = input(p.value, true);
    nodes_.back().bound = &p;
    return v;
}

const std::set<std::string, std::less<>>& Tape::registered_ops() {
    static const std::set<std::string, std::less<>> ops = {
        "input",       "conv3d",          "conv3d_transposed",
        "group_norm",  "leaky_relu",      "sigmoid",
        "softmax",     "add",             "sub",
        "mul",         "div",             "scale",
        "add_scalar",  "concat_channels", "sum_per_channel",
        "sum_all",     "weighted_sum",    "bce_with_logits_mean",
    };
    return ops;
}

bool Tape::is_registered(std::string_view op) { return registered_ops().count(op) > 0; }

Var Tape::record(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardFn bw) {
    if (!is_registered(op))
        throw std::invalid_argument("Tape: unregistered primitive '" + std::string(op) + "'");
    Node n;
    n.op = std::string(op);
    n.value = std::move(value);
    n.inputs = std::move(inputs);
    for (Var in : n.inputs)
        if (node(in).needs_grad_flag) n.needs_grad_flag = true;
    n.bw = std::move(bw);
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

void Tape::accumulate_grad(Var v, const Tensor& g) {
    Node& n = node(v);
    if (!same_shape(n.value, g))
        throw std::invalid_argument("Tape: gradient shape " + shape_str(g.shape()) +
                                    " does not match value shape " + shape_str(n.value.shape()));
    if (!n.has_grad) {
        n.grad = g;
        n.has_grad = true;
    } else {
        n.grad = lka::add(n.grad, g);
    }
}

Tensor Tape::grad(Var v) const {
    const Node& n = node(v);
    return n.has_grad ? n.grad : Tensor::zeros_like(n.value);
}

void Tape::backward(Var output, const Tensor& seed) {
    Node& out = node(output);
    if (!same_shape(out.value, seed))
        throw std::invalid_argument("Tape::backward: seed shape " + shape_str(seed.shape()) +
                                    " does not match output shape " + shape_str(out.value.shape()));
    for (Node& n : nodes_) {
        n.has_grad = false;
        n.grad = Tensor();
    }
    accumulate_grad(output, seed);
    for (std::int32_t id = output.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.has_grad || !n.needs_grad_flag || !n.bw) continue;
        n.bw(*this, n.grad, n.value);
    }
    for (Node& n : nodes_) {
        if (n.bound != nullptr && n.has_grad) n.bound->grad = lka::add(n.bound->grad, n.grad);
    }
}

void Tape::backward_scalar(Var output) { backward(output, ones_scalar(node(output).value.dtype())); }

Var conv3d(Tape& t, Var x, const ConvSpec& spec, Var w, Var b) {
    const Tensor& xv = t.value(x);
    const Tensor& wv = t.value(w);
    const Tensor* bias = b.valid() ? &t.value(b) : nullptr;
    Tensor y = lka::conv3d(xv, spec, wv, bias);
    const std::array<std::int64_t, 3> in_sp{xv.dim(2), xv.dim(3), xv.dim(4)};
    std::vector<Var> ins = b.valid() ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    return t.record("conv3d", std::move(y), std::move(ins), [=](Tape& tp, const Tensor& gy, const Tensor&) {
        if (tp.requires_grad(x)) tp.accumulate_grad(x, conv3d_grad_input(gy, spec, tp.value(w), in_sp));
        if (tp.requires_grad(w)) tp.accumulate_grad(w, conv3d_grad_weights(tp.value(x), gy, spec));
        if (b.valid() && tp.requires_grad(b)) tp.accumulate_grad(b, conv3d_grad_bias(gy));
    });
}

Var conv3d_transposed(Tape& t, Var x, const ConvSpec& spec, Var w, Var b) {
    const Tensor& xv = t.value(x);
    const Tensor& wv = t.value(w);
    const Tensor* bias = b.valid() ? &t.value(b) : nullptr;
    Tensor y = lka::conv3d_transposed(xv, spec, wv, bias);
    const std::array<std::int64_t, 3> in_sp{xv.dim(2), xv.dim(3), xv.dim(4)};
    std::vector<Var> ins = b.valid() ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    return t.record("conv3d_transposed", std::move(y), std::move(ins), [=](Tape& tp, const Tensor& gy, const Tensor&) {
        if (tp.requires_grad(x)) tp.accumulate_grad(x, conv3d_transposed_grad_input(gy, spec, tp.value(w), in_sp));
        if (tp.requires_grad(w)) tp.accumulate_grad(w, conv3d_transposed_grad_weights(tp.value(x), gy, spec));
        if (b.valid() && tp.requires_grad(b)) tp.accumulate_grad(b, conv3d_grad_bias(gy));
    });
}

Var group_norm(Tape& t, Var x, int groups, double eps, Var gamma, Var beta) {
    Tensor y = lka::group_norm(t.value(x), groups, eps, t.value(gamma), t.value(beta));
    return t.record("group_norm", std::move(y), {x, gamma, beta}, [=](Tape& tp, const Tensor& gy, const Tensor&) {
        auto grads = group_norm_backward(tp.value(x), groups, eps, tp.value(gamma), gy);
        if (tp.requires_grad(x)) tp.accumulate_grad(x, grads.gx);
        if (tp.requires_grad(gamma)) tp.accumulate_grad(gamma, grads.ggamma.astype(tp.value(gamma).dtype()));
        if (tp.requires_grad(beta)) tp.accumulate_grad(beta, grads.gbeta.astype(tp.value(beta).dtype()));
    });
}

Var leaky_relu(Tape& t, Var x, double slope) {
    Tensor y = lka::leaky_relu(t.value(x), slope);
    return t.record("leaky_relu", std::move(y), {x}, [=](Tape& tp, const Tensor& gy, const Tensor&) {
        if (tp.requires_grad(x)) tp.accumulate_grad(x, leaky_relu_backward(tp.value(x), gy, slope));
    });
}

Var sigmoid(Tape& t, Var x) {
    Tensor y = lka::sigmoid(t.value(x));
    return t.record("sigmoid", std::move(y), {x}, [=](Tape& tp, const Tensor& gy, const Tensor& yv) {
        if (tp.requires_grad(x)) tp.accumulate_grad(x, sigmoid_backward(yv, gy));
    });
}

Var softmax(Tape& t, Var x, int axis) {
    Tensor y = lka::softmax(t.value(x), axis);
    return t.record("softmax", std::move(y), {x}, [=](Tape& tp, const Tensor& gy, const Tensor& yv) {
        if (tp.requires_grad(x)) tp.accumulate_grad(x, softmax_backward(yv, gy, axis));
    });
}

Var add(Tape& t, Var a, Var b) {
    Tensor y = lka::add(t.value(a), t.value(b));
    return t.record("add", std::move(y), {a, b}, [=](Tape& tp, const Tensor& gy, const Tensor&) {
        if (tp.requires_grad(a)) tp.accumulate_grad(a, gy);
        if (tp.requires_grad(b)) tp.accumulate_grad(b, gy);
    });
}

Var sub(Tape& t, Var a, Var b) {
    Tensor y = lka::sub(t.value(a), t.value(b));
    return t.record("sub", std::move(y), {a, b}, [=](Tape& tp, const Tensor& gy, const Tensor&) {
        if (tp.requires_grad(a)) tp.accumulate_grad(a, gy);
        if (tp.requires_grad(b)) tp.accumulate_grad(b, lka::scale(gy, -1.0));
    });
}

Var mul(Tape& t, Var a, Var b) {
    Tensor y = lka::mul(t.value(a), t.value(b));
    return t.record("mul", std::move(y), {a, b}, [=](Tape& tp, const Tensor& gy, const Tensor&) {
        if (tp.requires_grad(a)) tp.accumulate_grad(a, lka::mul(gy, tp.value(b)));
        if (tp.requires_grad(b)) tp.accumulate_grad(b, lka::mul(gy, tp.value(a)));
    });
}

Var div(Tape& t, Var a, Var b) {
    Tensor y = lka::div(t.value(a), t.value(b));
    return t.record("div", std::move(y), {a, b}, [=](Tape& tp, const Tensor& gy, const Tensor&) {
        const Tensor& bv = tp.value(b);
        if (tp.requires_grad(a)) tp.accumulate_grad(a, lka::div(gy, bv));
        if (tp.requires_grad(b)) {
            Tensor g = lka::mul(gy, tp.value(a));
            g = lka::div(g, lka::mul(bv, bv));
            tp.accumulate_grad(b, lka::scale(g, -1.0));
        }
    });
}

Var scale(Tape& t, Var a, double alpha) {
    Tensor y = lka::scale(t.value(a), alpha);
    return t.record("scale", std::move(y), {a}, [=](Tape& tp, const Tensor& gy, const Tensor&) {
        if (tp.requires_grad(a)) tp.accumulate_grad(a, lka::scale(gy, alpha));
    });
}

Var add_scalar(Tape& t, Var a, double alpha) {
    Tensor y = lka::add_scalar(t.value(a), alpha);
    return t.record("add_scalar", std::move(y), {a}, [=](Tape& tp, const Tensor& gy, const Tensor&) {
        if (tp.requires_grad(a)) tp.accumulate_grad(a, gy);
    });
}

Var concat_channels(Tape& t, Var a, Var b) {
    Tensor y = lka::concat_channels(t.value(a), t.value(b));
    const std::int64_t ca = t.value(a).dim(1);
    const std::int64_t cb = t.value(b).dim(1);
    return t.record("concat_channels", std::move(y), {a, b}, [=](Tape& tp, const Tensor& gy, const Tensor&) {
        if (tp.requires_grad(a)) tp.accumulate_grad(a, slice_channels(gy, 0, ca));
        if (tp.requires_grad(b)) tp.accumulate_grad(b, slice_channels(gy, ca, ca + cb));
    });
}

Var sum_per_channel(Tape& t, Var x) {
    Tensor y = lka::sum_per_channel(t.value(x));
    const Shape xshape = t.value(x).shape();
    return t.record("sum_per_channel", std::move(y), {x}, [=](Tape& tp, const Tensor& gy, const Tensor&) {
        if (tp.requires_grad(x)) tp.accumulate_grad(x, broadcast_per_channel(gy, xshape));
    });
}

Var sum_all(Tape& t, Var x) {
    Tensor y = lka::sum_all(t.value(x));
    const Shape xshape = t.value(x).shape();
    return t.record("sum_all", std::move(y), {x}, [=](Tape& tp, const Tensor& gy, const Tensor&) {
        if (tp.requires_grad(x)) tp.accumulate_grad(x, Tensor::full(xshape, gy.dtype(), gy.get(0)));
    });
}

Var weighted_sum(Tape& t, Var x, Tensor weights) {
    const Tensor& xv = t.value(x);
    if (xv.numel() != weights.numel())
        throw std::invalid_argument("weighted_sum: size mismatch");
    const Tensor w = weights.astype(xv.dtype());
    double acc = 0.0;
    for (std::int64_t i = 0; i < xv.numel(); ++i) acc += xv.get(i) * w.get(i);
    Tensor y = Tensor::zeros(Shape{1}, xv.dtype());
    y.set(0, acc);
    return t.record("weighted_sum", std::move(y), {x}, [=](Tape& tp, const Tensor& gy, const Tensor&) {
        if (!tp.requires_grad(x)) return;
        tp.accumulate_grad(x, lka::scale(w, gy.get(0)));
    });
}

Var bce_with_logits_mean(Tape& t, Var logits, Tensor target) {
    const Tensor& lv = t.value(logits);
    if (!same_shape(lv, target)) throw std::invalid_argument("bce_with_logits_mean: shape mismatch");
    const Tensor tgt = target.astype(lv.dtype());
    const std::int64_t n = lv.numel();
    // mean over elements of max(l,0) - l*g + log(1 + exp(-|l|))
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double l = lv.get(i), g = tgt.get(i);
        acc += std::max(l, 0.0) - l * g + std::log1p(std::exp(-std::abs(l)));
    }
    Tensor y = Tensor::zeros(Shape{1}, lv.dtype());
    y.set(0, acc / static_cast<double>(n));
    return t.record("bce_with_logits_mean", std::move(y), {logits}, [=](Tape& tp, const Tensor& gy, const Tensor&) {
        if (!tp.requires_grad(logits)) return;
        // d/dl = (sigmoid(l) - g) / n
        Tensor p = lka::sigmoid(tp.value(logits));
        Tensor g = lka::sub(p, tgt);
        tp.accumulate_grad(logits, lka::scale(g, gy.get(0) / static_cast<double>(n)));
    });
}

GradcheckReport gradcheck(const ScalarFn& fn, const std::vector<Tensor>& point, const GradcheckOptions& opt) {
    for (const Tensor& t : point)
        if (t.dtype() != DType::F64)
            throw std::invalid_argument("gradcheck: all point tensors must be float64");
    if (!(opt.eps >= 1e-6 && opt.eps <= 1e-2))
        throw std::invalid_argument("gradcheck: eps must be in [1e-6, 1e-2]");
    const double kink = opt.kink_exclusion >= 0.0 ? opt.kink_exclusion : 2.0 * opt.eps;

    auto eval = [&](const std::vector<Tensor>& xs) {
        Tape tape;
        std::vector<Var> leaves;
        leaves.reserve(xs.size());
        for (const Tensor& x : xs) leaves.push_back(tape.input(x, true));
        Var out = fn(tape, leaves);
        if (tape.value(out).numel() != 1)
            throw std::invalid_argument("gradcheck: fn must produce a scalar");
        return std::pair<Tape, Var>(std::move(tape), out);
    };

    auto [tape, out] = eval(point);
    const double f0 = tape.value(out).get(0);
    tape.backward_scalar(out);
    std::vector<Tensor> g_ad;
    // Leaves were created first, in order, so their ids are 0..n-1.
    for (std::size_t i = 0; i < point.size(); ++i)
        g_ad.push_back(tape.grad(Var{static_cast<std::int32_t>(i)}));

    // Cancellation noise of a finite difference at this function scale. Used
    // to drop coordinates whose gradient a central difference cannot resolve,
    // and to keep the kink detector from firing on pure roundoff.
    const double noise_floor = 1e-15 * std::max(std::abs(f0), 1.0) / opt.eps;

    GradcheckReport report;
    Rng rng(opt.seed);
    std::vector<Tensor> work = point;
    for (std::size_t ti = 0; ti < point.size(); ++ti) {
        const std::int64_t n = point[ti].numel();
        std::vector<std::int64_t> coords;
        if (n <= opt.dense_limit) {
            coords.resize(static_cast<std::size_t>(n));
            for (std::int64_t i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
        } else {
            const int m = std::max(64, opt.subset_coords);
            coords.reserve(static_cast<std::size_t>(m));
            for (int i = 0; i < m; ++i)
                coords.push_back(static_cast<std::int64_t>(rng.next_u64() % static_cast<std::uint64_t>(n)));
            std::sort(coords.begin(), coords.end());
            coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
        }
        for (std::int64_t c : coords) {
            const double x0 = point[ti].get(c);
            if (std::abs(x0) < kink) {
                ++report.coords_skipped;
                continue;
            }
            auto probe = [&](double h) {
                work[ti].set(c, x0 + h);
                auto [tq, oq] = eval(work);
                work[ti].set(c, x0);
                return tq.value(oq).get(0);
            };
            const double fp = probe(opt.eps);
            const double fm = probe(-opt.eps);
            const double fp2 = probe(opt.eps / 2.0);
            const double fm2 = probe(-opt.eps / 2.0);
            const double g1 = (fp - fm) / (2.0 * opt.eps);
            const double g2 = (fp2 - fm2) / opt.eps;
            const double g = g_ad[ti].get(c);

            // Gradient below the finite-difference resolution limit: the
            // comparison would measure roundoff, not the derivative.
            if (std::max(std::abs(g), std::abs(g2)) < 3e4 * noise_floor) {
                ++report.coords_skipped;
                continue;
            }
            // Subgradient-kink guards. A kink near the center makes the
            // one-sided differences disagree; one further out makes the two
            // probe scales disagree (smooth coordinates agree to O(eps^2)).
            const double dplus = (fp - f0) / opt.eps;
            const double dminus = (f0 - fm) / opt.eps;
            const double spread = std::abs(dplus - dminus);
            const double scale_gap = std::abs(g1 - g2);
            const bool central_kink =
                spread > 0.25 * std::max(std::abs(dplus), std::abs(dminus)) && spread > 1e3 * noise_floor;
            const bool offset_kink =
                scale_gap > 3e-4 * std::max(std::abs(g1), std::abs(g2)) && scale_gap > 1e3 * noise_floor;
            if (central_kink || offset_kink) {
                ++report.coords_skipped;
                continue;
            }

            const double rel = std::abs(g - g2) / std::max({std::abs(g), std::abs(g2), 1e-8});
            report.max_rel_err = std::max(report.max_rel_err, rel);
            ++report.coords_tested;
        }
    }
    return report;
}

} // namespace lka::ad
