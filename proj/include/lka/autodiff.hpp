#pragma once

#include <functional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "lka/conv3d.hpp"
#include "lka/ops.hpp"
#include "lka/tensor.hpp"

namespace lka {

/// A trainable tensor with its gradient accumulator.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros_like(value)) {}
    void zero_grad() { grad = Tensor::zeros_like(value); }
    std::int64_t numel() const { return value.numel(); }
};

namespace ad {

class Tape;

struct Var {
    std::int32_t id = -1;
    bool valid() const { return id >= 0; }
};

/// Record of one forward execution: nodes in topological (execution) order,
/// each holding its output value and an adjoint rule. A tape is single-owner;
/// backward never mutates recorded values, so it can run more than once.
class Tape {
public:
    /// Adjoint rule: receives the output gradient and the node's own saved
    /// output value (needed by ops like sigmoid/softmax).
    using BackwardFn = std::function<void(Tape&, const Tensor& gy, const Tensor& y)>;

    Var input(Tensor value, bool requires_grad = true);
    Var constant(Tensor value) { return input(std::move(value), false); }
    /// Leaf bound to an external Parameter; backward adds (+=) into its .grad.
    Var param(Parameter& p);

    /// Records an executed primitive. The op name must be registered.
    Var record(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardFn bw);

    const Tensor& value(Var v) const { return node(v).value; }
    const Shape& shape(Var v) const { return node(v).value.shape(); }
    bool requires_grad(Var v) const { return node(v).needs_grad_flag; }

    /// Seed shape must equal the output's shape.
    void backward(Var output, const Tensor& seed);
    void backward_scalar(Var output); // seed = [1]

    /// Gradient w.r.t. a var from the last backward; zeros if it never
    /// received one.
    Tensor grad(Var v) const;
    void accumulate_grad(Var v, const Tensor& g);

    std::size_t size() const { return nodes_.size(); }

    static const std::set<std::string, std::less<>>& registered_ops();
    static bool is_registered(std::string_view op);

private:
    struct Node {
        std::string op;
        std::vector<Var> inputs;
        Tensor value;
        Tensor grad;
        bool has_grad = false;
        bool needs_grad_flag = false;
        BackwardFn bw;
        Parameter* bound = nullptr;
    };

    Node& node(Var v);
    const Node& node(Var v) const;

    std::vector<Node> nodes_;
};

// --- primitive wrappers (forward via the same kernels as eager execution) ---

Var conv3d(Tape& t, Var x, const ConvSpec& spec, Var w, Var b = {});
Var conv3d_transposed(Tape& t, Var x, const ConvSpec& spec, Var w, Var b = {});
Var group_norm(Tape& t, Var x, int groups, double eps, Var gamma, Var beta);
Var leaky_relu(Tape& t, Var x, double slope);
Var sigmoid(Tape& t, Var x);
Var softmax(Tape& t, Var x, int axis);
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var div(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double alpha);
Var add_scalar(Tape& t, Var a, double alpha);
Var concat_channels(Tape& t, Var a, Var b);
Var sum_per_channel(Tape& t, Var x);
Var sum_all(Tape& t, Var x);
/// dot(x, weights) with constant weights; x and weights are [C].
Var weighted_sum(Tape& t, Var x, Tensor weights);
/// Mean binary cross-entropy on logits vs {0,1} targets, numerically stable.
Var bce_with_logits_mean(Tape& t, Var logits, Tensor target);

// --- gradient checking ---

struct GradcheckOptions {
    double eps = 1e-4;
    /// Tensors above this size are checked on a random coordinate subset.
    std::int64_t dense_limit = 4096;
    int subset_coords = 96;
    std::uint64_t seed = 0;
    /// Coordinates with |x| below this are skipped (kink guard for the
    /// leaky-relu subgradient); defaults to 2*eps.
    double kink_exclusion = -1.0;
};

struct GradcheckReport {
    double max_rel_err = 0.0;
    std::int64_t coords_tested = 0;
    std::int64_t coords_skipped = 0;
};

/// Builds a scalar output from leaves on a fresh tape.
using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Central finite differences vs reverse-mode gradients at `point` (all f64).
/// Relative error per coordinate: |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8).
GradcheckReport gradcheck(const ScalarFn& fn, const std::vector<Tensor>& point,
                          const GradcheckOptions& opt = {});

} // namespace ad
} // namespace lka
