#pragma once

#include <deque>
#include <map>

#include "lka/autodiff.hpp"

namespace lka {

/// Network forwards are written once against this interface and run either
/// eagerly (V = tensor handle) or traced (V = tape var). Both paths call the
/// same kernels in the same order, so outputs are bitwise identical.
struct EagerExec {
    using V = const Tensor*;

    std::deque<Tensor> arena; // stable addresses for intermediates

    V own(Tensor t) {
        arena.push_back(std::move(t));
        return &arena.back();
    }
    V param(Parameter& p) { return &p.value; }

    V conv3d(V x, const ConvSpec& s, V w, V b) { return own(lka::conv3d(*x, s, *w, b ? b : nullptr)); }
    V conv3d_transposed(V x, const ConvSpec& s, V w, V b) {
        return own(lka::conv3d_transposed(*x, s, *w, b ? b : nullptr));
    }
    V group_norm(V x, int groups, double eps, V gamma, V beta) {
        return own(lka::group_norm(*x, groups, eps, *gamma, *beta));
    }
    V leaky_relu(V x, double slope) { return own(lka::leaky_relu(*x, slope)); }
    V sigmoid(V x) { return own(lka::sigmoid(*x)); }
    V softmax(V x, int axis) { return own(lka::softmax(*x, axis)); }
    V add(V a, V b) { return own(lka::add(*a, *b)); }
    V mul(V a, V b) { return own(lka::mul(*a, *b)); }
    V concat_channels(V a, V b) { return own(lka::concat_channels(*a, *b)); }

    const Tensor& tensor(V v) const { return *v; }
};

struct TapeExec {
    using V = ad::Var;

    ad::Tape& tape;
    /// When set, parameters found here use the given leaf var instead of a
    /// fresh tape.param binding (gradcheck drives parameters this way).
    const std::map<const Parameter*, ad::Var>* param_overrides = nullptr;

    explicit TapeExec(ad::Tape& t) : tape(t) {}

    V param(Parameter& p) {
        if (param_overrides) {
            auto it = param_overrides->find(&p);
            if (it != param_overrides->end()) return it->second;
        }
        return tape.param(p);
    }

    V conv3d(V x, const ConvSpec& s, V w, V b) { return ad::conv3d(tape, x, s, w, b); }
    V conv3d_transposed(V x, const ConvSpec& s, V w, V b) { return ad::conv3d_transposed(tape, x, s, w, b); }
    V group_norm(V x, int groups, double eps, V gamma, V beta) {
        return ad::group_norm(tape, x, groups, eps, gamma, beta);
    }
    V leaky_relu(V x, double slope) { return ad::leaky_relu(tape, x, slope); }
    V sigmoid(V x) { return ad::sigmoid(tape, x); }
    V softmax(V x, int axis) { return ad::softmax(tape, x, axis); }
    V add(V a, V b) { return ad::add(tape, a, b); }
    V mul(V a, V b) { return ad::mul(tape, a, b); }
    V concat_channels(V a, V b) { return ad::concat_channels(tape, a, b); }

    const Tensor& tensor(V v) const { return tape.value(v); }
};

} // namespace lka
