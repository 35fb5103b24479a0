#include "lka/lk_attention.hpp"

#include "lka/exec.hpp"

namespace lka {

LKAPlan plan_decomposition(int equal_kernel, int dilation) {
    if (equal_kernel < 1 || dilation < 1)
        throw std::invalid_argument("plan_decomposition: kernel and dilation must be >= 1");
    if (equal_kernel % dilation != 0)
        throw std::invalid_argument("plan_decomposition: dilation " + std::to_string(dilation) +
                                    " does not divide kernel " + std::to_string(equal_kernel));
    LKAPlan p;
    p.equal_kernel = equal_kernel;
    p.dilation = dilation;
    p.dw_kernel = 2 * dilation - 1;
    p.dwd_kernel = equal_kernel / dilation;
    p.dwd_dilation = dilation;
    p.dw_padding = (p.dw_kernel - 1) / 2;
    const int dwd_pad2 = dilation * (p.dwd_kernel - 1);
    if (dwd_pad2 % 2 != 0)
        throw std::invalid_argument("plan_decomposition: no symmetric size-preserving padding for K=" +
                                    std::to_string(equal_kernel) + ", d=" + std::to_string(dilation));
    p.dwd_padding = dwd_pad2 / 2;
    return p;
}

int effective_receptive_field(const LKAPlan& plan) { return plan.equal_kernel + plan.dilation - 1; }

LKAPlan plan_for_scale(int scale) {
    switch (scale) {
    case 0: return plan_decomposition(21, 3);
    case 1: return plan_decomposition(15, 3);
    case 2: return plan_decomposition(10, 2);
    default: return plan_decomposition(6, 2);
    }
}

LKAModule LKAModule::create(int channels, const LKAPlan& plan, Rng& rng, DType dtype, int gn_groups,
                            const std::string& name_prefix) {
    if (channels < 1) throw std::invalid_argument("LKAModule: channels must be >= 1");
    LKAModule m;
    m.plan = plan;
    m.channels = channels;
    m.gn_groups = gn_groups > 0 ? gn_groups : default_gn_groups(channels);
    if (channels % m.gn_groups != 0)
        throw std::invalid_argument("LKAModule: channels not divisible by gn_groups");

    m.dwd_spec = ConvSpec::conv(channels, channels, plan.dwd_kernel, 1, plan.dwd_padding, plan.dwd_dilation,
                                channels);
    m.dw_spec = ConvSpec::conv(channels, channels, plan.dw_kernel, 1, plan.dw_padding, 1, channels);
    m.pw_spec = ConvSpec::conv(channels, channels, 1, 1, 0, 1, 1);

    m.gn_gamma = Parameter(name_prefix + ".gn.gamma", Tensor::full(Shape{channels}, dtype, 1.0));
    m.gn_beta = Parameter(name_prefix + ".gn.beta", Tensor::zeros(Shape{channels}, dtype));

    auto wdwd = ConvWeights::fan_in_uniform(m.dwd_spec, rng, dtype);
    auto wdw = ConvWeights::fan_in_uniform(m.dw_spec, rng, dtype);
    auto wpw = ConvWeights::fan_in_uniform(m.pw_spec, rng, dtype);
    m.dwd_w = Parameter(name_prefix + ".dwd.weight", std::move(wdwd.kernel));
    m.dwd_b = Parameter(name_prefix + ".dwd.bias", std::move(wdwd.bias));
    m.dw_w = Parameter(name_prefix + ".dw.weight", std::move(wdw.kernel));
    m.dw_b = Parameter(name_prefix + ".dw.bias", std::move(wdw.bias));
    m.pw_w = Parameter(name_prefix + ".pw.weight", std::move(wpw.kernel));
    m.pw_b = Parameter(name_prefix + ".pw.bias", std::move(wpw.bias));
    return m;
}

std::int64_t LKAModule::conv_param_count() const {
    return dwd_w.numel() + dwd_b.numel() + dw_w.numel() + dw_b.numel() + pw_w.numel() + pw_b.numel();
}

std::int64_t LKAModule::total_param_count() const {
    return conv_param_count() + gn_gamma.numel() + gn_beta.numel();
}

std::vector<Parameter*> LKAModule::parameters() {
    return {&gn_gamma, &gn_beta, &dwd_w, &dwd_b, &dw_w, &dw_b, &pw_w, &pw_b};
}

std::pair<Tensor, Tensor> lka_forward(LKAModule& m, const Tensor& x) {
    EagerExec ex;
    auto [out, att] = m.forward(ex, &x);
    return {*out, *att};
}

} // namespace lka
