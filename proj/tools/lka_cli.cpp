// Command-line front end: complexity accounting, decomposition planning,
// network forward/training on synthetic volumes, gradient checking,
// segmentation scoring, paired t-tests, and augmentation.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "lka/augment.hpp"
#include "lka/complexity.hpp"
#include "lka/eval_metrics.hpp"
#include "lka/io.hpp"
#include "lka/parallel.hpp"
#include "lka/unet3d.hpp"

using nlohmann::json;

namespace {

std::vector<int> parse_int_list(const std::string& csv, const char* what) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            out.push_back(std::stoi(tok));
        } catch (const std::exception&) {
            throw std::invalid_argument(std::string("bad ") + what + " list: " + csv);
        }
    }
    if (out.empty()) throw std::invalid_argument(std::string("empty ") + what + " list");
    return out;
}

std::array<double, 3> parse_spacing(const std::string& csv) {
    std::array<double, 3> sp{1, 1, 1};
    std::stringstream ss(csv);
    std::string tok;
    int i = 0;
    while (std::getline(ss, tok, ',') && i < 3) sp[static_cast<std::size_t>(i++)] = std::stod(tok);
    if (i != 3) throw std::invalid_argument("spacing needs three comma-separated values");
    return sp;
}

// "path" or "path:column" where column is a name or 0-based index.
std::vector<double> read_csv_column(const std::string& arg) {
    std::string path = arg;
    std::string col;
    const auto pos = arg.rfind(':');
    if (pos != std::string::npos && pos > 1) { // leave windows-style drives alone
        path = arg.substr(0, pos);
        col = arg.substr(pos + 1);
    }
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open " + path);

    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(std::move(cells));
    }
    if (rows.empty()) throw std::runtime_error("no data in " + path);

    auto is_number = [](const std::string& s) {
        char* end = nullptr;
        std::strtod(s.c_str(), &end);
        return end != s.c_str() && *end == '\0';
    };

    std::size_t col_idx = 0;
    std::size_t first_row = 0;
    const bool has_header = !rows[0].empty() && !is_number(rows[0][0]);
    if (has_header) first_row = 1;
    if (!col.empty()) {
        if (is_number(col)) {
            col_idx = static_cast<std::size_t>(std::stoul(col));
        } else {
            if (!has_header) throw std::runtime_error("column name given but " + path + " has no header");
            bool found = false;
            for (std::size_t i = 0; i < rows[0].size(); ++i)
                if (rows[0][i] == col) {
                    col_idx = i;
                    found = true;
                }
            if (!found) throw std::runtime_error("no column '" + col + "' in " + path);
        }
    }

    std::vector<double> values;
    for (std::size_t r = first_row; r < rows.size(); ++r) {
        if (col_idx >= rows[r].size()) throw std::runtime_error("short row in " + path);
        if (!is_number(rows[r][col_idx])) throw std::runtime_error("non-numeric cell in " + path);
        values.push_back(std::stod(rows[r][col_idx]));
    }
    return values;
}

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << text;
}

int cmd_complexity(const std::string& channels_csv, int kernel, int dilation, const std::string& spatial_csv,
                   const std::string& format, const std::string& out) {
    const auto channels = parse_int_list(channels_csv, "channels");
    std::int64_t h = 0, w = 0, d = 0;
    if (!spatial_csv.empty()) {
        const auto sp = parse_int_list(spatial_csv, "spatial");
        if (sp.size() != 3) throw std::invalid_argument("--spatial needs H,W,D");
        h = sp[0];
        w = sp[1];
        d = sp[2];
    }
    const auto rows = lka::table_report(channels, kernel, dilation, h, w, d);

    std::ostringstream os;
    if (format == "csv") {
        os << "channels,kernel,dilation,nprm_original,nprm_decomposed,ratio_percent";
        if (h > 0) os << ",flops_original,flops_decomposed";
        os << "\n";
        for (const auto& r : rows) {
            char ratio[32];
            std::snprintf(ratio, sizeof(ratio), "%.2f", r.ratio * 100.0);
            os << r.channels << ',' << r.kernel << ',' << r.dilation << ',' << r.nprm_original << ','
               << r.nprm_decomposed << ',' << ratio;
            if (h > 0) os << ',' << r.flops_original << ',' << r.flops_decomposed;
            os << "\n";
        }
    } else if (format == "json") {
        json j{{"schema_version", 1}, {"kernel", kernel}, {"dilation", dilation}};
        json jrows = json::array();
        for (const auto& r : rows) {
            json row{{"channels", r.channels},
                     {"nprm_original", r.nprm_original},
                     {"nprm_decomposed", r.nprm_decomposed},
                     {"nprm_original_display", lka::human_count(r.nprm_original)},
                     {"nprm_decomposed_display", lka::human_count(r.nprm_decomposed)},
                     {"ratio", r.ratio},
                     {"decomposition_beneficial", r.decomposition_beneficial}};
            if (h > 0) {
                row["flops_original"] = r.flops_original;
                row["flops_decomposed"] = r.flops_decomposed;
            }
            jrows.push_back(row);
        }
        j["rows"] = jrows;
        os << j.dump(2) << "\n";
    } else {
        throw std::invalid_argument("unknown format: " + format);
    }
    write_text(out, os.str());
    return 0;
}

int cmd_solve_dilation(int kernel, const std::string& format) {
    const auto sol = lka::solve_optimal_dilation(kernel);
    if (format == "json") {
        json j{{"schema_version", 1},
               {"kernel", kernel},
               {"continuous", sol.continuous_root},
               {"integer", sol.integer_optimum},
               {"clamped", sol.clamped}};
        std::cout << j.dump(2) << "\n";
    } else {
        std::printf("continuous=%.4f integer=%d%s\n", sol.continuous_root, sol.integer_optimum,
                    sol.clamped ? " clamped=1" : "");
    }
    return 0;
}

int cmd_plan(int kernel, int dilation, const std::string& out) {
    const auto plan = lka::plan_decomposition(kernel, dilation);
    write_text(out, lka::plan_to_json(plan).dump(2) + "\n");
    return 0;
}

int cmd_forward(const std::string& model, const std::string& weights, const std::string& input,
                const std::string& out, const std::string& dump_attention, std::uint64_t seed, bool logits) {
    lka::UNet3D net = [&] {
        if (!weights.empty()) return lka::load_weights(weights);
        if (model.empty()) throw std::invalid_argument("forward needs --weights or --model");
        lka::Rng rng(seed);
        return lka::build_unet(lka::load_unet_config(model), rng);
    }();

    const lka::Tensor x = lka::read_tensor(input);
    std::vector<std::pair<int, lka::Tensor>> attention;
    const auto heads = lka::unet_forward(net, x, dump_attention.empty() ? nullptr : &attention);

    const lka::Tensor result = logits ? heads[0] : lka::output_probabilities(net.config, heads[0]);
    lka::write_tensor(out, result);

    if (!dump_attention.empty()) {
        if (attention.empty())
            std::cerr << "warning: no attention modules in this variant; nothing dumped\n";
        for (const auto& [scale, att] : attention)
            lka::write_tensor(dump_attention + "_scale" + std::to_string(scale) + ".lkt", att);
    }
    std::printf("wrote %s (head 0 of %zu)\n", out.c_str(), heads.size());
    return 0;
}

int cmd_gradcheck(const std::string& target, int channels, const std::string& size_csv, std::uint64_t seed,
                  double eps) {
    using namespace lka;
    const auto size = parse_int_list(size_csv, "size");
    if (size.size() != 3) throw std::invalid_argument("--size needs H,W,D");
    const Shape vol{1, channels, size[0], size[1], size[2]};

    Rng rng(seed);
    ad::GradcheckOptions opt;
    opt.seed = seed;
    if (eps > 0) opt.eps = eps;

    ad::GradcheckReport rep;
    if (target == "lka") {
        LKAModule m = LKAModule::create(channels, plan_decomposition(6, 2), rng, DType::F64);
        Tensor x = uniform(rng, -1.0, 1.0, vol, DType::F64);
        rep = ad::gradcheck(
            [&m](ad::Tape& t, const std::vector<ad::Var>& xs) {
                TapeExec ex(t);
                return ad::sum_all(t, m.forward(ex, xs[0]).first);
            },
            {x}, opt);
    } else if (target == "unet-toy") {
        UNetConfig cfg = UNetConfig::toy(1, 2, 3, 2);
        UNet3D net = build_unet(cfg, rng, DType::F64);
        Tensor x = uniform(rng, -1.0, 1.0, {1, 1, 8, 8, 8}, DType::F64);
        auto [img, lab] = synthetic_sphere_volume(8, 0.3);
        (void)img;
        const Tensor target_onehot = one_hot(lab, 2, DType::F64);
        const Tensor wts = class_weights(lab, 2);
        auto params = net.parameters();
        std::vector<Tensor> point{x};
        for (Parameter* p : params) point.push_back(p->value);
        rep = ad::gradcheck(
            [&](ad::Tape& t, const std::vector<ad::Var>& leaves) {
                TapeExec ex(t);
                std::map<const Parameter*, ad::Var> overrides;
                for (std::size_t i = 0; i < params.size(); ++i) overrides[params[i]] = leaves[i + 1];
                ex.param_overrides = &overrides;
                auto heads = net.forward(ex, leaves[0]);
                return soft_dice_loss(t, ex.softmax(heads[0], 1), target_onehot, wts);
            },
            point, opt);
    } else {
        Tensor x = uniform(rng, -2.0, 2.0, vol, DType::F64);
        Tensor x2 = uniform(rng, 0.5, 2.5, vol, DType::F64);
        const std::uint64_t probe_seed = seed * 7919 + 13;
        auto weighted = [probe_seed](auto op) {
            return [op, probe_seed](ad::Tape& t, const std::vector<ad::Var>& xs) {
                ad::Var y = op(t, xs);
                Rng pr(probe_seed);
                Tensor probe = uniform(pr, 0.5, 1.5, t.value(y).shape(), DType::F64);
                return ad::sum_all(t, ad::mul(t, y, t.constant(probe)));
            };
        };
        if (target == "leaky-relu") {
            rep = ad::gradcheck(weighted([](ad::Tape& t, const std::vector<ad::Var>& v) {
                                    return ad::leaky_relu(t, v[0], 0.01);
                                }),
                                {x}, opt);
        } else if (target == "sigmoid") {
            rep = ad::gradcheck(weighted([](ad::Tape& t, const std::vector<ad::Var>& v) {
                                    return ad::sigmoid(t, v[0]);
                                }),
                                {x}, opt);
        } else if (target == "softmax") {
            rep = ad::gradcheck(weighted([](ad::Tape& t, const std::vector<ad::Var>& v) {
                                    return ad::softmax(t, v[0], 1);
                                }),
                                {x}, opt);
        } else if (target == "group-norm") {
            Tensor gamma = uniform(rng, 0.5, 1.5, {channels}, DType::F64);
            Tensor beta = uniform(rng, -0.5, 0.5, {channels}, DType::F64);
            const int groups = default_gn_groups(channels);
            rep = ad::gradcheck(weighted([groups](ad::Tape& t, const std::vector<ad::Var>& v) {
                                    return ad::group_norm(t, v[0], groups, 1e-5, v[1], v[2]);
                                }),
                                {x, gamma, beta}, opt);
        } else if (target == "mul") {
            rep = ad::gradcheck(weighted([](ad::Tape& t, const std::vector<ad::Var>& v) {
                                    return ad::mul(t, v[0], v[1]);
                                }),
                                {x, x2}, opt);
        } else if (target == "div") {
            rep = ad::gradcheck(weighted([](ad::Tape& t, const std::vector<ad::Var>& v) {
                                    return ad::div(t, v[0], v[1]);
                                }),
                                {x, x2}, opt);
        } else if (target == "conv3d") {
            ConvSpec cs = ConvSpec::conv(channels, 3, 3, 1, 1);
            ConvWeights cw = ConvWeights::fan_in_uniform(cs, rng, DType::F64);
            rep = ad::gradcheck(weighted([cs](ad::Tape& t, const std::vector<ad::Var>& v) {
                                    return ad::conv3d(t, v[0], cs, v[1], v[2]);
                                }),
                                {x, cw.kernel, cw.bias}, opt);
        } else if (target == "conv3d-transposed") {
            ConvSpec ds = ConvSpec::deconv(channels, 2, 4, 2, 1);
            ConvWeights cw = ConvWeights::fan_in_uniform(ds, rng, DType::F64);
            rep = ad::gradcheck(weighted([ds](ad::Tape& t, const std::vector<ad::Var>& v) {
                                    return ad::conv3d_transposed(t, v[0], ds, v[1], v[2]);
                                }),
                                {x, cw.kernel, cw.bias}, opt);
        } else if (target == "dice-loss" || target == "bce-dice") {
            Tensor labels = Tensor::zeros({1, 1, size[0], size[1], size[2]}, DType::U8);
            for (std::int64_t i = 0; i < labels.numel(); i += 3) labels.set(i, 1.0);
            const Tensor target_onehot = one_hot(labels, channels, DType::F64);
            if (target == "dice-loss") {
                const Tensor wts = class_weights(labels, channels);
                rep = ad::gradcheck(
                    [&](ad::Tape& t, const std::vector<ad::Var>& v) {
                        return soft_dice_loss(t, ad::softmax(t, v[0], 1), target_onehot, wts);
                    },
                    {x}, opt);
            } else {
                rep = ad::gradcheck(
                    [&](ad::Tape& t, const std::vector<ad::Var>& v) {
                        return bce_dice_loss(t, v[0], target_onehot);
                    },
                    {x}, opt);
            }
        } else {
            throw std::invalid_argument("unknown gradcheck target: " + target);
        }
    }

    std::printf("target=%s max_rel_err=%.6e coords_tested=%lld coords_skipped=%lld\n", target.c_str(),
                rep.max_rel_err, static_cast<long long>(rep.coords_tested),
                static_cast<long long>(rep.coords_skipped));
    return rep.max_rel_err <= 1e-4 ? 0 : 2;
}

int cmd_train_toy(const std::string& config_path, const std::string& variant, int steps, std::uint64_t seed,
                  double lr, int volume_size, double radius_frac, const std::string& out_history,
                  const std::string& out_weights) {
    using namespace lka;
    UNetConfig cfg;
    if (!config_path.empty()) {
        cfg = load_unet_config(config_path);
    } else {
        UNetConfig::Variant v = UNetConfig::Variant::Mid;
        if (variant == "base") v = UNetConfig::Variant::Base;
        else if (variant == "full") v = UNetConfig::Variant::Full;
        else if (variant == "mid") v = UNetConfig::Variant::Mid;
        else throw std::invalid_argument("unknown variant: " + variant);
        cfg = UNetConfig::toy(1, 2, 3, 8, v);
    }

    Rng rng(seed);
    UNet3D net = build_unet(cfg, rng);
    auto data = synthetic_sphere_volume(volume_size, radius_frac);

    TrainOptions opts;
    opts.lr = lr;
    opts.steps = steps;
    const auto history = train_toy(net, {data}, opts);

    if (!out_history.empty()) {
        std::ostringstream os;
        os << "step,loss,dice\n";
        for (const auto& rec : history) {
            char line[96];
            std::snprintf(line, sizeof(line), "%d,%.10g,%.10g\n", rec.step, rec.loss, rec.dice);
            os << line;
        }
        write_text(out_history, os.str());
    }
    if (!out_weights.empty()) save_weights(out_weights, net);

    const auto& last = history.back();
    std::printf("steps=%d final_loss=%.6f final_dice=%.4f params=%lld\n", steps, last.loss, last.dice,
                static_cast<long long>(net.param_count()));
    return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path, const std::string& classes_csv,
             const std::string& spacing_csv, bool brats_penalty, const std::string& format,
             const std::string& out) {
    using namespace lka;
    const Tensor pred = read_tensor(pred_path);
    const Tensor gt = read_tensor(gt_path);
    const auto classes = parse_int_list(classes_csv, "classes");
    const auto spacing = parse_spacing(spacing_csv);
    std::optional<PenaltyRule> penalty;
    if (brats_penalty) penalty = PenaltyRule{};
    const CaseReport report = evaluate_case(pred, gt, classes, penalty, spacing);

    std::ostringstream os;
    if (format == "csv") {
        os << "class,dice,hd95,empty_gt,empty_pred,penalty_applied\n";
        for (const auto& r : report.classes) {
            char dice[32];
            std::snprintf(dice, sizeof(dice), "%.6f", r.dice);
            os << r.cls << ',' << dice << ',';
            if (r.has_hd95) {
                char hd[32];
                std::snprintf(hd, sizeof(hd), "%.6f", r.hd95);
                os << hd;
            }
            os << ',' << (r.empty_gt ? 1 : 0) << ',' << (r.empty_pred ? 1 : 0) << ','
               << (r.penalty_applied ? 1 : 0) << "\n";
        }
    } else if (format == "json") {
        json rows = json::array();
        for (const auto& r : report.classes) {
            json row{{"class", r.cls},      {"dice", r.dice},
                     {"empty_gt", r.empty_gt}, {"empty_pred", r.empty_pred},
                     {"penalty_applied", r.penalty_applied}};
            if (r.has_hd95)
                row["hd95"] = r.hd95;
            else
                row["hd95"] = nullptr;
            rows.push_back(row);
        }
        os << json{{"schema_version", 1}, {"classes", rows}}.dump(2) << "\n";
    } else {
        throw std::invalid_argument("unknown format: " + format);
    }
    write_text(out, os.str());
    return 0;
}

int cmd_ttest(const std::string& a_arg, const std::string& b_arg, const std::string& format) {
    const auto a = read_csv_column(a_arg);
    const auto b = read_csv_column(b_arg);
    const auto r = lka::paired_t_test(a, b);
    if (format == "json") {
        json j{{"schema_version", 1}, {"n", r.n}, {"zero_variance", r.zero_variance}};
        j["t"] = r.zero_variance ? json(nullptr) : json(r.t);
        j["p"] = r.zero_variance ? json(nullptr) : json(r.p);
        std::cout << j.dump(2) << "\n";
    } else if (r.zero_variance) {
        std::printf("n=%d zero_variance=1\n", r.n);
    } else {
        std::printf("t=%.6f p=%.6f n=%d zero_variance=0\n", r.t, r.p, r.n);
    }
    return 0;
}

int cmd_augment(const std::string& input, const std::string& labels, const std::string& config_path,
                std::uint64_t seed, const std::string& out_prefix) {
    using namespace lka;
    const Tensor image = read_tensor(input);
    const Tensor labs = read_tensor(labels);
    AugmentConfig cfg;
    if (!config_path.empty()) cfg = load_augment_config(config_path);
    Rng rng(seed);
    AugPlan plan;
    auto [img2, lab2] = augment_pair(image, labs, cfg, rng, &plan);
    write_tensor(out_prefix + "_image.lkt", img2);
    write_tensor(out_prefix + "_labels.lkt", lab2);
    write_text(out_prefix + "_plan.json", aug_plan_to_json(plan).dump(2) + "\n");
    std::printf("wrote %s_image.lkt %s_labels.lkt %s_plan.json\n", out_prefix.c_str(), out_prefix.c_str(),
                out_prefix.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Large-kernel attention toolkit for 3D volumes"};
    app.require_subcommand(1);
    bool serial = false;
    app.add_flag("--serial", serial, "Run all kernels single-threaded");

    // complexity
    auto* c = app.add_subcommand("complexity", "Parameter/FLOP accounting for a decomposed LK convolution");
    std::string c_channels = "32,64,128,256,512", c_spatial, c_format = "csv", c_out;
    int c_kernel = 21, c_dilation = 3;
    c->add_option("--channels", c_channels, "Comma-separated channel counts");
    c->add_option("--kernel", c_kernel, "Equal LK kernel size");
    c->add_option("--dilation", c_dilation, "Dilation (must divide kernel)");
    c->add_option("--spatial", c_spatial, "H,W,D for FLOP columns");
    c->add_option("--format", c_format, "csv|json");
    c->add_option("--out", c_out, "Output file (default stdout)");

    // solve-dilation
    auto* s = app.add_subcommand("solve-dilation", "Optimal dilation for a kernel size");
    int s_kernel = 21;
    std::string s_format = "text";
    s->add_option("--kernel", s_kernel, "Kernel size");
    s->add_option("--format", s_format, "text|json");

    // plan
    auto* p = app.add_subcommand("plan", "Emit the decomposition plan as JSON");
    int p_kernel = 21, p_dilation = 3;
    std::string p_out;
    p->add_option("--kernel", p_kernel, "Equal LK kernel size");
    p->add_option("--dilation", p_dilation, "Dilation (must divide kernel)");
    p->add_option("--out", p_out, "Output file (default stdout)");

    // forward
    auto* f = app.add_subcommand("forward", "Run a network forward pass on an LKT volume");
    std::string f_model, f_weights, f_input, f_out = "out.lkt", f_dump;
    std::uint64_t f_seed = 0;
    bool f_logits = false;
    f->add_option("--model", f_model, "Network config JSON (weights drawn from --seed)");
    f->add_option("--weights", f_weights, "Weights directory (embeds its config)");
    f->add_option("--input", f_input, "Input volume (.lkt)")->required();
    f->add_option("--out", f_out, "Output volume (.lkt)");
    f->add_option("--dump-attention", f_dump, "Prefix for per-scale attention map dumps");
    f->add_option("--seed", f_seed, "Weight init seed when no --weights given");
    f->add_flag("--logits", f_logits, "Write raw logits instead of probabilities");

    // gradcheck
    auto* g = app.add_subcommand("gradcheck", "Finite-difference check of reverse-mode gradients");
    std::string g_target = "lka", g_size = "6,6,6";
    int g_channels = 4;
    std::uint64_t g_seed = 1;
    double g_eps = 0.0;
    g->add_option("--target", g_target,
                  "conv3d|conv3d-transposed|group-norm|leaky-relu|sigmoid|softmax|mul|div|dice-loss|bce-dice|lka|unet-toy");
    g->add_option("--channels", g_channels, "Channel count for the probe tensor");
    g->add_option("--size", g_size, "H,W,D of the probe tensor");
    g->add_option("--seed", g_seed, "Random seed");
    g->add_option("--eps", g_eps, "Finite-difference step (default 1e-4)");

    // train-toy
    auto* t = app.add_subcommand("train-toy", "Overfit a toy network on a synthetic sphere volume");
    std::string t_config, t_variant = "mid", t_history, t_weights;
    int t_steps = 300, t_size = 32;
    std::uint64_t t_seed = 0;
    double t_lr = 3e-4, t_radius = 0.3;
    t->add_option("--config", t_config, "Network config JSON (overrides --variant)");
    t->add_option("--variant", t_variant, "base|mid|full (toy ladder 8/16/32)");
    t->add_option("--steps", t_steps, "Optimization steps");
    t->add_option("--seed", t_seed, "Seed for init");
    t->add_option("--lr", t_lr, "Adam learning rate");
    t->add_option("--size", t_size, "Cube edge of the synthetic volume");
    t->add_option("--radius-frac", t_radius, "Sphere radius as a fraction of the edge");
    t->add_option("--out-history", t_history, "Per-step loss/dice CSV");
    t->add_option("--out-weights", t_weights, "Weights directory to write");

    // eval
    auto* e = app.add_subcommand("eval", "Dice/HD95 report for a labeled volume pair");
    std::string e_pred, e_gt, e_classes = "1", e_spacing = "1,1,1", e_format = "csv", e_out;
    bool e_penalty = false;
    e->add_option("--pred", e_pred, "Predicted labels (.lkt)")->required();
    e->add_option("--gt", e_gt, "Ground-truth labels (.lkt)")->required();
    e->add_option("--classes", e_classes, "Comma-separated class ids");
    e->add_option("--spacing", e_spacing, "Voxel spacing sx,sy,sz");
    e->add_flag("--brats-penalty", e_penalty, "Score false-positive empty-GT classes as dice 0 / hd95 373.13");
    e->add_option("--format", e_format, "csv|json");
    e->add_option("--out", e_out, "Output file (default stdout)");

    // ttest
    auto* tt = app.add_subcommand("ttest", "Two-sided paired t-test of two CSV columns");
    std::string tt_a, tt_b, tt_format = "text";
    tt->add_option("--a", tt_a, "CSV file (optionally path:column)")->required();
    tt->add_option("--b", tt_b, "CSV file (optionally path:column)")->required();
    tt->add_option("--format", tt_format, "text|json");

    // augment
    auto* a = app.add_subcommand("augment", "Apply the randomized augmentation pipeline");
    std::string a_input, a_labels, a_config, a_prefix = "augmented";
    std::uint64_t a_seed = 0;
    a->add_option("--input", a_input, "Image volume (.lkt, float32)")->required();
    a->add_option("--labels", a_labels, "Label volume (.lkt, uint8)")->required();
    a->add_option("--config", a_config, "Augmentation config JSON (defaults otherwise)");
    a->add_option("--seed", a_seed, "Seed for the sampling plan");
    a->add_option("--out-prefix", a_prefix, "Prefix for _image.lkt/_labels.lkt/_plan.json");

    try {
        app.parse(argc, argv);
        if (serial) lka::set_parallel_enabled(false);

        if (*c) return cmd_complexity(c_channels, c_kernel, c_dilation, c_spatial, c_format, c_out);
        if (*s) return cmd_solve_dilation(s_kernel, s_format);
        if (*p) return cmd_plan(p_kernel, p_dilation, p_out);
        if (*f) return cmd_forward(f_model, f_weights, f_input, f_out, f_dump, f_seed, f_logits);
        if (*g) return cmd_gradcheck(g_target, g_channels, g_size, g_seed, g_eps);
        if (*t) return cmd_train_toy(t_config, t_variant, t_steps, t_seed, t_lr, t_size, t_radius, t_history,
                                     t_weights);
        if (*e) return cmd_eval(e_pred, e_gt, e_classes, e_spacing, e_penalty, e_format, e_out);
        if (*tt) return cmd_ttest(tt_a, tt_b, tt_format);
        if (*a) return cmd_augment(a_input, a_labels, a_config, a_seed, a_prefix);
        return 1;
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? 0 : 1;
    } catch (const std::invalid_argument& err) {
        std::cerr << "usage error: " << err.what() << "\n";
        return 1;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 2;
    }
}
