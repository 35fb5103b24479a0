#include "lka/io.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace lka {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void put_u64_le(std::ofstream& os, std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t get_u64_le(std::ifstream& is) {
    unsigned char buf[8];
    is.read(reinterpret_cast<char*>(buf), 8);
    if (!is) throw std::runtime_error("lkt: truncated header");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return v;
}

constexpr char kMagic[4] = {'L', 'K', 'T', '1'};

} // namespace

void write_tensor(const std::string& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("lkt: cannot open for writing: " + path);
    os.write(kMagic, 4);
    const unsigned char version = 1;
    const auto dtype = static_cast<unsigned char>(t.dtype());
    const auto ndim = static_cast<unsigned char>(t.ndim());
    os.put(static_cast<char>(version));
    os.put(static_cast<char>(dtype));
    os.put(static_cast<char>(ndim));
    for (auto d : t.shape()) put_u64_le(os, static_cast<std::uint64_t>(d));

    const std::size_t esz = dtype_size(t.dtype());
    if constexpr (std::endian::native == std::endian::little) {
        auto bytes = t.bytes();
        os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    } else {
        auto bytes = t.bytes();
        std::vector<char> buf(bytes.size());
        for (std::size_t i = 0; i < bytes.size(); i += esz)
            for (std::size_t b = 0; b < esz; ++b)
                buf[i + b] = static_cast<char>(bytes[i + esz - 1 - b]);
        os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    }
    if (!os) throw std::runtime_error("lkt: write failed: " + path);
}

Tensor read_tensor(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("lkt: cannot open: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("lkt: bad magic in " + path);
    const int version = is.get();
    if (version != 1) throw std::runtime_error("lkt: unsupported version " + std::to_string(version));
    const int dtype_code = is.get();
    if (dtype_code < 0 || dtype_code > 2)
        throw std::runtime_error("lkt: unsupported dtype code " + std::to_string(dtype_code));
    const int ndim = is.get();
    if (ndim < 1 || ndim > 32) throw std::runtime_error("lkt: bad ndim " + std::to_string(ndim));
    Shape shape;
    for (int i = 0; i < ndim; ++i) shape.push_back(static_cast<std::int64_t>(get_u64_le(is)));

    Tensor t = Tensor::zeros(shape, static_cast<DType>(dtype_code));
    auto bytes = t.bytes();
    is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (is.gcount() != static_cast<std::streamsize>(bytes.size()))
        throw std::runtime_error("lkt: truncated payload in " + path);
    char extra;
    if (is.read(&extra, 1)) throw std::runtime_error("lkt: trailing bytes in " + path);
    if constexpr (std::endian::native != std::endian::little) {
        const std::size_t esz = dtype_size(t.dtype());
        for (std::size_t i = 0; i < bytes.size(); i += esz)
            for (std::size_t b = 0; b < esz / 2; ++b) std::swap(bytes[i + b], bytes[i + esz - 1 - b]);
    }
    return t;
}

nlohmann::json unet_config_to_json(const UNetConfig& c) {
    const char* variant = c.variant == UNetConfig::Variant::Base   ? "base"
                          : c.variant == UNetConfig::Variant::Full ? "full"
                                                                   : "mid";
    return json{
        {"schema_version", 1},
        {"in_channels", c.in_channels},
        {"out_classes", c.out_classes},
        {"num_scales", c.num_scales},
        {"base_width", c.base_width},
        {"max_width", c.max_width},
        {"attention_variant", variant},
        {"mid_plan", {{"kernel", c.mid_plan.kernel}, {"dilation", c.mid_plan.dilation}}},
        {"deep_supervision", c.deep_supervision},
        {"output_nonlinearity", c.output_nl == UNetConfig::OutputNL::Softmax ? "softmax" : "sigmoid"},
        {"gn_groups", c.gn_groups},
        {"lrelu_slope", c.lrelu_slope},
    };
}

UNetConfig unet_config_from_json(const nlohmann::json& j) {
    UNetConfig c;
    c.in_channels = j.value("in_channels", c.in_channels);
    c.out_classes = j.value("out_classes", c.out_classes);
    c.num_scales = j.value("num_scales", c.num_scales);
    c.base_width = j.value("base_width", c.base_width);
    c.max_width = j.value("max_width", c.max_width);
    const std::string variant = j.value("attention_variant", std::string("mid"));
    if (variant == "base")
        c.variant = UNetConfig::Variant::Base;
    else if (variant == "full")
        c.variant = UNetConfig::Variant::Full;
    else if (variant == "mid")
        c.variant = UNetConfig::Variant::Mid;
    else
        throw std::invalid_argument("unet config: unknown attention_variant '" + variant + "'");
    if (j.contains("mid_plan")) {
        c.mid_plan.kernel = j["mid_plan"].value("kernel", c.mid_plan.kernel);
        c.mid_plan.dilation = j["mid_plan"].value("dilation", c.mid_plan.dilation);
    }
    c.deep_supervision = j.value("deep_supervision", c.deep_supervision);
    const std::string nl = j.value("output_nonlinearity", std::string("softmax"));
    if (nl == "softmax")
        c.output_nl = UNetConfig::OutputNL::Softmax;
    else if (nl == "sigmoid")
        c.output_nl = UNetConfig::OutputNL::Sigmoid;
    else
        throw std::invalid_argument("unet config: unknown output_nonlinearity '" + nl + "'");
    c.gn_groups = j.value("gn_groups", c.gn_groups);
    c.lrelu_slope = j.value("lrelu_slope", c.lrelu_slope);
    c.validate();
    return c;
}

UNetConfig load_unet_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config: " + path);
    json j;
    is >> j;
    return unet_config_from_json(j);
}

void save_unet_config(const std::string& path, const UNetConfig& c) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write config: " + path);
    os << unet_config_to_json(c).dump(2) << "\n";
}

nlohmann::json augment_config_to_json(const AugmentConfig& c) {
    return json{
        {"schema_version", 1},
        {"brightness", {{"probability", c.brightness.probability}, {"range", {c.brightness.lo, c.brightness.hi}}}},
        {"contrast", {{"probability", c.contrast.probability}, {"range", {c.contrast.lo, c.contrast.hi}}}},
        {"gaussian_noise",
         {{"probability", c.gaussian_noise.probability}, {"variance_range", {c.gaussian_noise.lo, c.gaussian_noise.hi}}}},
        {"gaussian_blur",
         {{"probability", c.gaussian_blur.probability}, {"sigma_range", {c.gaussian_blur.lo, c.gaussian_blur.hi}}}},
        {"gamma_augmentation", {{"probability", c.gamma.probability}, {"gamma_range", {c.gamma.lo, c.gamma.hi}}}},
        {"scaling", {{"probability", c.scaling.probability}, {"range", {c.scaling.lo, c.scaling.hi}}}},
        {"rotation", {{"probability", c.rotation.probability}, {"degrees_range", {c.rotation.lo, c.rotation.hi}}}},
        {"elastic_transform", {{"probability", c.elastic.probability}, {"alpha_range", {c.elastic.lo, c.elastic.hi}}}},
        {"flipping", {{"probability", c.flip_probability}}},
    };
}

namespace {
MethodCfg method_from_json(const json& j, const char* range_key, const MethodCfg& dflt) {
    MethodCfg m = dflt;
    m.probability = j.value("probability", dflt.probability);
    if (j.contains(range_key)) {
        const auto& r = j[range_key];
        m.lo = r.at(0).get<double>();
        m.hi = r.at(1).get<double>();
    }
    return m;
}
} // namespace

AugmentConfig augment_config_from_json(const nlohmann::json& j) {
    AugmentConfig c;
    if (j.contains("brightness")) c.brightness = method_from_json(j["brightness"], "range", c.brightness);
    if (j.contains("contrast")) c.contrast = method_from_json(j["contrast"], "range", c.contrast);
    if (j.contains("gaussian_noise"))
        c.gaussian_noise = method_from_json(j["gaussian_noise"], "variance_range", c.gaussian_noise);
    if (j.contains("gaussian_blur"))
        c.gaussian_blur = method_from_json(j["gaussian_blur"], "sigma_range", c.gaussian_blur);
    if (j.contains("gamma_augmentation"))
        c.gamma = method_from_json(j["gamma_augmentation"], "gamma_range", c.gamma);
    if (j.contains("scaling")) c.scaling = method_from_json(j["scaling"], "range", c.scaling);
    if (j.contains("rotation")) c.rotation = method_from_json(j["rotation"], "degrees_range", c.rotation);
    if (j.contains("elastic_transform"))
        c.elastic = method_from_json(j["elastic_transform"], "alpha_range", c.elastic);
    if (j.contains("flipping")) c.flip_probability = j["flipping"].value("probability", c.flip_probability);
    c.validate();
    return c;
}

AugmentConfig load_augment_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open augment config: " + path);
    json j;
    is >> j;
    return augment_config_from_json(j);
}

nlohmann::json plan_to_json(const LKAPlan& p) {
    return json{
        {"schema_version", 1},
        {"equal_kernel", p.equal_kernel},
        {"dilation", p.dilation},
        {"dw", {{"kernel", p.dw_kernel}, {"padding", p.dw_padding}}},
        {"dwd", {{"kernel", p.dwd_kernel}, {"dilation", p.dwd_dilation}, {"padding", p.dwd_padding}}},
        {"receptive_field", effective_receptive_field(p)},
    };
}

nlohmann::json aug_plan_to_json(const AugPlan& p) {
    json j{{"schema_version", 1}};
    if (p.brightness_factor) j["brightness_factor"] = *p.brightness_factor;
    if (p.contrast_factor) j["contrast_factor"] = *p.contrast_factor;
    if (p.noise_variance) j["noise_variance"] = *p.noise_variance;
    if (p.blur_sigma) j["blur_sigma"] = *p.blur_sigma;
    if (p.gamma) j["gamma"] = *p.gamma;
    if (p.scale_factor) j["scale_factor"] = *p.scale_factor;
    if (p.rotation_deg) j["rotation_deg"] = *p.rotation_deg;
    if (p.elastic_alpha) j["elastic_alpha"] = *p.elastic_alpha;
    j["flip_axes"] = p.flip_axes;
    return j;
}

void save_weights(const std::string& dir, UNet3D& net) {
    fs::create_directories(dir);
    json manifest{{"schema_version", 1},
                  {"format", "lkt-weights"},
                  {"dtype", dtype_name(net.dtype)},
                  {"config", unet_config_to_json(net.config)}};
    json tensors = json::array();
    int idx = 0;
    for (Parameter* p : net.parameters()) {
        char fname[64];
        std::snprintf(fname, sizeof(fname), "t%04d.lkt", idx++);
        write_tensor((fs::path(dir) / fname).string(), p->value);
        tensors.push_back(json{{"name", p->name}, {"file", fname}});
    }
    manifest["tensors"] = tensors;
    std::ofstream os(fs::path(dir) / "manifest.json");
    if (!os) throw std::runtime_error("cannot write manifest in " + dir);
    os << manifest.dump(2) << "\n";
}

UNet3D load_weights(const std::string& dir) {
    std::ifstream is(fs::path(dir) / "manifest.json");
    if (!is) throw std::runtime_error("cannot open manifest in " + dir);
    json manifest;
    is >> manifest;
    if (manifest.value("format", std::string()) != "lkt-weights")
        throw std::runtime_error("not a weights directory: " + dir);
    const UNetConfig config = unet_config_from_json(manifest.at("config"));
    const DType dtype = dtype_from_name(manifest.value("dtype", std::string("float32")));

    Rng rng(0);
    UNet3D net = build_unet(config, rng, dtype);
    auto params = net.parameters();
    const auto& tensors = manifest.at("tensors");
    if (tensors.size() != params.size())
        throw std::runtime_error("weights manifest lists " + std::to_string(tensors.size()) +
                                 " tensors, network has " + std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& entry = tensors.at(i);
        if (entry.at("name").get<std::string>() != params[i]->name)
            throw std::runtime_error("weights manifest name mismatch at index " + std::to_string(i));
        Tensor t = read_tensor((fs::path(dir) / entry.at("file").get<std::string>()).string());
        if (t.shape() != params[i]->value.shape() || t.dtype() != params[i]->value.dtype())
            throw std::runtime_error("weights tensor mismatch for " + params[i]->name);
        params[i]->value = std::move(t);
    }
    return net;
}

} // namespace lka
