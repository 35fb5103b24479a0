#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "lka/io.hpp"

using namespace lka;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("lka_test_" + std::to_string(::getpid()) + "_" +
                                            std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

} // namespace

TEST_SUITE("io") {

TEST_CASE("lkt round trip is bitwise exact") {
    TempDir tmp;
    Rng rng(1);
    for (DType dt : {DType::F32, DType::F64, DType::U8}) {
        Tensor t = dt == DType::U8 ? Tensor::zeros({3, 4, 5}, DType::U8) : uniform(rng, -2.0, 2.0, {3, 4, 5}, dt);
        if (dt == DType::U8)
            for (std::int64_t i = 0; i < t.numel(); ++i) t.set(i, static_cast<double>(i % 251));
        const std::string path = (tmp.path / "t.lkt").string();
        write_tensor(path, t);
        Tensor back = read_tensor(path);
        CHECK(bitwise_equal(t, back));
    }
}

TEST_CASE("lkt rejects corrupted files") {
    TempDir tmp;
    Rng rng(2);
    Tensor t = uniform(rng, -1.0, 1.0, {2, 3});
    const std::string path = (tmp.path / "t.lkt").string();
    write_tensor(path, t);

    // truncate payload by one byte
    const auto full = fs::file_size(path);
    fs::resize_file(path, full - 1);
    CHECK_THROWS_WITH_AS(read_tensor(path), doctest::Contains("truncated"), std::runtime_error);

    // bad magic
    {
        std::ofstream os(path, std::ios::binary);
        os << "NOPE" << std::string(32, '\0');
    }
    CHECK_THROWS_WITH_AS(read_tensor(path), doctest::Contains("magic"), std::runtime_error);

    // unsupported dtype code
    write_tensor(path, t);
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(5);
        f.put(7);
    }
    CHECK_THROWS_WITH_AS(read_tensor(path), doctest::Contains("dtype"), std::runtime_error);

    // unsupported version
    write_tensor(path, t);
    {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(4);
        f.put(9);
    }
    CHECK_THROWS_WITH_AS(read_tensor(path), doctest::Contains("version"), std::runtime_error);
}

TEST_CASE("unet config json round trip") {
    UNetConfig c = UNetConfig::toy(2, 3, 4, 8, UNetConfig::Variant::Full);
    c.output_nl = UNetConfig::OutputNL::Sigmoid;
    c.deep_supervision = false;
    const auto j = unet_config_to_json(c);
    CHECK(j.at("schema_version") == 1);
    const UNetConfig back = unet_config_from_json(j);
    CHECK(back.in_channels == 2);
    CHECK(back.out_classes == 3);
    CHECK(back.num_scales == 4);
    CHECK(back.base_width == 8);
    CHECK(back.variant == UNetConfig::Variant::Full);
    CHECK(back.output_nl == UNetConfig::OutputNL::Sigmoid);
    CHECK_FALSE(back.deep_supervision);

    auto bad = j;
    bad["attention_variant"] = "bogus";
    CHECK_THROWS_AS(unet_config_from_json(bad), std::invalid_argument);
}

TEST_CASE("augment config json round trip mirrors the method table") {
    AugmentConfig c;
    const auto j = augment_config_to_json(c);
    CHECK(j.at("brightness").at("probability") == doctest::Approx(0.30));
    CHECK(j.at("gaussian_noise").at("variance_range")[1] == doctest::Approx(1.0));
    CHECK(j.at("elastic_transform").at("alpha_range")[0] == doctest::Approx(5.0));
    const AugmentConfig back = augment_config_from_json(j);
    CHECK(back.gaussian_blur.lo == doctest::Approx(0.5));
    CHECK(back.flip_probability == doctest::Approx(0.5));

    auto partial = nlohmann::json{{"brightness", {{"probability", 0.9}}}};
    const AugmentConfig merged = augment_config_from_json(partial);
    CHECK(merged.brightness.probability == doctest::Approx(0.9));
    CHECK(merged.contrast.probability == doctest::Approx(0.15)); // default kept
}

TEST_CASE("weights archive round trips a toy network") {
    TempDir tmp;
    Rng rng(3);
    UNet3D net = build_unet(UNetConfig::toy(1, 2, 3, 4, UNetConfig::Variant::Mid), rng);
    Tensor x = uniform(rng, -1.0, 1.0, {1, 1, 8, 8, 8});
    const auto before = unet_forward(net, x);

    const std::string dir = (tmp.path / "weights").string();
    save_weights(dir, net);
    UNet3D loaded = load_weights(dir);
    const auto after = unet_forward(loaded, x);
    REQUIRE(before.size() == after.size());
    CHECK(bitwise_equal(before[0], after[0]));

    // tamper with one tensor so shape validation trips
    Rng rng2(4);
    write_tensor((fs::path(dir) / "t0000.lkt").string(), uniform(rng2, 0.0, 1.0, {2, 2}));
    CHECK_THROWS_AS(load_weights(dir), std::runtime_error);
}

TEST_CASE("lka plan json") {
    const auto j = plan_to_json(plan_decomposition(21, 3));
    CHECK(j.at("dw").at("kernel") == 5);
    CHECK(j.at("dwd").at("padding") == 9);
    CHECK(j.at("receptive_field") == 23);
    CHECK(j.at("schema_version") == 1);
}

} // TEST_SUITE
