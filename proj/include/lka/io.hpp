#pragma once

#include <string>

#include <json.hpp>

#include "lka/augment.hpp"
#include "lka/lk_attention.hpp"
#include "lka/tensor.hpp"
#include "lka/unet3d.hpp"

namespace lka {

/// LKT tensor file: magic "LKT1", version u8 (=1), dtype u8
/// (0 f32 / 1 f64 / 2 u8), ndim u8, ndim x u64 little-endian dims, then the
/// row-major payload little-endian. Round trips are bitwise exact.
void write_tensor(const std::string& path, const Tensor& t);
Tensor read_tensor(const std::string& path);

// JSON codecs; every document carries schema_version.
nlohmann::json unet_config_to_json(const UNetConfig& c);
UNetConfig unet_config_from_json(const nlohmann::json& j);
UNetConfig load_unet_config(const std::string& path);
void save_unet_config(const std::string& path, const UNetConfig& c);

nlohmann::json augment_config_to_json(const AugmentConfig& c);
AugmentConfig augment_config_from_json(const nlohmann::json& j);
AugmentConfig load_augment_config(const std::string& path);

nlohmann::json plan_to_json(const LKAPlan& p);
nlohmann::json aug_plan_to_json(const AugPlan& p);

/// Weights archive: a directory holding manifest.json (config + tensor
/// index) and one .lkt file per named parameter.
void save_weights(const std::string& dir, UNet3D& net);
/// Rebuilds the network from the embedded config and loads every tensor.
UNet3D load_weights(const std::string& dir);

} // namespace lka
