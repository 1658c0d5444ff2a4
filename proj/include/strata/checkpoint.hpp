#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>
#include <torch/torch.h>

namespace strata {

std::string sha256_hex(std::string_view bytes);

/// SHA-256 over every parameter and buffer (name, shape, float32 bytes).
std::string parameter_hash(const torch::nn::Module& module);

/// Writes `manifest.json` plus one little-endian float32 blob per tensor.
/// `extra` keys are merged into the manifest.
void save_checkpoint(const torch::nn::Module& module, const std::filesystem::path& dir,
                     const nlohmann::json& extra = nlohmann::json::object());

/// Loads tensors by name into an already-constructed module of matching shape.
/// Returns the manifest.
nlohmann::json load_checkpoint(torch::nn::Module& module, const std::filesystem::path& dir);

nlohmann::json read_manifest(const std::filesystem::path& dir);

} // namespace strata
