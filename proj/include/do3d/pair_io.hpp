#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"

#include "do3d/scene.hpp"

namespace do3d {

/// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);

nlohmann::json euler_to_json(const EulerPose& e);
/// `path` prefixes SpecError messages.
EulerPose euler_from_json(const nlohmann::json& j, const std::string& path);

nlohmann::json spec_to_json(const SceneSpec& spec);
/// Strict parse: unknown keys and wrong types throw SpecError naming the field.
SceneSpec spec_from_json(const nlohmann::json& j);
SceneSpec load_spec(const std::filesystem::path& path);

/// FNV-1a of the canonical (sorted-key, compact) spec JSON.
std::string spec_hash(const SceneSpec& spec);

/// Writes every artifact of the pair plus manifest.json into `dir`.
void export_pair(const RenderedPair& pair, const std::filesystem::path& dir);

/// Reads a directory written by export_pair. Images round-trip through
/// 8-bit PPM and fields through float32 PFM.
RenderedPair import_pair(const std::filesystem::path& dir);

}  // namespace do3d
