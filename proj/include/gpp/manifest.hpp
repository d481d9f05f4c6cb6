#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace gpp {

inline constexpr const char* kToolVersion = "0.1.0";

// Machine-readable run record: the resolved configuration plus size and
// FNV-1a hash of every output file. Paths are stored relative to the
// manifest so reruns in different directories compare equal. Contains no
// timestamps; equal runs produce byte-identical manifests.
void write_manifest(const std::filesystem::path& manifest_path, const std::string& command,
                    const nlohmann::json& config,
                    const std::vector<std::filesystem::path>& outputs);

}  // namespace gpp
