#include "gpp/manifest.hpp"

#include <algorithm>

#include "gpp/common.hpp"

namespace gpp {

void write_manifest(const std::filesystem::path& manifest_path, const std::string& command,
                    const nlohmann::json& config,
                    const std::vector<std::filesystem::path>& outputs) {
    const auto base = manifest_path.has_parent_path() ? manifest_path.parent_path()
                                                      : std::filesystem::path(".");

    std::vector<std::pair<std::string, std::filesystem::path>> entries;
    for (const auto& path : outputs) {
        std::error_code ec;
        auto rel = std::filesystem::relative(path, base, ec);
        entries.emplace_back((ec || rel.empty()) ? path.generic_string() : rel.generic_string(),
                             path);
    }
    std::sort(entries.begin(), entries.end());

    nlohmann::json j;
    j["command"] = command;
    j["version"] = kToolVersion;
    j["config"] = config;
    auto& outs = j["outputs"] = nlohmann::json::array();
    for (const auto& [rel, path] : entries) {
        const auto bytes = read_file_bytes(path);
        nlohmann::json entry;
        entry["path"] = rel;
        entry["bytes"] = bytes.size();
        entry["fnv1a64"] = to_hex(fnv1a64(bytes.data(), bytes.size()));
        outs.push_back(std::move(entry));
    }
    write_file_text(manifest_path, j.dump(2) + "\n");
}

}  // namespace gpp
