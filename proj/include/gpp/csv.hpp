#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace gpp {

// Minimal CSV support for the artifact's fixed dialect: comma separator,
// one header row, UTF-8, LF line endings. Fields containing commas,
// quotes or newlines are double-quoted.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const;  // -1 when absent
    int require_column(const std::string& name) const;
};

CsvTable read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const CsvTable& table);
std::string csv_to_string(const CsvTable& table);

}  // namespace gpp
