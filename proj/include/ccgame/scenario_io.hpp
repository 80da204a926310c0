#pragma once

#include <filesystem>
#include <string>

#include "ccgame/model.hpp"

namespace ccgame {

/// Parses a scenario document. Throws Error(Format) on malformed JSON, unknown
/// keys or wrong value types; semantic checks are left to validate_scenario.
Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::filesystem::path& path);

/// Explicit JSON form: time sequences that are constant are written once.
std::string dump_scenario(const Scenario& s);
void save_scenario(const Scenario& s, const std::filesystem::path& path);

/// Lowercase hex SHA-256 of the bytes.
std::string sha256_hex(const std::string& bytes);
std::string read_file(const std::filesystem::path& path);
/// Hash of the file contents, used to tie artifacts to their scenario.
std::string file_fingerprint(const std::filesystem::path& path);

}  // namespace ccgame
