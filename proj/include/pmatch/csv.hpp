#pragma once

// Provenance-stamped CSV output.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace pmatch {

/// git-describe style version baked in at configure time.
std::string version_string();

/// 16 hex digits of the FNV-1a hash of the bytes.
std::string hash_hex(std::string_view bytes);

/// "# pmatch <version> config_hash=<h> seed=<s> [key=value ...] generated=<UTC>".
/// The timestamp is always the last field so the line can be dropped when
/// comparing bodies.
std::string provenance_line(const std::string& config_hash, std::uint64_t seed,
                            const std::vector<std::pair<std::string, std::string>>& extra = {});

/// Writes the provenance line followed by body; IoError-like failures raise
/// ConfigError naming the path.
void write_csv(const std::string& path, const std::string& provenance, const std::string& body);
void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

/// The file text without lines starting with '#'.
std::string csv_body(const std::string& text);

}  // namespace pmatch
