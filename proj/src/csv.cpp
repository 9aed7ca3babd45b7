#include "pmatch/csv.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "pmatch/error.hpp"
#include "pmatch/model.hpp"

#ifndef PMATCH_VERSION
#define PMATCH_VERSION "0.1.0"
#endif

namespace pmatch {

std::string version_string() { return PMATCH_VERSION; }

std::string hash_hex(std::string_view bytes) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(bytes)));
  return buf;
}

std::string provenance_line(const std::string& config_hash, std::uint64_t seed,
                            const std::vector<std::pair<std::string, std::string>>& extra) {
  std::ostringstream os;
  os << "# pmatch " << version_string() << " config_hash=" << config_hash << " seed=" << seed;
  for (const auto& [k, v] : extra) os << ' ' << k << '=' << v;
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char ts[32];
  std::strftime(ts, sizeof(ts), "%Y-%m-%dT%H:%M:%SZ", &tm);
  os << " generated=" << ts << '\n';
  return os.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ConfigError("cannot write '" + path + "'");
  f << text;
  if (!f) throw ConfigError("failed while writing '" + path + "'");
}

void write_csv(const std::string& path, const std::string& provenance, const std::string& body) {
  write_text(path, provenance + body);
}

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot read '" + path + "'");
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

std::string csv_body(const std::string& text) {
  std::string out;
  std::istringstream is(text);
  for (std::string line; std::getline(is, line);) {
    if (!line.empty() && line[0] == '#') continue;
    out += line;
    out += '\n';
  }
  return out;
}

}  // namespace pmatch
