#pragma once

// Run configuration, manifests and CSV helpers shared by the commands.
//
// Config files hold "key = value" lines; a "[section]" header prefixes the
// following keys with "section.". Lines starting with '#' or ';' are comments.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace kzlab {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Params = std::map<std::string, std::string>;

Params parse_config(std::istream& in, const std::string& source = "<config>");
Params load_config(const std::filesystem::path& path);
// "key=value"; the key may carry a section prefix.
void apply_override(Params& params, const std::string& assignment);

// Typed access that remembers which keys were read, so leftovers can be
// reported as typos.
class ParamReader {
 public:
  explicit ParamReader(const Params& params) : params_(params) {}

  bool has(const std::string& key) const { return params_.count(key) != 0; }
  std::string text(const std::string& key, const std::string& fallback);
  double real(const std::string& key, double fallback);
  double real(const std::string& key);
  long long integer(const std::string& key, long long fallback);
  std::size_t count(const std::string& key, std::size_t fallback);
  bool flag(const std::string& key, bool fallback);
  // Comma-separated list or an inclusive integer range "a..b".
  std::vector<double> reals(const std::string& key, const std::vector<double>& fallback);

  // Throws ConfigError naming every key that was never read.
  void reject_unknown() const;
  // Every key read so far with the value in effect, defaults included.
  const Params& resolved() const noexcept { return resolved_; }

 private:
  const std::string* find(const std::string& key);
  void remember(const std::string& key, std::string value) { resolved_[key] = std::move(value); }

  const Params& params_;
  std::set<std::string> used_;
  Params resolved_;
};

std::vector<double> parse_reals(const std::string& text);

// FNV-1a (64 bit) as 16 lowercase hex digits.
std::string fnv1a_hex(const std::string& data);

struct RunManifest {
  std::string command;
  Params params;
  std::uint64_t seed = 0;
  std::string version;
  std::string started;
  std::string finished;
  std::vector<std::string> outputs;  // file names relative to the manifest
  std::vector<std::string> warnings;

  // Hash of (command, params, seed, version); timestamps excluded.
  std::string params_hash() const;
  std::string to_json() const;
};

RunManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);

// "# kzlab params_hash=<hex> command=<command>"
std::string csv_hash_line(const RunManifest& manifest);
// Reads the hash from a CSV's first line, or returns an empty string.
std::string read_csv_hash(const std::filesystem::path& path);

std::string utc_timestamp();
std::string code_version();

// $KZLAB_OUT_DIR if set, otherwise "kzlab_out".
std::filesystem::path default_output_dir();

// "%.17g"
std::string fmt(double x);

}  // namespace kzlab
