#include "kzlab/io.hpp"

#include <cctype>
#include <cmath>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace kzlab {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

double to_real(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double x = 0;
  try {
    x = std::stod(text, &used);
  } catch (const std::exception&) {
    throw ConfigError(key + ": '" + text + "' is not a number");
  }
  if (used != text.size()) throw ConfigError(key + ": '" + text + "' is not a number");
  return x;
}

nlohmann::json canonical(const RunManifest& m) {
  nlohmann::json j;
  j["command"] = m.command;
  j["params"] = m.params;
  j["seed"] = m.seed;
  j["version"] = m.version;
  return j;
}

}  // namespace

Params parse_config(std::istream& in, const std::string& source) {
  Params out;
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError(source + ":" + std::to_string(lineno) + ": unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(source + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
    out[section.empty() ? key : section + "." + key] = value;
  }
  return out;
}

Params load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse_config(in, path.string());
}

void apply_override(Params& params, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  params[trim(assignment.substr(0, eq))] = trim(assignment.substr(eq + 1));
}

const std::string* ParamReader::find(const std::string& key) {
  used_.insert(key);
  auto it = params_.find(key);
  if (it == params_.end()) return nullptr;
  remember(key, it->second);
  return &it->second;
}

std::string ParamReader::text(const std::string& key, const std::string& fallback) {
  const auto* v = find(key);
  if (!v) remember(key, fallback);
  return v ? *v : fallback;
}

double ParamReader::real(const std::string& key, double fallback) {
  const auto* v = find(key);
  if (!v) remember(key, fmt(fallback));
  return v ? to_real(key, *v) : fallback;
}

double ParamReader::real(const std::string& key) {
  const auto* v = find(key);
  if (!v) throw ConfigError("missing required parameter " + key);
  return to_real(key, *v);
}

long long ParamReader::integer(const std::string& key, long long fallback) {
  const auto* v = find(key);
  if (!v) {
    remember(key, std::to_string(fallback));
    return fallback;
  }
  std::size_t used = 0;
  long long x = 0;
  try {
    x = std::stoll(*v, &used);
  } catch (const std::exception&) {
    throw ConfigError(key + ": '" + *v + "' is not an integer");
  }
  if (used != v->size()) throw ConfigError(key + ": '" + *v + "' is not an integer");
  return x;
}

std::size_t ParamReader::count(const std::string& key, std::size_t fallback) {
  const long long x = integer(key, static_cast<long long>(fallback));
  if (x < 0) throw ConfigError(key + " must be non-negative");
  return static_cast<std::size_t>(x);
}

bool ParamReader::flag(const std::string& key, bool fallback) {
  const auto* v = find(key);
  if (!v) {
    remember(key, fallback ? "true" : "false");
    return fallback;
  }
  if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
  if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
  throw ConfigError(key + ": '" + *v + "' is not a boolean");
}

std::vector<double> ParamReader::reals(const std::string& key, const std::vector<double>& fallback) {
  const auto* v = find(key);
  if (!v) {
    std::string text;
    for (std::size_t i = 0; i < fallback.size(); ++i) text += (i ? "," : "") + fmt(fallback[i]);
    remember(key, text);
    return fallback;
  }
  try {
    return parse_reals(*v);
  } catch (const ConfigError& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

void ParamReader::reject_unknown() const {
  std::string unknown;
  for (const auto& [key, value] : params_) {
    if (used_.count(key)) continue;
    if (!unknown.empty()) unknown += ", ";
    unknown += key;
  }
  if (!unknown.empty()) throw ConfigError("unknown parameter(s): " + unknown);
}

std::vector<double> parse_reals(const std::string& text) {
  std::vector<double> out;
  const auto range = text.find("..");
  if (range != std::string::npos) {
    const double a = to_real("range", trim(text.substr(0, range)));
    const double b = to_real("range", trim(text.substr(range + 2)));
    if (a != std::floor(a) || b != std::floor(b) || b < a) throw ConfigError("range '" + text + "' needs integers a <= b");
    for (double x = a; x <= b; x += 1.0) out.push_back(x);
    return out;
  }
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(to_real("list", item));
  }
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

std::string fnv1a_hex(const std::string& data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string RunManifest::params_hash() const {
  return fnv1a_hex(canonical(*this).dump());
}

std::string RunManifest::to_json() const {
  nlohmann::json j = canonical(*this);
  j["params_hash"] = params_hash();
  j["started"] = started;
  j["finished"] = finished;
  j["outputs"] = outputs;
  j["warnings"] = warnings;
  return j.dump(2) + "\n";
}

RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.params = j.at("params").get<Params>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.version = j.value("version", "");
    m.started = j.value("started", "");
    m.finished = j.value("finished", "");
    m.outputs = j.value("outputs", std::vector<std::string>{});
    m.warnings = j.value("warnings", std::vector<std::string>{});
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed manifest " + path.string() + ": " + e.what());
  }
}

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << manifest.to_json();
}

std::string csv_hash_line(const RunManifest& manifest) {
  return "# kzlab params_hash=" + manifest.params_hash() + " command=" + manifest.command + "\n";
}

std::string read_csv_hash(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::string line;
  if (!in || !std::getline(in, line)) return {};
  const std::string tag = "params_hash=";
  const auto pos = line.find(tag);
  if (line.rfind("#", 0) != 0 || pos == std::string::npos) return {};
  const auto start = pos + tag.size();
  const auto end = line.find(' ', start);
  return line.substr(start, end == std::string::npos ? std::string::npos : end - start);
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string code_version() {
#ifdef KZLAB_VERSION
  return KZLAB_VERSION;
#else
  return "unknown";
#endif
}

std::filesystem::path default_output_dir() {
  if (const char* env = std::getenv("KZLAB_OUT_DIR"); env && *env) return env;
  return "kzlab_out";
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace kzlab
