#include "canao/json_io.hpp"

#include <fstream>
#include <sstream>

#include "canao/error.hpp"

namespace canao {

Json parse_json(std::string_view text) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const Json::parse_error& e) {
    throw ParseError("byte " + std::to_string(e.byte), e.what());
  }
}

Json make_document(std::string_view format) {
  Json doc = Json::object();
  doc["format"] = std::string(format);
  doc["version"] = kFormatVersion;
  return doc;
}

void check_document(const Json& doc, std::string_view format) {
  if (!doc.is_object()) throw ParseError("/", "document must be an object");
  const Json& version = require(doc, "version", "");
  if (!version.is_number_integer() || version.get<int>() != kFormatVersion) {
    throw ParseError("/version", "unsupported version " + version.dump() + ", expected " +
                                     std::to_string(kFormatVersion));
  }
  const Json& tag = require(doc, "format", "");
  if (!tag.is_string() || tag.get<std::string>() != format) {
    throw ParseError("/format", "expected format \"" + std::string(format) + "\", got " +
                                    tag.dump());
  }
}

std::string child_path(const std::string& path, std::string_view key) {
  return path + "/" + std::string(key);
}

std::string child_path(const std::string& path, std::size_t index) {
  return path + "/" + std::to_string(index);
}

const Json& require(const Json& obj, std::string_view key, const std::string& path) {
  if (!obj.is_object()) throw ParseError(path.empty() ? "/" : path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw ParseError(child_path(path, key), "missing field");
  }
  return *it;
}

template <typename T>
T get_as(const Json& value, const std::string& path) {
  try {
    return value.get<T>();
  } catch (const Json::exception& e) {
    throw ParseError(path.empty() ? "/" : path, e.what());
  }
}

template int get_as<int>(const Json&, const std::string&);
template std::int64_t get_as<std::int64_t>(const Json&, const std::string&);
template std::uint64_t get_as<std::uint64_t>(const Json&, const std::string&);
template double get_as<double>(const Json&, const std::string&);
template bool get_as<bool>(const Json&, const std::string&);
template std::string get_as<std::string>(const Json&, const std::string&);
template std::vector<std::int64_t> get_as<std::vector<std::int64_t>>(const Json&,
                                                                     const std::string&);
template std::vector<double> get_as<std::vector<double>>(const Json&, const std::string&);
template std::vector<int> get_as<std::vector<int>>(const Json&, const std::string&);

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
  if (!out) throw ConfigError("failed writing " + path);
}

}  // namespace canao
