#pragma once

#include <string>
#include <string_view>

#include <json.hpp>

namespace canao {

using Json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

// Parses text, mapping syntax errors to ParseError("byte N", ...).
Json parse_json(std::string_view text);

// Stamps {"format": format, "version": 1}.
Json make_document(std::string_view format);

// Refuses documents whose format tag or version differ.
void check_document(const Json& doc, std::string_view format);

// Field access that reports the JSON pointer of the offending value.
const Json& require(const Json& obj, std::string_view key, const std::string& path);
std::string child_path(const std::string& path, std::string_view key);
std::string child_path(const std::string& path, std::size_t index);

template <typename T>
T get_as(const Json& value, const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view text);

}  // namespace canao
