#pragma once

// Canonical JSON: lexicographically sorted keys, no insignificant
// whitespace, UTF-8 output. nlohmann::json keeps objects in a std::map, so
// dump() without indentation already has that shape.

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

#include "nizkctf/bytes.hpp"

namespace nizkctf {

using Json = nlohmann::json;

/// Throws MalformedInput on invalid UTF-8 in any string.
std::string canonical_dump(const Json& value);

/// Parses any JSON text (canonical or not). Throws MalformedInput.
Json parse_json(std::string_view text);
Json parse_json(ByteView bytes);

namespace json_field {

/// Throws MalformedInput unless `object` is an object with exactly `keys`.
void require_keys(const Json& object, std::initializer_list<std::string_view> keys);

const std::string& string(const Json& object, std::string_view key);
std::uint64_t unsigned_integer(const Json& object, std::string_view key);
Bytes hex(const Json& object, std::string_view key);
Bytes base64(const Json& object, std::string_view key);

} // namespace json_field

} // namespace nizkctf
