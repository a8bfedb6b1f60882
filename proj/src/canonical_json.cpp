#include "nizkctf/canonical_json.hpp"

#include <algorithm>

namespace nizkctf {

std::string canonical_dump(const Json& value)
{
    try {
        return value.dump(-1, ' ', false, Json::error_handler_t::strict);
    } catch (const Json::exception& e) {
        throw MalformedInput(std::string("cannot serialize JSON: ") + e.what());
    }
}

Json parse_json(std::string_view text)
{
    try {
        return Json::parse(text.begin(), text.end());
    } catch (const Json::exception& e) {
        throw MalformedInput(std::string("invalid JSON: ") + e.what());
    }
}

Json parse_json(ByteView bytes)
{
    return parse_json(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

namespace json_field {

void require_keys(const Json& object, std::initializer_list<std::string_view> keys)
{
    if (!object.is_object())
        throw MalformedInput("expected a JSON object");
    if (object.size() != keys.size())
        throw MalformedInput("unexpected set of fields in JSON object");
    for (auto key : keys)
        if (!object.contains(key))
            throw MalformedInput("missing field '" + std::string(key) + "'");
}

namespace {

const Json& field(const Json& object, std::string_view key)
{
    auto it = object.find(key);
    if (it == object.end())
        throw MalformedInput("missing field '" + std::string(key) + "'");
    return *it;
}

} // namespace

const std::string& string(const Json& object, std::string_view key)
{
    const Json& value = field(object, key);
    if (!value.is_string())
        throw MalformedInput("field '" + std::string(key) + "' must be a string");
    return value.get_ref<const std::string&>();
}

std::uint64_t unsigned_integer(const Json& object, std::string_view key)
{
    const Json& value = field(object, key);
    if (value.is_number_unsigned())
        return value.get<std::uint64_t>();
    if (value.is_number_integer() && value.get<std::int64_t>() >= 0)
        return static_cast<std::uint64_t>(value.get<std::int64_t>());
    throw MalformedInput("field '" + std::string(key) + "' must be a non-negative integer");
}

Bytes hex(const Json& object, std::string_view key)
{
    return hex_decode(string(object, key));
}

Bytes base64(const Json& object, std::string_view key)
{
    return base64_decode(string(object, key));
}

} // namespace json_field

} // namespace nizkctf
