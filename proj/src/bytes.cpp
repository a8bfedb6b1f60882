#include "nizkctf/bytes.hpp"

#include <algorithm>

#include <sodium.h>

namespace nizkctf {

Bytes to_bytes(std::string_view text)
{
    return Bytes(text.begin(), text.end());
}

std::string to_string(ByteView bytes)
{
    return std::string(bytes.begin(), bytes.end());
}

std::string hex_encode(ByteView bytes)
{
    static constexpr char digits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (auto b : bytes) {
        out.push_back(digits[b >> 4]);
        out.push_back(digits[b & 0x0f]);
    }
    return out;
}

namespace {

int hex_value(char c)
{
    if (c >= '0' && c <= '9')
        return c - '0';
    if (c >= 'a' && c <= 'f')
        return c - 'a' + 10;
    return -1;
}

} // namespace

Bytes hex_decode(std::string_view text)
{
    if (text.size() % 2 != 0)
        throw MalformedInput("hex string has odd length");
    Bytes out(text.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        int hi = hex_value(text[2 * i]);
        int lo = hex_value(text[2 * i + 1]);
        if (hi < 0 || lo < 0)
            throw MalformedInput("invalid lowercase hex digit");
        out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
    }
    return out;
}

std::string base64_encode(ByteView bytes)
{
    const auto variant = sodium_base64_VARIANT_ORIGINAL;
    std::string out(sodium_base64_encoded_len(bytes.size(), variant), '\0');
    sodium_bin2base64(out.data(), out.size(), bytes.data(), bytes.size(), variant);
    out.resize(out.size() - 1); // drop the terminating NUL
    return out;
}

Bytes base64_decode(std::string_view text)
{
    Bytes out(text.size() / 4 * 3 + 3);
    std::size_t len = 0;
    const char* end = nullptr;
    if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(), nullptr, &len,
                          &end, sodium_base64_VARIANT_ORIGINAL) != 0 ||
        end != text.data() + text.size())
        throw MalformedInput("invalid base64");
    out.resize(len);
    // libsodium tolerates stray low bits in the last symbol
    if (base64_encode(out) != text)
        throw MalformedInput("non-canonical base64");
    return out;
}

bool contains_bytes(ByteView haystack, ByteView needle)
{
    if (needle.empty())
        return true;
    return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) !=
           haystack.end();
}

} // namespace nizkctf
