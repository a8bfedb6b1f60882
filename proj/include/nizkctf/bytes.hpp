#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace nizkctf {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

/// Base of every error thrown by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Structurally invalid input (wrong length, bad encoding, bad grammar).
class MalformedInput : public Error {
public:
    using Error::Error;
};

/// Fixed-size byte string with a tag type so keys, signatures and digests
/// cannot be mixed up.
template <std::size_t N, class Tag>
class FixedBytes {
public:
    static constexpr std::size_t size_bytes = N;

    FixedBytes() = default;
    explicit FixedBytes(const std::array<std::uint8_t, N>& raw) : raw_(raw) {}

    /// Throws MalformedInput unless `data` is exactly N bytes.
    static FixedBytes from(ByteView data)
    {
        if (data.size() != N)
            throw MalformedInput("expected " + std::to_string(N) + " bytes, got " +
                                 std::to_string(data.size()));
        FixedBytes out;
        std::copy(data.begin(), data.end(), out.raw_.begin());
        return out;
    }

    std::uint8_t* data() noexcept { return raw_.data(); }
    const std::uint8_t* data() const noexcept { return raw_.data(); }
    static constexpr std::size_t size() noexcept { return N; }
    ByteView view() const noexcept { return {raw_.data(), N}; }
    Bytes to_bytes() const { return Bytes(raw_.begin(), raw_.end()); }
    const std::array<std::uint8_t, N>& array() const noexcept { return raw_; }

    friend bool operator==(const FixedBytes&, const FixedBytes&) = default;
    friend auto operator<=>(const FixedBytes&, const FixedBytes&) = default;

private:
    std::array<std::uint8_t, N> raw_{};
};

Bytes to_bytes(std::string_view text);
std::string to_string(ByteView bytes);

/// Lowercase hex.
std::string hex_encode(ByteView bytes);
/// Accepts lowercase hex only; throws MalformedInput otherwise.
Bytes hex_decode(std::string_view text);

/// Standard alphabet, padded.
std::string base64_encode(ByteView bytes);
/// Strict: requires padding and rejects non-canonical trailing bits.
Bytes base64_decode(std::string_view text);

template <class T>
T fixed_from_hex(std::string_view text)
{
    return T::from(hex_decode(text));
}

/// True if `needle` occurs anywhere in `haystack`.
bool contains_bytes(ByteView haystack, ByteView needle);

} // namespace nizkctf
