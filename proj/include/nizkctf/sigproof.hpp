#pragma once

// Signature-based proof of solution.
//
// A team proves it knows both its own secret key and the key derived from a
// challenge flag by nesting two attached Ed25519 signatures over the
// challenge id:
//
//   proof  = sign(challenge_sk, sign(team_sk, id))  =  s_c || s_t || id
//   accept <=> open(team_pk, open(challenge_pk, proof)) == id
//
// The challenge key pair is derived deterministically from the flag with
// scrypt and a public per-challenge salt, so the platform only ever stores
// the challenge public key.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "nizkctf/bytes.hpp"

namespace nizkctf {

struct SeedTag;
struct PublicKeyTag;
struct SignatureTag;
struct SaltTag;

using Seed = FixedBytes<32, SeedTag>;
using PublicKey = FixedBytes<32, PublicKeyTag>;
using Signature = FixedBytes<64, SignatureTag>;
using ChallengeSalt = FixedBytes<16, SaltTag>;

/// Ed25519 private key in its RFC 8032 form (the 32-byte seed). The bytes
/// are wiped when the object is destroyed.
class SecretKey {
public:
    static constexpr std::size_t size_bytes = 32;

    SecretKey() = default;
    explicit SecretKey(const Seed& seed);
    SecretKey(const SecretKey& other) = default;
    SecretKey& operator=(const SecretKey& other) = default;
    ~SecretKey();

    static SecretKey from(ByteView data);

    ByteView view() const noexcept { return {raw_.data(), raw_.size()}; }
    const std::uint8_t* data() const noexcept { return raw_.data(); }

    /// Recomputes the matching public key.
    PublicKey public_key() const;

    friend bool operator==(const SecretKey&, const SecretKey&) = default;

private:
    std::array<std::uint8_t, size_bytes> raw_{};
};

struct KeyPair {
    SecretKey secret;
    PublicKey public_key;
};

/// scrypt cost parameters. Stored alongside every challenge so that anyone
/// can re-run the derivation.
struct KdfParams {
    std::uint64_t cost_n = 1u << 15;
    std::uint32_t block_r = 8;
    std::uint32_t parallel_p = 1;
    std::uint32_t out_len = 32;

    static KdfParams competition() { return {1u << 15, 8, 1, 32}; }
    static KdfParams test() { return {1u << 4, 8, 1, 32}; }

    /// Throws MalformedInput if the parameters are unusable for key derivation.
    void validate() const;

    friend bool operator==(const KdfParams&, const KdfParams&) = default;
};

/// Attached signature: serializes as signature || message.
struct SignedMessage {
    Signature signature;
    Bytes message;

    Bytes serialize() const;
    /// Throws MalformedInput when shorter than a signature.
    static SignedMessage parse(ByteView framed);
};

/// s_c || s_t || challenge_id
class Proof {
public:
    static constexpr std::size_t signatures_size = 2 * Signature::size_bytes;

    Proof() = default;
    explicit Proof(Bytes bytes) : bytes_(std::move(bytes)) {}

    const Bytes& bytes() const noexcept { return bytes_; }
    std::size_t size() const noexcept { return bytes_.size(); }

    /// Has room for two signatures and a non-empty id.
    bool well_formed() const noexcept { return bytes_.size() > signatures_size; }

    std::string to_base64() const { return base64_encode(bytes_); }
    static Proof from_base64(std::string_view text) { return Proof(base64_decode(text)); }

    friend bool operator==(const Proof&, const Proof&) = default;

private:
    Bytes bytes_;
};

enum class ProofVerdict { accept, reject };

/// Fills its argument with random bytes.
using RandomSource = std::function<void(std::span<std::uint8_t>)>;

/// Cryptographically secure generator backed by the OS.
RandomSource system_random();

/// Initializes libsodium; safe to call repeatedly and from several threads.
void ensure_crypto_ready();

Seed random_seed(const RandomSource& rng);
ChallengeSalt random_salt(const RandomSource& rng);

/// Rejects encodings that are not points of the prime-order subgroup.
bool is_valid_public_key(const PublicKey& key);

KeyPair keypair_from_seed(const Seed& seed);
/// Throws MalformedInput unless `seed` is 32 bytes.
KeyPair keypair_from_seed(ByteView seed);

/// Raw scrypt with arbitrary output length.
Bytes scrypt(ByteView password, ByteView salt, std::uint64_t cost_n, std::uint32_t block_r,
             std::uint32_t parallel_p, std::size_t out_len);

/// Strips leading and trailing ASCII whitespace. No case folding.
std::string normalize_flag(std::string_view flag);

/// KeyPair(scrypt(normalized flag, salt)).
KeyPair derive_challenge_keys(std::string_view flag, const ChallengeSalt& salt,
                              const KdfParams& params);

SignedMessage sign(const SecretKey& secret, ByteView message);

/// Returns the message if the signature verifies, std::nullopt otherwise.
/// Throws MalformedInput when `framed` is shorter than a signature.
std::optional<Bytes> open(const PublicKey& public_key, ByteView framed);

Proof prove(const KeyPair& team, const SecretKey& challenge_secret, ByteView challenge_id);
Proof prove(const KeyPair& team, const SecretKey& challenge_secret, std::string_view challenge_id);

/// Needs public values only. Malformed proofs are rejected, never thrown.
ProofVerdict verify_proof(const PublicKey& team_public, const PublicKey& challenge_public,
                          ByteView challenge_id, const Proof& proof);
ProofVerdict verify_proof(const PublicKey& team_public, const PublicKey& challenge_public,
                          std::string_view challenge_id, const Proof& proof);

/// True iff the flag derives the expected challenge public key. Flags that
/// are empty after normalization are rejected without running the KDF.
bool check_flag(std::string_view flag, const ChallengeSalt& salt, const KdfParams& params,
                const PublicKey& expected_public);

} // namespace nizkctf
