#include "nizkctf/sigproof.hpp"

#include <algorithm>
#include <mutex>

#include <sodium.h>

namespace nizkctf {

static_assert(crypto_sign_SEEDBYTES == Seed::size_bytes);
static_assert(crypto_sign_PUBLICKEYBYTES == PublicKey::size_bytes);
static_assert(crypto_sign_BYTES == Signature::size_bytes);

void ensure_crypto_ready()
{
    static std::once_flag once;
    std::call_once(once, [] {
        if (sodium_init() < 0)
            throw Error("libsodium initialization failed");
    });
}

RandomSource system_random()
{
    ensure_crypto_ready();
    return [](std::span<std::uint8_t> out) { randombytes_buf(out.data(), out.size()); };
}

Seed random_seed(const RandomSource& rng)
{
    std::array<std::uint8_t, Seed::size_bytes> raw{};
    rng(raw);
    Seed seed(raw);
    sodium_memzero(raw.data(), raw.size());
    return seed;
}

ChallengeSalt random_salt(const RandomSource& rng)
{
    std::array<std::uint8_t, ChallengeSalt::size_bytes> raw{};
    rng(raw);
    return ChallengeSalt(raw);
}

// SecretKey

SecretKey::SecretKey(const Seed& seed) : raw_(seed.array()) {}

SecretKey::~SecretKey()
{
    sodium_memzero(raw_.data(), raw_.size());
}

SecretKey SecretKey::from(ByteView data)
{
    if (data.size() != size_bytes)
        throw MalformedInput("secret key must be 32 bytes");
    SecretKey key;
    std::copy(data.begin(), data.end(), key.raw_.begin());
    return key;
}

namespace {

/// libsodium's 64-byte signing key (seed || public key), wiped on scope exit.
struct ExpandedKey {
    std::array<std::uint8_t, crypto_sign_SECRETKEYBYTES> sk{};
    PublicKey pk;

    explicit ExpandedKey(ByteView seed)
    {
        ensure_crypto_ready();
        crypto_sign_seed_keypair(pk.data(), sk.data(), seed.data());
    }
    ~ExpandedKey() { sodium_memzero(sk.data(), sk.size()); }
    ExpandedKey(const ExpandedKey&) = delete;
    ExpandedKey& operator=(const ExpandedKey&) = delete;
};

} // namespace

PublicKey SecretKey::public_key() const
{
    return ExpandedKey(view()).pk;
}

// KdfParams

void KdfParams::validate() const
{
    if (cost_n < 2 || (cost_n & (cost_n - 1)) != 0)
        throw MalformedInput("scrypt cost_n must be a power of two >= 2");
    if (block_r == 0 || parallel_p == 0)
        throw MalformedInput("scrypt block_r and parallel_p must be positive");
    if (static_cast<std::uint64_t>(block_r) * parallel_p >= (1ull << 30))
        throw MalformedInput("scrypt block_r * parallel_p too large");
    // 128 * r * N bytes of working memory; refuse anything above 2 GiB
    if (cost_n > (1ull << 31) / (128ull * block_r))
        throw MalformedInput("scrypt memory cost too large");
    if (out_len != 32)
        throw MalformedInput("scrypt out_len must be 32");
}

// Key derivation

bool is_valid_public_key(const PublicKey& key)
{
    ensure_crypto_ready();
    return crypto_core_ed25519_is_valid_point(key.data()) == 1;
}

KeyPair keypair_from_seed(const Seed& seed)
{
    ExpandedKey expanded(seed.view());
    return KeyPair{SecretKey(seed), expanded.pk};
}

KeyPair keypair_from_seed(ByteView seed)
{
    if (seed.size() != Seed::size_bytes)
        throw MalformedInput("seed must be exactly 32 bytes");
    return keypair_from_seed(Seed::from(seed));
}

Bytes scrypt(ByteView password, ByteView salt, std::uint64_t cost_n, std::uint32_t block_r,
             std::uint32_t parallel_p, std::size_t out_len)
{
    ensure_crypto_ready();
    Bytes out(out_len);
    if (crypto_pwhash_scryptsalsa208sha256_ll(password.data(), password.size(), salt.data(),
                                              salt.size(), cost_n, block_r, parallel_p,
                                              out.data(), out.size()) != 0)
        throw MalformedInput("scrypt rejected its parameters");
    return out;
}

namespace {

bool is_ascii_space(char c)
{
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

} // namespace

std::string normalize_flag(std::string_view flag)
{
    auto first = std::find_if_not(flag.begin(), flag.end(), is_ascii_space);
    auto last = std::find_if_not(flag.rbegin(), flag.rend(), is_ascii_space).base();
    if (first >= last)
        return {};
    return std::string(first, last);
}

KeyPair derive_challenge_keys(std::string_view flag, const ChallengeSalt& salt,
                              const KdfParams& params)
{
    params.validate();
    const std::string normalized = normalize_flag(flag);
    if (normalized.empty())
        throw MalformedInput("flag is empty after normalization");
    Bytes derived = scrypt(to_bytes(normalized), salt.view(), params.cost_n, params.block_r,
                           params.parallel_p, params.out_len);
    KeyPair keys = keypair_from_seed(ByteView(derived));
    sodium_memzero(derived.data(), derived.size());
    return keys;
}

// Attached signatures

Bytes SignedMessage::serialize() const
{
    Bytes out;
    out.reserve(Signature::size_bytes + message.size());
    out.insert(out.end(), signature.data(), signature.data() + Signature::size_bytes);
    out.insert(out.end(), message.begin(), message.end());
    return out;
}

SignedMessage SignedMessage::parse(ByteView framed)
{
    if (framed.size() < Signature::size_bytes)
        throw MalformedInput("signed message shorter than a signature");
    return SignedMessage{Signature::from(framed.first(Signature::size_bytes)),
                         Bytes(framed.begin() + Signature::size_bytes, framed.end())};
}

SignedMessage sign(const SecretKey& secret, ByteView message)
{
    ExpandedKey expanded(secret.view());
    SignedMessage out;
    crypto_sign_detached(out.signature.data(), nullptr, message.data(), message.size(),
                         expanded.sk.data());
    out.message.assign(message.begin(), message.end());
    return out;
}

std::optional<Bytes> open(const PublicKey& public_key, ByteView framed)
{
    ensure_crypto_ready();
    if (framed.size() < Signature::size_bytes)
        throw MalformedInput("signed message shorter than a signature");
    ByteView message = framed.subspan(Signature::size_bytes);
    if (crypto_sign_verify_detached(framed.data(), message.data(), message.size(),
                                    public_key.data()) != 0)
        return std::nullopt;
    return Bytes(message.begin(), message.end());
}

// Proof of solution

Proof prove(const KeyPair& team, const SecretKey& challenge_secret, ByteView challenge_id)
{
    if (challenge_id.empty())
        throw MalformedInput("challenge id must not be empty");
    Bytes inner = sign(team.secret, challenge_id).serialize();
    return Proof(sign(challenge_secret, inner).serialize());
}

Proof prove(const KeyPair& team, const SecretKey& challenge_secret, std::string_view challenge_id)
{
    return prove(team, challenge_secret, ByteView(to_bytes(challenge_id)));
}

ProofVerdict verify_proof(const PublicKey& team_public, const PublicKey& challenge_public,
                          ByteView challenge_id, const Proof& proof)
{
    if (!proof.well_formed() || challenge_id.empty())
        return ProofVerdict::reject;
    auto inner = open(challenge_public, proof.bytes());
    if (!inner)
        return ProofVerdict::reject;
    auto message = open(team_public, *inner);
    if (!message)
        return ProofVerdict::reject;
    return std::equal(message->begin(), message->end(), challenge_id.begin(), challenge_id.end())
               ? ProofVerdict::accept
               : ProofVerdict::reject;
}

ProofVerdict verify_proof(const PublicKey& team_public, const PublicKey& challenge_public,
                          std::string_view challenge_id, const Proof& proof)
{
    return verify_proof(team_public, challenge_public, ByteView(to_bytes(challenge_id)), proof);
}

bool check_flag(std::string_view flag, const ChallengeSalt& salt, const KdfParams& params,
                const PublicKey& expected_public)
{
    if (normalize_flag(flag).empty())
        return false;
    try {
        return derive_challenge_keys(flag, salt, params).public_key == expected_public;
    } catch (const MalformedInput&) {
        return false;
    }
}

} // namespace nizkctf
