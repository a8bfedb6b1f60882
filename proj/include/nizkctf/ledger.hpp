#pragma once

// Append-only, hash-chained transaction store.
//
// Every entry commits to its predecessor through prev_hash and to its own
// content through hash = SHA-256(canonical JSON of index, timestamp,
// prev_hash, changeset and the optional organizer signature). Entry 0
// publishes the organizer key; entries signed with it are privileged.
//
// On disk the chain is `ledger.ndjson`: one canonical JSON entry per line, in
// index order. Copying that file is a complete replica.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nizkctf/bytes.hpp"
#include "nizkctf/canonical_json.hpp"
#include "nizkctf/sigproof.hpp"

namespace nizkctf {

struct DigestTag;
using Digest = FixedBytes<32, DigestTag>;

Digest sha256(ByteView data);

class LedgerError : public Error {
public:
    using Error::Error;
};

inline constexpr std::string_view organizer_key_path = "meta/organizer.pub";
inline constexpr std::string_view competition_meta_path = "meta/competition.json";
inline constexpr std::size_t max_path_length = 256;

/// Relative, slash-separated, no empty / "." / ".." segments, at most 256 bytes.
bool is_valid_path(std::string_view path);

struct FileChange {
    std::string path;
    Bytes content;

    friend bool operator==(const FileChange&, const FileChange&) = default;
};

struct Changeset {
    std::vector<FileChange> changes;
    std::string author;

    /// Throws MalformedInput if empty, if a path is invalid or repeated.
    void validate() const;

    Json to_json() const;
    static Changeset from_json(const Json& value);

    friend bool operator==(const Changeset&, const Changeset&) = default;
};

struct LedgerEntry {
    std::uint64_t index = 0;
    std::uint64_t timestamp = 0;
    Digest prev_hash;
    Changeset changeset;
    std::optional<Signature> org_sig;
    Digest hash;

    bool organizer_signed() const noexcept { return org_sig.has_value(); }

    /// The bytes an organizer signs: everything except org_sig and hash.
    std::string signing_payload() const;
    Digest compute_hash() const;

    /// Canonical single-line JSON including the hash.
    std::string to_line() const;
    /// Strict: the text must be exactly the canonical serialization of the
    /// entry it describes. Does not check the hash.
    static LedgerEntry from_line(std::string_view line);

    friend bool operator==(const LedgerEntry&, const LedgerEntry&) = default;
};

using Chain = std::vector<LedgerEntry>;

/// Files visible after folding a prefix of the chain.
struct LedgerState {
    std::map<std::string, Bytes, std::less<>> files;

    bool contains(std::string_view path) const { return files.find(path) != files.end(); }
    const Bytes* find(std::string_view path) const;
    void apply(const Changeset& changeset);

    friend bool operator==(const LedgerState&, const LedgerState&) = default;
};

struct ChainStatus {
    bool ok = true;
    std::uint64_t index = 0; ///< first offending entry when !ok
    std::string reason;

    static ChainStatus pass() { return {}; }
    static ChainStatus fail(std::uint64_t index, std::string reason)
    {
        return {false, index, std::move(reason)};
    }
    explicit operator bool() const noexcept { return ok; }
};

LedgerEntry genesis(const PublicKey& organizer_public, ByteView competition_meta,
                    std::uint64_t timestamp);

/// Builds the successor of chain.back() without touching the chain. The
/// chain is assumed verified. Throws LedgerError on an empty chain or a
/// timestamp regression, MalformedInput on an invalid changeset.
LedgerEntry next_entry(std::span<const LedgerEntry> chain, Changeset changeset,
                       std::uint64_t timestamp, const SecretKey* org_secret = nullptr);

/// next_entry() followed by push_back. Existing entries are left untouched.
const LedgerEntry& append(Chain& chain, Changeset changeset, std::uint64_t timestamp,
                          const SecretKey* org_secret = nullptr);

/// Organizer key published by the genesis entry.
PublicKey organizer_key(std::span<const LedgerEntry> chain);

ChainStatus verify_chain(std::span<const LedgerEntry> chain);

/// Fold of entries 0..index. Throws LedgerError when out of range.
LedgerState snapshot_at(std::span<const LedgerEntry> chain, std::size_t index);

/// Verifies the chain, then folds all of it. Throws LedgerError.
LedgerState replay(std::span<const LedgerEntry> chain);

std::string to_ndjson(std::span<const LedgerEntry> chain);
/// Every line must be canonical and newline-terminated. Throws LedgerError
/// naming the offending line.
Chain parse_ndjson(std::string_view text);

Chain load_ledger(const std::filesystem::path& path);
void save_ledger(const std::filesystem::path& path, std::span<const LedgerEntry> chain);

std::string read_file(const std::filesystem::path& path);

} // namespace nizkctf
