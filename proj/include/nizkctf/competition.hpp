#pragma once

// Competition records and their ledger file conventions:
//
//   challenges/<id>.json                     ChallengeDescriptor (organizer-signed)
//   teams/<team_id>/team.json                TeamRecord
//   submissions/<team_id>/<challenge_id>.json SubmissionRecord
//
// All files hold canonical JSON. No file ever holds a flag or a secret key.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nizkctf/canonical_json.hpp"
#include "nizkctf/ledger.hpp"
#include "nizkctf/sigproof.hpp"

namespace nizkctf {

/// The submitted flag does not derive the challenge public key.
class FlagMismatch : public Error {
public:
    FlagMismatch() : Error("flag mismatch") {}
};

/// Ledger content that a validator-accepted chain could not contain.
class AuditError : public Error {
public:
    using Error::Error;
};

inline constexpr std::size_t max_slug_length = 64;

/// [a-z0-9-]{1,64}
bool is_slug(std::string_view text);

/// Lowercases, folds common Latin accents to ASCII, collapses every run of
/// other characters into one hyphen and trims hyphens. Throws MalformedInput
/// when nothing usable remains.
std::string slugify(std::string_view name);

/// 1 to 64 code points of valid UTF-8, no control characters.
bool is_valid_team_name(std::string_view name);

std::string challenge_path(std::string_view challenge_id);
std::string team_path(std::string_view team_id);
std::string submission_path(std::string_view team_id, std::string_view challenge_id);

/// Extract ids from conventional paths; std::nullopt if the path has another shape.
std::optional<std::string> parse_challenge_path(std::string_view path);
std::optional<std::string> parse_team_path(std::string_view path);
std::optional<std::pair<std::string, std::string>> parse_submission_path(std::string_view path);

struct ChallengeDescriptor {
    std::string id;
    std::string title;
    std::string description;
    std::vector<std::string> categories;
    std::uint64_t points = 0;
    ChallengeSalt salt;
    PublicKey public_key;
    KdfParams kdf;

    /// Throws MalformedInput.
    void validate() const;

    Json to_json() const;
    /// Rejects unknown or missing fields.
    static ChallengeDescriptor from_json(const Json& value);

    friend bool operator==(const ChallengeDescriptor&, const ChallengeDescriptor&) = default;
};

struct TeamRecord {
    std::string id;
    std::string name;
    PublicKey public_key;

    Json to_json() const;
    static TeamRecord from_json(const Json& value);

    friend bool operator==(const TeamRecord&, const TeamRecord&) = default;
};

/// Kept by the team, never published.
struct TeamSecret {
    std::string team_id;
    Seed seed;
    SecretKey secret_key;

    KeyPair keypair() const;

    /// {"id", "public_key", "seed"}; the file format for team and organizer keys.
    Json to_json() const;
    /// Throws MalformedInput if the stored public key does not match the seed.
    static TeamSecret from_json(const Json& value);
};

struct SubmissionRecord {
    std::string team_id;
    std::string challenge_id;
    Proof proof;

    Json to_json() const;
    static SubmissionRecord from_json(const Json& value);

    friend bool operator==(const SubmissionRecord&, const SubmissionRecord&) = default;
};

struct ScoreboardRow {
    std::uint64_t rank = 0;
    std::string team_id;
    std::uint64_t points = 0;
    std::uint64_t solves = 0;
    std::uint64_t last_solve_index = 0;

    friend bool operator==(const ScoreboardRow&, const ScoreboardRow&) = default;
};

using Scoreboard = std::vector<ScoreboardRow>;

Json scoreboard_to_json(const Scoreboard& board);
Scoreboard scoreboard_from_json(const Json& value);

/// Parses a file's bytes as canonical JSON and decodes it with `T::from_json`.
/// Throws MalformedInput if the content is not canonical.
template <class T>
T decode_record(ByteView content)
{
    const Json value = parse_json(content);
    if (to_bytes(canonical_dump(value)) != Bytes(content.begin(), content.end()))
        throw MalformedInput("record is not canonical JSON");
    return T::from_json(value);
}

template <class T>
Bytes encode_record(const T& record)
{
    return to_bytes(canonical_dump(record.to_json()));
}

struct ChallengeInfo {
    std::string id;
    std::string title;
    std::string description;
    std::vector<std::string> categories;
    std::uint64_t points = 0;
    KdfParams kdf;
};

/// Draws a fresh salt and derives the challenge key pair from the flag. Only
/// the public half is kept.
ChallengeDescriptor new_challenge(std::string_view flag, ChallengeInfo info,
                                  const RandomSource& rng);

/// Changeset writing challenges/<id>.json, for an organizer-signed append.
Changeset challenge_changeset(const ChallengeDescriptor& descriptor);

struct Registration {
    TeamRecord record;
    TeamSecret secret;
    Changeset changeset;
};

Registration register_team(std::string_view name, const RandomSource& rng);

struct Submission {
    SubmissionRecord record;
    Changeset changeset;
};

/// Throws FlagMismatch before any proof is built if the flag is wrong.
Submission build_submission(const TeamSecret& secret, const ChallengeDescriptor& descriptor,
                            std::string_view flag);

/// Published records in a ledger state, keyed by id. Throw AuditError on
/// undecodable files.
std::map<std::string, ChallengeDescriptor> challenges_in(const LedgerState& state);
std::map<std::string, TeamRecord> teams_in(const LedgerState& state);

/// Scores every submission file in `state`; `chain` supplies the ledger
/// index that wrote each one. Rows with at least one solve, ordered by
/// points desc, last solve index asc, team id asc. Throws AuditError.
Scoreboard compute_scoreboard(const LedgerState& state, std::span<const LedgerEntry> chain);

} // namespace nizkctf
