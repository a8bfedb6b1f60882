#pragma once

// Acceptance rules for changesets, and the single-writer owner of a chain.
//
// A team-originated changeset is accepted iff it is exactly one of
//   - a registration: one new teams/<id>/team.json
//   - a submission:   one new submissions/<team>/<challenge>.json whose proof
//                     verifies against the published team and challenge keys
// Validation reads public ledger state only, so any replica can re-run it.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "nizkctf/competition.hpp"
#include "nizkctf/ledger.hpp"

namespace nizkctf {

enum class ReasonCode {
    immutable_path,
    bad_path,
    unknown_challenge,
    unknown_team,
    invalid_proof,
    duplicate_submission,
    duplicate_team,
    malformed_record,
    mixed_concerns,
};

/// Wire name, e.g. "DUPLICATE_SUBMISSION".
std::string_view to_string(ReasonCode code);
std::optional<ReasonCode> reason_from_string(std::string_view text);

struct ValidationVerdict {
    bool accepted = true;
    ReasonCode code = ReasonCode::malformed_record; ///< meaningful only when rejected
    std::string message;

    static ValidationVerdict accept() { return {}; }
    static ValidationVerdict reject(ReasonCode code, std::string message)
    {
        return {false, code, std::move(message)};
    }

    Json to_json() const;
    explicit operator bool() const noexcept { return accepted; }
};

/// Rules for team-originated changesets. Never throws.
ValidationVerdict validate_changeset(const LedgerState& state, const Changeset& changeset);

/// Rules for organizer-signed changesets: new, well-formed challenge
/// descriptors and files under meta/.
ValidationVerdict validate_organizer_changeset(const LedgerState& state,
                                               const Changeset& changeset);

using ApplyResult = std::variant<LedgerEntry, ValidationVerdict>;

/// Validates against replay(chain) and appends on acceptance. On rejection
/// the chain is untouched.
ApplyResult apply_changeset(Chain& chain, const Changeset& changeset, std::uint64_t timestamp);

std::uint64_t unix_now();

/// Owns a chain and serializes every append through one lock. Optionally
/// backed by a ledger.ndjson file: each append takes an advisory lock on
/// the file, picks up entries other processes appended, validates and
/// appends one line.
///
/// Readers get immutable views that are swapped in after each append, so
/// they never wait for a writer.
class ChainOwner {
public:
    struct View {
        std::size_t entries = 0;
        std::string ledger_ndjson;
        std::string scoreboard_json;
        std::string challenges_json;
    };

    /// Throws LedgerError if the chain does not verify.
    explicit ChainOwner(Chain chain);
    /// Loads and verifies the file; later appends go to it.
    explicit ChainOwner(std::filesystem::path ledger_file);

    ChainOwner(const ChainOwner&) = delete;
    ChainOwner& operator=(const ChainOwner&) = delete;

    /// Team-originated append. `timestamp` defaults to max(now, last).
    ApplyResult apply(const Changeset& changeset, std::optional<std::uint64_t> timestamp = {});

    /// Organizer-signed append after validate_organizer_changeset.
    ApplyResult apply_organizer(const Changeset& changeset, const SecretKey& organizer_secret,
                                std::optional<std::uint64_t> timestamp = {});

    std::shared_ptr<const View> view() const;

    /// Picks up entries appended to the backing file by other processes.
    /// Skips the work if a writer currently holds the lock.
    void refresh();

    Chain chain() const;
    LedgerState state() const;

private:
    ApplyResult apply_locked(const Changeset& changeset, std::optional<std::uint64_t> timestamp,
                             const SecretKey* organizer_secret);
    void absorb_locked(std::string_view ndjson_suffix);
    void publish_locked();

    mutable std::mutex mutex_;
    Chain chain_;
    LedgerState state_;
    std::optional<std::filesystem::path> file_;
    std::uintmax_t file_offset_ = 0;
    std::shared_ptr<const View> view_;
};

} // namespace nizkctf
