#include "nizkctf/validator.hpp"

#include <array>
#include <chrono>
#include <utility>

#include <fcntl.h>
#include <sys/file.h>
#include <sys/stat.h>
#include <unistd.h>

namespace nizkctf {

namespace {

constexpr std::array<std::pair<ReasonCode, std::string_view>, 9> reason_names{{
    {ReasonCode::immutable_path, "IMMUTABLE_PATH"},
    {ReasonCode::bad_path, "BAD_PATH"},
    {ReasonCode::unknown_challenge, "UNKNOWN_CHALLENGE"},
    {ReasonCode::unknown_team, "UNKNOWN_TEAM"},
    {ReasonCode::invalid_proof, "INVALID_PROOF"},
    {ReasonCode::duplicate_submission, "DUPLICATE_SUBMISSION"},
    {ReasonCode::duplicate_team, "DUPLICATE_TEAM"},
    {ReasonCode::malformed_record, "MALFORMED_RECORD"},
    {ReasonCode::mixed_concerns, "MIXED_CONCERNS"},
}};

} // namespace

std::string_view to_string(ReasonCode code)
{
    for (const auto& [value, name] : reason_names)
        if (value == code)
            return name;
    return "UNKNOWN";
}

std::optional<ReasonCode> reason_from_string(std::string_view text)
{
    for (const auto& [value, name] : reason_names)
        if (name == text)
            return value;
    return std::nullopt;
}

Json ValidationVerdict::to_json() const
{
    if (accepted)
        return {{"outcome", "ACCEPT"}};
    return {{"code", to_string(code)}, {"message", message}, {"outcome", "REJECT"}};
}

// Rules

namespace {

using Verdict = ValidationVerdict;

Verdict validate_registration(const LedgerState& state, const FileChange& change,
                              const std::string& path_id)
{
    if (state.contains(change.path))
        return Verdict::reject(ReasonCode::duplicate_team, "team '" + path_id + "' already exists");
    TeamRecord record;
    try {
        record = decode_record<TeamRecord>(change.content);
    } catch (const Error& e) {
        return Verdict::reject(ReasonCode::malformed_record, e.what());
    }
    if (record.id != path_id)
        return Verdict::reject(ReasonCode::malformed_record, "team id does not match its path");
    for (const auto& [id, existing] : teams_in(state))
        if (existing.public_key == record.public_key)
            return Verdict::reject(ReasonCode::duplicate_team,
                                   "public key already registered by team '" + id + "'");
    return Verdict::accept();
}

Verdict validate_submission(const LedgerState& state, const FileChange& change,
                            const std::string& team_id, const std::string& challenge_id)
{
    SubmissionRecord record;
    try {
        record = decode_record<SubmissionRecord>(change.content);
    } catch (const Error& e) {
        return Verdict::reject(ReasonCode::malformed_record, e.what());
    }
    if (record.team_id != team_id || record.challenge_id != challenge_id)
        return Verdict::reject(ReasonCode::malformed_record, "submission ids do not match its path");

    const Bytes* team_file = state.find(team_path(team_id));
    if (!team_file)
        return Verdict::reject(ReasonCode::unknown_team, "no team '" + team_id + "'");
    const Bytes* challenge_file = state.find(challenge_path(challenge_id));
    if (!challenge_file)
        return Verdict::reject(ReasonCode::unknown_challenge, "no challenge '" + challenge_id + "'");
    if (state.contains(change.path))
        return Verdict::reject(ReasonCode::duplicate_submission,
                               "team '" + team_id + "' already solved '" + challenge_id + "'");

    const auto team = decode_record<TeamRecord>(*team_file);
    const auto challenge = decode_record<ChallengeDescriptor>(*challenge_file);
    if (verify_proof(team.public_key, challenge.public_key, challenge.id, record.proof) !=
        ProofVerdict::accept)
        return Verdict::reject(ReasonCode::invalid_proof,
                               "proof does not verify for team '" + team_id + "' and challenge '" +
                                   challenge_id + "'");
    return Verdict::accept();
}

Verdict check_structure(const Changeset& changeset)
{
    if (changeset.changes.empty())
        return Verdict::reject(ReasonCode::malformed_record, "changeset is empty");
    try {
        changeset.validate();
    } catch (const MalformedInput& e) {
        return Verdict::reject(ReasonCode::bad_path, e.what());
    }
    return Verdict::accept();
}

Verdict outside_allowed(const LedgerState& state, const std::string& path)
{
    if (state.contains(path))
        return Verdict::reject(ReasonCode::immutable_path, "'" + path + "' is already committed");
    return Verdict::reject(ReasonCode::bad_path, "'" + path + "' is not a writable location");
}

} // namespace

ValidationVerdict validate_changeset(const LedgerState& state, const Changeset& changeset)
{
    try {
        if (auto structure = check_structure(changeset); !structure)
            return structure;

        std::size_t registrations = 0;
        std::size_t submissions = 0;
        for (const auto& change : changeset.changes) {
            if (parse_team_path(change.path))
                ++registrations;
            else if (parse_submission_path(change.path))
                ++submissions;
            else
                return outside_allowed(state, change.path);
        }
        if (changeset.changes.size() != 1)
            return Verdict::reject(ReasonCode::mixed_concerns,
                                   registrations && submissions
                                       ? "registration and submission in one changeset"
                                       : "more than one record in one changeset");

        const FileChange& change = changeset.changes.front();
        if (auto team = parse_team_path(change.path))
            return validate_registration(state, change, *team);
        auto [team_id, challenge_id] = *parse_submission_path(change.path);
        return validate_submission(state, change, team_id, challenge_id);
    } catch (const Error& e) {
        return Verdict::reject(ReasonCode::malformed_record, e.what());
    }
}

ValidationVerdict validate_organizer_changeset(const LedgerState& state,
                                               const Changeset& changeset)
{
    try {
        if (auto structure = check_structure(changeset); !structure)
            return structure;
        for (const auto& change : changeset.changes) {
            if (auto id = parse_challenge_path(change.path)) {
                if (state.contains(change.path))
                    return Verdict::reject(ReasonCode::immutable_path,
                                           "challenge '" + *id + "' already exists");
                ChallengeDescriptor descriptor;
                try {
                    descriptor = decode_record<ChallengeDescriptor>(change.content);
                } catch (const Error& e) {
                    return Verdict::reject(ReasonCode::malformed_record, e.what());
                }
                if (descriptor.id != *id)
                    return Verdict::reject(ReasonCode::malformed_record,
                                           "challenge id does not match its path");
            } else if (change.path.starts_with("meta/") && change.path != organizer_key_path) {
                continue;
            } else {
                return outside_allowed(state, change.path);
            }
        }
        return Verdict::accept();
    } catch (const Error& e) {
        return Verdict::reject(ReasonCode::malformed_record, e.what());
    }
}

ApplyResult apply_changeset(Chain& chain, const Changeset& changeset, std::uint64_t timestamp)
{
    const LedgerState state = replay(chain);
    if (auto verdict = validate_changeset(state, changeset); !verdict)
        return verdict;
    return append(chain, changeset, timestamp);
}

std::uint64_t unix_now()
{
    using namespace std::chrono;
    return static_cast<std::uint64_t>(
        duration_cast<seconds>(system_clock::now().time_since_epoch()).count());
}

// ChainOwner

namespace {

/// Advisory flock() on a ledger file, released on destruction.
class FileLock {
public:
    FileLock(const std::filesystem::path& path, bool exclusive)
    {
        fd_ = ::open(path.c_str(), O_RDWR | O_APPEND | O_CLOEXEC);
        if (fd_ < 0)
            throw Error("cannot open ledger " + path.string());
        if (::flock(fd_, exclusive ? LOCK_EX : LOCK_SH) != 0) {
            ::close(fd_);
            throw Error("cannot lock ledger " + path.string());
        }
    }
    ~FileLock()
    {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
    FileLock(const FileLock&) = delete;
    FileLock& operator=(const FileLock&) = delete;

    std::string read_from(std::uintmax_t offset) const
    {
        struct stat info {};
        if (::fstat(fd_, &info) != 0)
            throw Error("cannot stat ledger");
        const auto size = static_cast<std::uintmax_t>(info.st_size);
        if (size < offset)
            throw LedgerError("ledger file shrank; committed history was removed");
        std::string text(size - offset, '\0');
        std::size_t done = 0;
        while (done < text.size()) {
            ssize_t n = ::pread(fd_, text.data() + done, text.size() - done,
                                static_cast<off_t>(offset + done));
            if (n <= 0)
                throw Error("cannot read ledger");
            done += static_cast<std::size_t>(n);
        }
        return text;
    }

    void append(std::string_view text) const
    {
        std::size_t done = 0;
        while (done < text.size()) {
            ssize_t n = ::write(fd_, text.data() + done, text.size() - done);
            if (n <= 0)
                throw Error("cannot append to ledger");
            done += static_cast<std::size_t>(n);
        }
    }

private:
    int fd_ = -1;
};

} // namespace

ChainOwner::ChainOwner(Chain chain) : chain_(std::move(chain))
{
    state_ = replay(chain_);
    publish_locked();
}

ChainOwner::ChainOwner(std::filesystem::path ledger_file) : file_(std::move(ledger_file))
{
    std::string text;
    {
        FileLock lock(*file_, false);
        text = lock.read_from(0);
    }
    chain_ = parse_ndjson(text);
    file_offset_ = text.size();
    state_ = replay(chain_);
    publish_locked();
}

void ChainOwner::absorb_locked(std::string_view text)
{
    if (text.empty())
        return;
    Chain extension = parse_ndjson(text);
    Chain extended = chain_;
    extended.insert(extended.end(), extension.begin(), extension.end());
    if (auto status = verify_chain(extended); !status)
        throw LedgerError("ledger file fails verification at entry " +
                          std::to_string(status.index) + ": " + status.reason);
    for (const auto& entry : extension)
        state_.apply(entry.changeset);
    chain_ = std::move(extended);
    file_offset_ += text.size();
    publish_locked();
}

void ChainOwner::refresh()
{
    if (!file_)
        return;
    std::unique_lock lock(mutex_, std::try_to_lock);
    if (!lock.owns_lock())
        return;
    std::string text = FileLock(*file_, false).read_from(file_offset_);
    absorb_locked(text);
}

ApplyResult ChainOwner::apply(const Changeset& changeset, std::optional<std::uint64_t> timestamp)
{
    std::lock_guard lock(mutex_);
    return apply_locked(changeset, timestamp, nullptr);
}

ApplyResult ChainOwner::apply_organizer(const Changeset& changeset,
                                        const SecretKey& organizer_secret,
                                        std::optional<std::uint64_t> timestamp)
{
    std::lock_guard lock(mutex_);
    if (organizer_secret.public_key() != organizer_key(chain_))
        throw Error("organizer key does not match the key published in the genesis entry");
    return apply_locked(changeset, timestamp, &organizer_secret);
}

ApplyResult ChainOwner::apply_locked(const Changeset& changeset,
                                     std::optional<std::uint64_t> timestamp,
                                     const SecretKey* organizer_secret)
{
    std::optional<FileLock> file_lock;
    if (file_) {
        file_lock.emplace(*file_, true);
        // another process may have appended since we last looked
        absorb_locked(file_lock->read_from(file_offset_));
    }

    ValidationVerdict verdict = organizer_secret ? validate_organizer_changeset(state_, changeset)
                                                 : validate_changeset(state_, changeset);
    if (!verdict)
        return verdict;

    const std::uint64_t when = std::max(timestamp.value_or(unix_now()), chain_.back().timestamp);
    LedgerEntry entry = next_entry(chain_, changeset, when, organizer_secret);
    if (file_lock) {
        std::string line = entry.to_line() + '\n';
        file_lock->append(line);
        file_offset_ += line.size();
    }
    state_.apply(entry.changeset);
    chain_.push_back(entry);
    publish_locked();
    return entry;
}

void ChainOwner::publish_locked()
{
    auto next = std::make_shared<View>();
    auto previous = std::atomic_load(&view_);
    next->entries = chain_.size();
    if (previous && previous->entries <= chain_.size()) {
        next->ledger_ndjson = previous->ledger_ndjson;
        for (std::size_t i = previous->entries; i < chain_.size(); ++i)
            next->ledger_ndjson += chain_[i].to_line() + '\n';
    } else {
        next->ledger_ndjson = to_ndjson(chain_);
    }

    if (previous && previous->entries == chain_.size()) {
        next->scoreboard_json = previous->scoreboard_json;
        next->challenges_json = previous->challenges_json;
    } else {
        try {
            next->scoreboard_json = canonical_dump(scoreboard_to_json(compute_scoreboard(state_, chain_)));
            Json list = Json::array();
            for (const auto& [id, descriptor] : challenges_in(state_))
                list.push_back(descriptor.to_json());
            next->challenges_json = canonical_dump(list);
        } catch (const Error&) {
            // organizer content outside the validator's reach; keep serving the last good view
            next->scoreboard_json = previous ? previous->scoreboard_json : "[]";
            next->challenges_json = previous ? previous->challenges_json : "[]";
        }
    }
    std::atomic_store(&view_, std::shared_ptr<const View>(std::move(next)));
}

std::shared_ptr<const ChainOwner::View> ChainOwner::view() const
{
    return std::atomic_load(&view_);
}

Chain ChainOwner::chain() const
{
    std::lock_guard lock(mutex_);
    return chain_;
}

LedgerState ChainOwner::state() const
{
    std::lock_guard lock(mutex_);
    return state_;
}

} // namespace nizkctf
