#include "nizkctf/competition.hpp"

#include <algorithm>
#include <array>

namespace nizkctf {

namespace {

/// Decodes UTF-8 into code points. Returns false on malformed input.
bool decode_utf8(std::string_view text, std::vector<char32_t>& out)
{
    std::size_t i = 0;
    while (i < text.size()) {
        auto lead = static_cast<unsigned char>(text[i]);
        std::size_t extra = 0;
        char32_t cp = 0;
        if (lead < 0x80) {
            cp = lead;
        } else if ((lead & 0xe0) == 0xc0) {
            extra = 1;
            cp = lead & 0x1f;
        } else if ((lead & 0xf0) == 0xe0) {
            extra = 2;
            cp = lead & 0x0f;
        } else if ((lead & 0xf8) == 0xf0) {
            extra = 3;
            cp = lead & 0x07;
        } else {
            return false;
        }
        if (i + extra >= text.size() && extra > 0)
            return false;
        for (std::size_t k = 1; k <= extra; ++k) {
            auto next = static_cast<unsigned char>(text[i + k]);
            if ((next & 0xc0) != 0x80)
                return false;
            cp = (cp << 6) | (next & 0x3f);
        }
        static constexpr std::array<char32_t, 4> min_for_length{0, 0x80, 0x800, 0x10000};
        if (cp < min_for_length[extra] || cp > 0x10ffff || (cp >= 0xd800 && cp <= 0xdfff))
            return false;
        out.push_back(cp);
        i += extra + 1;
    }
    return true;
}

// ASCII folding for U+00C0..U+017F. Empty entries are treated as separators.
constexpr std::array<const char*, 0x180 - 0xc0> latin_fold = {
    // U+00C0
    "a", "a", "a", "a", "a", "a", "ae", "c", "e", "e", "e", "e", "i", "i", "i", "i",
    "d", "n", "o", "o", "o", "o", "o", "", "o", "u", "u", "u", "u", "y", "th", "ss",
    "a", "a", "a", "a", "a", "a", "ae", "c", "e", "e", "e", "e", "i", "i", "i", "i",
    "d", "n", "o", "o", "o", "o", "o", "", "o", "u", "u", "u", "u", "y", "th", "y",
    // U+0100
    "a", "a", "a", "a", "a", "a", "c", "c", "c", "c", "c", "c", "c", "c", "d", "d",
    "d", "d", "e", "e", "e", "e", "e", "e", "e", "e", "e", "e", "g", "g", "g", "g",
    "g", "g", "g", "g", "h", "h", "h", "h", "i", "i", "i", "i", "i", "i", "i", "i",
    "i", "i", "ij", "ij", "j", "j", "k", "k", "k", "l", "l", "l", "l", "l", "l", "l",
    // U+0140
    "l", "l", "l", "n", "n", "n", "n", "n", "n", "n", "n", "n", "o", "o", "o", "o",
    "o", "o", "oe", "oe", "r", "r", "r", "r", "r", "r", "s", "s", "s", "s", "s", "s",
    "s", "s", "t", "t", "t", "t", "t", "t", "u", "u", "u", "u", "u", "u", "u", "u",
    "u", "u", "u", "u", "w", "w", "y", "y", "y", "z", "z", "z", "z", "z", "z", "s",
};

bool is_slug_char(char c)
{
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-';
}

} // namespace

bool is_slug(std::string_view text)
{
    return !text.empty() && text.size() <= max_slug_length &&
           std::all_of(text.begin(), text.end(), is_slug_char);
}

std::string slugify(std::string_view name)
{
    std::vector<char32_t> code_points;
    if (!decode_utf8(name, code_points))
        throw MalformedInput("name is not valid UTF-8");

    std::string slug;
    bool pending_hyphen = false;
    auto emit = [&](std::string_view piece) {
        if (pending_hyphen && !slug.empty())
            slug.push_back('-');
        pending_hyphen = false;
        slug.append(piece);
    };
    for (char32_t cp : code_points) {
        if ((cp >= 'a' && cp <= 'z') || (cp >= '0' && cp <= '9')) {
            emit(std::string(1, static_cast<char>(cp)));
        } else if (cp >= 'A' && cp <= 'Z') {
            emit(std::string(1, static_cast<char>(cp - 'A' + 'a')));
        } else if (cp >= 0xc0 && cp < 0x180 && *latin_fold[cp - 0xc0] != '\0') {
            emit(latin_fold[cp - 0xc0]);
        } else {
            pending_hyphen = true;
        }
    }
    if (slug.size() > max_slug_length)
        slug.resize(max_slug_length);
    while (!slug.empty() && slug.back() == '-')
        slug.pop_back();
    if (slug.empty())
        throw MalformedInput("name '" + std::string(name) + "' has no usable characters for an id");
    return slug;
}

bool is_valid_team_name(std::string_view name)
{
    std::vector<char32_t> code_points;
    if (!decode_utf8(name, code_points))
        return false;
    if (code_points.empty() || code_points.size() > 64)
        return false;
    return std::none_of(code_points.begin(), code_points.end(), [](char32_t cp) {
        return cp < 0x20 || (cp >= 0x7f && cp <= 0x9f);
    });
}

// Paths

std::string challenge_path(std::string_view challenge_id)
{
    return "challenges/" + std::string(challenge_id) + ".json";
}

std::string team_path(std::string_view team_id)
{
    return "teams/" + std::string(team_id) + "/team.json";
}

std::string submission_path(std::string_view team_id, std::string_view challenge_id)
{
    return "submissions/" + std::string(team_id) + "/" + std::string(challenge_id) + ".json";
}

namespace {

std::optional<std::string_view> strip(std::string_view text, std::string_view prefix,
                                      std::string_view suffix)
{
    if (text.size() < prefix.size() + suffix.size() || !text.starts_with(prefix) ||
        !text.ends_with(suffix))
        return std::nullopt;
    return text.substr(prefix.size(), text.size() - prefix.size() - suffix.size());
}

} // namespace

std::optional<std::string> parse_challenge_path(std::string_view path)
{
    auto id = strip(path, "challenges/", ".json");
    if (!id || !is_slug(*id))
        return std::nullopt;
    return std::string(*id);
}

std::optional<std::string> parse_team_path(std::string_view path)
{
    auto id = strip(path, "teams/", "/team.json");
    if (!id || !is_slug(*id))
        return std::nullopt;
    return std::string(*id);
}

std::optional<std::pair<std::string, std::string>> parse_submission_path(std::string_view path)
{
    auto inner = strip(path, "submissions/", ".json");
    if (!inner)
        return std::nullopt;
    auto slash = inner->find('/');
    if (slash == std::string_view::npos)
        return std::nullopt;
    auto team = inner->substr(0, slash);
    auto challenge = inner->substr(slash + 1);
    if (!is_slug(team) || !is_slug(challenge))
        return std::nullopt;
    return std::pair{std::string(team), std::string(challenge)};
}

// ChallengeDescriptor

void ChallengeDescriptor::validate() const
{
    if (!is_slug(id))
        throw MalformedInput("challenge id '" + id + "' is not a valid slug");
    if (points < 1)
        throw MalformedInput("challenge points must be at least 1");
    if (!is_valid_public_key(public_key))
        throw MalformedInput("challenge public key is not a valid point");
    kdf.validate();
}

Json ChallengeDescriptor::to_json() const
{
    return {{"categories", categories},
            {"description", description},
            {"id", id},
            {"kdf",
             {{"block_r", kdf.block_r},
              {"cost_n", kdf.cost_n},
              {"out_len", kdf.out_len},
              {"parallel_p", kdf.parallel_p}}},
            {"points", points},
            {"public_key", hex_encode(public_key.view())},
            {"salt", hex_encode(salt.view())},
            {"title", title}};
}

namespace {

std::uint32_t narrow_u32(std::uint64_t value, std::string_view what)
{
    if (value > 0xffffffffu)
        throw MalformedInput(std::string(what) + " out of range");
    return static_cast<std::uint32_t>(value);
}

} // namespace

ChallengeDescriptor ChallengeDescriptor::from_json(const Json& value)
{
    json_field::require_keys(value, {"categories", "description", "id", "kdf", "points",
                                     "public_key", "salt", "title"});
    ChallengeDescriptor out;
    out.id = json_field::string(value, "id");
    out.title = json_field::string(value, "title");
    out.description = json_field::string(value, "description");
    const Json& categories = value.at("categories");
    if (!categories.is_array())
        throw MalformedInput("categories must be an array");
    for (const auto& category : categories) {
        if (!category.is_string())
            throw MalformedInput("categories must be strings");
        out.categories.push_back(category.get<std::string>());
    }
    out.points = json_field::unsigned_integer(value, "points");
    out.salt = ChallengeSalt::from(json_field::hex(value, "salt"));
    out.public_key = PublicKey::from(json_field::hex(value, "public_key"));

    const Json& kdf = value.at("kdf");
    json_field::require_keys(kdf, {"block_r", "cost_n", "out_len", "parallel_p"});
    out.kdf.cost_n = json_field::unsigned_integer(kdf, "cost_n");
    out.kdf.block_r = narrow_u32(json_field::unsigned_integer(kdf, "block_r"), "block_r");
    out.kdf.parallel_p = narrow_u32(json_field::unsigned_integer(kdf, "parallel_p"), "parallel_p");
    out.kdf.out_len = narrow_u32(json_field::unsigned_integer(kdf, "out_len"), "out_len");

    out.validate();
    return out;
}

// TeamRecord

Json TeamRecord::to_json() const
{
    return {{"id", id}, {"name", name}, {"public_key", hex_encode(public_key.view())}};
}

TeamRecord TeamRecord::from_json(const Json& value)
{
    json_field::require_keys(value, {"id", "name", "public_key"});
    TeamRecord out;
    out.id = json_field::string(value, "id");
    out.name = json_field::string(value, "name");
    out.public_key = PublicKey::from(json_field::hex(value, "public_key"));
    if (!is_slug(out.id))
        throw MalformedInput("team id '" + out.id + "' is not a valid slug");
    if (!is_valid_team_name(out.name))
        throw MalformedInput("team name is invalid");
    if (!is_valid_public_key(out.public_key))
        throw MalformedInput("team public key is not a valid point");
    return out;
}

// TeamSecret

KeyPair TeamSecret::keypair() const
{
    return KeyPair{secret_key, secret_key.public_key()};
}

Json TeamSecret::to_json() const
{
    return {{"id", team_id},
            {"public_key", hex_encode(secret_key.public_key().view())},
            {"seed", hex_encode(seed.view())}};
}

TeamSecret TeamSecret::from_json(const Json& value)
{
    json_field::require_keys(value, {"id", "public_key", "seed"});
    TeamSecret out;
    out.team_id = json_field::string(value, "id");
    out.seed = Seed::from(json_field::hex(value, "seed"));
    KeyPair keys = keypair_from_seed(out.seed);
    if (keys.public_key != PublicKey::from(json_field::hex(value, "public_key")))
        throw MalformedInput("stored public key does not match the seed");
    out.secret_key = keys.secret;
    return out;
}

// SubmissionRecord

Json SubmissionRecord::to_json() const
{
    return {{"challenge_id", challenge_id}, {"proof", proof.to_base64()}, {"team_id", team_id}};
}

SubmissionRecord SubmissionRecord::from_json(const Json& value)
{
    json_field::require_keys(value, {"challenge_id", "proof", "team_id"});
    SubmissionRecord out;
    out.team_id = json_field::string(value, "team_id");
    out.challenge_id = json_field::string(value, "challenge_id");
    out.proof = Proof(json_field::base64(value, "proof"));
    return out;
}

// Scoreboard serialization

Json scoreboard_to_json(const Scoreboard& board)
{
    Json rows = Json::array();
    for (const auto& row : board)
        rows.push_back({{"last_solve_index", row.last_solve_index},
                        {"points", row.points},
                        {"rank", row.rank},
                        {"solves", row.solves},
                        {"team_id", row.team_id}});
    return rows;
}

Scoreboard scoreboard_from_json(const Json& value)
{
    if (!value.is_array())
        throw MalformedInput("scoreboard must be an array");
    Scoreboard board;
    for (const auto& row : value) {
        json_field::require_keys(row, {"last_solve_index", "points", "rank", "solves", "team_id"});
        board.push_back({json_field::unsigned_integer(row, "rank"), json_field::string(row, "team_id"),
                         json_field::unsigned_integer(row, "points"),
                         json_field::unsigned_integer(row, "solves"),
                         json_field::unsigned_integer(row, "last_solve_index")});
    }
    return board;
}

// Operations

ChallengeDescriptor new_challenge(std::string_view flag, ChallengeInfo info,
                                  const RandomSource& rng)
{
    if (!is_slug(info.id))
        throw MalformedInput("challenge id '" + info.id + "' is not a valid slug");
    if (info.points < 1)
        throw MalformedInput("challenge points must be at least 1");
    info.kdf.validate();
    if (normalize_flag(flag).empty())
        throw MalformedInput("flag is empty after normalization");

    ChallengeDescriptor descriptor;
    descriptor.id = std::move(info.id);
    descriptor.title = std::move(info.title);
    descriptor.description = std::move(info.description);
    descriptor.categories = std::move(info.categories);
    descriptor.points = info.points;
    descriptor.kdf = info.kdf;
    descriptor.salt = random_salt(rng);
    descriptor.public_key = derive_challenge_keys(flag, descriptor.salt, descriptor.kdf).public_key;
    return descriptor;
}

Changeset challenge_changeset(const ChallengeDescriptor& descriptor)
{
    descriptor.validate();
    return Changeset{{{challenge_path(descriptor.id), encode_record(descriptor)}}, "organizer"};
}

Registration register_team(std::string_view name, const RandomSource& rng)
{
    if (!is_valid_team_name(name))
        throw MalformedInput("team name must be 1-64 printable characters");
    const std::string id = slugify(name);
    const Seed seed = random_seed(rng);
    KeyPair keys = keypair_from_seed(seed);

    Registration out{TeamRecord{id, std::string(name), keys.public_key},
                     TeamSecret{id, seed, keys.secret}, {}};
    out.changeset = Changeset{{{team_path(id), encode_record(out.record)}}, id};
    return out;
}

Submission build_submission(const TeamSecret& secret, const ChallengeDescriptor& descriptor,
                            std::string_view flag)
{
    descriptor.validate();
    if (!check_flag(flag, descriptor.salt, descriptor.kdf, descriptor.public_key))
        throw FlagMismatch();
    KeyPair challenge_keys = derive_challenge_keys(flag, descriptor.salt, descriptor.kdf);

    Submission out;
    out.record = SubmissionRecord{secret.team_id, descriptor.id,
                                  prove(secret.keypair(), challenge_keys.secret, descriptor.id)};
    out.changeset = Changeset{
        {{submission_path(secret.team_id, descriptor.id), encode_record(out.record)}},
        secret.team_id};
    return out;
}

// Reading state

std::map<std::string, ChallengeDescriptor> challenges_in(const LedgerState& state)
{
    std::map<std::string, ChallengeDescriptor> out;
    for (auto it = state.files.lower_bound(std::string_view("challenges/"));
         it != state.files.end() && it->first.starts_with("challenges/"); ++it) {
        auto id = parse_challenge_path(it->first);
        if (!id)
            continue;
        try {
            auto descriptor = decode_record<ChallengeDescriptor>(it->second);
            if (descriptor.id != *id)
                throw MalformedInput("id does not match its path");
            out.emplace(*id, std::move(descriptor));
        } catch (const MalformedInput& e) {
            throw AuditError(it->first + ": " + e.what());
        }
    }
    return out;
}

std::map<std::string, TeamRecord> teams_in(const LedgerState& state)
{
    std::map<std::string, TeamRecord> out;
    for (auto it = state.files.lower_bound(std::string_view("teams/"));
         it != state.files.end() && it->first.starts_with("teams/"); ++it) {
        auto id = parse_team_path(it->first);
        if (!id)
            continue;
        try {
            auto record = decode_record<TeamRecord>(it->second);
            if (record.id != *id)
                throw MalformedInput("id does not match its path");
            out.emplace(*id, std::move(record));
        } catch (const MalformedInput& e) {
            throw AuditError(it->first + ": " + e.what());
        }
    }
    return out;
}

Scoreboard compute_scoreboard(const LedgerState& state, std::span<const LedgerEntry> chain)
{
    const auto challenges = challenges_in(state);
    const auto teams = teams_in(state);

    std::map<std::string, std::uint64_t, std::less<>> written_at;
    for (const auto& entry : chain)
        for (const auto& change : entry.changeset.changes)
            if (change.path.starts_with("submissions/"))
                written_at.emplace(change.path, entry.index);

    std::map<std::string, ScoreboardRow> rows;
    for (auto it = state.files.lower_bound(std::string_view("submissions/"));
         it != state.files.end() && it->first.starts_with("submissions/"); ++it) {
        auto ids = parse_submission_path(it->first);
        if (!ids)
            continue;
        const auto& [team_id, challenge_id] = *ids;
        SubmissionRecord record;
        try {
            record = decode_record<SubmissionRecord>(it->second);
        } catch (const MalformedInput& e) {
            throw AuditError(it->first + ": " + e.what());
        }
        if (record.team_id != team_id || record.challenge_id != challenge_id)
            throw AuditError(it->first + ": record ids do not match its path");
        if (!teams.contains(team_id))
            throw AuditError(it->first + ": unknown team '" + team_id + "'");
        auto challenge = challenges.find(challenge_id);
        if (challenge == challenges.end())
            throw AuditError(it->first + ": unknown challenge '" + challenge_id + "'");
        auto index = written_at.find(it->first);
        if (index == written_at.end())
            throw AuditError(it->first + ": not written by any entry of the chain");

        ScoreboardRow& row = rows[team_id];
        row.team_id = team_id;
        row.points += challenge->second.points;
        row.solves += 1;
        row.last_solve_index = std::max(row.last_solve_index, index->second);
    }

    Scoreboard board;
    for (auto& [id, row] : rows)
        board.push_back(std::move(row));
    std::sort(board.begin(), board.end(), [](const ScoreboardRow& a, const ScoreboardRow& b) {
        if (a.points != b.points)
            return a.points > b.points;
        if (a.last_solve_index != b.last_solve_index)
            return a.last_solve_index < b.last_solve_index;
        return a.team_id < b.team_id;
    });
    for (std::size_t i = 0; i < board.size(); ++i)
        board[i].rank = i + 1;
    return board;
}

} // namespace nizkctf
