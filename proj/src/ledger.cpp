#include "nizkctf/ledger.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <sodium.h>

namespace nizkctf {

Digest sha256(ByteView data)
{
    ensure_crypto_ready();
    Digest out;
    crypto_hash_sha256(out.data(), data.data(), data.size());
    return out;
}

bool is_valid_path(std::string_view path)
{
    if (path.empty() || path.size() > max_path_length)
        return false;
    if (path.find('\0') != std::string_view::npos || path.find('\\') != std::string_view::npos)
        return false;
    std::size_t start = 0;
    while (true) {
        std::size_t end = path.find('/', start);
        std::string_view segment =
            path.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
        if (segment.empty() || segment == "." || segment == "..")
            return false;
        if (end == std::string_view::npos)
            return true;
        start = end + 1;
    }
}

// Changeset

void Changeset::validate() const
{
    if (changes.empty())
        throw MalformedInput("changeset is empty");
    std::set<std::string_view> seen;
    for (const auto& change : changes) {
        if (!is_valid_path(change.path))
            throw MalformedInput("invalid path '" + change.path + "'");
        if (!seen.insert(change.path).second)
            throw MalformedInput("path '" + change.path + "' repeated in changeset");
    }
}

Json Changeset::to_json() const
{
    Json list = Json::array();
    for (const auto& change : changes)
        list.push_back({{"content", base64_encode(change.content)}, {"path", change.path}});
    return {{"author", author}, {"changes", std::move(list)}};
}

Changeset Changeset::from_json(const Json& value)
{
    json_field::require_keys(value, {"author", "changes"});
    const Json& list = value.at("changes");
    if (!list.is_array())
        throw MalformedInput("changes must be an array");
    Changeset out;
    out.author = json_field::string(value, "author");
    for (const auto& item : list) {
        json_field::require_keys(item, {"content", "path"});
        out.changes.push_back({json_field::string(item, "path"), json_field::base64(item, "content")});
    }
    return out;
}

// LedgerEntry

namespace {

Json entry_body(const LedgerEntry& entry)
{
    return {{"changeset", entry.changeset.to_json()},
            {"index", entry.index},
            {"prev_hash", hex_encode(entry.prev_hash.view())},
            {"timestamp", entry.timestamp}};
}

Json hashed_body(const LedgerEntry& entry)
{
    Json body = entry_body(entry);
    if (entry.org_sig)
        body["org_sig"] = hex_encode(entry.org_sig->view());
    return body;
}

} // namespace

std::string LedgerEntry::signing_payload() const
{
    return canonical_dump(entry_body(*this));
}

Digest LedgerEntry::compute_hash() const
{
    return sha256(to_bytes(canonical_dump(hashed_body(*this))));
}

std::string LedgerEntry::to_line() const
{
    Json body = hashed_body(*this);
    body["hash"] = hex_encode(hash.view());
    return canonical_dump(body);
}

LedgerEntry LedgerEntry::from_line(std::string_view line)
{
    Json value = parse_json(line);
    if (value.is_object() && value.contains("org_sig"))
        json_field::require_keys(value, {"changeset", "hash", "index", "org_sig", "prev_hash",
                                         "timestamp"});
    else
        json_field::require_keys(value, {"changeset", "hash", "index", "prev_hash", "timestamp"});

    LedgerEntry entry;
    entry.index = json_field::unsigned_integer(value, "index");
    entry.timestamp = json_field::unsigned_integer(value, "timestamp");
    entry.prev_hash = Digest::from(json_field::hex(value, "prev_hash"));
    entry.changeset = Changeset::from_json(value.at("changeset"));
    if (value.contains("org_sig"))
        entry.org_sig = Signature::from(json_field::hex(value, "org_sig"));
    entry.hash = Digest::from(json_field::hex(value, "hash"));

    if (entry.to_line() != line)
        throw MalformedInput("entry is not in canonical form");
    return entry;
}

// LedgerState

const Bytes* LedgerState::find(std::string_view path) const
{
    auto it = files.find(path);
    return it == files.end() ? nullptr : &it->second;
}

void LedgerState::apply(const Changeset& changeset)
{
    for (const auto& change : changeset.changes)
        files.insert_or_assign(change.path, change.content);
}

// Chain operations

LedgerEntry genesis(const PublicKey& organizer_public, ByteView competition_meta,
                    std::uint64_t timestamp)
{
    LedgerEntry entry;
    entry.index = 0;
    entry.timestamp = timestamp;
    entry.changeset.author = "organizer";
    entry.changeset.changes = {
        {std::string(competition_meta_path), Bytes(competition_meta.begin(), competition_meta.end())},
        {std::string(organizer_key_path), to_bytes(hex_encode(organizer_public.view()))},
    };
    entry.hash = entry.compute_hash();
    return entry;
}

LedgerEntry next_entry(std::span<const LedgerEntry> chain, Changeset changeset,
                       std::uint64_t timestamp, const SecretKey* org_secret)
{
    if (chain.empty())
        throw LedgerError("cannot append to an empty chain; create a genesis entry first");
    const LedgerEntry& last = chain.back();
    if (timestamp < last.timestamp)
        throw LedgerError("timestamp " + std::to_string(timestamp) + " precedes last entry's " +
                          std::to_string(last.timestamp));
    changeset.validate();

    LedgerEntry entry;
    entry.index = last.index + 1;
    entry.timestamp = timestamp;
    entry.prev_hash = last.hash;
    entry.changeset = std::move(changeset);
    if (org_secret)
        entry.org_sig = sign(*org_secret, to_bytes(entry.signing_payload())).signature;
    entry.hash = entry.compute_hash();
    return entry;
}

const LedgerEntry& append(Chain& chain, Changeset changeset, std::uint64_t timestamp,
                          const SecretKey* org_secret)
{
    chain.push_back(next_entry(chain, std::move(changeset), timestamp, org_secret));
    return chain.back();
}

PublicKey organizer_key(std::span<const LedgerEntry> chain)
{
    if (chain.empty())
        throw LedgerError("chain is empty");
    for (const auto& change : chain.front().changeset.changes)
        if (change.path == organizer_key_path)
            return fixed_from_hex<PublicKey>(to_string(change.content));
    throw LedgerError("genesis entry does not publish an organizer key");
}

ChainStatus verify_chain(std::span<const LedgerEntry> chain)
{
    if (chain.empty())
        return ChainStatus::fail(0, "chain is empty");

    PublicKey organizer;
    try {
        organizer = organizer_key(chain);
    } catch (const Error& e) {
        return ChainStatus::fail(0, e.what());
    }

    for (std::size_t i = 0; i < chain.size(); ++i) {
        const LedgerEntry& entry = chain[i];
        if (entry.index != i)
            return ChainStatus::fail(i, "index " + std::to_string(entry.index) + " out of sequence");
        if (entry.compute_hash() != entry.hash)
            return ChainStatus::fail(i, "hash mismatch");
        if (i == 0) {
            if (entry.prev_hash != Digest{})
                return ChainStatus::fail(i, "genesis prev_hash is not zero");
        } else {
            if (entry.prev_hash != chain[i - 1].hash)
                return ChainStatus::fail(i, "prev_hash does not link to predecessor");
            if (entry.timestamp < chain[i - 1].timestamp)
                return ChainStatus::fail(i, "timestamp regression");
        }
        try {
            entry.changeset.validate();
        } catch (const MalformedInput& e) {
            return ChainStatus::fail(i, std::string("invalid changeset: ") + e.what());
        }
        if (entry.org_sig) {
            SignedMessage signed_entry{*entry.org_sig, to_bytes(entry.signing_payload())};
            if (!open(organizer, signed_entry.serialize()))
                return ChainStatus::fail(i, "organizer signature does not verify");
        }
    }
    return ChainStatus::pass();
}

LedgerState snapshot_at(std::span<const LedgerEntry> chain, std::size_t index)
{
    if (index >= chain.size())
        throw LedgerError("snapshot index " + std::to_string(index) + " out of range");
    LedgerState state;
    for (std::size_t i = 0; i <= index; ++i)
        state.apply(chain[i].changeset);
    return state;
}

LedgerState replay(std::span<const LedgerEntry> chain)
{
    if (auto status = verify_chain(chain); !status)
        throw LedgerError("chain fails verification at entry " + std::to_string(status.index) +
                          ": " + status.reason);
    return snapshot_at(chain, chain.size() - 1);
}

// ndjson

std::string to_ndjson(std::span<const LedgerEntry> chain)
{
    std::string out;
    for (const auto& entry : chain) {
        out += entry.to_line();
        out += '\n';
    }
    return out;
}

Chain parse_ndjson(std::string_view text)
{
    Chain chain;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos)
            throw LedgerError("line " + std::to_string(chain.size()) + " is not newline-terminated");
        try {
            chain.push_back(LedgerEntry::from_line(text.substr(start, end - start)));
        } catch (const Error& e) {
            throw LedgerError("line " + std::to_string(chain.size()) + ": " + e.what());
        }
        start = end + 1;
    }
    return chain;
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

Chain load_ledger(const std::filesystem::path& path)
{
    return parse_ndjson(read_file(path));
}

void save_ledger(const std::filesystem::path& path, std::span<const LedgerEntry> chain)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot write " + path.string());
    out << to_ndjson(chain);
    if (!out.flush())
        throw Error("failed writing " + path.string());
}

} // namespace nizkctf
