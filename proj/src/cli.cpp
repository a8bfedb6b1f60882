#include "nizkctf/cli.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>
#include <vector>

#include <CLI11.hpp>
#include <fcntl.h>
#include <termios.h>
#include <unistd.h>

#include "nizkctf/audit.hpp"
#include "nizkctf/competition.hpp"
#include "nizkctf/service.hpp"
#include "nizkctf/validator.hpp"

namespace nizkctf {

namespace {

namespace fs = std::filesystem;

/// Raised for invocations that parse but make no sense (exit 2).
class UsageError : public Error {
public:
    using Error::Error;
};

struct GlobalOptions {
    std::string ledger = "ledger.ndjson";
    std::string service_url;
    bool json = false;
};

// Files

/// Creates `path` with owner-only permissions; refuses to overwrite.
void write_private_file(const fs::path& path, std::string_view content)
{
    int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_EXCL | O_CLOEXEC, 0600);
    if (fd < 0)
        throw Error("cannot create " + path.string() + " (does it already exist?)");
    std::size_t done = 0;
    while (done < content.size()) {
        ssize_t n = ::write(fd, content.data() + done, content.size() - done);
        if (n <= 0) {
            ::close(fd);
            throw Error("cannot write " + path.string());
        }
        done += static_cast<std::size_t>(n);
    }
    ::close(fd);
}

TeamSecret load_secret(const fs::path& path)
{
    try {
        return TeamSecret::from_json(parse_json(read_file(path)));
    } catch (const MalformedInput& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

/// Reads a flag from the prompt with echo disabled when stdin is a terminal.
std::string prompt_flag(std::istream& in, std::ostream& err)
{
    err << "Flag: " << std::flush;
    termios saved{};
    const bool tty = &in == &std::cin && ::isatty(STDIN_FILENO) && ::tcgetattr(STDIN_FILENO, &saved) == 0;
    if (tty) {
        termios quiet = saved;
        quiet.c_lflag &= ~static_cast<tcflag_t>(ECHO);
        ::tcsetattr(STDIN_FILENO, TCSANOW, &quiet);
    }
    std::string flag;
    std::getline(in, flag);
    if (tty) {
        ::tcsetattr(STDIN_FILENO, TCSANOW, &saved);
        err << '\n';
    }
    return flag;
}

std::string obtain_flag(const std::string& flag, const std::string& flag_file, std::istream& in,
                        std::ostream& err)
{
    if (!flag.empty() && !flag_file.empty())
        throw UsageError("use only one of --flag and --flag-file");
    if (!flag.empty())
        return flag;
    if (!flag_file.empty())
        return read_file(flag_file);
    return prompt_flag(in, err);
}

// Targets

/// Where player commands send changesets and read state from.
class Target {
public:
    virtual ~Target() = default;
    virtual SubmitOutcome submit(const Changeset& changeset) = 0;
    virtual std::vector<ChallengeDescriptor> challenges() = 0;
    virtual Scoreboard scoreboard() = 0;
    virtual std::string ledger_text() = 0;
};

class LedgerTarget : public Target {
public:
    explicit LedgerTarget(fs::path path) : path_(std::move(path)) {}

    SubmitOutcome submit(const Changeset& changeset) override
    {
        ApplyResult result = owner().apply(changeset);
        SubmitOutcome outcome;
        if (auto* entry = std::get_if<LedgerEntry>(&result)) {
            outcome.accepted = true;
            outcome.index = entry->index;
            outcome.hash = hex_encode(entry->hash.view());
        } else {
            outcome.verdict = std::get<ValidationVerdict>(result);
        }
        return outcome;
    }

    std::vector<ChallengeDescriptor> challenges() override
    {
        std::vector<ChallengeDescriptor> out;
        for (auto& [id, descriptor] : challenges_in(owner().state()))
            out.push_back(std::move(descriptor));
        return out;
    }

    Scoreboard scoreboard() override
    {
        return scoreboard_from_json(parse_json(owner().view()->scoreboard_json));
    }

    std::string ledger_text() override { return read_file(path_); }

    ChainOwner& owner()
    {
        if (!owner_)
            owner_ = std::make_unique<ChainOwner>(path_);
        return *owner_;
    }

private:
    fs::path path_;
    std::unique_ptr<ChainOwner> owner_;
};

class ServiceTarget : public Target {
public:
    explicit ServiceTarget(std::string url) : client_(std::move(url)) {}

    SubmitOutcome submit(const Changeset& changeset) override { return client_.submit(changeset); }

    std::vector<ChallengeDescriptor> challenges() override
    {
        std::vector<ChallengeDescriptor> out;
        for (const auto& item : parse_json(client_.get("/challenges")))
            out.push_back(ChallengeDescriptor::from_json(item));
        return out;
    }

    Scoreboard scoreboard() override
    {
        return scoreboard_from_json(parse_json(client_.get("/scoreboard")));
    }

    std::string ledger_text() override { return client_.get("/ledger"); }

private:
    ServiceClient client_;
};

std::unique_ptr<Target> make_target(const GlobalOptions& options)
{
    if (!options.service_url.empty())
        return std::make_unique<ServiceTarget>(options.service_url);
    return std::make_unique<LedgerTarget>(options.ledger);
}

// Output helpers

std::string join(const std::vector<std::string>& items, std::string_view separator)
{
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i)
            out += separator;
        out += items[i];
    }
    return out;
}

void print_table(std::ostream& out, const std::vector<std::vector<std::string>>& rows)
{
    if (rows.empty())
        return;
    std::vector<std::size_t> widths(rows.front().size(), 0);
    for (const auto& row : rows)
        for (std::size_t i = 0; i < row.size(); ++i)
            widths[i] = std::max(widths[i], row[i].size());
    for (const auto& row : rows) {
        std::string line;
        for (std::size_t i = 0; i < row.size(); ++i) {
            line += row[i];
            if (i + 1 < row.size())
                line += std::string(widths[i] - row[i].size() + 2, ' ');
        }
        out << line << '\n';
    }
}

int report_outcome(const SubmitOutcome& outcome, const GlobalOptions& options, std::ostream& out)
{
    if (options.json) {
        Json reply = outcome.accepted
                         ? Json{{"hash", outcome.hash}, {"index", outcome.index}, {"outcome", "ACCEPT"}}
                         : outcome.verdict.to_json();
        out << canonical_dump(reply) << '\n';
    } else if (outcome.accepted) {
        out << "ACCEPT entry " << outcome.index << " " << outcome.hash << '\n';
    } else {
        out << "REJECT " << to_string(outcome.verdict.code) << ": " << outcome.verdict.message
            << '\n';
    }
    return outcome.accepted ? exit_ok : exit_rejected;
}

// Commands

struct InitArgs {
    std::string name;
    std::string dir;
};

int cmd_init(const InitArgs& args, const GlobalOptions& options, std::ostream& out)
{
    const fs::path dir(args.dir);
    fs::create_directories(dir);
    const fs::path ledger = dir / "ledger.ndjson";
    const fs::path key_file = dir / "organizer.key";
    if (fs::exists(ledger))
        throw Error(ledger.string() + " already exists");

    const Seed seed = random_seed(system_random());
    const KeyPair organizer = keypair_from_seed(seed);
    const TeamSecret organizer_secret{"organizer", seed, organizer.secret};
    write_private_file(key_file, canonical_dump(organizer_secret.to_json()) + "\n");

    const std::string meta = canonical_dump({{"name", args.name}});
    const Chain chain{genesis(organizer.public_key, to_bytes(meta), unix_now())};
    save_ledger(ledger, chain);

    if (options.json)
        out << canonical_dump({{"hash", hex_encode(chain.front().hash.view())},
                               {"ledger", ledger.string()},
                               {"organizer_key", key_file.string()}})
            << '\n';
    else
        out << "created " << ledger.string() << "\norganizer key written to " << key_file.string()
            << " (keep it private)\n";
    return exit_ok;
}

struct ChallengeAddArgs {
    std::string id;
    std::string title;
    std::string description;
    std::uint64_t points = 0;
    std::string flag;
    std::string flag_file;
    std::vector<std::string> categories;
    std::string kdf_profile = "competition";
    std::string organizer_key;
};

int cmd_challenge_add(const ChallengeAddArgs& args, const GlobalOptions& options,
                      std::istream& in, std::ostream& out, std::ostream& err)
{
    if (!options.service_url.empty())
        throw UsageError("challenge add appends organizer-signed entries to a local --ledger");
    const fs::path ledger(options.ledger);
    const fs::path key_path = args.organizer_key.empty()
                                  ? ledger.parent_path() / "organizer.key"
                                  : fs::path(args.organizer_key);
    const TeamSecret organizer = load_secret(key_path);
    const KdfParams kdf = args.kdf_profile == "test" ? KdfParams::test() : KdfParams::competition();

    const std::string flag = obtain_flag(args.flag, args.flag_file, in, err);
    ChallengeDescriptor descriptor =
        new_challenge(flag, {args.id, args.title, args.description, args.categories, args.points, kdf},
                      system_random());

    ChainOwner owner(ledger);
    ApplyResult result = owner.apply_organizer(challenge_changeset(descriptor), organizer.secret_key);
    if (auto* verdict = std::get_if<ValidationVerdict>(&result)) {
        SubmitOutcome outcome;
        outcome.verdict = *verdict;
        return report_outcome(outcome, options, out);
    }
    const auto& entry = std::get<LedgerEntry>(result);
    if (options.json)
        out << canonical_dump({{"challenge", descriptor.to_json()}, {"index", entry.index}}) << '\n';
    else
        out << "added challenge " << descriptor.id << " (" << descriptor.points << " points) at entry "
            << entry.index << '\n';
    return exit_ok;
}

struct RegisterArgs {
    std::string name;
    std::string secret_out;
};

int cmd_team_register(const RegisterArgs& args, const GlobalOptions& options, std::ostream& out)
{
    Registration registration = register_team(args.name, system_random());
    const fs::path secret_path(args.secret_out);
    write_private_file(secret_path, canonical_dump(registration.secret.to_json()) + "\n");

    SubmitOutcome outcome;
    try {
        outcome = make_target(options)->submit(registration.changeset);
    } catch (...) {
        fs::remove(secret_path);
        throw;
    }
    if (!outcome.accepted) {
        fs::remove(secret_path);
        return report_outcome(outcome, options, out);
    }
    if (options.json)
        out << canonical_dump({{"index", outcome.index},
                               {"outcome", "ACCEPT"},
                               {"team", registration.record.to_json()}})
            << '\n';
    else
        out << "registered team " << registration.record.id << " at entry " << outcome.index
            << "; secret saved to " << secret_path.string() << '\n';
    return exit_ok;
}

int cmd_challenges(const GlobalOptions& options, std::ostream& out)
{
    auto challenges = make_target(options)->challenges();
    if (options.json) {
        Json list = Json::array();
        for (const auto& descriptor : challenges)
            list.push_back(descriptor.to_json());
        out << canonical_dump(list) << '\n';
        return exit_ok;
    }
    std::vector<std::vector<std::string>> rows{{"ID", "POINTS", "CATEGORIES", "TITLE", "DESCRIPTION"}};
    for (const auto& c : challenges)
        rows.push_back({c.id, std::to_string(c.points), join(c.categories, ","), c.title, c.description});
    print_table(out, rows);
    return exit_ok;
}

struct SubmitArgs {
    std::string challenge;
    std::string flag;
    std::string flag_file;
    std::string secret = "team.secret";
};

int cmd_submit(const SubmitArgs& args, const GlobalOptions& options, std::istream& in,
               std::ostream& out, std::ostream& err)
{
    const TeamSecret secret = load_secret(args.secret);
    auto target = make_target(options);

    std::optional<ChallengeDescriptor> descriptor;
    for (auto& candidate : target->challenges())
        if (candidate.id == args.challenge)
            descriptor = std::move(candidate);
    if (!descriptor)
        throw Error("no challenge '" + args.challenge + "'");

    const std::string flag = obtain_flag(args.flag, args.flag_file, in, err);
    Submission submission;
    try {
        submission = build_submission(secret, *descriptor, flag);
    } catch (const FlagMismatch&) {
        if (options.json)
            out << canonical_dump({{"code", "FLAG_MISMATCH"}, {"outcome", "REJECT"}}) << '\n';
        err << "flag mismatch\n";
        return exit_rejected;
    }
    return report_outcome(target->submit(submission.changeset), options, out);
}

int cmd_score(const std::string& out_path, const GlobalOptions& options, std::ostream& out)
{
    const Scoreboard board = make_target(options)->scoreboard();
    const std::string serialized = canonical_dump(scoreboard_to_json(board));
    {
        std::ofstream file(out_path, std::ios::binary | std::ios::trunc);
        if (!file || !(file << serialized << '\n'))
            throw Error("cannot write " + out_path);
    }
    if (options.json) {
        out << serialized << '\n';
        return exit_ok;
    }
    std::vector<std::vector<std::string>> rows{{"RANK", "TEAM", "POINTS", "SOLVES"}};
    for (const auto& row : board)
        rows.push_back({std::to_string(row.rank), row.team_id, std::to_string(row.points),
                        std::to_string(row.solves)});
    print_table(out, rows);
    return exit_ok;
}

int cmd_audit(const GlobalOptions& options, std::ostream& out)
{
    const AuditReport report = audit_ledger_text(make_target(options)->ledger_text());
    if (options.json) {
        out << canonical_dump(report.to_json()) << '\n';
    } else if (report.clean()) {
        out << "audit clean: " << report.entries << " entries, " << report.scoreboard.size()
            << " scoring teams\n";
    } else {
        for (const auto& finding : report.findings) {
            out << (finding.index ? "entry " + std::to_string(*finding.index) : std::string("ledger"))
                << ": " << finding.code << ": " << finding.message << '\n';
        }
    }
    return report.clean() ? exit_ok : exit_rejected;
}

struct ServeArgs {
    std::string host = "127.0.0.1";
    int port = 8080;
};

int cmd_serve(const ServeArgs& args, const GlobalOptions& options, std::ostream& out)
{
    if (!options.service_url.empty())
        throw UsageError("serve runs against a local --ledger");
    ChainOwner owner{fs::path(options.ledger)};
    Service service(owner);
    out << "serving " << options.ledger << " on http://" << args.host << ":" << args.port
        << std::endl;
    if (!service.listen(args.host, args.port))
        throw Error("cannot listen on " + args.host + ":" + std::to_string(args.port));
    return exit_ok;
}

} // namespace

int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err,
            std::istream& in)
{
    CLI::App app{"Capture-the-flag platform where teams prove solutions without revealing flags",
                 "nizkctf"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOptions options;
    app.add_option("--ledger", options.ledger, "ledger.ndjson to read and append to")
        ->capture_default_str();
    app.add_option("--service-url", options.service_url,
                   "submit to and read from a running service instead of a local ledger");
    app.add_flag("--json", options.json, "print canonical JSON instead of tables");

    InitArgs init_args;
    auto* init = app.add_subcommand("init", "create a competition ledger and organizer key");
    init->add_option("--name", init_args.name, "competition name")->required();
    init->add_option("--dir", init_args.dir, "directory for ledger.ndjson and organizer.key")
        ->required();

    ChallengeAddArgs add_args;
    auto* challenge = app.add_subcommand("challenge", "organizer challenge management");
    challenge->require_subcommand(1);
    auto* add = challenge->add_subcommand("add", "publish a challenge (organizer-signed)");
    add->add_option("--id", add_args.id, "challenge id, [a-z0-9-]{1,64}")->required();
    add->add_option("--title", add_args.title)->required();
    add->add_option("--description", add_args.description);
    add->add_option("--points", add_args.points)->required()->check(CLI::PositiveNumber);
    add->add_option("--flag", add_args.flag, "flag text (visible in process listings)");
    add->add_option("--flag-file", add_args.flag_file, "read the flag from a file");
    add->add_option("--category", add_args.categories)->allow_extra_args(false);
    add->add_option("--kdf-profile", add_args.kdf_profile)
        ->check(CLI::IsMember({"competition", "test"}))
        ->capture_default_str();
    add->add_option("--organizer-key", add_args.organizer_key,
                    "defaults to organizer.key next to the ledger");

    RegisterArgs register_args;
    auto* team = app.add_subcommand("team", "team management");
    team->require_subcommand(1);
    auto* reg = team->add_subcommand("register", "register a new team");
    reg->add_option("--name", register_args.name)->required();
    reg->add_option("--secret-out", register_args.secret_out, "where to save the team secret")
        ->required();

    auto* challenges = app.add_subcommand("challenges", "list published challenges");

    SubmitArgs submit_args;
    auto* submit = app.add_subcommand("submit", "prove a solved challenge");
    submit->add_option("--challenge", submit_args.challenge)->required();
    submit->add_option("--flag", submit_args.flag, "flag text (visible in process listings)");
    submit->add_option("--flag-file", submit_args.flag_file, "read the flag from a file");
    submit->add_option("--secret", submit_args.secret, "team secret file")->capture_default_str();

    std::string score_out = "scoreboard.json";
    auto* score = app.add_subcommand("score", "print the scoreboard and write scoreboard.json");
    score->add_option("--out", score_out)->capture_default_str();

    auto* audit = app.add_subcommand("audit", "replay and verify the whole ledger");

    ServeArgs serve_args;
    auto* serve = app.add_subcommand("serve", "run the validator service on a local ledger");
    serve->add_option("--host", serve_args.host)->capture_default_str();
    serve->add_option("--port", serve_args.port)->capture_default_str();

    std::vector<const char*> argv{"nizkctf"};
    for (const auto& arg : args)
        argv.push_back(arg.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_usage;
    }

    try {
        if (init->parsed())
            return cmd_init(init_args, options, out);
        if (add->parsed())
            return cmd_challenge_add(add_args, options, in, out, err);
        if (reg->parsed())
            return cmd_team_register(register_args, options, out);
        if (challenges->parsed())
            return cmd_challenges(options, out);
        if (submit->parsed())
            return cmd_submit(submit_args, options, in, out, err);
        if (score->parsed())
            return cmd_score(score_out, options, out);
        if (audit->parsed())
            return cmd_audit(options, out);
        if (serve->parsed())
            return cmd_serve(serve_args, options, out);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return exit_usage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_rejected;
    }
    return exit_usage;
}

} // namespace nizkctf
