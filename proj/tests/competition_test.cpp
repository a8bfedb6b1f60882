#include <algorithm>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "nizkctf/audit.hpp"
#include "nizkctf/competition.hpp"
#include "test_support.hpp"

using namespace nizkctf;
using nizkctf::testing::CompetitionBuilder;
using nizkctf::testing::relink_from;
using nizkctf::testing::seeded_random;

namespace {

ChallengeInfo info(std::string id, std::uint64_t points = 100)
{
    return {std::move(id), "A title", "A description", {"crypto", "web"}, points, KdfParams::test()};
}

bool contains_text(ByteView haystack, std::string_view needle)
{
    return contains_bytes(haystack, ByteView(reinterpret_cast<const std::uint8_t*>(needle.data()),
                                             needle.size()));
}

} // namespace

TEST(SlugTest, MatchesNormalizationOracle)
{
    // expected values from NFKD decomposition, ASCII filter, lowercase and
    // hyphen-collapse, computed outside this codebase
    EXPECT_EQ(slugify("Team Épico"), "team-epico");
    EXPECT_EQ(slugify("team-epico"), "team-epico");
    EXPECT_EQ(slugify("  Hello,   World!! "), "hello-world");
    EXPECT_EQ(slugify("Ñandú Façade"), "nandu-facade");
    EXPECT_EQ(slugify("über__Hackers 2024"), "uber-hackers-2024");
    EXPECT_EQ(slugify("Crème Brûlée"), "creme-brulee");
}

TEST(SlugTest, LigaturesAndLimits)
{
    EXPECT_EQ(slugify("Ærø"), "aero");
    EXPECT_EQ(slugify("Straße"), "strasse");
    EXPECT_EQ(slugify(std::string(100, 'x')).size(), 64u);
    EXPECT_THROW(slugify("!!!"), MalformedInput);
    EXPECT_THROW(slugify("日本"), MalformedInput);
    EXPECT_THROW(slugify("\xff\xfe"), MalformedInput);
    EXPECT_TRUE(is_slug("a-0"));
    EXPECT_FALSE(is_slug("A"));
    EXPECT_FALSE(is_slug(""));
    EXPECT_FALSE(is_slug(std::string(65, 'a')));
}

TEST(TeamNameTest, Validity)
{
    EXPECT_TRUE(is_valid_team_name("Team Épico"));
    EXPECT_TRUE(is_valid_team_name(std::string(64, 'x')));
    EXPECT_FALSE(is_valid_team_name(std::string(65, 'x')));
    EXPECT_FALSE(is_valid_team_name(""));
    EXPECT_FALSE(is_valid_team_name("tab\there"));
    EXPECT_FALSE(is_valid_team_name("\xc3"));
}

TEST(PathHelpersTest, RoundTrip)
{
    EXPECT_EQ(challenge_path("web-1"), "challenges/web-1.json");
    EXPECT_EQ(team_path("red"), "teams/red/team.json");
    EXPECT_EQ(submission_path("red", "web-1"), "submissions/red/web-1.json");
    EXPECT_EQ(parse_challenge_path("challenges/web-1.json"), "web-1");
    EXPECT_EQ(parse_team_path("teams/red/team.json"), "red");
    auto sub = parse_submission_path("submissions/red/web-1.json");
    ASSERT_TRUE(sub);
    EXPECT_EQ(sub->first, "red");
    EXPECT_EQ(sub->second, "web-1");
    EXPECT_FALSE(parse_challenge_path("challenges/Web.json"));
    EXPECT_FALSE(parse_team_path("teams/red/other.json"));
    EXPECT_FALSE(parse_submission_path("submissions/red/web-1.txt"));
    EXPECT_FALSE(parse_submission_path("submissions/red/x/web-1.json"));
}

TEST(NewChallengeTest, PublishesOnlyPublicMaterial)
{
    const std::string flag = "CTF{never_in_the_ledger}";
    ChallengeDescriptor d = new_challenge(flag, info("web-1"), seeded_random(3));
    EXPECT_EQ(d.public_key, derive_challenge_keys(flag, d.salt, d.kdf).public_key);
    EXPECT_TRUE(check_flag(flag, d.salt, d.kdf, d.public_key));

    Changeset cs = challenge_changeset(d);
    ASSERT_EQ(cs.changes.size(), 1u);
    EXPECT_EQ(cs.changes[0].path, "challenges/web-1.json");
    EXPECT_FALSE(contains_text(cs.changes[0].content, flag));
    EXPECT_FALSE(contains_text(cs.changes[0].content, "never_in_the_ledger"));
    EXPECT_EQ(decode_record<ChallengeDescriptor>(cs.changes[0].content), d);

    // same flag, fresh salt, unrelated key
    ChallengeDescriptor again = new_challenge(flag, info("web-1"), seeded_random(4));
    EXPECT_NE(again.salt, d.salt);
    EXPECT_NE(again.public_key, d.public_key);
}

TEST(NewChallengeTest, RejectsBadInfo)
{
    auto rng = seeded_random(5);
    EXPECT_THROW(new_challenge("f", info("Bad Id"), rng), MalformedInput);
    EXPECT_THROW(new_challenge("   ", info("ok"), rng), MalformedInput);
    ChallengeInfo bad_kdf = info("ok");
    bad_kdf.kdf.cost_n = 3;
    EXPECT_THROW(new_challenge("f", bad_kdf, rng), MalformedInput);
}

TEST(DescriptorTest, StrictJson)
{
    ChallengeDescriptor d = new_challenge("flag", info("c"), seeded_random(6));
    Json j = d.to_json();
    EXPECT_EQ(ChallengeDescriptor::from_json(j), d);

    Json extra = j;
    extra["flag"] = "oops";
    EXPECT_THROW(ChallengeDescriptor::from_json(extra), MalformedInput);
    Json missing = j;
    missing.erase("salt");
    EXPECT_THROW(ChallengeDescriptor::from_json(missing), MalformedInput);

    Bytes pretty = to_bytes(j.dump(2));
    EXPECT_THROW(decode_record<ChallengeDescriptor>(pretty), MalformedInput);
}

TEST(RegisterTeamTest, RecordAndSecret)
{
    Registration reg = register_team("Team Épico", seeded_random(7));
    EXPECT_EQ(reg.record.id, "team-epico");
    EXPECT_EQ(reg.record.name, "Team Épico");
    EXPECT_EQ(reg.record.public_key, reg.secret.keypair().public_key);
    EXPECT_EQ(reg.changeset.author, "team-epico");
    ASSERT_EQ(reg.changeset.changes.size(), 1u);
    EXPECT_EQ(reg.changeset.changes[0].path, "teams/team-epico/team.json");
    EXPECT_EQ(decode_record<TeamRecord>(reg.changeset.changes[0].content), reg.record);
    EXPECT_FALSE(contains_bytes(reg.changeset.changes[0].content, reg.secret.seed.view()));
    EXPECT_FALSE(contains_text(reg.changeset.changes[0].content, hex_encode(reg.secret.seed.view())));

    TeamSecret restored = TeamSecret::from_json(reg.secret.to_json());
    EXPECT_EQ(restored.keypair().public_key, reg.record.public_key);

    Json forged = reg.secret.to_json();
    forged["public_key"] = hex_encode(Bytes(32, 0x11));
    EXPECT_THROW(TeamSecret::from_json(forged), MalformedInput);

    EXPECT_THROW(register_team("", seeded_random(8)), MalformedInput);
    EXPECT_THROW(register_team("???", seeded_random(8)), MalformedInput);
}

TEST(RegisterTeamTest, AccentCollisionIsRejectedByTheLedger)
{
    CompetitionBuilder b(9);
    b.register_team("team-epico");
    EXPECT_THROW(b.register_team("Team Épico"), Error);
    EXPECT_EQ(b.chain().size(), 2u);
}

TEST(SubmissionTest, BuildsVerifiableProof)
{
    const std::string flag = "CTF{abc}";
    ChallengeDescriptor d = new_challenge(flag, info("c1"), seeded_random(10));
    Registration reg = register_team("red", seeded_random(11));

    // surrounding whitespace is not part of the flag
    Submission s = build_submission(reg.secret, d, "  CTF{abc}\n");
    EXPECT_EQ(s.record.team_id, "red");
    EXPECT_EQ(s.record.challenge_id, "c1");
    EXPECT_EQ(s.record.proof.bytes().size(), 2 * 64 + 2u);
    EXPECT_EQ(verify_proof(reg.record.public_key, d.public_key, "c1", s.record.proof),
              ProofVerdict::accept);
    ASSERT_EQ(s.changeset.changes.size(), 1u);
    EXPECT_EQ(s.changeset.changes[0].path, "submissions/red/c1.json");
    EXPECT_EQ(s.changeset.author, "red");
    EXPECT_EQ(decode_record<SubmissionRecord>(s.changeset.changes[0].content), s.record);
    EXPECT_FALSE(contains_text(s.changeset.changes[0].content, flag));
}

TEST(SubmissionTest, WrongFlagFailsBeforeAnyProof)
{
    ChallengeDescriptor d = new_challenge("CTF{abc}", info("c1"), seeded_random(12));
    Registration reg = register_team("red", seeded_random(13));
    EXPECT_THROW(build_submission(reg.secret, d, "CTF{abd}"), FlagMismatch);
    EXPECT_THROW(build_submission(reg.secret, d, "ctf{abc}"), FlagMismatch);
    EXPECT_THROW(build_submission(reg.secret, d, ""), FlagMismatch);
    try {
        build_submission(reg.secret, d, "nope");
    } catch (const FlagMismatch& e) {
        EXPECT_STREQ(e.what(), "flag mismatch");
    }
}

// Scoreboard

TEST(ScoreboardTest, EmptyAndTieBreaks)
{
    CompetitionBuilder b(14);
    EXPECT_TRUE(compute_scoreboard(replay(b.chain()), b.chain()).empty());

    b.add_challenge("a", 100, "fa");
    b.add_challenge("b", 100, "fb");
    b.register_team("zulu");
    b.register_team("alpha");
    b.register_team("idle");
    ASSERT_TRUE(b.solve("zulu", "a").accepted);
    ASSERT_TRUE(b.solve("alpha", "b").accepted);

    // equal points: the earlier final solve ranks first, idle teams are omitted
    Scoreboard board = compute_scoreboard(replay(b.chain()), b.chain());
    ASSERT_EQ(board.size(), 2u);
    EXPECT_EQ(board[0].team_id, "zulu");
    EXPECT_EQ(board[0].rank, 1u);
    EXPECT_EQ(board[1].team_id, "alpha");
    EXPECT_EQ(board[1].rank, 2u);
    EXPECT_LT(board[0].last_solve_index, board[1].last_solve_index);

    EXPECT_EQ(scoreboard_from_json(scoreboard_to_json(board)), board);
}

TEST(ScoreboardTest, MatchesBruteForceOracle)
{
    for (std::uint64_t seed : {21u, 22u, 23u}) {
        CompetitionBuilder b(seed);
        std::mt19937_64 rng(seed);
        std::vector<std::string> challenges;
        std::map<std::string, std::uint64_t> points;
        for (int c = 0; c < 7; ++c) {
            std::string id = "chal-" + std::to_string(c);
            points[id] = 50 + 50 * (rng() % 5);
            b.add_challenge(id, points[id], "FLAG{" + std::to_string(rng()) + "}");
            challenges.push_back(id);
        }
        std::vector<std::string> teams;
        for (int t = 0; t < 5; ++t)
            teams.push_back(b.register_team("team " + std::to_string(t)).team_id);

        struct Tally {
            std::uint64_t points = 0, solves = 0, last = 0;
        };
        std::map<std::string, Tally> oracle;
        std::vector<std::pair<std::string, std::string>> order;
        for (const auto& t : teams)
            for (const auto& c : challenges)
                if (rng() % 2)
                    order.emplace_back(t, c);
        std::shuffle(order.begin(), order.end(), rng);
        for (const auto& [t, c] : order) {
            ASSERT_TRUE(b.solve(t, c).accepted);
            Tally& tally = oracle[t];
            tally.points += points[c];
            tally.solves += 1;
            tally.last = b.chain().size() - 1;
        }

        std::vector<std::pair<std::string, Tally>> expected(oracle.begin(), oracle.end());
        std::sort(expected.begin(), expected.end(), [](const auto& x, const auto& y) {
            if (x.second.points != y.second.points)
                return x.second.points > y.second.points;
            if (x.second.last != y.second.last)
                return x.second.last < y.second.last;
            return x.first < y.first;
        });

        Scoreboard board = compute_scoreboard(replay(b.chain()), b.chain());
        ASSERT_EQ(board.size(), expected.size());
        for (std::size_t i = 0; i < board.size(); ++i) {
            EXPECT_EQ(board[i].rank, i + 1);
            EXPECT_EQ(board[i].team_id, expected[i].first);
            EXPECT_EQ(board[i].points, expected[i].second.points);
            EXPECT_EQ(board[i].solves, expected[i].second.solves);
            EXPECT_EQ(board[i].last_solve_index, expected[i].second.last);
        }
    }
}

// Audit

class AuditTest : public ::testing::Test {
protected:
    void SetUp() override
    {
        b.add_challenge("c1", 100, "CTF{one}");
        b.add_challenge("c2", 200, "CTF{two}");
        b.register_team("red");
        b.register_team("blue");
        ASSERT_TRUE(b.solve("red", "c1").accepted);
        ASSERT_TRUE(b.solve("blue", "c2").accepted);
    }

    bool has_finding(const AuditReport& report, std::string_view code) const
    {
        return std::any_of(report.findings.begin(), report.findings.end(),
                           [&](const AuditFinding& f) { return f.code == code; });
    }

    CompetitionBuilder b{31};
};

TEST_F(AuditTest, HonestLedgerIsClean)
{
    AuditReport report = audit_all(b.chain());
    EXPECT_TRUE(report.clean()) << report.to_json().dump();
    EXPECT_EQ(report.entries, b.chain().size());
    EXPECT_EQ(report.scoreboard, compute_scoreboard(replay(b.chain()), b.chain()));
    EXPECT_TRUE(audit_ledger_text(to_ndjson(b.chain())).clean());
}

TEST_F(AuditTest, CopiedProofWithRecomputedHashes)
{
    // blue appends red's proof under its own name, bypassing the validator
    Chain& chain = b.chain();
    SubmissionRecord stolen = decode_record<SubmissionRecord>(
        *snapshot_at(chain, chain.size() - 1).find("submissions/red/c1.json"));
    stolen.team_id = "blue";
    append(chain, Changeset{{{submission_path("blue", "c1"), encode_record(stolen)}}, "blue"},
           ++b.clock());
    relink_from(chain, chain.size() - 1);
    ASSERT_TRUE(verify_chain(chain));

    AuditReport report = audit_all(chain);
    EXPECT_FALSE(report.clean());
    EXPECT_TRUE(has_finding(report, "INVALID_PROOF"));
    EXPECT_EQ(report.findings.front().index, chain.size() - 1);
}

TEST_F(AuditTest, DuplicateSubmissionAppendedDirectly)
{
    Submission again = build_submission(b.team("red"), b.challenge("c1"), "CTF{one}");
    append(b.chain(), again.changeset, ++b.clock());
    AuditReport report = audit_all(b.chain());
    EXPECT_TRUE(has_finding(report, "DUPLICATE_SUBMISSION"));
}

TEST_F(AuditTest, EditedPointsBreakTheOrganizerSignature)
{
    Chain& chain = b.chain();
    LedgerEntry& entry = chain[1];
    ChallengeDescriptor d = decode_record<ChallengeDescriptor>(entry.changeset.changes[0].content);
    d.points = 10'000;
    entry.changeset.changes[0].content = encode_record(d);
    relink_from(chain, 1);

    AuditReport report = audit_all(chain);
    ASSERT_FALSE(report.clean());
    EXPECT_EQ(report.findings.front().code, "CHAIN");
    EXPECT_EQ(report.findings.front().index, 1u);
}

TEST_F(AuditTest, TeamWritingAChallengeFile)
{
    ChallengeDescriptor fake = new_challenge("easy", info("c3", 5000), b.rng());
    append(b.chain(), Changeset{challenge_changeset(fake).changes, "red"}, ++b.clock());
    AuditReport report = audit_all(b.chain());
    ASSERT_FALSE(report.clean());
    EXPECT_EQ(report.findings.front().index, b.chain().size() - 1);
}

TEST_F(AuditTest, GarbageLineIsAParseFinding)
{
    std::string text = to_ndjson(b.chain()) + "{not json}\n";
    AuditReport report = audit_ledger_text(text);
    ASSERT_EQ(report.findings.size(), 1u);
    EXPECT_EQ(report.findings[0].code, "PARSE");
}
