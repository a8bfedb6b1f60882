#include "nizkctf/audit.hpp"

#include <algorithm>
#include <map>

#include "nizkctf/validator.hpp"

namespace nizkctf {

Json AuditReport::to_json() const
{
    Json list = Json::array();
    for (const auto& finding : findings) {
        Json item = {{"code", finding.code}, {"message", finding.message}};
        item["index"] = finding.index ? Json(*finding.index) : Json(nullptr);
        list.push_back(std::move(item));
    }
    return {{"entries", entries}, {"findings", std::move(list)},
            {"scoreboard", scoreboard_to_json(scoreboard)}};
}

namespace {

void add_finding(AuditReport& report, std::optional<std::uint64_t> index, std::string code,
                 std::string message)
{
    AuditFinding finding{index, std::move(code), std::move(message)};
    auto same_spot = [&](const AuditFinding& f) {
        return f.index == finding.index && f.code == finding.code;
    };
    if (std::none_of(report.findings.begin(), report.findings.end(), same_spot))
        report.findings.push_back(std::move(finding));
}

/// Every stored proof, checked against the keys published in the final state.
void reverify_proofs(AuditReport& report, const LedgerState& state,
                     const std::map<std::string, std::uint64_t, std::less<>>& written_at)
{
    for (auto it = state.files.lower_bound(std::string_view("submissions/"));
         it != state.files.end() && it->first.starts_with("submissions/"); ++it) {
        auto ids = parse_submission_path(it->first);
        if (!ids)
            continue;
        auto where = written_at.find(it->first);
        std::optional<std::uint64_t> index;
        if (where != written_at.end())
            index = where->second;
        try {
            auto record = decode_record<SubmissionRecord>(it->second);
            const Bytes* team_file = state.find(team_path(ids->first));
            const Bytes* challenge_file = state.find(challenge_path(ids->second));
            if (!team_file || !challenge_file) {
                add_finding(report, index, "UNKNOWN_REFERENCE",
                            it->first + " references a missing team or challenge");
                continue;
            }
            auto team = decode_record<TeamRecord>(*team_file);
            auto challenge = decode_record<ChallengeDescriptor>(*challenge_file);
            if (record.team_id != team.id || record.challenge_id != challenge.id ||
                verify_proof(team.public_key, challenge.public_key, challenge.id, record.proof) !=
                    ProofVerdict::accept)
                add_finding(report, index, std::string(to_string(ReasonCode::invalid_proof)),
                            it->first + " does not carry a valid proof");
        } catch (const Error& e) {
            add_finding(report, index, std::string(to_string(ReasonCode::malformed_record)),
                        it->first + ": " + e.what());
        }
    }
}

} // namespace

AuditReport audit_all(std::span<const LedgerEntry> chain)
{
    AuditReport report;
    report.entries = chain.size();

    if (auto status = verify_chain(chain); !status) {
        add_finding(report, status.index, "CHAIN", status.reason);
        return report;
    }

    LedgerState state;
    state.apply(chain.front().changeset);
    std::map<std::string, std::uint64_t, std::less<>> written_at;
    for (std::size_t i = 1; i < chain.size(); ++i) {
        const LedgerEntry& entry = chain[i];
        ValidationVerdict verdict = entry.organizer_signed()
                                        ? validate_organizer_changeset(state, entry.changeset)
                                        : validate_changeset(state, entry.changeset);
        if (!verdict)
            add_finding(report, entry.index, std::string(to_string(verdict.code)), verdict.message);
        for (const auto& change : entry.changeset.changes)
            written_at.emplace(change.path, entry.index);
        state.apply(entry.changeset);
    }

    reverify_proofs(report, state, written_at);

    try {
        report.scoreboard = compute_scoreboard(state, chain);
    } catch (const Error& e) {
        add_finding(report, std::nullopt, "SCOREBOARD", e.what());
    }
    return report;
}

AuditReport audit_ledger_text(std::string_view ndjson)
{
    Chain chain;
    try {
        chain = parse_ndjson(ndjson);
    } catch (const Error& e) {
        AuditReport report;
        report.findings.push_back({std::nullopt, "PARSE", e.what()});
        return report;
    }
    return audit_all(chain);
}

} // namespace nizkctf
