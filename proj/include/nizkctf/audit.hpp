#pragma once

// Whole-competition audit from nothing but the ledger.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "nizkctf/competition.hpp"
#include "nizkctf/ledger.hpp"

namespace nizkctf {

struct AuditFinding {
    std::optional<std::uint64_t> index; ///< entry (or ndjson line) at fault, if known
    std::string code;
    std::string message;

    friend bool operator==(const AuditFinding&, const AuditFinding&) = default;
};

struct AuditReport {
    std::vector<AuditFinding> findings;
    Scoreboard scoreboard;
    std::size_t entries = 0;

    bool clean() const noexcept { return findings.empty(); }
    Json to_json() const;
};

/// Verifies the chain, re-validates every entry against the state before
/// it, re-verifies every proof and recomputes the scoreboard.
AuditReport audit_all(std::span<const LedgerEntry> chain);

/// Same, starting from ledger.ndjson text; unparseable lines are findings.
AuditReport audit_ledger_text(std::string_view ndjson);

} // namespace nizkctf
