#pragma once

// HTTP front end for a ChainOwner.
//
//   POST /changesets   body: Changeset JSON
//                      201 {"hash","index"}          accepted and appended
//                      422 {"code","message",...}    rejected, chain unchanged
//                      400 malformed JSON, 413 body over 1 MiB
//   GET  /scoreboard   200 scoreboard.json
//   GET  /ledger       200 ledger.ndjson (application/x-ndjson)
//   GET  /challenges   200 list of challenge descriptors
//
// Appends are atomic, so a 5xx never leaves a half-applied changeset behind
// and clients may simply retry.

#include <cstdint>
#include <memory>
#include <string>
#include <thread>

#include "nizkctf/validator.hpp"

namespace nizkctf {

inline constexpr std::size_t max_request_body = 1 << 20;

class Service {
public:
    explicit Service(ChainOwner& owner);
    ~Service();

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds and serves until stop(). Returns false if the address is unusable.
    bool listen(const std::string& host, int port);

    /// Binds an ephemeral port and serves on a background thread.
    /// Returns the port, or -1 on failure.
    int start_background(const std::string& host = "127.0.0.1");

    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::thread worker_;
};

struct SubmitOutcome {
    bool accepted = false;
    std::uint64_t index = 0;
    std::string hash;
    ValidationVerdict verdict;
};

/// Client for a running Service. Retries connection failures and 5xx.
class ServiceClient {
public:
    explicit ServiceClient(std::string base_url, int attempts = 3);

    /// Throws Error on transport failure or unexpected status.
    SubmitOutcome submit(const Changeset& changeset) const;
    std::string get(const std::string& path) const;

private:
    std::string base_url_;
    int attempts_;
};

} // namespace nizkctf
