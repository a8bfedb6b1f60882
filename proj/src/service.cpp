#include "nizkctf/service.hpp"

#include <chrono>

#include <httplib.h>

namespace nizkctf {

namespace {

constexpr const char* json_type = "application/json";

void send_json(httplib::Response& res, int status, const Json& body)
{
    res.status = status;
    res.set_content(canonical_dump(body), json_type);
}

void refresh_quietly(ChainOwner& owner)
{
    try {
        owner.refresh();
    } catch (const Error&) {
        // keep serving the last verified view
    }
}

} // namespace

struct Service::Impl {
    ChainOwner& owner;
    httplib::Server server;

    explicit Impl(ChainOwner& o) : owner(o)
    {
        server.set_payload_max_length(max_request_body);

        server.Post("/changesets", [this](const httplib::Request& req, httplib::Response& res) {
            Changeset changeset;
            try {
                changeset = Changeset::from_json(parse_json(req.body));
            } catch (const Error& e) {
                send_json(res, 400, {{"code", "MALFORMED_JSON"}, {"message", e.what()}});
                return;
            }
            try {
                ApplyResult result = owner.apply(changeset);
                if (auto* entry = std::get_if<LedgerEntry>(&result))
                    send_json(res, 201,
                              {{"hash", hex_encode(entry->hash.view())}, {"index", entry->index}});
                else
                    send_json(res, 422, std::get<ValidationVerdict>(result).to_json());
            } catch (const std::exception& e) {
                send_json(res, 500, {{"code", "INTERNAL"}, {"message", e.what()}});
            }
        });

        server.Get("/scoreboard", [this](const httplib::Request&, httplib::Response& res) {
            refresh_quietly(owner);
            res.set_content(owner.view()->scoreboard_json, json_type);
        });
        server.Get("/challenges", [this](const httplib::Request&, httplib::Response& res) {
            refresh_quietly(owner);
            res.set_content(owner.view()->challenges_json, json_type);
        });
        server.Get("/ledger", [this](const httplib::Request&, httplib::Response& res) {
            refresh_quietly(owner);
            res.set_content(owner.view()->ledger_ndjson, "application/x-ndjson");
        });
    }
};

Service::Service(ChainOwner& owner) : impl_(std::make_unique<Impl>(owner)) {}

Service::~Service()
{
    stop();
}

bool Service::listen(const std::string& host, int port)
{
    return impl_->server.listen(host, port);
}

int Service::start_background(const std::string& host)
{
    int port = impl_->server.bind_to_any_port(host);
    if (port < 0)
        return -1;
    worker_ = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return port;
}

void Service::stop()
{
    impl_->server.stop();
    if (worker_.joinable())
        worker_.join();
}

// Client

ServiceClient::ServiceClient(std::string base_url, int attempts)
    : base_url_(std::move(base_url)), attempts_(attempts)
{
}

namespace {

template <class Request>
httplib::Result with_retries(int attempts, Request&& request)
{
    httplib::Result result = request();
    for (int i = 1; i < attempts && (!result || result->status >= 500); ++i) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100 * i));
        result = request();
    }
    return result;
}

} // namespace

SubmitOutcome ServiceClient::submit(const Changeset& changeset) const
{
    httplib::Client client(base_url_);
    const std::string body = canonical_dump(changeset.to_json());
    auto result = with_retries(attempts_, [&] {
        return client.Post("/changesets", body, json_type);
    });
    if (!result)
        throw Error("cannot reach " + base_url_ + ": " + httplib::to_string(result.error()));

    SubmitOutcome outcome;
    if (result->status == 201) {
        Json reply = parse_json(result->body);
        outcome.accepted = true;
        outcome.index = json_field::unsigned_integer(reply, "index");
        outcome.hash = json_field::string(reply, "hash");
        return outcome;
    }
    if (result->status == 422) {
        Json reply = parse_json(result->body);
        auto code = reason_from_string(json_field::string(reply, "code"));
        if (!code)
            throw Error("service answered with an unknown reason code");
        outcome.verdict = ValidationVerdict::reject(*code, json_field::string(reply, "message"));
        return outcome;
    }
    throw Error("service answered HTTP " + std::to_string(result->status) + ": " + result->body);
}

std::string ServiceClient::get(const std::string& path) const
{
    httplib::Client client(base_url_);
    auto result = with_retries(attempts_, [&] { return client.Get(path); });
    if (!result)
        throw Error("cannot reach " + base_url_ + ": " + httplib::to_string(result.error()));
    if (result->status != 200)
        throw Error("GET " + path + " answered HTTP " + std::to_string(result->status));
    return result->body;
}

} // namespace nizkctf
