#include <cstdlib>

#include <httplib.h>

#include "symreg/generate.hpp"

namespace symreg::generate {

namespace {

struct Endpoint {
    std::string origin;  // scheme://host[:port]
    std::string path;    // prefix without trailing slash
};

Endpoint split_url(const std::string& url) {
    const std::size_t scheme = url.find("://");
    if (scheme == std::string::npos) throw Error("remote base_url needs a scheme: '" + url + "'");
    const std::size_t slash = url.find('/', scheme + 3);
    Endpoint e;
    e.origin = url.substr(0, slash);
    e.path = slash == std::string::npos ? "" : url.substr(slash);
    while (!e.path.empty() && e.path.back() == '/') e.path.pop_back();
    return e;
}

} // namespace

RemoteChat::RemoteChat(RemoteChatConfig config) : config_(std::move(config)) {
    if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
    split_url(config_.base_url);  // validate early
}

GeneratorResponse RemoteChat::generate(const GeneratorRequest& request) {
    const auto start = std::chrono::steady_clock::now();
    const Endpoint ep = split_url(config_.base_url);
    GeneratorResponse out;
    out.transcript = nlohmann::json::array();
    Usage usage;
    bool have_usage = false;

    httplib::Client client(ep.origin);
    const auto secs = static_cast<time_t>(config_.timeout_seconds);
    const auto usecs = static_cast<time_t>((config_.timeout_seconds - static_cast<double>(secs)) * 1e6);
    client.set_connection_timeout(secs, usecs);
    client.set_read_timeout(secs, usecs);
    client.set_write_timeout(secs, usecs);

    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    // Some providers ignore n; keep asking for the remainder, one attempt per missing sample.
    std::string last_error;
    for (std::size_t attempt = 0; attempt < request.n_samples && out.raw_texts.size() < request.n_samples;
         ++attempt) {
        nlohmann::json body = {
            {"model", config_.model},
            {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}})},
            {"temperature", request.decoding.temperature},
            {"n", request.n_samples - out.raw_texts.size()},
            {"max_tokens", request.decoding.max_tokens},
        };
        if (!request.decoding.stop.empty()) body["stop"] = request.decoding.stop;
        nlohmann::json log = {{"url", config_.base_url + "/chat/completions"},
                              {"authorization", api_key_.empty() ? "none" : "Bearer [redacted]"},
                              {"request", body}};

        auto res = client.Post(ep.path + "/chat/completions", headers, body.dump(), "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            log["error"] = last_error;
            out.transcript.push_back(std::move(log));
            break;
        }
        log["status"] = res->status;
        log["response"] = res->body;
        out.transcript.push_back(std::move(log));
        if (res->status != 200) {
            last_error = "HTTP " + std::to_string(res->status);
            break;
        }
        try {
            const auto j = nlohmann::json::parse(res->body);
            std::size_t got = 0;
            for (const auto& choice : j.at("choices")) {
                if (out.raw_texts.size() == request.n_samples) break;
                const auto& content = choice.at("message").at("content");
                out.raw_texts.push_back(content.is_string() ? content.get<std::string>() : "");
                out.failed.push_back(false);
                out.failure_messages.emplace_back();
                ++got;
            }
            if (j.contains("usage") && j["usage"].is_object()) {
                usage.prompt_tokens += j["usage"].value("prompt_tokens", std::size_t{0});
                usage.completion_tokens += j["usage"].value("completion_tokens", std::size_t{0});
                have_usage = true;
            }
            if (got == 0) {
                last_error = "response had no choices";
                break;
            }
        } catch (const nlohmann::json::exception& e) {
            last_error = std::string("malformed response: ") + e.what();
            break;
        }
    }
    while (out.raw_texts.size() < request.n_samples) {
        out.raw_texts.emplace_back();
        out.failed.push_back(true);
        out.failure_messages.push_back(last_error.empty() ? "missing sample" : last_error);
    }
    if (have_usage) out.usage = usage;
    out.latency = std::chrono::steady_clock::now() - start;
    return out;
}

} // namespace symreg::generate
