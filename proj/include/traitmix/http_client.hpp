#pragma once

// HTTP implementation of the chat-completion protocol. Kept in its own header
// so mock-only builds never pull in the HTTP stack.

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "traitmix/chat_client.hpp"
#include "traitmix/error.hpp"

namespace traitmix {

struct HttpClientConfig {
    std::string base_url;                         // e.g. "http://localhost:8080"
    std::string path = "/v1/chat/completions";
    std::string model = "default";
    std::string api_key_env = "TRAITMIX_API_KEY"; // key is only ever read from the environment
    int max_retries = 5;
    double backoff_base_sec = 1.0;
    double backoff_factor = 2.0;
    double timeout_sec = 60.0;
};

// Speaks the de-facto chat-completions JSON shape:
//   request  {model, messages: [{role, content}...], temperature}
//   response {choices: [{message: {content}}]}
class HttpChatClient : public ChatClient {
public:
    explicit HttpChatClient(HttpClientConfig config) : cfg_(std::move(config)) {
        if (cfg_.base_url.empty()) fail(ErrorKind::config, "http_client", "base_url is empty");
    }

    std::string complete(const std::string& system_prompt, const std::string& user_prompt,
                         const DecodeParams& params) override {
        nlohmann::json body = {{"model", cfg_.model},
                               {"messages",
                                {{{"role", "system"}, {"content", system_prompt}},
                                 {{"role", "user"}, {"content", user_prompt}}}},
                               {"temperature", params.temperature}};
        const std::string payload = body.dump();

        std::string last_error;
        double delay = cfg_.backoff_base_sec;
        for (int attempt = 0; attempt < cfg_.max_retries; ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(std::chrono::duration<double>(delay));
                delay *= cfg_.backoff_factor;
            }
            request_count().fetch_add(1, std::memory_order_relaxed);
            httplib::Client http(cfg_.base_url);
            http.set_connection_timeout(std::chrono::duration<double>(cfg_.timeout_sec));
            http.set_read_timeout(std::chrono::duration<double>(cfg_.timeout_sec));
            httplib::Headers headers;
            if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key)
                headers.emplace("Authorization", std::string("Bearer ") + key);

            auto res = http.Post(cfg_.path, headers, payload, "application/json");
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status == 429 || res->status >= 500) {
                last_error = "server status " + std::to_string(res->status);
                continue;
            }
            if (res->status != 200)
                fail(ErrorKind::client, "http_client",
                     "request rejected with status " + std::to_string(res->status) + ": " + res->body);
            try {
                nlohmann::json j = nlohmann::json::parse(res->body);
                return j.at("choices").at(0).at("message").at("content").get<std::string>();
            } catch (const nlohmann::json::exception& e) {
                fail(ErrorKind::parse, "http_client", std::string("malformed completion response: ") + e.what());
            }
        }
        fail(ErrorKind::client, "http_client",
             "request failed after " + std::to_string(cfg_.max_retries) + " attempts; last: " + last_error);
    }

    // Process-wide request counter; tests use it to prove that mock-driven
    // pipelines never touch the network.
    static std::atomic<size_t>& request_count() {
        static std::atomic<size_t> count{0};
        return count;
    }

private:
    HttpClientConfig cfg_;
};

} // namespace traitmix
