#pragma once

#include <atomic>
#include <cstdint>
#include <fstream>
#include <mutex>
#include <string>
#include <unordered_map>

#include <json.hpp>

#include "traitmix/error.hpp"
#include "traitmix/hashing.hpp"

namespace traitmix {

struct DecodeParams {
    double temperature = 1.0;
};

// Minimal chat-completion interface: one system prompt, one user prompt, one
// text response. Implementations must be safe for concurrent complete() calls.
class ChatClient {
public:
    virtual ~ChatClient() = default;
    virtual std::string complete(const std::string& system_prompt, const std::string& user_prompt,
                                 const DecodeParams& params) = 0;
};

inline uint64_t prompt_key(const std::string& system_prompt, const std::string& user_prompt) {
    uint64_t h = fnv1a64(system_prompt);
    h = fnv1a64(std::string(1, '\x1f'), h);
    return fnv1a64(user_prompt, h);
}

// Deterministic scripted client: responses are keyed by the prompt hash, so
// identical prompts always replay identical answers regardless of call order.
class MockChatClient : public ChatClient {
public:
    void script(const std::string& system_prompt, const std::string& user_prompt, std::string response) {
        responses_[prompt_key(system_prompt, user_prompt)] = std::move(response);
    }

    void script_key(uint64_t key, std::string response) { responses_[key] = std::move(response); }

    void set_default_response(std::string response) { default_response_ = std::move(response); }

    std::string complete(const std::string& system_prompt, const std::string& user_prompt,
                         const DecodeParams&) override {
        calls_.fetch_add(1, std::memory_order_relaxed);
        const auto it = responses_.find(prompt_key(system_prompt, user_prompt));
        if (it != responses_.end()) return it->second;
        if (default_response_) return *default_response_;
        fail(ErrorKind::client, "chat_client",
             "mock has no scripted response for this prompt (key " +
                 std::to_string(prompt_key(system_prompt, user_prompt)) + ")");
    }

    size_t calls() const { return calls_.load(std::memory_order_relaxed); }

    void save_script(const std::string& path) const {
        nlohmann::json entries = nlohmann::json::array();
        for (const auto& [key, response] : responses_) entries.push_back({{"key", key}, {"response", response}});
        nlohmann::json j = {{"entries", entries}};
        if (default_response_) j["default"] = *default_response_;
        std::ofstream out(path);
        if (!out) fail(ErrorKind::io, "chat_client", "cannot write script '" + path + "'");
        out << j.dump(2) << "\n";
    }

    // Script entries carry either a precomputed key or (system, user) text.
    void load_script_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) fail(ErrorKind::io, "chat_client", "cannot open script '" + path + "'");
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::parse, "chat_client", std::string("bad script file: ") + e.what());
        }
        for (const auto& entry : j.value("entries", nlohmann::json::array())) {
            const std::string response = entry.at("response").get<std::string>();
            if (entry.contains("key"))
                script_key(entry.at("key").get<uint64_t>(), response);
            else
                script(entry.at("system").get<std::string>(), entry.at("user").get<std::string>(), response);
        }
        if (j.contains("default")) set_default_response(j.at("default").get<std::string>());
    }

private:
    std::unordered_map<uint64_t, std::string> responses_;
    std::optional<std::string> default_response_;
    std::atomic<size_t> calls_{0};
};

} // namespace traitmix
