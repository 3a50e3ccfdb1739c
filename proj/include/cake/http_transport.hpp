// SPDX-License-Identifier: Apache-2.0

#ifndef CAKE_HTTP_TRANSPORT_HPP
#define CAKE_HTTP_TRANSPORT_HPP

#include <cstdlib>
#include <string>

// Eigen must be parsed before httplib, whose <resolv.h> defines a `_res` macro.
#include "llm_client.hpp"

#include <httplib.h>
#include <json.hpp>

namespace cake {

struct LiveConfig {
    std::string endpoint = "https://api.openai.com/v1/chat/completions"; // full URL
    std::string model = "gpt-4o-mini";
    double temperature = 0.7;
    int max_tokens = 256;
    int timeout_s = 60;
    std::string api_key_env = "CAKE_LLM_API_KEY";
};

/// Chat-completions client over HTTP(S).
class LiveTransport final : public Transport {
public:
    explicit LiveTransport(LiveConfig cfg) : cfg_(std::move(cfg))
    {
        const auto scheme_end = cfg_.endpoint.find("://");
        if (scheme_end == std::string::npos) { throw ConfigError("endpoint must be an absolute URL"); }
        const auto path_start = cfg_.endpoint.find('/', scheme_end + 3);
        origin_ = cfg_.endpoint.substr(0, path_start);
        path_ = path_start == std::string::npos ? "/" : cfg_.endpoint.substr(path_start);
        if (const char* key = std::getenv(cfg_.api_key_env.c_str())) { key_ = key; }
    }

    [[nodiscard]] static nlohmann::json request_body(const LiveConfig& cfg, const Messages& m)
    {
        return {{"model", cfg.model},
                {"messages",
                 nlohmann::json::array({{{"role", "system"}, {"content", m.system}},
                                        {{"role", "user"}, {"content", m.user}}})},
                {"temperature", cfg.temperature},
                {"max_tokens", cfg.max_tokens}};
    }

    std::string complete(ProposalKind, const Messages& messages) override
    {
        httplib::Client client(origin_);
        client.set_connection_timeout(cfg_.timeout_s);
        client.set_read_timeout(cfg_.timeout_s);
        httplib::Headers headers;
        if (!key_.empty()) { headers.emplace("Authorization", "Bearer " + key_); }
        const auto res = client.Post(path_, headers, request_body(cfg_, messages).dump(), "application/json");
        if (!res) { throw TransportError("request failed: " + httplib::to_string(res.error())); }
        if (res->status != 200) {
            throw TransportError("endpoint returned HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
        }
        try {
            return nlohmann::json::parse(res->body).at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw TransportError(std::string("malformed completion: ") + e.what());
        }
    }

private:
    LiveConfig cfg_;
    std::string origin_;
    std::string path_;
    std::string key_;
};

} // namespace cake

#endif
