#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "concise/backend.hpp"
#include "concise/errors.hpp"
#include "concise/text.hpp"

namespace concise {

struct HttpBackendConfig {
  std::string base_url = "http://127.0.0.1:8000";  // scheme://host[:port], no trailing path
  std::string model;
  std::string api_key;  // read from the environment by the caller, never from files
  std::size_t probe_top_k = 20;
  int connect_timeout_s = 10;
  int read_timeout_s = 600;
  int max_attempts = 3;
  int backoff_initial_ms = 250;
  int backoff_cap_ms = 4000;
};

/// Client for OpenAI-compatible legacy completion endpoints
/// (`POST {base_url}/v1/completions`), as served by vLLM, llama.cpp,
/// SGLang and similar.
///
/// Transport failures, 429 and 5xx responses are retried with capped
/// exponential backoff; other 4xx responses fail immediately with
/// BackendRejected. Probes ask for a single token with `logprobs = top_k`
/// and exponentiate the returned top-logprob table; anything outside the
/// returned top-k counts as zero mass.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig cfg) : cfg_(std::move(cfg)) {
    while (!cfg_.base_url.empty() && cfg_.base_url.back() == '/') cfg_.base_url.pop_back();
  }

  const HttpBackendConfig& config() const { return cfg_; }

  /// Request body for a completion; exposed for tests of the wire format.
  nlohmann::json completion_body(const CompletionRequest& request,
                                 std::optional<std::size_t> logprobs = std::nullopt) const {
    nlohmann::json body = {
        {"prompt", request.prompt},
        {"max_tokens", request.max_tokens},
        {"temperature", request.temperature},
        {"top_p", request.top_p},
    };
    if (!cfg_.model.empty()) body["model"] = cfg_.model;
    if (!request.stop.empty()) body["stop"] = request.stop;
    if (request.seed) body["seed"] = *request.seed;
    if (logprobs) body["logprobs"] = *logprobs;
    return body;
  }

  CompletionResult generate(const CompletionRequest& request) const override {
    request.validate();
    const nlohmann::json resp = post("/v1/completions", completion_body(request));
    return parse_completion(resp, request.stop);
  }

  TokenDistribution next_token_distribution(std::string_view prompt,
                                            std::size_t top_k) const override {
    CompletionRequest probe;
    probe.prompt = std::string(prompt);
    probe.max_tokens = 1;
    probe.temperature = 1.0;
    probe.top_p = 1.0;
    const nlohmann::json resp = post("/v1/completions", completion_body(probe, top_k));
    return parse_top_logprobs(resp, top_k);
  }

  /// Uses the server's `/tokenize` route when available, otherwise falls
  /// back to a whitespace word count.
  std::size_t count_tokens(std::string_view s) const override {
    if (s.empty()) return 0;
    try {
      nlohmann::json body = {{"prompt", std::string(s)}, {"add_special_tokens", false}};
      if (!cfg_.model.empty()) body["model"] = cfg_.model;
      const nlohmann::json resp = post("/tokenize", body, 1);
      if (resp.contains("count")) return resp.at("count").get<std::size_t>();
      if (resp.contains("tokens")) return resp.at("tokens").size();
    } catch (const Error&) {
    } catch (const nlohmann::json::exception&) {
    }
    return text::count_words(s);
  }

  static CompletionResult parse_completion(const nlohmann::json& resp,
                                           const std::vector<std::string>& stop) {
    try {
      const auto& choice = resp.at("choices").at(0);
      CompletionResult out;
      out.text = choice.value("text", std::string{});
      const std::string finish = choice.contains("finish_reason") && choice["finish_reason"].is_string()
                                     ? choice["finish_reason"].get<std::string>()
                                     : std::string("stop");
      if (finish == "length") {
        out.finish_reason = FinishReason::length;
      } else if (choice.contains("stop_reason")) {
        // vLLM-style: the matched stop string, or null / a token id for EOS.
        out.finish_reason = choice["stop_reason"].is_string() ? FinishReason::stop : FinishReason::eos;
      } else {
        out.finish_reason = stop.empty() ? FinishReason::eos : FinishReason::stop;
      }
      // Some servers echo the stop string; keep the "never contains stop" contract.
      if (truncate_at_stop(out.text, stop)) out.finish_reason = FinishReason::stop;
      if (resp.contains("usage") && resp["usage"].contains("completion_tokens")) {
        out.token_count = resp["usage"]["completion_tokens"].get<std::size_t>();
      } else {
        out.token_count = text::count_words(out.text);
      }
      return out;
    } catch (const nlohmann::json::exception& e) {
      throw BackendRejected(std::string("malformed completion response: ") + e.what());
    }
  }

  static TokenDistribution parse_top_logprobs(const nlohmann::json& resp, std::size_t top_k) {
    std::vector<TokenProb> entries;
    try {
      const auto& choice = resp.at("choices").at(0);
      if (!choice.contains("logprobs") || choice["logprobs"].is_null()) {
        throw ProbeUnsupported("endpoint returned no logprobs");
      }
      const auto& lp = choice["logprobs"];
      if (!lp.contains("top_logprobs") || lp["top_logprobs"].empty()) {
        throw ProbeUnsupported("endpoint returned no top_logprobs table");
      }
      const auto& table = lp["top_logprobs"].at(0);
      if (table.is_object()) {
        for (const auto& [tok, logp] : table.items()) entries.push_back({tok, std::exp(logp.get<double>())});
      } else if (table.is_array()) {
        // {"token": ..., "logprob": ...} records (chat-style layout some servers reuse)
        for (const auto& e : table) {
          entries.push_back({e.at("token").get<std::string>(), std::exp(e.at("logprob").get<double>())});
        }
      } else {
        throw ProbeUnsupported("unrecognized top_logprobs layout");
      }
    } catch (const nlohmann::json::exception& e) {
      throw BackendRejected(std::string("malformed logprob response: ") + e.what());
    }
    for (auto& e : entries) e.probability = std::clamp(e.probability, 0.0, 1.0);
    return TokenDistribution::from_entries(std::move(entries), top_k);
  }

 private:
  nlohmann::json post(const std::string& path, const nlohmann::json& body,
                      int max_attempts_override = 0) const {
    const int attempts = max_attempts_override > 0 ? max_attempts_override : std::max(1, cfg_.max_attempts);
    int delay_ms = cfg_.backoff_initial_ms;
    std::string last_error;
    for (int attempt = 1; attempt <= attempts; ++attempt) {
      httplib::Client client(cfg_.base_url);
      client.set_connection_timeout(cfg_.connect_timeout_s, 0);
      client.set_read_timeout(cfg_.read_timeout_s, 0);
      client.set_write_timeout(cfg_.read_timeout_s, 0);
      httplib::Headers headers;
      if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

      auto res = client.Post(path, headers, body.dump(), "application/json");
      if (!res) {
        last_error = "transport failure: " + httplib::to_string(res.error());
      } else if (res->status >= 200 && res->status < 300) {
        try {
          return nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
          throw BackendRejected(std::string("response is not JSON: ") + e.what());
        }
      } else if (res->status == 429 || res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
      } else {
        throw BackendRejected("HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
      }
      if (attempt < attempts) {
        std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
        delay_ms = std::min(delay_ms * 2, cfg_.backoff_cap_ms);
      }
    }
    throw BackendUnavailable(cfg_.base_url + path + " after " + std::to_string(attempts) +
                             " attempt(s): " + last_error);
  }

  HttpBackendConfig cfg_;
};

}  // namespace concise
