#pragma once

// Client for an external judge model speaking the chat-completions protocol.
//
// Request:  POST <endpoint> {"model":..., "messages":[{"role":"user","content":<prompt>}]}
// Response: verdict text read from choices[0].message.content.
//
// The credential comes from COCOA_JUDGE_API_KEY. At most max_in_flight
// requests run at once; transient failures (no response, 429, 5xx) are retried
// with exponential backoff.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <semaphore>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "cocoa/eval.hpp"

namespace cocoa {

class TransportError : public Error {
 public:
  using Error::Error;
};

class VerdictParseError : public Error {
 public:
  VerdictParseError(const std::string& what, std::string raw) : Error(what), raw_(std::move(raw)) {}
  const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

struct JudgeVerdict {
  std::optional<bool> truthful;
  std::optional<bool> informative;
  std::string raw;
};

inline constexpr const char* kJudgeKeyEnv = "COCOA_JUDGE_API_KEY";

struct JudgeConfig {
  std::string endpoint;  // e.g. https://host/v1/chat/completions
  std::string model = "judge";
  std::string api_key;
  int max_retries = 3;
  std::chrono::milliseconds initial_backoff{1000};
  int max_in_flight = 4;
  std::chrono::seconds timeout{120};

  void load_key_from_env() {
    if (const char* key = std::getenv(kJudgeKeyEnv)) api_key = key;
  }
};

/// Fills {question}, {correct_answers}, {incorrect_answers} and {candidate_answer}.
inline std::string render_template(std::string_view tmpl, const QASample& sample) {
  auto join = [](const std::vector<std::string>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (i) out += "; ";
      out += xs[i];
    }
    return out;
  };
  const std::pair<std::string_view, std::string> subs[] = {
      {"{question}", sample.question},
      {"{correct_answers}", join(sample.gold_answers)},
      {"{incorrect_answers}", join(sample.incorrect_answers)},
      {"{candidate_answer}", sample.prediction},
  };
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    bool replaced = false;
    if (tmpl[i] == '{') {
      for (const auto& [key, value] : subs) {
        if (tmpl.substr(i, key.size()) == key) {
          out += value;
          i += key.size();
          replaced = true;
          break;
        }
      }
    }
    if (!replaced) out.push_back(tmpl[i++]);
  }
  return out;
}

inline std::string load_template(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read prompt template " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

namespace detail {

inline std::string lower_word(std::string_view s) {
  std::string out;
  for (unsigned char c : s) {
    if (std::isalpha(c) || c == ' ') out.push_back(static_cast<char>(std::tolower(c)));
  }
  const auto b = out.find_first_not_of(' ');
  const auto e = out.find_last_not_of(' ');
  return b == std::string::npos ? std::string() : out.substr(b, e - b + 1);
}

inline bool apply_label(const std::string& label, JudgeVerdict& v) {
  if (label == "correct" || label == "not hallucination") {
    v.truthful = true;
  } else if (label == "wrong" || label == "incorrect" || label == "hallucination") {
    v.truthful = false;
  } else if (label == "yes") {
    v.informative = true;
  } else if (label == "no") {
    v.informative = false;
  } else {
    return false;
  }
  return true;
}

}  // namespace detail

/// Reads a verdict from judge output: either a JSON object with a
/// "verdict" / "evaluation" / "final_verdict" field, or a bare word.
inline JudgeVerdict parse_verdict(std::string_view content) {
  JudgeVerdict v;
  v.raw = std::string(content);

  const auto open = content.find('{');
  const auto close = content.rfind('}');
  if (open != std::string_view::npos && close != std::string_view::npos && close > open) {
    auto obj = nlohmann::json::parse(content.substr(open, close - open + 1), nullptr, false);
    if (obj.is_object()) {
      for (const char* key : {"verdict", "evaluation", "final_verdict"}) {
        auto it = obj.find(key);
        if (it != obj.end() && it->is_string() && detail::apply_label(detail::lower_word(it->get<std::string>()), v)) {
          return v;
        }
      }
      auto it = obj.find("informative");
      if (it != obj.end() && it->is_string() && detail::apply_label(detail::lower_word(it->get<std::string>()), v)) {
        return v;
      }
    }
    throw VerdictParseError("judge output has no recognizable verdict field", v.raw);
  }

  std::string words = detail::lower_word(content);
  if (detail::apply_label(words, v)) return v;
  const auto first = words.substr(0, words.find(' '));
  if (detail::apply_label(first, v)) return v;
  throw VerdictParseError("judge output is not a verdict", v.raw);
}

class JudgeClient {
 public:
  explicit JudgeClient(JudgeConfig cfg) : cfg_(std::move(cfg)), slots_(std::max(1, cfg_.max_in_flight)) {
    const auto scheme = cfg_.endpoint.find("://");
    if (scheme == std::string::npos) throw ConfigError("judge.endpoint must be an http(s) URL: " + cfg_.endpoint);
    const auto path = cfg_.endpoint.find('/', scheme + 3);
    origin_ = cfg_.endpoint.substr(0, path);
    path_ = path == std::string::npos ? "/" : cfg_.endpoint.substr(path);
    if (cfg_.max_retries < 0) throw ConfigError("judge.max_retries must be >= 0");
  }

  const JudgeConfig& config() const { return cfg_; }

  /// Sends one prompt and returns the completion text.
  std::string complete(const std::string& prompt) {
    slots_.acquire();
    struct Release {
      std::counting_semaphore<>& s;
      ~Release() { s.release(); }
    } release{slots_};

    const nlohmann::json body = {{"model", cfg_.model},
                                 {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})}};
    const std::string payload = body.dump();
    httplib::Headers headers;
    if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

    for (int attempt = 0;; ++attempt) {
      httplib::Client cli(origin_);
      if (!cli.is_valid()) throw TransportError("judge: unsupported endpoint " + cfg_.endpoint);
      cli.set_connection_timeout(cfg_.timeout);
      cli.set_read_timeout(cfg_.timeout);
      auto res = cli.Post(path_, headers, payload, "application/json");
      if (res && res->status >= 200 && res->status < 300) return extract_content(res->body);

      const bool transient = !res || res->status == 429 || res->status >= 500;
      const std::string why = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
      if (!transient || attempt >= cfg_.max_retries) {
        throw TransportError("judge request failed after " + std::to_string(attempt + 1) + " attempt(s): " + why);
      }
      std::this_thread::sleep_for(cfg_.initial_backoff * (1 << attempt));
    }
  }

 private:
  static std::string extract_content(const std::string& body) {
    auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_object()) {
      if (j.contains("choices")) {
        const auto& choices = j["choices"];
        if (choices.is_array() && !choices.empty() && choices[0].contains("message") &&
            choices[0]["message"].contains("content") && choices[0]["message"]["content"].is_string()) {
          return choices[0]["message"]["content"].get<std::string>();
        }
      } else if (j.contains("verdict")) {
        return body;  // bare verdict object
      }
    }
    throw VerdictParseError("judge response has no choices[0].message.content", body);
  }

  JudgeConfig cfg_;
  std::counting_semaphore<> slots_;
  std::string origin_;
  std::string path_;
};

inline JudgeVerdict judge_evaluate(JudgeClient& client, std::string_view tmpl, const QASample& sample) {
  return parse_verdict(client.complete(render_template(tmpl, sample)));
}

}  // namespace cocoa
