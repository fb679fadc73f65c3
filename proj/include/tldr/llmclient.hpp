#pragma once

// Chat-completion client: prompt assembly for summarization and role
// tagging, request encoding for two endpoint dialects, retrying dispatch
// through a pluggable transport, fixture replay/recording and degenerate
// output detection.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "tldr/corpus.hpp"
#include "tldr/prompts.hpp"
#include "tldr/rhetorical.hpp"
#include "tldr/tokenize.hpp"

namespace tldr {

// ---------------------------------------------------------------------------
// Messages and prompts

enum class ChatRole { System, User, Assistant };

inline std::string_view chat_role_name(ChatRole r) {
  switch (r) {
    case ChatRole::System: return "system";
    case ChatRole::User: return "user";
    case ChatRole::Assistant: return "assistant";
  }
  return "user";
}

struct ChatMessage {
  ChatRole role;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

class PromptError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct FewShotExample {
  std::string abstract;
  std::string summary;
  int word_count = 0;
};

inline std::string abstract_message(std::string_view abstract, int word_count) {
  return "[Abstract] " + std::string(abstract) + " [Word count: " + std::to_string(word_count) + "]";
}

/// System prompt, five (user, assistant) example turns, then the target.
inline std::vector<ChatMessage> build_summarization_prompt(std::string_view abstract, int target_word_count,
                                                           std::span<const FewShotExample> few_shot) {
  if (few_shot.size() != kFewShotSize) {
    throw PromptError("expected " + std::to_string(kFewShotSize) + " few-shot examples, got " +
                      std::to_string(few_shot.size()));
  }
  if (detail::trim(abstract).empty()) throw PromptError("empty abstract");
  if (target_word_count <= 0) throw PromptError("target word count must be positive");
  std::vector<ChatMessage> messages;
  messages.push_back({ChatRole::System, std::string(prompts::kSummarizationSystem)});
  for (const auto& ex : few_shot) {
    if (detail::trim(ex.abstract).empty() || detail::trim(ex.summary).empty()) throw PromptError("blank few-shot example");
    messages.push_back({ChatRole::User, abstract_message(ex.abstract, ex.word_count)});
    messages.push_back({ChatRole::Assistant, ex.summary});
  }
  messages.push_back({ChatRole::User, abstract_message(abstract, target_word_count)});
  return messages;
}

inline std::vector<FewShotExample> few_shot_examples(const Corpus& corpus) {
  if (!corpus.is_split()) throw PromptError("corpus has no few-shot split");
  std::vector<FewShotExample> out;
  for (auto i : corpus.few_shot) {
    const auto& r = corpus.records[i];
    out.push_back({r.abstract, r.summary, r.target_word_count});
  }
  return out;
}

inline std::vector<ChatMessage> build_role_tagging_prompt(std::span<const std::string> sentences) {
  if (sentences.empty()) throw PromptError("no sentences to tag");
  nlohmann::ordered_json payload;
  payload["sentence_count"] = sentences.size();
  payload["sentences"] = std::vector<std::string>(sentences.begin(), sentences.end());
  return {{ChatRole::System, std::string(prompts::kRoleTaggingSystem)}, {ChatRole::User, payload.dump()}};
}

class RoleLabelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

// Removes a surrounding ``` or ```json fence if present.
inline std::string_view strip_code_fence(std::string_view text) {
  text = trim(text);
  if (text.substr(0, 3) != "```") return text;
  auto nl = text.find('\n');
  if (nl == std::string_view::npos) return text;
  text.remove_prefix(nl + 1);
  text = trim(text);
  if (text.size() >= 3 && text.substr(text.size() - 3) == "```") text.remove_suffix(3);
  return trim(text);
}

}  // namespace detail

inline std::vector<Role> parse_role_labels(std::string_view response, std::size_t expected_count) {
  const auto body = detail::strip_code_fence(response);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception&) {
    throw RoleLabelError("response is not JSON");
  }
  if (!j.is_array()) throw RoleLabelError("response is not a JSON array");
  if (j.size() != expected_count) {
    throw RoleLabelError("expected " + std::to_string(expected_count) + " labels, got " + std::to_string(j.size()));
  }
  std::vector<Role> labels;
  for (const auto& item : j) {
    if (!item.is_string()) throw RoleLabelError("label is not a string");
    const auto role = parse_sentence_role(item.get<std::string>());
    if (!role) throw RoleLabelError("unknown label \"" + item.get<std::string>() + "\"");
    labels.push_back(*role);
  }
  return labels;
}

// ---------------------------------------------------------------------------
// Degenerate output

enum class DegenerateFlag { Repetition, LeakedReasoning, Overlong };

inline std::string_view degenerate_flag_name(DegenerateFlag f) {
  switch (f) {
    case DegenerateFlag::Repetition: return "repetition";
    case DegenerateFlag::LeakedReasoning: return "leaked_reasoning";
    case DegenerateFlag::Overlong: return "overlong";
  }
  return "";
}

inline std::optional<DegenerateFlag> parse_degenerate_flag(std::string_view s) {
  for (auto f : {DegenerateFlag::Repetition, DegenerateFlag::LeakedReasoning, DegenerateFlag::Overlong}) {
    if (degenerate_flag_name(f) == s) return f;
  }
  return std::nullopt;
}

using DegenerateFlags = std::set<DegenerateFlag>;

struct DegenerateThresholds {
  int ngram = 5;
  int min_repeats = 5;
  double length_factor = 10.0;
};

namespace detail {

inline constexpr std::string_view kReasoningDelimiters[] = {"<think>", "</think>", "<thinking>", "</thinking>"};

inline constexpr std::string_view kDeliberationMarkers[] = {"let me", "i need to", "the user", "okay,", "wait,",
                                                           "i should", "you want", "hmm"};

}  // namespace detail

inline DegenerateFlags detect_degenerate(std::string_view text, int target_word_count,
                                         const DegenerateThresholds& t = {}) {
  DegenerateFlags flags;
  auto words = split_words(text);
  for (auto& w : words) w = fold_case(w);

  if (static_cast<int>(words.size()) >= t.ngram) {
    std::unordered_map<std::string, int> counts;
    for (auto& k : ngram_keys(words, t.ngram)) {
      if (++counts[std::move(k)] >= t.min_repeats) {
        flags.insert(DegenerateFlag::Repetition);
        break;
      }
    }
  }

  const bool overlong =
      target_word_count > 0 && static_cast<double>(words.size()) > t.length_factor * target_word_count;
  if (overlong) flags.insert(DegenerateFlag::Overlong);

  const auto lower = fold_case(text);
  bool leaked = std::any_of(std::begin(detail::kReasoningDelimiters), std::end(detail::kReasoningDelimiters),
                            [&](std::string_view d) { return lower.find(d) != std::string::npos; });
  if (!leaked && overlong) {
    leaked = std::any_of(std::begin(detail::kDeliberationMarkers), std::end(detail::kDeliberationMarkers),
                         [&](std::string_view m) { return lower.find(m) != std::string::npos; });
  }
  if (leaked) flags.insert(DegenerateFlag::LeakedReasoning);
  return flags;
}

// ---------------------------------------------------------------------------
// Wire protocol

enum class Dialect { Ollama, OpenAI };

inline Dialect parse_dialect(std::string_view s) {
  if (s == "ollama") return Dialect::Ollama;
  if (s == "openai") return Dialect::OpenAI;
  throw std::invalid_argument("unknown dialect \"" + std::string(s) + "\"");
}

struct GenerationConfig {
  std::string endpoint = "http://localhost:11434";
  std::string model;
  Dialect dialect = Dialect::Ollama;
  double temperature = 1.0;
  int context_window = 4096;
  bool thinking_enabled = false;
  int timeout_ms = 300000;
  int max_retries = 3;
  int max_in_flight = 1;
  int backoff_ms = 1000;  // doubled per retry

  void validate() const {
    if (model.empty()) throw std::invalid_argument("model is required");
    if (endpoint.empty()) throw std::invalid_argument("endpoint is required");
    if (!(temperature >= 0)) throw std::invalid_argument("temperature must be >= 0");
    if (context_window <= 0) throw std::invalid_argument("context window must be positive");
    if (timeout_ms <= 0 || max_retries < 0 || max_in_flight < 1 || backoff_ms < 0) {
      throw std::invalid_argument("timeout, retries, in-flight limit or backoff out of range");
    }
  }
};

struct HttpRequest {
  std::string url;  // absolute
  std::string body;
  int timeout_ms = 0;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Connection failures and timeouts; always retried.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A replaying transport has no answer for the request; never retried.
class FixtureMissError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class HttpStatusError : public std::runtime_error {
 public:
  HttpStatusError(int status, std::string body)
      : std::runtime_error("HTTP " + std::to_string(status)), status_(status), body_(std::move(body)) {}
  int status() const { return status_; }
  const std::string& body() const { return body_; }

 private:
  int status_;
  std::string body_;
};

class MalformedResponseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AttemptRecord {
  int attempt = 0;  // 1-based
  int status = 0;   // 0 when no response was received
  std::string error;
};

class RetryExhaustedError : public std::runtime_error {
 public:
  explicit RetryExhaustedError(std::vector<AttemptRecord> attempts)
      : std::runtime_error("gave up after " + std::to_string(attempts.size()) + " attempts" +
                           (attempts.empty() ? std::string() : ": " + attempts.back().error)),
        attempts_(std::move(attempts)) {}
  const std::vector<AttemptRecord>& attempts() const { return attempts_; }

 private:
  std::vector<AttemptRecord> attempts_;
};

using Transport = std::function<HttpResponse(const HttpRequest&)>;
using Sleeper = std::function<void(std::chrono::milliseconds)>;
using MonotonicClock = std::function<std::chrono::steady_clock::time_point()>;

inline std::string chat_url(const GenerationConfig& c) {
  std::string base = c.endpoint;
  while (!base.empty() && base.back() == '/') base.pop_back();
  const std::string_view path = c.dialect == Dialect::Ollama ? "/api/chat" : "/v1/chat/completions";
  if (base.size() >= path.size() && base.compare(base.size() - path.size(), path.size(), path) == 0) return base;
  return base + std::string(path);
}

inline std::string encode_chat_request(std::span<const ChatMessage> messages, const GenerationConfig& c) {
  nlohmann::ordered_json j;
  j["model"] = c.model;
  auto msgs = nlohmann::ordered_json::array();
  for (const auto& m : messages) {
    if (m.content.empty()) throw PromptError("empty message content");
    msgs.push_back({{"role", chat_role_name(m.role)}, {"content", m.content}});
  }
  j["messages"] = msgs;
  if (c.dialect == Dialect::Ollama) {
    j["options"] = {{"temperature", c.temperature}, {"num_ctx", c.context_window}};
    j["think"] = c.thinking_enabled;
  } else {
    j["temperature"] = c.temperature;
  }
  j["stream"] = false;
  return j.dump();
}

inline std::string decode_chat_response(std::string_view body, Dialect dialect) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception&) {
    throw MalformedResponseError("response body is not JSON");
  }
  const nlohmann::json* content = nullptr;
  if (dialect == Dialect::Ollama) {
    if (j.contains("message") && j["message"].is_object() && j["message"].contains("content")) {
      content = &j["message"]["content"];
    }
  } else if (j.contains("choices") && j["choices"].is_array() && !j["choices"].empty()) {
    const auto& first = j["choices"][0];
    if (first.contains("message") && first["message"].contains("content")) content = &first["message"]["content"];
  }
  if (content == nullptr || !content->is_string()) throw MalformedResponseError("response has no assistant content");
  return content->get<std::string>();
}

// ---------------------------------------------------------------------------
// Dispatch

/// Blocks callers while `limit` requests are outstanding.
class InFlightLimiter {
 public:
  explicit InFlightLimiter(int limit) : limit_(limit) {}

  void acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return active_ < limit_; });
    ++active_;
  }

  void release() {
    {
      std::lock_guard lock(mu_);
      --active_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int limit_;
  int active_ = 0;
};

struct ChatResult {
  std::string content;
  std::int64_t latency_ms = 0;  // of the successful attempt
  int attempts = 0;
};

class ChatClient {
 public:
  ChatClient(GenerationConfig config, Transport transport, Sleeper sleeper = default_sleeper(),
             MonotonicClock clock = [] { return std::chrono::steady_clock::now(); })
      : config_(std::move(config)),
        transport_(std::move(transport)),
        sleeper_(std::move(sleeper)),
        clock_(std::move(clock)),
        limiter_(config_.max_in_flight) {
    config_.validate();
  }

  static Sleeper default_sleeper() {
    return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }

  const GenerationConfig& config() const { return config_; }

  /// Retries transport errors, 5xx and 429 with exponential backoff. Other
  /// HTTP errors raise HttpStatusError; bad bodies MalformedResponseError.
  ChatResult complete(std::span<const ChatMessage> messages) {
    const HttpRequest request{chat_url(config_), encode_chat_request(messages, config_), config_.timeout_ms};
    std::vector<AttemptRecord> log;
    const int total = 1 + config_.max_retries;
    for (int attempt = 1; attempt <= total; ++attempt) {
      if (attempt > 1) sleeper_(std::chrono::milliseconds(std::int64_t{config_.backoff_ms} << (attempt - 2)));
      HttpResponse response;
      const auto start = clock_();
      try {
        limiter_.acquire();
        struct Release {
          InFlightLimiter& l;
          ~Release() { l.release(); }
        } release{limiter_};
        response = transport_(request);
      } catch (const TransportError& e) {
        log.push_back({attempt, 0, e.what()});
        continue;
      }
      const auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(clock_() - start).count();
      if (response.status >= 200 && response.status < 300) {
        return {decode_chat_response(response.body, config_.dialect), latency, attempt};
      }
      if (response.status == 429 || response.status >= 500) {
        log.push_back({attempt, response.status, "HTTP " + std::to_string(response.status)});
        continue;
      }
      throw HttpStatusError(response.status, response.body);
    }
    throw RetryExhaustedError(std::move(log));
  }

 private:
  GenerationConfig config_;
  Transport transport_;
  Sleeper sleeper_;
  MonotonicClock clock_;
  InFlightLimiter limiter_;
};

// ---------------------------------------------------------------------------
// Fixtures: JSONL of {"url"?: str, "request"?: <request body>, "response":
// {"status", "body"}}. Bodies match on their parsed JSON, so key order and
// spacing do not matter; fixtures without "url" match any URL.

class FixtureTransport {
 public:
  static FixtureTransport load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open fixture " + path);
    FixtureTransport t;
    std::string line;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const auto j = nlohmann::json::parse(line);
      t.add(j.value("url", std::string()), j.value("request", nlohmann::json()),
            {j.at("response").at("status").get<int>(), j.at("response").at("body").get<std::string>()});
    }
    return t;
  }

  void add(const std::string& url, const nlohmann::json& request, HttpResponse response) {
    std::lock_guard lock(*mu_);
    (*responses_)[key(url, request.is_null() ? std::string() : request.dump())].push_back(std::move(response));
  }

  void add(const nlohmann::json& request, HttpResponse response) { add("", request, std::move(response)); }

  /// Responses for one request are served in order; the last one repeats.
  HttpResponse operator()(const HttpRequest& req) const {
    const auto body = req.body.empty() ? std::string() : nlohmann::json::parse(req.body).dump();
    std::lock_guard lock(*mu_);
    auto it = responses_->find(key(req.url, body));
    if (it == responses_->end()) it = responses_->find(key("", body));
    if (it == responses_->end()) throw FixtureMissError("no fixture for request to " + req.url);
    auto& queue = it->second;
    HttpResponse r = queue.front();
    if (queue.size() > 1) queue.pop_front();
    return r;
  }

 private:
  static std::string key(const std::string& url, const std::string& body) { return url + '\n' + body; }

  std::shared_ptr<std::mutex> mu_ = std::make_shared<std::mutex>();
  std::shared_ptr<std::map<std::string, std::deque<HttpResponse>>> responses_ =
      std::make_shared<std::map<std::string, std::deque<HttpResponse>>>();
};

/// Single writer for line-oriented output shared by worker threads.
class AppendChannel {
 public:
  explicit AppendChannel(std::ostream& out) : out_(out) {}

  void write_line(const std::string& line) {
    std::lock_guard lock(mu_);
    out_ << line << '\n';
    out_.flush();
  }

 private:
  std::ostream& out_;
  std::mutex mu_;
};

/// Wraps a transport and appends every exchange to a fixture stream.
inline Transport recording_transport(Transport inner, std::shared_ptr<AppendChannel> sink) {
  return [inner = std::move(inner), sink = std::move(sink)](const HttpRequest& req) {
    auto resp = inner(req);
    nlohmann::ordered_json j;
    j["url"] = req.url;
    if (!req.body.empty()) j["request"] = nlohmann::json::parse(req.body);
    j["response"] = {{"status", resp.status}, {"body", resp.body}};
    sink->write_line(j.dump());
    return resp;
  };
}

// ---------------------------------------------------------------------------
// generations.jsonl

struct GenerationRecord {
  std::string doi;
  std::string model;
  std::string candidate_id;
  std::string summary_text;
  int target_word_count = 0;
  std::int64_t latency_ms = 0;
  DegenerateFlags degenerate_flags;
};

inline nlohmann::ordered_json to_json(const GenerationRecord& r) {
  nlohmann::ordered_json j;
  j["doi"] = r.doi;
  j["model"] = r.model;
  j["candidate_id"] = r.candidate_id;
  j["summary_text"] = r.summary_text;
  j["target_word_count"] = r.target_word_count;
  j["latency_ms"] = r.latency_ms;
  auto flags = nlohmann::ordered_json::array();
  for (auto f : r.degenerate_flags) flags.push_back(std::string(degenerate_flag_name(f)));
  j["degenerate_flags"] = flags;
  return j;
}

inline GenerationRecord parse_generation_record(const nlohmann::json& j) {
  GenerationRecord r;
  r.doi = j.at("doi").get<std::string>();
  r.model = j.at("model").get<std::string>();
  r.summary_text = j.at("summary_text").get<std::string>();
  r.target_word_count = j.at("target_word_count").get<int>();
  r.candidate_id = j.value("candidate_id", r.model + ":" + r.doi);
  r.latency_ms = j.value("latency_ms", std::int64_t{0});
  if (auto it = j.find("degenerate_flags"); it != j.end()) {
    for (const auto& f : *it) {
      const auto flag = parse_degenerate_flag(f.get<std::string>());
      if (!flag) throw std::invalid_argument("unknown degenerate flag " + f.dump());
      r.degenerate_flags.insert(*flag);
    }
  }
  return r;
}

inline std::vector<GenerationRecord> load_generations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<GenerationRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_generation_record(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Batch runs

struct BatchSummary {
  std::size_t succeeded = 0;
  std::vector<std::string> failures;  // "<doi>: <error>"
};

namespace detail {

// Runs job(i) for i in [0, n) on `threads` workers; exceptions become
// failures keyed by label(i).
inline BatchSummary run_parallel(std::size_t n, int threads, const std::function<void(std::size_t)>& job,
                                 const std::function<std::string(std::size_t)>& label) {
  BatchSummary summary;
  std::mutex mu;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        job(i);
        std::lock_guard lock(mu);
        ++summary.succeeded;
      } catch (const std::exception& e) {
        std::lock_guard lock(mu);
        summary.failures.push_back(label(i) + ": " + e.what());
      }
    }
  };
  std::vector<std::jthread> pool;
  for (int t = 0; t < std::max(1, threads); ++t) pool.emplace_back(worker);
  pool.clear();
  std::sort(summary.failures.begin(), summary.failures.end());
  return summary;
}

}  // namespace detail

/// One generation per test pair of a split corpus. candidate_id is
/// "<model>:<doi>:<record index>".
inline BatchSummary generate_summaries(const Corpus& corpus, ChatClient& client, AppendChannel& out, int threads,
                                       const DegenerateThresholds& thresholds = {}) {
  const auto examples = few_shot_examples(corpus);
  const auto& model = client.config().model;
  return detail::run_parallel(
      corpus.test.size(), threads,
      [&](std::size_t k) {
        const auto idx = corpus.test[k];
        const auto& rec = corpus.records[idx];
        const auto prompt = build_summarization_prompt(rec.abstract, rec.target_word_count, examples);
        const auto result = client.complete(prompt);
        GenerationRecord g{rec.doi,
                           model,
                           model + ":" + rec.doi + ":" + std::to_string(idx),
                           std::string(detail::trim(result.content)),
                           rec.target_word_count,
                           result.latency_ms,
                           {}};
        g.degenerate_flags = detect_degenerate(g.summary_text, g.target_word_count, thresholds);
        out.write_line(to_json(g).dump());
      },
      [&](std::size_t k) { return corpus.records[corpus.test[k]].doi; });
}

/// Splits the abstract into sentences and asks for labels, re-querying on
/// rejected responses up to `max_attempts` times.
inline RoleTaggedAbstract tag_abstract(ChatClient& client, std::string_view doi, std::string_view abstract,
                                       int max_attempts = 3) {
  RoleTaggedAbstract tagged;
  tagged.doi = std::string(doi);
  for (const auto& s : split_sentences(abstract)) tagged.sentences.emplace_back(detail::trim(s.in(abstract)));
  const auto prompt = build_role_tagging_prompt(tagged.sentences);
  std::string last_error;
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    try {
      tagged.labels = parse_role_labels(client.complete(prompt).content, tagged.sentences.size());
      return tagged;
    } catch (const RoleLabelError& e) {
      last_error = e.what();
    }
  }
  throw RoleLabelError("labels rejected " + std::to_string(max_attempts) + " times: " + last_error);
}

/// Tags each distinct abstract once, in order of first appearance.
inline BatchSummary tag_corpus_roles(const Corpus& corpus, ChatClient& client, AppendChannel& out, int threads,
                                     int max_attempts = 3) {
  std::vector<const PairRecord*> unique;
  std::set<std::string> seen;
  for (const auto& r : corpus.records) {
    if (seen.insert(r.doi).second) unique.push_back(&r);
  }
  return detail::run_parallel(
      unique.size(), threads,
      [&](std::size_t i) {
        out.write_line(to_json(tag_abstract(client, unique[i]->doi, unique[i]->abstract, max_attempts)).dump());
      },
      [&](std::size_t i) { return unique[i]->doi; });
}

}  // namespace tldr
