#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lasp/expression.hpp"
#include "lasp/optimizer.hpp"

namespace lasp {

enum class TemplateId { Parsing, InitGeneration, Refinement, SelfRefine };

std::string_view template_name(TemplateId id);

struct PromptBundle {
  std::string system;
  std::string user;
  TemplateId template_id = TemplateId::Parsing;
};

/// Prompt text assets, one file per template plus the shared system prompt.
class PromptLibrary {
 public:
  explicit PromptLibrary(std::filesystem::path dir = LASP_PROMPT_DIR) : dir_(std::move(dir)) {}

  /// Reads "<name>.txt"; throws ValidationError when the file is missing.
  std::string load(std::string_view name) const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

struct PromptInputs {
  std::optional<Relation> relation;
  const EncoderDefinition* example = nullptr;
  const RefinementContext* prior = nullptr;
  std::string utterance;
};

/// Deterministic prompt assembly. Refinement prompts are the initial prompt
/// followed by the prior definition and its error messages in suite order.
PromptBundle assemble_prompt(TemplateId id, const PromptInputs& inputs,
                             const PromptLibrary& library = PromptLibrary());

struct UsageRecord {
  std::string purpose;
  long prompt_tokens = 0;
  long completion_tokens = 0;
  double wall_ms = 0;
};

/// Append-only, thread-safe record of model calls.
class UsageLedger {
 public:
  void record(UsageRecord r);
  std::vector<UsageRecord> records() const;
  std::size_t size() const;
  long total_prompt_tokens() const;
  long total_completion_tokens() const;
  long total_tokens() const { return total_prompt_tokens() + total_completion_tokens(); }
  double total_wall_ms() const;

 private:
  mutable std::mutex mu_;
  std::vector<UsageRecord> records_;
  long prompt_tokens_ = 0;
  long completion_tokens_ = 0;
  double wall_ms_ = 0;
};

struct EndpointConfig {
  std::string base_url;  // e.g. http://127.0.0.1:8080/v1
  std::string api_key;
  std::string model = "gpt-4o-2024-08-06";
  double temperature = 1.0;
  double top_p = 0.95;
  int timeout_s = 120;
  int max_attempts = 3;
  int backoff_base_ms = 500;

  /// Reads LASP_LLM_ENDPOINT, LASP_LLM_API_KEY and LASP_LLM_MODEL.
  static EndpointConfig from_env();
};

class LlmError : public std::runtime_error {
 public:
  LlmError(const std::string& what, int attempts) : std::runtime_error(what), attempts_(attempts) {}
  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

struct ChatReply {
  std::string text;
  UsageRecord usage;
  int attempts = 0;
};

/// Client for an OpenAI-compatible chat-completions endpoint.
class LlmClient {
 public:
  explicit LlmClient(EndpointConfig cfg, std::shared_ptr<UsageLedger> ledger = nullptr);

  ChatReply chat_complete(const PromptBundle& bundle, const std::string& purpose);

  /// HTTP requests attempted so far, including failed ones.
  std::size_t network_calls() const { return network_calls_.load(); }
  const std::shared_ptr<UsageLedger>& ledger() const { return ledger_; }
  const EndpointConfig& config() const { return cfg_; }

 private:
  EndpointConfig cfg_;
  std::shared_ptr<UsageLedger> ledger_;
  std::atomic<std::size_t> network_calls_{0};
};

/// First balanced {...} block in the text, skipping braces inside strings.
std::optional<std::string> extract_json_block(std::string_view text);

/// Sends the parsing prompt and parses the first JSON object in the reply.
/// Up to three requests are made before giving up.
SymbolicExpression parse_utterance_via_llm(const std::string& utterance, LlmClient& client,
                                           const PromptLibrary& library = PromptLibrary());

/// Utterance -> expression, either through a model or, offline, from a
/// pre-parsed expression file. Offline mode never touches the network.
class UtteranceParser {
 public:
  static UtteranceParser offline(std::filesystem::path expression_file);
  static UtteranceParser online(std::shared_ptr<LlmClient> client,
                                PromptLibrary library = PromptLibrary());

  SymbolicExpression parse(const std::string& utterance) const;
  bool is_offline() const { return !client_; }

 private:
  std::filesystem::path offline_file_;
  std::shared_ptr<LlmClient> client_;
  PromptLibrary library_;
};

/// Candidate source backed by a model: prompts for a DSL definition and
/// parses it from the reply.
class LlmSource : public CandidateSource {
 public:
  explicit LlmSource(std::shared_ptr<LlmClient> client, PromptLibrary library = PromptLibrary())
      : client_(std::move(client)), library_(std::move(library)) {}

  std::string name() const override { return "llm"; }
  EncoderDefinition draw(Relation relation, const RefinementContext* context,
                         const EncoderDefinition* example, std::uint64_t seed) override;

 private:
  std::shared_ptr<LlmClient> client_;
  PromptLibrary library_;
};

struct StubReply {
  int status = 200;
  std::string content;
  long prompt_tokens = 10;
  long completion_tokens = 5;
};

/// Loopback chat-completions server replaying fixture replies in order (the
/// last one repeats). For hermetic tests and offline demos.
class StubServer {
 public:
  explicit StubServer(std::vector<StubReply> replies, int port = 0);
  ~StubServer();
  StubServer(const StubServer&) = delete;
  StubServer& operator=(const StubServer&) = delete;

  int port() const { return port_; }
  std::string base_url() const;
  std::size_t request_count() const;
  std::vector<std::string> request_bodies() const;
  void stop();

  /// Blocks until stop() is called from another thread.
  void wait();

  /// One reply per *.txt file in the directory, in filename order.
  static std::vector<StubReply> load_fixtures(const std::filesystem::path& dir);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

}  // namespace lasp
