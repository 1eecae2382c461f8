#include "lasp/llm.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "lasp/encoders.hpp"

namespace lasp {

std::string_view template_name(TemplateId id) {
  switch (id) {
    case TemplateId::Parsing: return "parsing";
    case TemplateId::InitGeneration: return "init_generation";
    case TemplateId::Refinement: return "refinement";
    case TemplateId::SelfRefine: return "self_refine";
  }
  return "unknown";
}

std::string PromptLibrary::load(std::string_view name) const {
  const auto path = dir_ / (std::string(name) + ".txt");
  std::ifstream in(path);
  if (!in) throw ValidationError("missing prompt template " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

// Single pass over the template so substituted text is never re-scanned.
std::string render(std::string_view tmpl, const std::map<std::string, std::string>& vars) {
  std::string out;
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const auto open = tmpl.find("{{", pos);
    if (open == std::string_view::npos) break;
    const auto close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) break;
    out.append(tmpl.substr(pos, open - pos));
    const std::string key(tmpl.substr(open + 2, close - open - 2));
    auto it = vars.find(key);
    if (it != vars.end()) out += it->second;
    else out.append(tmpl.substr(open, close + 2 - open));
    pos = close + 2;
  }
  out.append(tmpl.substr(pos));
  return out;
}

std::string arity_word(Relation r) {
  switch (arity(r)) {
    case 1: return "unary";
    case 2: return "binary";
    default: return "ternary";
  }
}

std::string object_list(Relation r) {
  switch (arity(r)) {
    case 1: return "i";
    case 2: return "i and j";
    default: return "i, j and k";
  }
}

std::string relative_phrase(Relation r) {
  switch (arity(r)) {
    case 1: return "";
    case 2: return " object j";
    default: return " objects j and k";
  }
}

std::string init_prompt(Relation relation, const EncoderDefinition* example,
                        const PromptLibrary& library) {
  std::string example_text;
  if (example) {
    example_text = render(library.load("example"),
                          {{"example_relation", std::string(relation_name(example->relation))},
                           {"example", definition_to_json(*example).dump(2)}});
  }
  return render(library.load("init"),
                {{"relation", std::string(relation_name(relation))},
                 {"phrase", relation_phrase(relation)},
                 {"arity", arity_word(relation)},
                 {"objects", object_list(relation)},
                 {"relative", relative_phrase(relation)},
                 {"grammar", library.load("dsl_grammar")},
                 {"worked_example", definition_to_json(encoder_to_dsl(Relation::Above)).dump(2)},
                 {"example", example_text}});
}

}  // namespace

PromptBundle assemble_prompt(TemplateId id, const PromptInputs& inputs, const PromptLibrary& library) {
  PromptBundle bundle;
  bundle.template_id = id;
  bundle.system = library.load("system");
  if (id == TemplateId::Parsing) {
    bundle.user = render(library.load("parsing"), {{"utterance", inputs.utterance}});
    return bundle;
  }
  if (!inputs.relation) throw ValidationError("generation prompts need a relation");
  const std::string base = init_prompt(*inputs.relation, inputs.example, library);
  if (id == TemplateId::InitGeneration) {
    bundle.user = base;
    return bundle;
  }
  if (!inputs.prior) throw ValidationError("refinement prompts need a prior definition");
  const std::string definition = definition_to_json(inputs.prior->definition).dump(2);
  if (id == TemplateId::SelfRefine) {
    bundle.user = render(library.load("self_refine"),
                         {{"init_prompt", base}, {"definition", definition}});
    return bundle;
  }
  std::string errors;
  for (const auto& f : inputs.prior->failures) errors += f.message + "\n";
  bundle.user = render(library.load("refinement"),
                       {{"init_prompt", base}, {"definition", definition}, {"errors", errors}});
  return bundle;
}

void UsageLedger::record(UsageRecord r) {
  std::lock_guard lock(mu_);
  prompt_tokens_ += r.prompt_tokens;
  completion_tokens_ += r.completion_tokens;
  wall_ms_ += r.wall_ms;
  records_.push_back(std::move(r));
}

std::vector<UsageRecord> UsageLedger::records() const {
  std::lock_guard lock(mu_);
  return records_;
}

std::size_t UsageLedger::size() const {
  std::lock_guard lock(mu_);
  return records_.size();
}

long UsageLedger::total_prompt_tokens() const {
  std::lock_guard lock(mu_);
  return prompt_tokens_;
}

long UsageLedger::total_completion_tokens() const {
  std::lock_guard lock(mu_);
  return completion_tokens_;
}

double UsageLedger::total_wall_ms() const {
  std::lock_guard lock(mu_);
  return wall_ms_;
}

EndpointConfig EndpointConfig::from_env() {
  EndpointConfig cfg;
  if (const char* v = std::getenv("LASP_LLM_ENDPOINT")) cfg.base_url = v;
  if (const char* v = std::getenv("LASP_LLM_API_KEY")) cfg.api_key = v;
  if (const char* v = std::getenv("LASP_LLM_MODEL")) cfg.model = v;
  return cfg;
}

LlmClient::LlmClient(EndpointConfig cfg, std::shared_ptr<UsageLedger> ledger)
    : cfg_(std::move(cfg)), ledger_(ledger ? std::move(ledger) : std::make_shared<UsageLedger>()) {}

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path without trailing slash
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ValidationError("endpoint URL needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  SplitUrl out;
  out.origin = url.substr(0, path_start);
  out.prefix = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  return out;
}

}  // namespace

ChatReply LlmClient::chat_complete(const PromptBundle& bundle, const std::string& purpose) {
  if (cfg_.base_url.empty()) {
    throw LlmError("no LLM endpoint configured (set LASP_LLM_ENDPOINT)", 0);
  }
  const SplitUrl url = split_url(cfg_.base_url);
  nlohmann::json body = {
      {"model", cfg_.model},
      {"messages",
       {{{"role", "system"}, {"content", bundle.system}}, {{"role", "user"}, {"content", bundle.user}}}},
      {"temperature", cfg_.temperature},
      {"top_p", cfg_.top_p}};
  const std::string payload = body.dump();

  httplib::Client http(url.origin);
  http.set_connection_timeout(cfg_.timeout_s, 0);
  http.set_read_timeout(cfg_.timeout_s, 0);
  http.set_write_timeout(cfg_.timeout_s, 0);
  httplib::Headers headers;
  if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

  std::string last_error;
  const int attempts = std::max(1, cfg_.max_attempts);
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    if (attempt > 1) {
      std::this_thread::sleep_for(std::chrono::milliseconds(cfg_.backoff_base_ms << (attempt - 2)));
    }
    const auto start = std::chrono::steady_clock::now();
    ++network_calls_;
    auto res = http.Post(url.prefix + "/chat/completions", headers, payload, "application/json");
    const double wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (!res) {
      last_error = "network error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    try {
      const auto doc = nlohmann::json::parse(res->body);
      ChatReply reply;
      reply.text = doc.at("choices").at(0).at("message").at("content").get<std::string>();
      reply.attempts = attempt;
      reply.usage.purpose = purpose;
      reply.usage.wall_ms = wall_ms;
      if (doc.contains("usage") && doc["usage"].is_object()) {
        reply.usage.prompt_tokens = doc["usage"].value("prompt_tokens", 0L);
        reply.usage.completion_tokens = doc["usage"].value("completion_tokens", 0L);
      }
      ledger_->record(reply.usage);
      return reply;
    } catch (const nlohmann::json::exception& e) {
      last_error = std::string("malformed reply: ") + e.what();
    }
  }
  throw LlmError("chat completion failed after " + std::to_string(attempts) +
                     " attempt(s): " + last_error,
                 attempts);
}

std::optional<std::string> extract_json_block(std::string_view text) {
  for (std::size_t start = text.find('{'); start != std::string_view::npos;
       start = text.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t k = start; k < text.size(); ++k) {
      const char c = text[k];
      if (in_string) {
        if (escaped) escaped = false;
        else if (c == '\\') escaped = true;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == '{') ++depth;
      else if (c == '}' && --depth == 0) return std::string(text.substr(start, k - start + 1));
    }
    // Unbalanced from this brace; a later brace cannot close either.
    return std::nullopt;
  }
  return std::nullopt;
}

SymbolicExpression parse_utterance_via_llm(const std::string& utterance, LlmClient& client,
                                           const PromptLibrary& library) {
  const auto bundle = assemble_prompt(TemplateId::Parsing, PromptInputs{.utterance = utterance}, library);
  std::string last_error;
  for (int attempt = 1; attempt <= kDrawAttempts; ++attempt) {
    const auto reply = client.chat_complete(bundle, "parsing");
    auto block = extract_json_block(reply.text);
    if (!block) {
      last_error = "reply contains no JSON object";
      continue;
    }
    try {
      return parse_expression(*block);
    } catch (const ValidationError& e) {
      last_error = e.what();
    }
  }
  throw ValidationError("could not parse utterance \"" + utterance + "\": " + last_error);
}

UtteranceParser UtteranceParser::offline(std::filesystem::path expression_file) {
  UtteranceParser p;
  p.offline_file_ = std::move(expression_file);
  return p;
}

UtteranceParser UtteranceParser::online(std::shared_ptr<LlmClient> client, PromptLibrary library) {
  UtteranceParser p;
  p.client_ = std::move(client);
  p.library_ = std::move(library);
  return p;
}

SymbolicExpression UtteranceParser::parse(const std::string& utterance) const {
  if (client_) return parse_utterance_via_llm(utterance, *client_, library_);
  std::ifstream in(offline_file_);
  if (!in) throw ValidationError("cannot open expression file " + offline_file_.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_expression(ss.str());
}

EncoderDefinition LlmSource::draw(Relation relation, const RefinementContext* context,
                                  const EncoderDefinition* example, std::uint64_t /*seed*/) {
  const TemplateId id = context ? TemplateId::Refinement : TemplateId::InitGeneration;
  const auto bundle = assemble_prompt(
      id, PromptInputs{.relation = relation, .example = example, .prior = context}, library_);
  const auto reply = client_->chat_complete(bundle, std::string(template_name(id)));
  auto block = extract_json_block(reply.text);
  if (!block) throw ValidationError("model reply contains no JSON definition");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(*block);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("model reply is not valid JSON: ") + e.what());
  }
  if (!doc.contains("relation")) doc["relation"] = std::string(relation_name(relation));
  EncoderDefinition def = definition_from_json(doc);
  if (def.relation != relation) {
    throw ValidationError("model returned a definition for " + std::string(relation_name(def.relation)));
  }
  return def;
}

struct StubServer::Impl {
  httplib::Server server;
  std::thread thread;
  mutable std::mutex mu;
  std::vector<StubReply> replies;
  std::vector<std::string> bodies;
};

StubServer::StubServer(std::vector<StubReply> replies, int port) : impl_(std::make_unique<Impl>()) {
  if (replies.empty()) throw ValidationError("stub server needs at least one reply");
  impl_->replies = std::move(replies);
  Impl* impl = impl_.get();
  auto handler = [impl](const httplib::Request& req, httplib::Response& res) {
    StubReply reply;
    {
      std::lock_guard lock(impl->mu);
      const std::size_t k = std::min(impl->bodies.size(), impl->replies.size() - 1);
      reply = impl->replies[k];
      impl->bodies.push_back(req.body);
    }
    res.status = reply.status;
    if (reply.status < 200 || reply.status >= 300) {
      res.set_content(R"({"error":{"message":"stub failure"}})", "application/json");
      return;
    }
    nlohmann::json doc = {
        {"id", "stub"},
        {"object", "chat.completion"},
        {"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", reply.content}}},
                      {"finish_reason", "stop"}}}},
        {"usage", {{"prompt_tokens", reply.prompt_tokens},
                   {"completion_tokens", reply.completion_tokens},
                   {"total_tokens", reply.prompt_tokens + reply.completion_tokens}}}};
    res.set_content(doc.dump(), "application/json");
  };
  impl_->server.Post("/chat/completions", handler);
  impl_->server.Post("/v1/chat/completions", handler);
  if (port == 0) {
    port_ = impl_->server.bind_to_any_port("127.0.0.1");
  } else {
    port_ = impl_->server.bind_to_port("127.0.0.1", port) ? port : -1;
  }
  if (port_ <= 0) throw std::runtime_error("stub server could not bind a port");
  impl_->thread = std::thread([impl] { impl->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

StubServer::~StubServer() { stop(); }

void StubServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

void StubServer::wait() {
  if (impl_ && impl_->thread.joinable()) impl_->thread.join();
}

std::string StubServer::base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }

std::size_t StubServer::request_count() const {
  std::lock_guard lock(impl_->mu);
  return impl_->bodies.size();
}

std::vector<std::string> StubServer::request_bodies() const {
  std::lock_guard lock(impl_->mu);
  return impl_->bodies;
}

std::vector<StubReply> StubServer::load_fixtures(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<StubReply> replies;
  for (const auto& f : files) {
    std::ifstream in(f);
    std::ostringstream ss;
    ss << in.rdbuf();
    StubReply r;
    r.content = ss.str();
    replies.push_back(std::move(r));
  }
  if (replies.empty()) throw ValidationError("no *.txt fixture replies in " + dir.string());
  return replies;
}

}  // namespace lasp
