#ifndef TIPPING_LLM_ADAPTER_HPP
#define TIPPING_LLM_ADAPTER_HPP

#include <atomic>
#include <memory>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tipping/observation.hpp"
#include "tipping/policy.hpp"
#include "tipping/scenario.hpp"

namespace tipping {

struct EndpointConfig {
  std::string base_url;  // e.g. http://localhost:8000/v1
  std::string model_name;
  std::string auth_env_var;  // empty: unauthenticated endpoint
  double temperature = 0.7;
  int max_tokens = 1024;
  int timeout_ms = 60000;
  int retry_budget = 2;
  int max_concurrency = 4;
  int initial_backoff_ms = 250;

  bool operator==(const EndpointConfig&) const = default;
};

std::vector<Issue> check(const EndpointConfig& cfg);

enum class MessageRole { System, User, Assistant };
std::string_view to_string(MessageRole role);

struct Message {
  MessageRole role = MessageRole::User;
  std::string content;

  bool operator==(const Message&) const = default;
};

using MessageSeq = std::vector<Message>;

// `IMPORTANT:` block naming exactly the two legal choice objects, deviant
// label first.
std::string decision_format_block(const LabelMap& labels);

MessageSeq render_prompt(const RolePlayScenario& scenario, const History& history);
MessageSeq render_prompt(const ToolTaskModel& model, std::span<const ToolRecord> history,
                         TaskKind kind);
MessageSeq render_prompt(const CoordinationGameSpec& game, const GlobalHistory& history,
                         int agent_id);

// Last {"choice": "<label>"} object whose label matches (trimmed,
// case-insensitive) wins. Throws NoDecisionFound or UnknownChoice.
Decision parse_decision(std::string_view text, const LabelMap& labels);

// Chat-completions client. Thread-safe; at most max_concurrency requests are
// in flight across all callers sharing one instance.
class ChatClient {
 public:
  explicit ChatClient(EndpointConfig cfg);

  // Retries transport failures, timeouts, 429 and 5xx up to retry_budget with
  // exponential backoff. Throws EndpointError, TimeoutError or AuthError.
  std::string complete(const MessageSeq& messages);

  const EndpointConfig& config() const noexcept { return cfg_; }
  long attempts() const noexcept { return attempts_.load(); }

 private:
  EndpointConfig cfg_;
  std::counting_semaphore<> slots_;
  std::atomic<long> attempts_{0};
};

std::string complete(const EndpointConfig& cfg, const MessageSeq& messages);

// Renders the environment prompt, calls the endpoint, parses the decision. A
// parse failure is re-asked once with a format reminder, then raised as
// PolicyFailure.
class EndpointPolicy final : public Policy {
 public:
  explicit EndpointPolicy(std::shared_ptr<ChatClient> client);

  PolicyKind kind() const noexcept override { return PolicyKind::EndpointBacked; }
  std::string descriptor() const override;
  PolicyOutput decide(const Observation& obs, Rng& rng) override;
  PolicyOutput decide(const MultiObservation& obs, Rng& rng) override;

 private:
  Decision ask(MessageSeq messages, const LabelMap& labels);

  std::shared_ptr<ChatClient> client_;
};

}  // namespace tipping

#endif
