#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "fedit/core.hpp"
#include "fedit/retrieval.hpp"
#include "fedit/retry.hpp"

namespace fedit {

/// The fixed generation instruction that opens every few-shot prompt.
/// Line breaks and trailing spaces are part of the template.
inline constexpr std::string_view kGenerationInstruction =
    "Given the next [document], create a [question] and [answer] pair that \n"
    "are grounded in the main point of the document, don't add any \n"
    "additional information that is not in the document. The [question] is \n"
    "by an information-seeking user and the [answer] is provided by a \n"
    "helping AI Agent.";

inline constexpr std::string_view kDocumentMarker = "[document]: ";
inline constexpr std::string_view kResponseMarker = "### Response:";
inline constexpr std::string_view kQuestionMarker = "[question]:";
inline constexpr std::string_view kAnswerMarker = "[answer]:";

/// header, blank line, one block per example, then the target block:
///
///   [document]: <text>
///
///   ### Response:
///   [question]: <instruction>
///   [answer]: <response>
///
/// The target block stops after "### Response:\n". Nothing is escaped.
std::string render_prompt(std::string_view header, const std::vector<Example>& examples,
                          const Document& target);
std::string render_prompt(const SelectedExamples& selected, const Document& target);

struct GenerationConfig {
  float temperature = 0.7f;
  int max_tokens = 512;
  std::optional<std::uint64_t> seed;
  RetryPolicy retry;
};

class GenerationBackend {
 public:
  virtual ~GenerationBackend() = default;
  /// One attempt. Throws BackendUnreachable or BackendError.
  virtual std::string complete(const std::string& prompt, float temperature, int max_tokens,
                               std::optional<std::uint64_t> seed) const = 0;
};

/// Deterministic stand-in: reads the target text back out of the prompt and
/// answers
///   "[question]: What is the main point of <first N words>?\n[answer]: <first sentence>"
/// where the first sentence ends at the first '.', '!' or '?'.
class MockGenerationBackend final : public GenerationBackend {
 public:
  explicit MockGenerationBackend(std::size_t topic_words = 8) : topic_words_(topic_words) {}

  std::string complete(const std::string& prompt, float temperature, int max_tokens,
                       std::optional<std::uint64_t> seed) const override;

  /// The completion for a bare target text.
  std::string complete_for_target(std::string_view target_text) const;

 private:
  std::size_t topic_words_;
};

/// OpenAI-compatible chat-completions client (POST {base_url}/v1/chat/completions).
class ChatCompletionsBackend final : public GenerationBackend {
 public:
  ChatCompletionsBackend(std::string base_url, std::string model, std::string api_key,
                         std::chrono::seconds timeout = std::chrono::seconds(120));

  std::string complete(const std::string& prompt, float temperature, int max_tokens,
                       std::optional<std::uint64_t> seed) const override;

 private:
  std::string base_url_;
  std::string model_;
  std::string api_key_;
  std::chrono::seconds timeout_;
};

/// Renders the prompt and asks the backend, retrying transport failures and
/// 5xx answers per config.retry. Returns the raw completion untouched.
std::string generate_pair(const Document& target, const SelectedExamples& selected,
                          const GenerationBackend& backend, const GenerationConfig& config);

enum class ParseFailureReason { MissingQuestion, MissingAnswer, DuplicateMarker, EmptyField, WrongOrder };

std::string_view to_string(ParseFailureReason reason);

struct ParseFailure {
  ParseFailureReason reason;
  std::string source_doc_id;
};

using ParseResult = std::variant<InstructionPair, ParseFailure>;

/// Accepts exactly one "[question]:" followed by exactly one "[answer]:",
/// both segments non-blank. Text before the question marker is discarded.
ParseResult parse_completion(std::string_view raw, const std::string& source_doc_id);

}  // namespace fedit
