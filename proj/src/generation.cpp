#include "fedit/generation.hpp"

#include <sstream>

namespace fedit {

std::string render_prompt(std::string_view header, const std::vector<Example>& examples,
                          const Document& target) {
  std::string out(header);
  out += "\n\n";
  for (const auto& ex : examples) {
    out += kDocumentMarker;
    out += ex.document.text;
    out += "\n\n";
    out += kResponseMarker;
    out += '\n';
    out += kQuestionMarker;
    out += ' ';
    out += ex.instruction;
    out += '\n';
    out += kAnswerMarker;
    out += ' ';
    out += ex.response;
    out += "\n\n";
  }
  out += kDocumentMarker;
  out += target.text;
  out += "\n\n";
  out += kResponseMarker;
  out += '\n';
  return out;
}

std::string render_prompt(const SelectedExamples& selected, const Document& target) {
  return render_prompt(kGenerationInstruction, selected.examples, target);
}

// ---------------------------------------------------------------------------

std::string MockGenerationBackend::complete_for_target(std::string_view target_text) const {
  std::istringstream words{std::string(target_text)};
  std::string topic, word;
  for (std::size_t i = 0; i < topic_words_ && words >> word; ++i) {
    if (!topic.empty()) topic += ' ';
    topic += word;
  }
  const auto end = target_text.find_first_of(".!?");
  const std::string sentence =
      trim(end == std::string_view::npos ? target_text : target_text.substr(0, end + 1));
  return "[question]: What is the main point of " + topic + "?\n[answer]: " + sentence;
}

std::string MockGenerationBackend::complete(const std::string& prompt, float, int,
                                            std::optional<std::uint64_t>) const {
  // The target is the last document block; the prompt ends with its
  // "\n\n### Response:\n" trailer.
  const auto start = prompt.rfind(kDocumentMarker);
  if (start == std::string::npos) return {};
  const std::string trailer = "\n\n" + std::string(kResponseMarker) + "\n";
  std::string_view body(prompt);
  body.remove_prefix(start + kDocumentMarker.size());
  if (body.ends_with(trailer)) body.remove_suffix(trailer.size());
  return complete_for_target(body);
}

std::string generate_pair(const Document& target, const SelectedExamples& selected,
                          const GenerationBackend& backend, const GenerationConfig& config) {
  const auto prompt = render_prompt(selected, target);
  return with_retries(config.retry, [&] {
    return backend.complete(prompt, config.temperature, config.max_tokens, config.seed);
  });
}

// ---------------------------------------------------------------------------

std::string_view to_string(ParseFailureReason reason) {
  switch (reason) {
    case ParseFailureReason::MissingQuestion: return "MissingQuestion";
    case ParseFailureReason::MissingAnswer: return "MissingAnswer";
    case ParseFailureReason::DuplicateMarker: return "DuplicateMarker";
    case ParseFailureReason::EmptyField: return "EmptyField";
    case ParseFailureReason::WrongOrder: return "WrongOrder";
  }
  return "Unknown";
}

ParseResult parse_completion(std::string_view raw, const std::string& source_doc_id) {
  auto fail = [&](ParseFailureReason r) { return ParseResult{ParseFailure{r, source_doc_id}}; };

  const auto q = raw.find(kQuestionMarker);
  const auto a = raw.find(kAnswerMarker);
  if (q == std::string_view::npos) return fail(ParseFailureReason::MissingQuestion);
  if (a == std::string_view::npos) return fail(ParseFailureReason::MissingAnswer);
  if (raw.find(kQuestionMarker, q + 1) != std::string_view::npos ||
      raw.find(kAnswerMarker, a + 1) != std::string_view::npos) {
    return fail(ParseFailureReason::DuplicateMarker);
  }
  if (a < q) return fail(ParseFailureReason::WrongOrder);

  const auto q_body = q + kQuestionMarker.size();
  InstructionPair pair;
  pair.instruction = trim(raw.substr(q_body, a - q_body));
  pair.response = trim(raw.substr(a + kAnswerMarker.size()));
  pair.source_doc_id = source_doc_id;
  if (pair.instruction.empty() || pair.response.empty()) return fail(ParseFailureReason::EmptyField);
  return pair;
}

}  // namespace fedit
