#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fedit/core.hpp"

namespace fedit {

struct ClientCorpus {
  std::string client_id;
  std::vector<Document> documents;
};

struct GeneratedDataset {
  std::string client_id;
  std::vector<InstructionPair> pairs;

  std::size_t kept_count() const noexcept;
  std::vector<InstructionPair> kept_pairs() const;

  friend bool operator==(const GeneratedDataset&, const GeneratedDataset&) = default;
};

struct EvalItem {
  std::string id;
  std::string text;
};

// All loaders report MalformedLine with 1-based line numbers, InvalidUtf8 for
// bad byte sequences and DuplicateId for repeated ids.

/// Corpus JSONL: {"id", "text", "meta"?}. client_id defaults to the file stem.
ClientCorpus load_corpus(const std::filesystem::path& path);
ClientCorpus parse_corpus(std::string_view jsonl, std::string client_id);

/// Example pool JSONL: {"document", "instruction", "response", "domain"?}.
/// The embedded document gets id "pool-<line index>" and carries the domain
/// in its meta.
std::vector<Example> load_example_pool(const std::filesystem::path& path);
std::vector<Example> parse_example_pool(std::string_view jsonl);

/// Generated dataset JSONL: {"instruction", "response", "source_doc_id",
/// "reward_score"?, "kept"}.
std::string serialize_dataset(const GeneratedDataset& dataset);
GeneratedDataset parse_dataset(std::string_view jsonl, std::string client_id);
void save_dataset(const GeneratedDataset& dataset, const std::filesystem::path& path);
GeneratedDataset load_dataset(const std::filesystem::path& path);

/// Evaluation set JSONL: {"instruction", "reference", "id"?}; ids default to
/// the 0-based line index.
std::vector<EvalItem> load_references(const std::filesystem::path& path);
/// Model responses JSONL: {"id", "response"}.
std::vector<EvalItem> load_responses(const std::filesystem::path& path);

/// Ids of documents whose text contains a prompt marker ("[document]:",
/// "[question]:", "[answer]:", "### Response:"). Such text is passed to the
/// generator unescaped and can confuse completion parsing.
std::vector<std::string> lint_prompt_markers(const ClientCorpus& corpus);

}  // namespace fedit
