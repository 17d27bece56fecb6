#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fedit/corpus_io.hpp"
#include "fedit/retrieval.hpp"
#include "fedit/text.hpp"

namespace fedit {

/// Length of the longest common subsequence of two token lists.
std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// ROUGE-L F1 (beta = 1) over the shared tokenizer; 0 when either side has
/// no tokens.
float rouge_l(std::string_view candidate, std::string_view reference);

struct EvalRow {
  std::string id;
  float rouge_l = 0.0f;
  float bert_f1 = 0.0f;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double mean_rouge_l = 0.0;
  double mean_bert_f1 = 0.0;
  /// Set when a BERTScore baseline b was supplied; bert_f1 values are then
  /// rescaled as (s - b) / (1 - b).
  std::optional<double> bertscore_baseline;

  std::size_t sample_count() const noexcept { return rows.size(); }
};

/// Scores every reference id against the response with the same id. Rows
/// follow reference order. Throws IdMismatch unless both id sets are equal.
/// A side with no tokens scores 0 on both metrics.
EvalReport evaluate(const std::vector<EvalItem>& responses, const std::vector<EvalItem>& references,
                    const EmbeddingProvider& provider, std::optional<double> bertscore_baseline = std::nullopt);

std::string report_json(const EvalReport& report);
std::string report_csv(const EvalReport& report);
/// Writes <stem>.json and <stem>.csv.
void write_report(const EvalReport& report, const std::filesystem::path& stem);

/// One JSONL row per pair: {"source": "generated"|"human", "embedding": [...]}
/// where the embedding is the re-normalized mean token vector of
/// instruction + " " + response. Generated rows come first.
void export_pair_embeddings(const std::vector<InstructionPair>& generated,
                            const std::vector<InstructionPair>& annotated, const EmbeddingProvider& provider,
                            const std::filesystem::path& path);

/// Mean token embedding of `text`, L2-normalized.
std::vector<float> text_embedding(std::string_view text, const EmbeddingProvider& provider);

}  // namespace fedit
