#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "fedit/core.hpp"
#include "fedit/retry.hpp"

namespace fedit {

/// Row-major matrix of unit-norm token embeddings.
struct EmbeddingMatrix {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<float> values;

  std::span<const float> row(std::size_t i) const {
    return {values.data() + i * dim, dim};
  }
};

/// Pluggable embedding backend. Implementations return one unit-norm vector
/// per token, with a dimension fixed per provider, and must tolerate
/// concurrent calls.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual EmbeddingMatrix embed(const std::vector<std::string>& tokens) const = 0;
};

/// Deterministic provider: each token's vector comes from a SplitMix64 stream
/// seeded with the FNV-1a hash of its bytes, components uniform in [-1, 1],
/// then L2-normalized.
class HashEmbedder final : public EmbeddingProvider {
 public:
  static constexpr std::size_t kDim = 64;

  EmbeddingMatrix embed(const std::vector<std::string>& tokens) const override;
};

/// Client for an embedding service: POST {base_url}/v1/embed
/// {"tokens": [...]} -> {"vectors": [[...]...], "dim": n}. Vectors are
/// re-normalized on receipt.
class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  HttpEmbeddingProvider(std::string base_url, RetryPolicy retry = {},
                        std::chrono::seconds timeout = std::chrono::seconds(60));
  EmbeddingMatrix embed(const std::vector<std::string>& tokens) const override;

 private:
  std::string base_url_;
  RetryPolicy retry_;
  std::chrono::seconds timeout_;
};

/// Convenience wrapper for the built-in provider.
EmbeddingMatrix hash_embed(const std::vector<std::string>& tokens);

/// Greedy-matching F1 over token embeddings. Each token's best cosine is
/// clamped into [0, 1] before averaging, so the result is in [0, 1].
/// Throws EmptyTokenList if either side is empty.
float bertscore_f1(const std::vector<std::string>& candidate_tokens,
                   const std::vector<std::string>& reference_tokens,
                   const EmbeddingProvider& provider);

/// Same metric over already-embedded token matrices.
float bertscore_f1(const EmbeddingMatrix& candidate, const EmbeddingMatrix& reference);

struct SelectedExamples {
  std::vector<Example> examples;
  /// Similarity to the target, parallel to `examples`; empty for the
  /// non-retrieval policies.
  std::vector<float> scores;
  /// Pool index of each selected example.
  std::vector<std::size_t> pool_indices;
};

/// Example pool with document embeddings precomputed once for repeated
/// retrieval against many targets.
class ExampleIndex {
 public:
  ExampleIndex(std::vector<Example> pool, const EmbeddingProvider& provider);

  const std::vector<Example>& pool() const noexcept { return pool_; }
  const EmbeddingProvider& provider() const noexcept { return *provider_; }

  /// Similarity of `target_text` to every pool document, in pool order.
  std::vector<float> score_all(const std::string& target_text) const;

 private:
  std::vector<Example> pool_;
  const EmbeddingProvider* provider_;
  std::vector<EmbeddingMatrix> doc_embeddings_;
};

/// Picks k few-shot examples for `target`.
///  - Retrieval: top-k by similarity, ties to the lower pool index.
///  - FixedInDomain: first k in-domain entries by pool index.
///  - RandomInDomain / RandomOutDomain / RandomMixed: uniform draws without
///    replacement from the matching subsets (in-domain draws first for mixed).
/// Domain-aware policies read the target's meta["domain"] and every pool
/// entry's domain; a missing tag raises MissingDomainTag. Too few candidates
/// raise PoolTooSmall.
SelectedExamples select_examples(const Document& target, const ExampleIndex& index,
                                 const SelectionPolicy& policy, std::size_t k, Rng& rng);

/// One-off form that embeds the pool on every call.
SelectedExamples select_examples(const Document& target, const std::vector<Example>& pool,
                                 const EmbeddingProvider& provider, const SelectionPolicy& policy, std::size_t k,
                                 Rng& rng);

}  // namespace fedit
