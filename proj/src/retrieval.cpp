#include "fedit/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedit/text.hpp"

namespace fedit {

EmbeddingMatrix HashEmbedder::embed(const std::vector<std::string>& tokens) const {
  if (tokens.empty()) throw Error(ErrorCode::EmptyTokenList, "nothing to embed");
  EmbeddingMatrix m{tokens.size(), kDim, std::vector<float>(tokens.size() * kDim)};
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    Rng rng(fnv1a64(tokens[i]));
    double raw[kDim];
    double norm = 0.0;
    for (auto& v : raw) {
      v = 2.0 * rng.next_double() - 1.0;
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < kDim; ++j) m.values[i * kDim + j] = static_cast<float>(raw[j] / norm);
  }
  return m;
}

EmbeddingMatrix hash_embed(const std::vector<std::string>& tokens) {
  return HashEmbedder{}.embed(tokens);
}

float bertscore_f1(const EmbeddingMatrix& candidate, const EmbeddingMatrix& reference) {
  if (candidate.rows == 0 || reference.rows == 0) {
    throw Error(ErrorCode::EmptyTokenList, "bertscore needs non-empty token lists");
  }
  if (candidate.dim != reference.dim) {
    throw Error(ErrorCode::ShapeMismatch, "embedding dimensions differ");
  }
  std::vector<double> best_for_cand(candidate.rows, -1.0);
  std::vector<double> best_for_ref(reference.rows, -1.0);
  for (std::size_t i = 0; i < candidate.rows; ++i) {
    auto c = candidate.row(i);
    for (std::size_t j = 0; j < reference.rows; ++j) {
      auto r = reference.row(j);
      double dot = 0.0;
      for (std::size_t d = 0; d < candidate.dim; ++d) dot += static_cast<double>(c[d]) * r[d];
      best_for_cand[i] = std::max(best_for_cand[i], dot);
      best_for_ref[j] = std::max(best_for_ref[j], dot);
    }
  }
  auto clamped_mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += std::clamp(x, 0.0, 1.0);
    return s / static_cast<double>(v.size());
  };
  const double precision = clamped_mean(best_for_cand);
  const double recall = clamped_mean(best_for_ref);
  if (precision + recall == 0.0) return 0.0f;
  return static_cast<float>(2.0 * precision * recall / (precision + recall));
}

float bertscore_f1(const std::vector<std::string>& candidate_tokens,
                   const std::vector<std::string>& reference_tokens,
                   const EmbeddingProvider& provider) {
  if (candidate_tokens.empty() || reference_tokens.empty()) {
    throw Error(ErrorCode::EmptyTokenList, "bertscore needs non-empty token lists");
  }
  return bertscore_f1(provider.embed(candidate_tokens), provider.embed(reference_tokens));
}

// ---------------------------------------------------------------------------

ExampleIndex::ExampleIndex(std::vector<Example> pool, const EmbeddingProvider& provider)
    : pool_(std::move(pool)), provider_(&provider) {
  doc_embeddings_.reserve(pool_.size());
  for (const auto& ex : pool_) {
    auto tokens = tokenize(ex.document.text);
    if (tokens.empty()) {
      throw Error(ErrorCode::EmptyTokenList, "pool document '" + ex.document.id + "' has no tokens");
    }
    doc_embeddings_.push_back(provider.embed(tokens));
  }
}

std::vector<float> ExampleIndex::score_all(const std::string& target_text) const {
  auto tokens = tokenize(target_text);
  if (tokens.empty()) throw Error(ErrorCode::EmptyTokenList, "target document has no tokens");
  const auto target = provider_->embed(tokens);
  std::vector<float> scores;
  scores.reserve(pool_.size());
  for (const auto& doc : doc_embeddings_) scores.push_back(bertscore_f1(target, doc));
  return scores;
}

namespace {

void require_pool(std::size_t available, std::size_t needed, const char* subset) {
  if (available < needed) {
    throw Error(ErrorCode::PoolTooSmall, std::string(subset) + " subset has " + std::to_string(available) +
                                             " entries, need " + std::to_string(needed));
  }
}

}  // namespace

SelectedExamples select_examples(const Document& target, const ExampleIndex& index,
                                 const SelectionPolicy& policy, std::size_t k, Rng& rng) {
  using K = SelectionPolicy::Kind;
  const auto& pool = index.pool();
  SelectedExamples out;

  if (policy.kind == K::Retrieval) {
    require_pool(pool.size(), k, "pool");
    const auto scores = index.score_all(target.text);
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    for (std::size_t i = 0; i < k; ++i) {
      out.examples.push_back(pool[order[i]]);
      out.scores.push_back(scores[order[i]]);
      out.pool_indices.push_back(order[i]);
    }
    return out;
  }

  const auto target_domain = target.domain();
  if (!target_domain) {
    throw Error(ErrorCode::MissingDomainTag, "target '" + target.id + "' has no domain tag");
  }
  std::vector<std::size_t> in_domain, out_domain;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (!pool[i].domain) {
      throw Error(ErrorCode::MissingDomainTag, "pool entry " + std::to_string(i) + " has no domain tag");
    }
    (*pool[i].domain == *target_domain ? in_domain : out_domain).push_back(i);
  }

  auto take_random = [&](const std::vector<std::size_t>& subset, std::size_t count, const char* name) {
    require_pool(subset.size(), count, name);
    for (auto j : draw_without_replacement(subset.size(), count, rng)) {
      out.examples.push_back(pool[subset[j]]);
      out.pool_indices.push_back(subset[j]);
    }
  };

  switch (policy.kind) {
    case K::FixedInDomain:
      require_pool(in_domain.size(), k, "in-domain");
      for (std::size_t i = 0; i < k; ++i) {
        out.examples.push_back(pool[in_domain[i]]);
        out.pool_indices.push_back(in_domain[i]);
      }
      break;
    case K::RandomInDomain:
      take_random(in_domain, k, "in-domain");
      break;
    case K::RandomOutDomain:
      take_random(out_domain, k, "out-domain");
      break;
    case K::RandomMixed:
      if (policy.in_count + policy.out_count != k) {
        throw Error(ErrorCode::ConfigError, "random-mixed counts must sum to k");
      }
      take_random(in_domain, policy.in_count, "in-domain");
      take_random(out_domain, policy.out_count, "out-domain");
      break;
    case K::Retrieval:
      break;
  }
  return out;
}

SelectedExamples select_examples(const Document& target, const std::vector<Example>& pool,
                                 const EmbeddingProvider& provider, const SelectionPolicy& policy, std::size_t k,
                                 Rng& rng) {
  return select_examples(target, ExampleIndex(pool, provider), policy, k, rng);
}

}  // namespace fedit
