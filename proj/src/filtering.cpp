#include "fedit/filtering.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "fedit/text.hpp"

namespace fedit {

std::size_t RuleFilterResult::rejected() const noexcept {
  std::size_t n = 0;
  for (const auto& [_, count] : reject_stats) n += count;
  return n;
}

RuleFilterResult rule_filter(const std::vector<ParseResult>& parsed) {
  RuleFilterResult out;
  for (const auto& result : parsed) {
    if (const auto* pair = std::get_if<InstructionPair>(&result)) {
      out.kept.push_back(*pair);
    } else {
      ++out.reject_stats[std::get<ParseFailure>(result).reason];
    }
  }
  return out;
}

MockRewardBackend::MockRewardBackend(const std::vector<Document>& documents) {
  for (const auto& d : documents) add_document(d);
}

void MockRewardBackend::add_document(const Document& doc) { doc_text_[doc.id] = doc.text; }

std::vector<float> MockRewardBackend::score(const std::vector<InstructionPair>& pairs) const {
  std::vector<float> scores;
  scores.reserve(pairs.size());
  for (const auto& p : pairs) {
    const auto response = tokenize(p.response);
    auto it = doc_text_.find(p.source_doc_id);
    if (response.empty() || it == doc_text_.end()) {
      scores.push_back(0.0f);
      continue;
    }
    const auto doc_tokens = tokenize(it->second);
    const std::unordered_set<std::string> vocab(doc_tokens.begin(), doc_tokens.end());
    std::size_t grounded = 0;
    for (const auto& t : response) grounded += vocab.contains(t) ? 1 : 0;
    scores.push_back(static_cast<float>(static_cast<double>(grounded) / static_cast<double>(response.size())));
  }
  return scores;
}

std::vector<InstructionPair> reward_filter(std::vector<InstructionPair> pairs, const RewardBackend& backend) {
  if (pairs.empty()) return pairs;
  const auto scores = backend.score(pairs);
  if (scores.size() != pairs.size()) {
    throw Error(ErrorCode::BackendError, "reward backend returned " + std::to_string(scores.size()) +
                                             " scores for " + std::to_string(pairs.size()) + " pairs");
  }
  for (float s : scores) {
    if (!std::isfinite(s)) throw Error(ErrorCode::BackendError, "reward backend returned a non-finite score");
  }
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  const std::size_t keep = reward_keep_count(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    pairs[i].reward_score = scores[i];
    pairs[i].kept = false;
  }
  for (std::size_t i = 0; i < keep; ++i) pairs[order[i]].kept = true;
  return pairs;
}

}  // namespace fedit
