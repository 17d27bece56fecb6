#pragma once

#include <chrono>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "fedit/core.hpp"
#include "fedit/generation.hpp"
#include "fedit/retry.hpp"

namespace fedit {

struct RuleFilterResult {
  std::vector<InstructionPair> kept;
  std::map<ParseFailureReason, std::size_t> reject_stats;

  std::size_t rejected() const noexcept;
};

/// Keeps the successful parses in input order and counts every failure by
/// reason.
RuleFilterResult rule_filter(const std::vector<ParseResult>& parsed);

class RewardBackend {
 public:
  virtual ~RewardBackend() = default;
  /// One score per pair, same order.
  virtual std::vector<float> score(const std::vector<InstructionPair>& pairs) const = 0;
};

/// Grounding fraction: the share of response tokens (counted with
/// multiplicity) that also occur in the source document. Documents are
/// looked up by the pair's source_doc_id; an unknown id scores 0.
class MockRewardBackend final : public RewardBackend {
 public:
  MockRewardBackend() = default;
  explicit MockRewardBackend(const std::vector<Document>& documents);

  void add_document(const Document& doc);
  std::vector<float> score(const std::vector<InstructionPair>& pairs) const override;

 private:
  std::unordered_map<std::string, std::string> doc_text_;
};

/// POST {base_url}/v1/score {"pairs": [...]} -> {"scores": [...]}.
class HttpRewardBackend final : public RewardBackend {
 public:
  HttpRewardBackend(std::string base_url, std::string api_key, RetryPolicy retry = {},
                    std::chrono::seconds timeout = std::chrono::seconds(120));
  std::vector<float> score(const std::vector<InstructionPair>& pairs) const override;

 private:
  std::string base_url_;
  std::string api_key_;
  RetryPolicy retry_;
  std::chrono::seconds timeout_;
};

/// ceil(2n/3): the number of pairs the reward filter keeps.
constexpr std::size_t reward_keep_count(std::size_t n) noexcept { return (2 * n + 2) / 3; }

/// Scores every pair, writes reward_score, and marks the top ceil(2N/3) by
/// score as kept (ties to the lower input index); the rest stay in the
/// returned list with kept = false. Output preserves input order.
std::vector<InstructionPair> reward_filter(std::vector<InstructionPair> pairs, const RewardBackend& backend);

}  // namespace fedit
