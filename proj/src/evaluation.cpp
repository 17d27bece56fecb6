#include "fedit/evaluation.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <map>
#include <set>

namespace fedit {

using nlohmann::json;

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  // Two-row DP table.
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

float rouge_l(std::string_view candidate, std::string_view reference) {
  const auto cand = tokenize(candidate);
  const auto ref = tokenize(reference);
  if (cand.empty() || ref.empty()) return 0.0f;
  const double lcs = static_cast<double>(lcs_length(cand, ref));
  const double recall = lcs / static_cast<double>(ref.size());
  const double precision = lcs / static_cast<double>(cand.size());
  if (precision + recall == 0.0) return 0.0f;
  return static_cast<float>(2.0 * precision * recall / (precision + recall));
}

EvalReport evaluate(const std::vector<EvalItem>& responses, const std::vector<EvalItem>& references,
                    const EmbeddingProvider& provider, std::optional<double> bertscore_baseline) {
  std::map<std::string, const std::string*> by_id;
  for (const auto& r : responses) by_id.emplace(r.id, &r.text);
  std::set<std::string> ref_ids;
  for (const auto& r : references) ref_ids.insert(r.id);
  if (by_id.size() != responses.size() || ref_ids.size() != references.size()) {
    throw Error(ErrorCode::IdMismatch, "duplicate ids");
  }
  for (const auto& id : ref_ids) {
    if (!by_id.contains(id)) throw Error(ErrorCode::IdMismatch, "no response for reference id '" + id + "'");
  }
  for (const auto& [id, _] : by_id) {
    if (!ref_ids.contains(id)) throw Error(ErrorCode::IdMismatch, "no reference for response id '" + id + "'");
  }
  if (bertscore_baseline && !(*bertscore_baseline < 1.0)) {
    throw Error(ErrorCode::ConfigError, "bertscore baseline must be < 1");
  }

  EvalReport report;
  report.bertscore_baseline = bertscore_baseline;
  double sum_rouge = 0.0, sum_bert = 0.0;
  for (const auto& ref : references) {
    const std::string& response = *by_id.at(ref.id);
    EvalRow row{ref.id, rouge_l(response, ref.text), 0.0f};
    const auto cand_tokens = tokenize(response);
    const auto ref_tokens = tokenize(ref.text);
    double bert = 0.0;
    if (!cand_tokens.empty() && !ref_tokens.empty()) bert = bertscore_f1(cand_tokens, ref_tokens, provider);
    if (bertscore_baseline) bert = (bert - *bertscore_baseline) / (1.0 - *bertscore_baseline);
    row.bert_f1 = static_cast<float>(bert);
    sum_rouge += row.rouge_l;
    sum_bert += row.bert_f1;
    report.rows.push_back(std::move(row));
  }
  if (!report.rows.empty()) {
    report.mean_rouge_l = sum_rouge / static_cast<double>(report.rows.size());
    report.mean_bert_f1 = sum_bert / static_cast<double>(report.rows.size());
  }
  return report;
}

std::string report_json(const EvalReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) rows.push_back({{"id", r.id}, {"rouge_l", r.rouge_l}, {"bert_f1", r.bert_f1}});
  json j = {{"samples", std::move(rows)},
            {"sample_count", report.sample_count()},
            {"mean_rouge_l", report.mean_rouge_l},
            {"mean_bert_f1", report.mean_bert_f1}};
  if (report.bertscore_baseline) j["bertscore_baseline"] = *report.bertscore_baseline;
  return j.dump(2) + "\n";
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string report_csv(const EvalReport& report) {
  std::string out = "id,rouge_l,bert_f1\n";
  char buf[64];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof(buf), ",%.6f,%.6f\n", static_cast<double>(r.rouge_l), static_cast<double>(r.bert_f1));
    out += csv_field(r.id);
    out += buf;
  }
  return out;
}

void write_report(const EvalReport& report, const std::filesystem::path& stem) {
  auto json_path = stem;
  json_path += ".json";
  auto csv_path = stem;
  csv_path += ".csv";
  write_file(json_path, report_json(report));
  write_file(csv_path, report_csv(report));
}

std::vector<float> text_embedding(std::string_view text, const EmbeddingProvider& provider) {
  const auto tokens = tokenize(text);
  const auto m = provider.embed(tokens);
  std::vector<double> mean(m.dim, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i) {
    auto row = m.row(i);
    for (std::size_t d = 0; d < m.dim; ++d) mean[d] += row[d];
  }
  double norm = 0.0;
  for (double v : mean) norm += v * v;
  norm = std::sqrt(norm);
  std::vector<float> out(m.dim, 0.0f);
  if (norm > 0.0) {
    for (std::size_t d = 0; d < m.dim; ++d) out[d] = static_cast<float>(mean[d] / norm);
  }
  return out;
}

void export_pair_embeddings(const std::vector<InstructionPair>& generated,
                            const std::vector<InstructionPair>& annotated, const EmbeddingProvider& provider,
                            const std::filesystem::path& path) {
  std::string out;
  auto emit = [&](const std::vector<InstructionPair>& pairs, const char* source) {
    for (const auto& p : pairs) {
      json row = {{"source", source}, {"embedding", text_embedding(p.instruction + " " + p.response, provider)}};
      out += row.dump();
      out += '\n';
    }
  };
  emit(generated, "generated");
  emit(annotated, "human");
  write_file(path, out);
}

}  // namespace fedit
