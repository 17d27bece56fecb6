#include <doctest.h>

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>

#include "fedit/evaluation.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace fedit;

namespace {

std::vector<std::string> random_tokens(Rng& rng, std::size_t n, std::uint64_t alphabet) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(std::string(1, static_cast<char>('a' + rng.next_below(alphabet))));
  return out;
}

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) out += (out.empty() ? "" : " ") + t;
  return out;
}

}  // namespace

TEST_CASE("rouge_l contract cases") {
  CHECK(rouge_l("the sky is blue", "The sky is blue.") == doctest::Approx(1.0));
  CHECK(rouge_l("a c d", "a b c d") == doctest::Approx(6.0 / 7.0).epsilon(1e-6));
  CHECK(rouge_l("x y", "a b") == 0.0f);
  CHECK(rouge_l("", "a b") == 0.0f);
  CHECK(rouge_l("a", "") == 0.0f);
  CHECK(oracle::lcs_brute_force({"a", "c", "d"}, {"a", "b", "c", "d"}) == 3);
}

TEST_CASE("LCS dynamic program agrees with brute-force enumeration") {
  auto rng = seeded_rng(12, "lcs");
  for (int trial = 0; trial < 400; ++trial) {
    const auto a = random_tokens(rng, rng.next_below(13), 1 + rng.next_below(5));
    const auto b = random_tokens(rng, rng.next_below(13), 1 + rng.next_below(5));
    CHECK(lcs_length(a, b) == oracle::lcs_brute_force(a, b));
  }
}

TEST_CASE("rouge_l is symmetric, bounded, and 1 only for identical sequences") {
  auto rng = seeded_rng(13, "rouge-props");
  for (int trial = 0; trial < 300; ++trial) {
    const auto a = random_tokens(rng, rng.next_below(10), 3);
    const auto b = random_tokens(rng, rng.next_below(10), 3);
    const float ab = rouge_l(join(a), join(b));
    CHECK(ab == rouge_l(join(b), join(a)));
    CHECK(ab >= 0.0f);
    CHECK(ab <= 1.0f);
    CHECK((ab == 1.0f) == (!a.empty() && a == b));
  }
}

TEST_CASE("evaluate against hand-computed metrics") {
  HashEmbedder provider;
  const std::vector<EvalItem> refs = {{"q1", "The cat sat on the mat"}};
  const std::vector<EvalItem> resp = {{"q1", "a cat sat on a mat"}};
  auto report = evaluate(resp, refs, provider);
  REQUIRE(report.rows.size() == 1);
  // LCS(cand, ref) = cat sat on mat = 4; P = 4/6, R = 4/6.
  CHECK(report.rows[0].rouge_l == doctest::Approx(4.0 / 6.0).epsilon(1e-6));
  const double bert = oracle::bertscore(provider.embed(tokenize(resp[0].text)), provider.embed(tokenize(refs[0].text)));
  CHECK(report.rows[0].bert_f1 == doctest::Approx(bert).epsilon(1e-6));
}

TEST_CASE("evaluate identity and 50-row report") {
  HashEmbedder provider;
  auto rng = seeded_rng(14, "eval-50");
  std::vector<EvalItem> refs, resp;
  for (int i = 0; i < 50; ++i) {
    refs.push_back({"t" + std::to_string(i), random_text(rng, 3 + rng.next_below(10))});
    resp.push_back({"t" + std::to_string(i), random_text(rng, 3 + rng.next_below(10))});
  }
  auto same = evaluate(refs, refs, provider);
  CHECK(same.mean_rouge_l == doctest::Approx(1.0));
  CHECK(same.mean_bert_f1 == doctest::Approx(1.0).epsilon(1e-5));

  // Responses in a different order still pair up by id.
  std::reverse(resp.begin(), resp.end());
  auto report = evaluate(resp, refs, provider);
  CHECK(report.sample_count() == 50);
  CHECK(report.rows[0].id == "t0");
  double rsum = 0, bsum = 0;
  for (const auto& row : report.rows) {
    rsum += row.rouge_l;
    bsum += row.bert_f1;
    CHECK(row.bert_f1 >= 0.0f);
    CHECK(row.bert_f1 <= 1.0f + 1e-6f);
  }
  CHECK(std::abs(report.mean_rouge_l - rsum / 50.0) <= 1e-9);
  CHECK(std::abs(report.mean_bert_f1 - bsum / 50.0) <= 1e-9);
}

TEST_CASE("evaluate rejects mismatched ids and handles empty text") {
  HashEmbedder provider;
  CHECK(expect_error([&] { evaluate({{"a", "x"}}, {{"b", "x"}}, provider); }).code() == ErrorCode::IdMismatch);
  CHECK(expect_error([&] { evaluate({{"a", "x"}, {"b", "y"}}, {{"a", "x"}}, provider); }).code() ==
        ErrorCode::IdMismatch);
  auto report = evaluate({{"a", "..."}}, {{"a", "words here"}}, provider);
  CHECK(report.rows[0].rouge_l == 0.0f);
  CHECK(report.rows[0].bert_f1 == 0.0f);
}

TEST_CASE("baseline rescaling") {
  HashEmbedder provider;
  const std::vector<EvalItem> refs = {{"a", "one two three"}, {"b", "four five"}};
  const std::vector<EvalItem> resp = {{"a", "one two"}, {"b", "six"}};
  auto raw = evaluate(resp, refs, provider);
  auto scaled = evaluate(resp, refs, provider, 0.2);
  REQUIRE(scaled.bertscore_baseline.has_value());
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(scaled.rows[i].bert_f1 == doctest::Approx((raw.rows[i].bert_f1 - 0.2) / 0.8).epsilon(1e-6));
    CHECK(scaled.rows[i].rouge_l == raw.rows[i].rouge_l);
  }
}

TEST_CASE("report files") {
  HashEmbedder provider;
  auto report = evaluate({{"x,1", "a b"}, {"y", "c"}}, {{"x,1", "a b"}, {"y", "d"}}, provider);
  const auto csv = report_csv(report);
  CHECK(csv.rfind("id,rouge_l,bert_f1\n\"x,1\",1.000000,", 0) == 0);
  CHECK(csv.find("\ny,0.000000,") != std::string::npos);

  TempDir dir;
  write_report(report, dir.path() / "report");
  auto j = nlohmann::json::parse(read_file(dir.path() / "report.json"));
  CHECK(j["sample_count"] == 2);
  CHECK(j["samples"][0]["id"] == "x,1");
  CHECK(j["mean_rouge_l"].get<double>() == doctest::Approx(0.5));
  CHECK(read_file(dir.path() / "report.csv") == csv);
}

TEST_CASE("pair embedding export") {
  HashEmbedder provider;
  auto rng = seeded_rng(15, "export");
  std::vector<InstructionPair> gen, human;
  for (int i = 0; i < 200; ++i) {
    gen.push_back({random_text(rng, 5), random_text(rng, 8), "d", std::nullopt, true});
    human.push_back({random_text(rng, 5), random_text(rng, 8), "h", std::nullopt, true});
  }
  human[7] = gen[3];

  TempDir dir;
  export_pair_embeddings(gen, human, provider, dir.path() / "emb.jsonl");
  std::ifstream in(dir.path() / "emb.jsonl");
  std::vector<nlohmann::json> rows;
  for (std::string line; std::getline(in, line);) rows.push_back(nlohmann::json::parse(line));
  REQUIRE(rows.size() == 400);
  CHECK(rows[0]["source"] == "generated");
  CHECK(rows[199]["source"] == "generated");
  CHECK(rows[200]["source"] == "human");
  CHECK(rows[3]["embedding"] == rows[207]["embedding"]);
  CHECK(rows[3]["embedding"] != rows[4]["embedding"]);

  // Mean of token vectors, re-normalized, computed by hand.
  const auto tokens = tokenize(gen[0].instruction + " " + gen[0].response);
  const auto m = provider.embed(tokens);
  std::vector<double> mean(m.dim, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t d = 0; d < m.dim; ++d) mean[d] += m.row(i)[d];
  }
  double norm = 0;
  for (double v : mean) norm += v * v;
  const auto emb = rows[0]["embedding"].get<std::vector<float>>();
  REQUIRE(emb.size() == m.dim);
  for (std::size_t d = 0; d < m.dim; ++d) CHECK(emb[d] == doctest::Approx(mean[d] / std::sqrt(norm)).epsilon(1e-6));

  export_pair_embeddings({}, {human[0]}, provider, dir.path() / "human.jsonl");
  const auto only = read_file(dir.path() / "human.jsonl");
  CHECK(std::count(only.begin(), only.end(), '\n') == 1);
  CHECK(only.find("\"human\"") != std::string::npos);
}
