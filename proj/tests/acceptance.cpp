// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.

#define DOCTEST_CONFIG_DISABLE

#include <nlohmann/json.hpp>

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <sstream>
#include <sys/wait.h>

#include "fedit/checkpoint.hpp"
#include "fedit/corpus_io.hpp"
#include "fedit/evaluation.hpp"
#include "fedit/federation.hpp"
#include "fedit/filtering.hpp"
#include "fedit/generation.hpp"
#include "fedit/retrieval.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace fedit;
namespace fs = std::filesystem;

namespace {

const fs::path kSourceDir = FEDIT_SOURCE_DIR;

struct Outcome {
  bool pass = true;
  std::string detail;

  void fail(const std::string& why) {
    if (pass) detail = why;
    pass = false;
  }
};

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

bool bits_equal(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

ParameterSet random_set(Rng& rng, const std::vector<std::pair<std::string, std::vector<std::uint64_t>>>& layout) {
  ParameterSet ps;
  for (const auto& [name, shape] : layout) {
    Tensor t{shape, {}};
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    for (std::size_t i = 0; i < n; ++i) t.data.push_back(static_cast<float>(rng.next_double() * 2.0 - 1.0));
    ps.insert(name, std::move(t));
  }
  return ps;
}

// ---------------------------------------------------------------------------

Outcome a1_aggregation() {
  Outcome out;
  Timer timer;
  auto rng = seeded_rng(2024, "A1");
  double worst = 0.0;
  for (int c = 0; c < 200; ++c) {
    std::vector<std::pair<std::string, std::vector<std::uint64_t>>> layout;
    for (std::uint64_t t = 0, n = 1 + rng.next_below(3); t < n; ++t) {
      layout.push_back({"layer" + std::to_string(t), {1 + rng.next_below(4), 1 + rng.next_below(32)}});
    }
    const auto m = 1 + rng.next_below(8);
    std::vector<ClientUpdate> updates;
    std::vector<std::vector<float>> flat;
    std::vector<std::size_t> sizes;
    for (std::uint64_t i = 0; i < m; ++i) {
      updates.push_back({"client_" + std::to_string(i), random_set(rng, layout), 1 + rng.next_below(10000)});
      flat.push_back(updates.back().params.flatten());
      sizes.push_back(updates.back().num_examples);
    }
    const auto got = aggregate(updates).flatten();
    const auto expected = oracle::weighted_mean(flat, sizes);
    for (std::size_t e = 0; e < expected.size(); ++e) {
      const double err = std::abs(got[e] - expected[e]);
      const double rel = expected[e] == 0.0 ? err : err / std::abs(expected[e]);
      worst = std::max(worst, rel);
      if (rel > 1e-6) out.fail("case " + std::to_string(c) + " element " + std::to_string(e) + " rel err " + fmt(rel));
    }

    auto shuffled = updates;
    for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[rng.next_below(i)]);
    if (!bits_equal(aggregate(shuffled).flatten(), got)) out.fail("case " + std::to_string(c) + " not permutation invariant");

    std::vector<ParameterSet> params;
    std::vector<std::size_t> shuffled_sizes;
    for (const auto& u : shuffled) {
      params.push_back(u.params);
      shuffled_sizes.push_back(u.num_examples);
    }
    std::vector<ParameterSet> in_order;
    for (const auto& u : updates) in_order.push_back(u.params);
    if (!bits_equal(aggregate(params, shuffled_sizes).flatten(), aggregate(in_order, sizes).flatten())) {
      out.fail("case " + std::to_string(c) + " unnamed form not permutation invariant");
    }
  }
  const double secs = timer.seconds();
  if (secs >= 5.0) out.fail("took " + fmt(secs) + " s");
  if (out.pass) out.detail = "200 cases, worst rel err " + fmt(worst) + ", " + fmt(secs) + " s";
  return out;
}

Outcome a2_centralized_gd() {
  Outcome out;
  Timer timer;
  constexpr std::size_t kClients = 5, kRows = 16, kRounds = 100;
  constexpr float kLr = 0.1f;
  const std::string spec = "lora_A:4x8,lora_B:8x4";
  const std::size_t dim = zeros_from_spec(spec).element_count();

  std::vector<GeneratedDataset> clients;
  std::vector<std::string> ids;
  for (std::size_t c = 0; c < kClients; ++c) {
    ids.push_back("client_" + std::to_string(c));
    clients.push_back({ids.back(), std::vector<InstructionPair>(10, {"q", "a", "d", std::nullopt, true})});
  }
  const auto trainer = SimulatedTrainer::generate(ids, dim, kRows, 7);
  FederationConfig cfg;
  cfg.num_clients = kClients;
  cfg.clients_per_round = kClients;
  cfg.rounds = kRounds;
  cfg.local_steps = 1;
  cfg.learning_rate = kLr;
  cfg.checkpoint_interval = 1;
  TempDir dir;
  run_federation(cfg, clients, zeros_from_spec(spec), trainer, dir.path());

  std::vector<double> w(dim, 0.0);
  double worst = 0.0;
  for (std::size_t t = 1; t <= kRounds; ++t) {
    std::vector<double> grad(dim, 0.0);
    for (const auto& id : ids) {
      const auto& q = trainer.objective(id);
      for (std::size_t r = 0; r < kRows; ++r) {
        double resid = -q.b[r];
        for (std::size_t j = 0; j < dim; ++j) resid += q.a[r * dim + j] * w[j];
        for (std::size_t j = 0; j < dim; ++j) grad[j] += q.a[r * dim + j] * resid / static_cast<double>(kClients);
      }
    }
    for (std::size_t j = 0; j < dim; ++j) w[j] -= static_cast<double>(kLr) * grad[j];
    const auto got = read_checkpoint(dir.path() / round_checkpoint_name(t)).params.flatten();
    for (std::size_t j = 0; j < dim; ++j) worst = std::max(worst, std::abs(got[j] - w[j]));
  }
  const double secs = timer.seconds();
  if (worst > 1e-5) out.fail("max deviation " + fmt(worst));
  if (secs >= 10.0) out.fail("took " + fmt(secs) + " s");
  if (out.pass) out.detail = "100 rounds, max deviation " + fmt(worst) + ", " + fmt(secs) + " s";
  return out;
}

Outcome a3_retrieval() {
  Outcome out;
  Timer timer;
  HashEmbedder provider;
  const auto pool = load_example_pool(kSourceDir / "data/toy/pool.jsonl");
  if (pool.size() != 50) out.fail("pool has " + std::to_string(pool.size()) + " entries");
  std::vector<Document> docs;
  for (int c = 0; c < 5; ++c) {
    auto corpus = load_corpus(kSourceDir / "data/toy" / ("client_" + std::to_string(c) + ".jsonl"));
    docs.insert(docs.end(), corpus.documents.begin(), corpus.documents.end());
  }
  const ExampleIndex index(pool, provider);
  auto rng = seeded_rng(2024, "A3");
  for (int t = 0; t < 100; ++t) {
    const auto& target = docs[rng.next_below(docs.size())];
    Rng unused(0);
    const auto got = select_examples(target, index, SelectionPolicy::retrieval(), 3, unused).pool_indices;
    if (got != oracle::top_k(target.text, pool, provider, 3)) out.fail("target " + target.id + " disagrees");
  }
  const double secs = timer.seconds();
  if (secs >= 30.0) out.fail("took " + fmt(secs) + " s");
  if (out.pass) out.detail = "100 targets, 50-example pool, " + fmt(secs) + " s";
  return out;
}

Outcome a4_filter() {
  class Fixed final : public RewardBackend {
   public:
    std::vector<float> scores;
    std::vector<float> score(const std::vector<InstructionPair>&) const override { return scores; }
  };
  Outcome out;
  Timer timer;
  auto rng = seeded_rng(2024, "A4");
  for (std::size_t n = 1; n <= 300; ++n) {
    for (int variant = 0; variant < 2; ++variant) {
      Fixed backend;
      for (std::size_t i = 0; i < n; ++i) {
        // Variant 1 draws from 5 levels so the cut falls inside ties.
        backend.scores.push_back(variant == 0 ? static_cast<float>(rng.next_double())
                                              : static_cast<float>(rng.next_below(5)));
      }
      const auto result = reward_filter(std::vector<InstructionPair>(n, {"q", "a", "d", std::nullopt, true}), backend);
      std::vector<std::size_t> kept;
      float min_kept = INFINITY, max_dropped = -INFINITY;
      for (std::size_t i = 0; i < n; ++i) {
        if (result[i].kept) {
          kept.push_back(i);
          min_kept = std::min(min_kept, backend.scores[i]);
        } else {
          max_dropped = std::max(max_dropped, backend.scores[i]);
        }
      }
      const auto want = static_cast<std::size_t>(std::ceil(2.0 * static_cast<double>(n) / 3.0));
      if (kept.size() != want) out.fail("N=" + std::to_string(n) + " kept " + std::to_string(kept.size()));
      if (min_kept < max_dropped) out.fail("N=" + std::to_string(n) + " dominance violated");
      if (kept != oracle::reward_kept(backend.scores)) out.fail("N=" + std::to_string(n) + " tie rule violated");
    }
  }
  const double secs = timer.seconds();
  if (secs >= 5.0) out.fail("took " + fmt(secs) + " s");
  if (out.pass) out.detail = "N=1..300, continuous and tied scores, " + fmt(secs) + " s";
  return out;
}

Outcome a5_metrics() {
  Outcome out;
  Timer timer;
  auto rng = seeded_rng(2024, "A5");
  for (int c = 0; c < 1000; ++c) {
    std::vector<std::string> a, b;
    const auto alphabet = 1 + rng.next_below(6);
    for (std::uint64_t i = 0, n = rng.next_below(13); i < n; ++i) a.push_back(std::string(1, static_cast<char>('a' + rng.next_below(alphabet))));
    for (std::uint64_t i = 0, n = rng.next_below(13); i < n; ++i) b.push_back(std::string(1, static_cast<char>('a' + rng.next_below(alphabet))));
    if (lcs_length(a, b) != oracle::lcs_brute_force(a, b)) out.fail("LCS case " + std::to_string(c));
  }
  HashEmbedder provider;
  double worst = 0.0;
  for (int c = 0; c < 200; ++c) {
    std::vector<std::string> cand, ref;
    for (std::uint64_t i = 0, n = 1 + rng.next_below(15); i < n; ++i) cand.push_back(random_word(rng));
    for (std::uint64_t i = 0, n = 1 + rng.next_below(15); i < n; ++i) ref.push_back(random_word(rng));
    const double expected = oracle::bertscore(provider.embed(cand), provider.embed(ref));
    const double err = std::abs(bertscore_f1(cand, ref, provider) - expected);
    worst = std::max(worst, err);
    if (err > 1e-6) out.fail("BERTScore case " + std::to_string(c) + " err " + fmt(err));

    const auto text = random_text(rng, 1 + rng.next_below(12));
    if (rouge_l(text, text) != 1.0f) out.fail("ROUGE-L identity case " + std::to_string(c));
    if (std::abs(bertscore_f1(tokenize(text), tokenize(text), provider) - 1.0) > 1e-6) {
      out.fail("BERTScore identity case " + std::to_string(c));
    }
  }
  if (out.pass) out.detail = "1000 LCS cases, 200 BERTScore cases (max err " + fmt(worst) + "), " + fmt(timer.seconds()) + " s";
  return out;
}

Outcome a6_prompt_golden() {
  Outcome out;
  const auto golden = read_file(kSourceDir / "tests/golden/fewshot_prompt.txt");
  std::vector<Example> examples;
  const char* docs[] = {"{The content of document 1}", "{The content of document 2}", "{The content document 3}"};
  for (int i = 0; i < 3; ++i) {
    Example ex;
    ex.document.text = docs[i];
    ex.instruction = "{The content of question " + std::to_string(i + 1) + "}";
    ex.response = "{The content of answer " + std::to_string(i + 1) + "}";
    examples.push_back(ex);
  }
  const auto rendered = render_prompt(kGenerationInstruction, examples, Document{"t", "{The content of the target text}", {}});
  if (rendered != golden) {
    std::size_t i = 0;
    while (i < rendered.size() && i < golden.size() && rendered[i] == golden[i]) ++i;
    out.fail("first difference at byte " + std::to_string(i));
  } else {
    out.detail = std::to_string(golden.size()) + " bytes identical";
  }
  return out;
}

struct CliRun {
  int exit_code = -1;
  std::string output;
  double seconds = 0.0;
};

CliRun run_cli(const std::string& args) {
  Timer timer;
  CliRun run;
  FILE* pipe = ::popen((std::string(FEDIT_CLI_PATH) + " " + args + " 2>&1").c_str(), "r");
  if (!pipe) return run;
  char buf[4096];
  while (auto n = std::fread(buf, 1, sizeof(buf), pipe)) run.output.append(buf, n);
  const int status = ::pclose(pipe);
  run.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  run.seconds = timer.seconds();
  return run;
}

std::map<std::string, std::string> tree_bytes(const fs::path& root, const std::vector<std::string>& subdirs) {
  std::map<std::string, std::string> files;
  for (const auto& sub : subdirs) {
    if (!fs::is_directory(root / sub)) continue;
    for (const auto& e : fs::directory_iterator(root / sub)) {
      files[sub + "/" + e.path().filename().string()] = read_file(e.path());
    }
  }
  return files;
}

Outcome a7_end_to_end() {
  Outcome out;
  TempDir dir;
  const auto config = kSourceDir / "data/toy/pipeline.json";
  const std::vector<std::string> subdirs = {"datasets", "filtered", "federation"};
  std::vector<std::map<std::string, std::string>> trees;
  double slowest = 0.0;
  for (const char* name : {"run_a", "run_b"}) {
    const auto run = run_cli("pipeline --config '" + config.string() + "' --mock --seed 7 --rounds 10 --out '" +
                             (dir.path() / name).string() + "'");
    slowest = std::max(slowest, run.seconds);
    if (run.exit_code != 0) out.fail(std::string(name) + " exited " + std::to_string(run.exit_code) + ": " + run.output);
    if (run.seconds >= 60.0) out.fail(std::string(name) + " took " + fmt(run.seconds) + " s");
    trees.push_back(tree_bytes(dir.path() / name, subdirs));
  }
  if (!out.pass) return out;

  const auto& a = trees[0];
  if (a != trees[1]) out.fail("reruns differ");
  std::size_t datasets = 0, checkpoints = 0;
  for (const auto& [name, _] : a) {
    datasets += name.starts_with("datasets/");
    checkpoints += name.ends_with(".ftp1");
  }
  if (datasets != 5) out.fail(std::to_string(datasets) + " dataset files");
  if (checkpoints != 3) out.fail(std::to_string(checkpoints) + " checkpoints");

  const auto manifest = nlohmann::json::parse(read_file(dir.path() / "run_a/manifest.json"));
  const auto expected = nlohmann::json::parse(read_file(kSourceDir / "tests/golden/toy_pipeline_expected.json"));
  if (manifest["balanced"] != true) out.fail("manifest does not balance");
  for (const auto& [id, s] : manifest["clients"].items()) {
    const auto generated = s["generated"].get<std::size_t>();
    if (generated != s["kept"].get<std::size_t>() + s["rule_rejected"].get<std::size_t>() +
                         s["reward_dropped"].get<std::size_t>()) {
      out.fail(id + " accounting does not balance");
    }
  }
  if (manifest["clients"] != expected["clients"]) out.fail("manifest totals differ from the fixture");

  std::vector<nlohmann::json> sampled;
  std::istringstream rounds(a.at("federation/rounds.jsonl"));
  for (std::string line; std::getline(rounds, line);) sampled.push_back(nlohmann::json::parse(line)["sampled_client_ids"]);
  if (sampled.size() != 10) out.fail(std::to_string(sampled.size()) + " round records");
  if (nlohmann::json(sampled) != expected["sampled_client_ids"]) out.fail("sampling sequence differs from the fixture");

  if (out.pass) out.detail = "2 runs byte-identical (" + std::to_string(a.size()) + " files), slowest " + fmt(slowest) + " s";
  return out;
}

Outcome a8_checkpoint() {
  Outcome out;
  TempDir dir;
  auto rng = seeded_rng(2024, "A8");
  for (int c = 0; c < 100; ++c) {
    ParameterSet ps;
    const auto tensors = c < 10 ? 1 : 1 + rng.next_below(6);  // first ten: single tensor
    for (std::uint64_t t = 0; t < tensors; ++t) {
      Tensor tensor;
      std::size_t count = 1;
      for (std::uint64_t r = 0, rank = rng.next_below(4); r < rank; ++r) {
        tensor.shape.push_back(1 + rng.next_below(8));
        count *= tensor.shape.back();
      }
      for (std::size_t i = 0; i < count; ++i) {
        float v = std::bit_cast<float>(static_cast<std::uint32_t>(rng.next_u64()));
        if (std::isnan(v)) v = -0.0f;
        tensor.data.push_back(v);
      }
      ps.insert("tensor." + std::to_string(t), std::move(tensor));
    }
    CheckpointMeta meta;  // every third case keeps the meta empty
    if (c % 3 != 0) meta.round = static_cast<std::int64_t>(rng.next_below(500));
    if (c % 3 == 2) meta.seed = rng.next_u64();

    const auto path = dir.path() / ("c" + std::to_string(c) + ".ftp1");
    write_checkpoint(path, ps, meta);
    const auto back = read_checkpoint(path);
    bool same = back.meta == meta && back.params.size() == ps.size();
    auto ib = back.params.begin();
    for (auto ia = ps.begin(); same && ia != ps.end(); ++ia, ++ib) {
      same = ia->first == ib->first && ia->second.shape == ib->second.shape &&
             bits_equal(ia->second.data, ib->second.data);
    }
    if (!same) out.fail("case " + std::to_string(c) + " did not round-trip");
    if (encode_ftp1(back.params, back.meta) != read_file(path)) out.fail("case " + std::to_string(c) + " re-encodes differently");
  }
  if (out.pass) out.detail = "100 parameter sets bit-exact";
  return out;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"A1 aggregation exactness", a1_aggregation},
      {"A2 FedAvg equals centralized GD", a2_centralized_gd},
      {"A3 retrieval oracle", a3_retrieval},
      {"A4 filter cardinality and dominance", a4_filter},
      {"A5 metric oracles", a5_metrics},
      {"A6 prompt golden file", a6_prompt_golden},
      {"A7 deterministic end-to-end", a7_end_to_end},
      {"A8 checkpoint round-trip", a8_checkpoint},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.fail(std::string("exception: ") + e.what());
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
    failed += o.pass ? 0 : 1;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
