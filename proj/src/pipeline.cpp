#include "fedit/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <set>

#include "fedit/checkpoint.hpp"

namespace fedit {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string env_or_empty(const char* name) {
  const char* v = std::getenv(name);
  return v ? v : "";
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) out = it->get<T>();
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

/// Re-raises `e` with context prepended, keeping its code.
[[noreturn]] void rethrow_with_context(const Error& e, const std::string& context) {
  throw Error(e.code(), context + ": " + e.detail());
}

class Stopwatch {
 public:
  double elapsed_ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::vector<ClientCorpus> load_corpora(const RunConfig& config, Manifest* manifest) {
  std::vector<ClientCorpus> corpora;
  for (const auto& c : config.clients) {
    ClientCorpus corpus;
    try {
      corpus = load_corpus(c.corpus);
    } catch (const Error& e) {
      rethrow_with_context(e, "client " + c.id + " corpus " + c.corpus.string());
    }
    corpus.client_id = c.id;
    for (const auto& id : lint_prompt_markers(corpus)) {
      std::cerr << "warning: client " << c.id << " document " << id
                << " contains a prompt marker; generation may misparse it\n";
    }
    if (manifest) manifest->add_input(c.corpus);
    corpora.push_back(std::move(corpus));
  }
  return corpora;
}

json stats_to_json(const ClientStats& s) {
  return {{"generated", s.generated},       {"parse_failed", s.parse_failed},
          {"rule_rejected", s.rule_rejected}, {"reward_dropped", s.reward_dropped},
          {"kept", s.kept},                   {"reject_reasons", s.reject_reasons}};
}

ClientStats stats_from_json(const json& j) {
  ClientStats s;
  read_if(j, "generated", s.generated);
  read_if(j, "parse_failed", s.parse_failed);
  read_if(j, "rule_rejected", s.rule_rejected);
  read_if(j, "reward_dropped", s.reward_dropped);
  read_if(j, "kept", s.kept);
  read_if(j, "reject_reasons", s.reject_reasons);
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------

json RunConfig::to_json() const {
  json clients_json = json::array();
  for (const auto& c : clients) clients_json.push_back({{"id", c.id}, {"corpus", c.corpus.string()}});
  json j = {{"seed", fed.seed},
            {"num-clients", fed.num_clients},
            {"rounds", fed.rounds},
            {"clients-per-round", fed.clients_per_round},
            {"learning-rate", fed.learning_rate},
            {"batch-size", fed.batch_size},
            {"local-steps", fed.local_steps},
            {"k", fed.k_examples},
            {"policy", to_string(fed.selection_policy)},
            {"checkpoint-interval", fed.checkpoint_interval},
            {"parallelism", fed.parallelism},
            {"temperature", gen.temperature},
            {"max-tokens", gen.max_tokens},
            {"max-retries", gen.retry.max_retries},
            {"gen-url", gen_url},
            {"gen-model", gen_model},
            {"reward-url", reward_url},
            {"trainer-url", trainer_url},
            {"embed-url", embed_url},
            {"mock-generation", mock_generation},
            {"mock-reward", mock_reward},
            {"mock-trainer", mock_trainer},
            {"mock-embedding", mock_embedding},
            {"init-zeros", init_zeros},
            {"sim-trainer-rows", sim_trainer_rows},
            {"clients", std::move(clients_json)},
            {"out", out.string()}};
  if (init_checkpoint) j["init"] = init_checkpoint->string();
  if (bertscore_baseline) j["bertscore-baseline"] = *bertscore_baseline;
  if (pool) j["pool"] = pool->string();
  if (eval_references) j["references"] = eval_references->string();
  if (eval_responses) j["responses"] = eval_responses->string();
  return j;
}

RunConfig run_config_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "config must be a JSON object");
  static const std::set<std::string> known = {
      "seed", "num-clients", "rounds", "clients-per-round", "learning-rate", "batch-size", "local-steps", "k",
      "policy", "checkpoint-interval", "parallelism", "temperature", "max-tokens", "max-retries", "gen-url",
      "gen-model", "reward-url", "trainer-url", "embed-url", "mock", "mock-generation", "mock-reward",
      "mock-trainer", "mock-embedding", "init-zeros", "init", "sim-trainer-rows", "bertscore-baseline", "clients",
      "pool", "references", "responses", "out"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw Error(ErrorCode::ConfigError, "unknown config key '" + key + "'");
  }

  RunConfig c;
  try {
    read_if(j, "seed", c.fed.seed);
    read_if(j, "num-clients", c.fed.num_clients);
    read_if(j, "rounds", c.fed.rounds);
    read_if(j, "clients-per-round", c.fed.clients_per_round);
    read_if(j, "learning-rate", c.fed.learning_rate);
    read_if(j, "batch-size", c.fed.batch_size);
    read_if(j, "local-steps", c.fed.local_steps);
    read_if(j, "k", c.fed.k_examples);
    if (j.contains("policy")) c.fed.selection_policy = parse_policy(j["policy"].get<std::string>());
    read_if(j, "checkpoint-interval", c.fed.checkpoint_interval);
    read_if(j, "parallelism", c.fed.parallelism);
    read_if(j, "temperature", c.gen.temperature);
    read_if(j, "max-tokens", c.gen.max_tokens);
    read_if(j, "max-retries", c.gen.retry.max_retries);
    read_if(j, "gen-url", c.gen_url);
    read_if(j, "gen-model", c.gen_model);
    read_if(j, "reward-url", c.reward_url);
    read_if(j, "trainer-url", c.trainer_url);
    read_if(j, "embed-url", c.embed_url);
    if (j.value("mock", false)) c.set_mock(true);
    read_if(j, "mock-generation", c.mock_generation);
    read_if(j, "mock-reward", c.mock_reward);
    read_if(j, "mock-trainer", c.mock_trainer);
    read_if(j, "mock-embedding", c.mock_embedding);
    read_if(j, "init-zeros", c.init_zeros);
    if (j.contains("init")) c.init_checkpoint = resolve(base_dir, j["init"].get<std::string>());
    read_if(j, "sim-trainer-rows", c.sim_trainer_rows);
    if (j.contains("bertscore-baseline")) c.bertscore_baseline = j["bertscore-baseline"].get<double>();
    if (auto it = j.find("clients"); it != j.end()) {
      for (const auto& entry : *it) {
        c.clients.push_back({entry.at("id").get<std::string>(), resolve(base_dir, entry.at("corpus").get<std::string>())});
      }
    }
    if (j.contains("pool")) c.pool = resolve(base_dir, j["pool"].get<std::string>());
    if (j.contains("references")) c.eval_references = resolve(base_dir, j["references"].get<std::string>());
    if (j.contains("responses")) c.eval_responses = resolve(base_dir, j["responses"].get<std::string>());
    if (j.contains("out")) c.out = resolve(base_dir, j["out"].get<std::string>());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

void apply_environment(RunConfig& config) {
  if (config.trainer_url.empty()) config.trainer_url = env_or_empty("TRAINER_URL");
  if (config.embed_url.empty()) config.embed_url = env_or_empty("EMBED_URL");
}

// ---------------------------------------------------------------------------

Manifest::Manifest(fs::path out_dir) : path_(std::move(out_dir) / "manifest.json"), doc_(json::object()) {
  if (fs::exists(path_)) {
    try {
      doc_ = json::parse(read_file(path_));
      if (auto it = doc_.find("clients"); it != doc_.end()) {
        for (const auto& [id, s] : it->items()) stats_[id] = stats_from_json(s);
      }
    } catch (const json::exception&) {
      doc_ = json::object();
    }
  }
}

void Manifest::set_config(const RunConfig& config) { doc_["config"] = config.to_json(); }

void Manifest::add_input(const fs::path& path) {
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(fnv1a64(read_file(path))));
  doc_["inputs"][path.string()] = hex;
}

void Manifest::set_timing(const std::string& stage, double millis) { doc_["timings_ms"][stage] = millis; }

void Manifest::save() const {
  json out = doc_;
  out["clients"] = json::object();
  bool balanced = true;
  for (const auto& [id, s] : stats_) {
    out["clients"][id] = stats_to_json(s);
    balanced = balanced && s.balanced();
  }
  out["balanced"] = balanced;
  write_file(path_, out.dump(2) + "\n");
}

// ---------------------------------------------------------------------------

std::unique_ptr<GenerationBackend> make_generation_backend(const RunConfig& config) {
  if (config.mock_generation) return std::make_unique<MockGenerationBackend>();
  if (config.gen_url.empty()) throw Error(ErrorCode::ConfigError, "no generation endpoint (gen-url) configured");
  return std::make_unique<ChatCompletionsBackend>(config.gen_url, config.gen_model, env_or_empty("GEN_API_KEY"));
}

std::unique_ptr<EmbeddingProvider> make_embedding_provider(const RunConfig& config) {
  if (config.mock_embedding || config.embed_url.empty()) return std::make_unique<HashEmbedder>();
  return std::make_unique<HttpEmbeddingProvider>(config.embed_url, config.gen.retry);
}

std::unique_ptr<RewardBackend> make_reward_backend(const RunConfig& config, const std::vector<ClientCorpus>& corpora) {
  if (config.mock_reward) {
    auto mock = std::make_unique<MockRewardBackend>();
    for (const auto& c : corpora) {
      for (const auto& d : c.documents) mock->add_document(d);
    }
    return mock;
  }
  if (config.reward_url.empty()) throw Error(ErrorCode::ConfigError, "no reward endpoint (reward-url) configured");
  return std::make_unique<HttpRewardBackend>(config.reward_url, env_or_empty("REWARD_API_KEY"), config.gen.retry);
}

std::unique_ptr<TrainerBackend> make_trainer(const RunConfig& config, const std::vector<std::string>& client_ids,
                                             const ParameterSet& init) {
  if (config.mock_trainer) {
    return std::make_unique<SimulatedTrainer>(
        SimulatedTrainer::generate(client_ids, init.element_count(), config.sim_trainer_rows, config.fed.seed));
  }
  if (config.trainer_url.empty()) throw Error(ErrorCode::ConfigError, "no trainer endpoint (trainer-url) configured");
  return std::make_unique<HttpTrainerBackend>(config.trainer_url, config.gen.retry);
}

ParameterSet initial_parameters(const RunConfig& config) {
  if (config.init_checkpoint) return read_checkpoint(*config.init_checkpoint).params;
  return zeros_from_spec(config.init_zeros);
}

// ---------------------------------------------------------------------------

GeneratedDataset generate_client_dataset(const ClientCorpus& corpus, const ExampleIndex& index,
                                         const GenerationBackend& backend, const RunConfig& config,
                                         ClientStats& stats) {
  const auto& docs = corpus.documents;
  std::vector<ParseResult> results(docs.size(), ParseFailure{ParseFailureReason::MissingQuestion, {}});
  std::vector<char> retried(docs.size(), 0);

  parallel_for(docs.size(), config.fed.parallelism, [&](std::size_t i) {
    const auto& doc = docs[i];
    const std::string label = corpus.client_id + "/" + doc.id;
    try {
      Rng selection_rng = seeded_rng(config.fed.seed, "select/" + label);
      const auto selected =
          select_examples(doc, index, config.fed.selection_policy, config.fed.k_examples, selection_rng);
      auto gen = config.gen;
      gen.seed = seeded_rng(config.fed.seed, "generate/" + label).next_u64();
      results[i] = parse_completion(generate_pair(doc, selected, backend, gen), doc.id);
      if (std::holds_alternative<ParseFailure>(results[i])) {
        retried[i] = 1;
        gen.seed = seeded_rng(config.fed.seed, "generate-retry/" + label).next_u64();
        results[i] = parse_completion(generate_pair(doc, selected, backend, gen), doc.id);
      }
    } catch (const Error& e) {
      rethrow_with_context(e, "client " + corpus.client_id + " document " + doc.id);
    }
  });

  const auto filtered = rule_filter(results);
  stats.generated = docs.size();
  stats.parse_failed = static_cast<std::size_t>(std::count(retried.begin(), retried.end(), 1));
  stats.rule_rejected = filtered.rejected();
  stats.reward_dropped = 0;
  stats.kept = filtered.kept.size();
  stats.reject_reasons.clear();
  for (const auto& [reason, count] : filtered.reject_stats) stats.reject_reasons[std::string(to_string(reason))] = count;
  if (filtered.kept.empty()) {
    std::cerr << "warning: client " << corpus.client_id << " produced no usable pairs\n";
  }
  return {corpus.client_id, filtered.kept};
}

fs::path dataset_dir(const fs::path& out) { return out / "datasets"; }
fs::path filtered_dir(const fs::path& out) { return out / "filtered"; }
fs::path federation_dir(const fs::path& out) { return out / "federation"; }

std::vector<fs::path> cmd_generate(const RunConfig& config) {
  config.fed.validate();
  if (config.clients.empty()) throw Error(ErrorCode::ConfigError, "no client corpora given");
  if (!config.pool) throw Error(ErrorCode::ConfigError, "no example pool given");
  Stopwatch clock;
  Manifest manifest(config.out);
  manifest.set_config(config);

  const auto corpora = load_corpora(config, &manifest);
  manifest.add_input(*config.pool);
  const auto provider = make_embedding_provider(config);
  const auto backend = make_generation_backend(config);
  const ExampleIndex index(load_example_pool(*config.pool), *provider);

  std::vector<fs::path> written;
  for (const auto& corpus : corpora) {
    auto& stats = manifest.client(corpus.client_id);
    stats = ClientStats{};
    const auto dataset = generate_client_dataset(corpus, index, *backend, config, stats);
    const auto path = dataset_dir(config.out) / (corpus.client_id + ".jsonl");
    save_dataset(dataset, path);
    written.push_back(path);
  }
  manifest.set_timing("generate", clock.elapsed_ms());
  manifest.save();
  return written;
}

std::vector<fs::path> cmd_filter(const RunConfig& config, const std::vector<fs::path>& datasets) {
  Stopwatch clock;
  Manifest manifest(config.out);
  const auto corpora = config.mock_reward ? load_corpora(config, nullptr) : std::vector<ClientCorpus>{};
  const auto backend = make_reward_backend(config, corpora);

  std::vector<fs::path> written;
  for (const auto& path : datasets) {
    manifest.add_input(path);
    auto dataset = load_dataset(path);
    std::vector<InstructionPair> candidates;
    std::vector<std::size_t> positions;
    for (std::size_t i = 0; i < dataset.pairs.size(); ++i) {
      if (dataset.pairs[i].kept) {
        candidates.push_back(dataset.pairs[i]);
        positions.push_back(i);
      }
    }
    try {
      candidates = reward_filter(std::move(candidates), *backend);
    } catch (const Error& e) {
      rethrow_with_context(e, "client " + dataset.client_id);
    }
    for (std::size_t j = 0; j < positions.size(); ++j) dataset.pairs[positions[j]] = std::move(candidates[j]);
    auto& stats = manifest.client(dataset.client_id);
    stats.kept = dataset.kept_count();
    stats.reward_dropped = dataset.pairs.size() - stats.kept;
    const auto out_path = filtered_dir(config.out) / path.filename();
    save_dataset(dataset, out_path);
    written.push_back(out_path);
  }
  manifest.set_timing("filter", clock.elapsed_ms());
  manifest.save();
  return written;
}

FederationResult cmd_federate(const RunConfig& config, const std::vector<fs::path>& datasets) {
  Stopwatch clock;
  Manifest manifest(config.out);
  std::vector<GeneratedDataset> clients;
  std::vector<std::string> ids;
  for (const auto& path : datasets) {
    manifest.add_input(path);
    clients.push_back(load_dataset(path));
    ids.push_back(clients.back().client_id);
  }
  if (clients.empty()) throw Error(ErrorCode::ConfigError, "no datasets to federate");
  if (config.init_checkpoint) manifest.add_input(*config.init_checkpoint);

  FederationConfig fed = config.fed;
  fed.num_clients = clients.size();
  const auto init = initial_parameters(config);
  const auto trainer = make_trainer(config, ids, init);
  auto result = run_federation(fed, clients, init, *trainer, federation_dir(config.out));
  manifest.set_timing("federate", clock.elapsed_ms());
  manifest.save();
  return result;
}

EvalReport cmd_evaluate(const RunConfig& config, const fs::path& responses, const fs::path& references,
                        const fs::path& out_stem) {
  const auto provider = make_embedding_provider(config);
  auto report = evaluate(load_responses(responses), load_references(references), *provider,
                         config.bertscore_baseline);
  write_report(report, out_stem);
  return report;
}

void cmd_pipeline(const RunConfig& config) {
  const auto generated = cmd_generate(config);
  const auto filtered = cmd_filter(config, generated);
  cmd_federate(config, filtered);
  if (config.eval_references && config.eval_responses) {
    Stopwatch clock;
    cmd_evaluate(config, *config.eval_responses, *config.eval_references, config.out / "eval" / "report");
    Manifest manifest(config.out);
    manifest.add_input(*config.eval_responses);
    manifest.add_input(*config.eval_references);
    manifest.set_timing("evaluate", clock.elapsed_ms());
    manifest.save();
  }
}

}  // namespace fedit
