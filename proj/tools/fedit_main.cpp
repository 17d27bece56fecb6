// fedit: generate -> filter -> federate -> evaluate from the command line.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "fedit/checkpoint.hpp"
#include "fedit/pipeline.hpp"

namespace fs = std::filesystem;
using namespace fedit;

namespace {

struct SharedFlags {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  bool mock = false;
  bool mock_generation = false;
  bool mock_reward = false;
  bool mock_trainer = false;
  bool mock_embedding = false;
  std::optional<std::string> policy;
  std::optional<std::size_t> k;
  std::optional<std::size_t> rounds;
  std::optional<std::size_t> clients_per_round;
  std::optional<float> learning_rate;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> local_steps;
  std::optional<std::size_t> parallelism;
  std::optional<std::size_t> checkpoint_interval;
  std::optional<std::string> out;
  std::optional<std::string> gen_url;
  std::optional<std::string> gen_model;
  std::optional<std::string> reward_url;
  std::optional<std::string> trainer_url;
  std::optional<std::string> embed_url;
};

void add_shared(CLI::App* cmd, SharedFlags& f) {
  cmd->add_option("--config", f.config, "JSON run config; flags override its keys");
  cmd->add_option("--seed", f.seed, "Seed for every random stream");
  cmd->add_flag("--mock", f.mock, "Use the deterministic in-process backends for everything");
  cmd->add_flag("--mock-generation", f.mock_generation, "Mock only the generation backend");
  cmd->add_flag("--mock-reward", f.mock_reward, "Mock only the reward backend");
  cmd->add_flag("--mock-trainer", f.mock_trainer, "Use the simulated quadratic trainer");
  cmd->add_flag("--mock-embedding", f.mock_embedding, "Use the hash embedder");
  cmd->add_option("--policy", f.policy,
                  "retrieval | fixed-in-domain | random-in-domain | random-out-domain | random-mixed:IN,OUT");
  cmd->add_option("--k", f.k, "Few-shot examples per prompt");
  cmd->add_option("--rounds", f.rounds, "Communication rounds");
  cmd->add_option("--clients-per-round", f.clients_per_round, "Clients sampled per round");
  cmd->add_option("--learning-rate", f.learning_rate, "Local learning rate");
  cmd->add_option("--batch-size", f.batch_size, "Local batch size");
  cmd->add_option("--local-steps", f.local_steps, "Local optimizer steps per round");
  cmd->add_option("--parallelism", f.parallelism, "Concurrent backend calls");
  cmd->add_option("--checkpoint-interval", f.checkpoint_interval, "Rounds between checkpoints");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--gen-url", f.gen_url, "Chat-completions base URL");
  cmd->add_option("--gen-model", f.gen_model, "Model name sent to the generation service");
  cmd->add_option("--reward-url", f.reward_url, "Reward service base URL");
  cmd->add_option("--trainer-url", f.trainer_url, "Trainer service base URL");
  cmd->add_option("--embed-url", f.embed_url, "Embedding service base URL");
}

RunConfig build_config(const SharedFlags& f) {
  RunConfig c = f.config ? load_run_config(*f.config) : RunConfig{};
  if (f.mock) c.set_mock(true);
  c.mock_generation |= f.mock_generation;
  c.mock_reward |= f.mock_reward;
  c.mock_trainer |= f.mock_trainer;
  c.mock_embedding |= f.mock_embedding;
  if (f.seed) c.fed.seed = *f.seed;
  if (f.policy) c.fed.selection_policy = parse_policy(*f.policy);
  if (f.k) c.fed.k_examples = *f.k;
  if (f.rounds) c.fed.rounds = *f.rounds;
  if (f.clients_per_round) c.fed.clients_per_round = *f.clients_per_round;
  if (f.learning_rate) c.fed.learning_rate = *f.learning_rate;
  if (f.batch_size) c.fed.batch_size = *f.batch_size;
  if (f.local_steps) c.fed.local_steps = *f.local_steps;
  if (f.parallelism) c.fed.parallelism = *f.parallelism;
  if (f.checkpoint_interval) c.fed.checkpoint_interval = *f.checkpoint_interval;
  if (f.out) c.out = *f.out;
  if (f.gen_url) c.gen_url = *f.gen_url;
  if (f.gen_model) c.gen_model = *f.gen_model;
  if (f.reward_url) c.reward_url = *f.reward_url;
  if (f.trainer_url) c.trainer_url = *f.trainer_url;
  if (f.embed_url) c.embed_url = *f.embed_url;
  apply_environment(c);
  return c;
}

std::vector<fs::path> jsonl_files_in(const fs::path& dir) {
  std::vector<fs::path> files;
  if (!fs::is_directory(dir)) throw Error(ErrorCode::IoError, "no directory " + dir.string());
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<fs::path> as_paths(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated instruction tuning from unstructured corpora"};
  app.require_subcommand(1);

  SharedFlags shared;

  auto* generate = app.add_subcommand("generate", "Turn client corpora into instruction-response datasets");
  add_shared(generate, shared);
  std::vector<std::string> corpus_paths;
  std::optional<std::string> pool_path;
  generate->add_option("--corpus", corpus_paths, "Client corpus JSONL (client id = file stem); repeatable");
  generate->add_option("--pool", pool_path, "Example pool JSONL");

  auto* filter = app.add_subcommand("filter", "Reward-filter generated datasets (keep top two-thirds)");
  add_shared(filter, shared);
  std::vector<std::string> filter_datasets;
  std::vector<std::string> filter_corpora;
  filter->add_option("--dataset", filter_datasets, "Dataset JSONL; default: every file in <out>/datasets");
  filter->add_option("--corpus", filter_corpora, "Source corpora, needed by the mock reward model");

  auto* federate = app.add_subcommand("federate", "Run federated averaging over filtered datasets");
  add_shared(federate, shared);
  std::vector<std::string> federate_datasets;
  std::optional<std::string> init_path;
  std::optional<std::string> init_zeros;
  std::optional<std::size_t> sim_trainer_rows;
  federate->add_option("--dataset", federate_datasets, "Dataset JSONL; default: every file in <out>/filtered");
  auto* init_opt = federate->add_option("--init", init_path, "Initial FTP1 checkpoint");
  federate->add_option("--init-zeros", init_zeros, "Zero init from a shape spec, e.g. lora_A:8x64,lora_B:64x8")
      ->excludes(init_opt);
  federate->add_option("--sim-trainer", sim_trainer_rows, "Simulated quadratic trainer with this many rows");

  auto* eval = app.add_subcommand("evaluate", "Score responses against references (ROUGE-L, BERTScore)");
  add_shared(eval, shared);
  std::string responses_path, references_path;
  std::optional<double> baseline;
  eval->add_option("--responses", responses_path, "Responses JSONL {id, response}")->required();
  eval->add_option("--references", references_path, "Evaluation set JSONL {instruction, reference, id?}")->required();
  eval->add_option("--bertscore-baseline", baseline, "Report (s - b) / (1 - b)");

  auto* pipeline = app.add_subcommand("pipeline", "generate -> filter -> federate -> evaluate");
  add_shared(pipeline, shared);

  auto* export_cmd = app.add_subcommand("export-embeddings", "Embed generated and human pairs for projection");
  add_shared(export_cmd, shared);
  std::string generated_path, annotated_path, export_path;
  export_cmd->add_option("--generated", generated_path, "Generated dataset JSONL (kept pairs are used)")->required();
  export_cmd->add_option("--annotated", annotated_path, "Human-annotated dataset JSONL")->required();
  export_cmd->add_option("--file", export_path, "Output JSONL")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig config = build_config(shared);

    if (generate->parsed()) {
      if (!corpus_paths.empty()) {
        config.clients.clear();
        for (const auto& p : corpus_paths) config.clients.push_back({fs::path(p).stem().string(), p});
      }
      if (pool_path) config.pool = *pool_path;
      for (const auto& p : cmd_generate(config)) std::cout << p.string() << "\n";
    } else if (filter->parsed()) {
      if (!filter_corpora.empty()) {
        config.clients.clear();
        for (const auto& p : filter_corpora) config.clients.push_back({fs::path(p).stem().string(), p});
      }
      auto datasets = filter_datasets.empty() ? jsonl_files_in(dataset_dir(config.out)) : as_paths(filter_datasets);
      for (const auto& p : cmd_filter(config, datasets)) std::cout << p.string() << "\n";
    } else if (federate->parsed()) {
      if (init_path) config.init_checkpoint = *init_path;
      if (init_zeros) {
        config.init_zeros = *init_zeros;
        config.init_checkpoint.reset();
      }
      if (sim_trainer_rows) {
        config.mock_trainer = true;
        config.sim_trainer_rows = *sim_trainer_rows;
      }
      auto datasets =
          federate_datasets.empty() ? jsonl_files_in(filtered_dir(config.out)) : as_paths(federate_datasets);
      const auto result = cmd_federate(config, datasets);
      std::cout << (federation_dir(config.out) / kFinalCheckpointFile).string() << "\n"
                << "rounds: " << result.records.size() << " checksum: " << result.final_params.checksum() << "\n";
    } else if (eval->parsed()) {
      if (baseline) config.bertscore_baseline = *baseline;
      const auto report = cmd_evaluate(config, responses_path, references_path, config.out / "eval" / "report");
      std::cout << "samples: " << report.sample_count() << " rouge_l: " << report.mean_rouge_l
                << " bert_f1: " << report.mean_bert_f1 << "\n";
    } else if (pipeline->parsed()) {
      cmd_pipeline(config);
      std::cout << (config.out / "manifest.json").string() << "\n";
    } else if (export_cmd->parsed()) {
      const auto provider = make_embedding_provider(config);
      export_pair_embeddings(load_dataset(generated_path).kept_pairs(), load_dataset(annotated_path).kept_pairs(),
                             *provider, export_path);
      std::cout << export_path << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
