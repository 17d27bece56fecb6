#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedit/core.hpp"
#include "fedit/corpus_io.hpp"
#include "fedit/evaluation.hpp"
#include "fedit/federation.hpp"
#include "fedit/filtering.hpp"
#include "fedit/generation.hpp"
#include "fedit/retrieval.hpp"

namespace fedit {

struct ClientSource {
  std::string id;
  std::filesystem::path corpus;
};

/// Everything one run needs. Loaded from a JSON config whose keys are the
/// CLI flag names (e.g. "clients-per-round"); relative paths resolve against
/// the config file's directory.
struct RunConfig {
  FederationConfig fed;
  GenerationConfig gen;

  std::string gen_url;
  std::string gen_model = "default";
  std::string reward_url;
  std::string trainer_url;
  std::string embed_url;

  bool mock_generation = false;
  bool mock_reward = false;
  bool mock_trainer = false;
  bool mock_embedding = false;

  std::string init_zeros = "lora_A:4x16,lora_B:16x4";
  std::optional<std::filesystem::path> init_checkpoint;
  std::size_t sim_trainer_rows = 16;
  std::optional<double> bertscore_baseline;

  std::vector<ClientSource> clients;
  std::optional<std::filesystem::path> pool;
  std::optional<std::filesystem::path> eval_references;
  std::optional<std::filesystem::path> eval_responses;
  std::filesystem::path out = "out";

  void set_mock(bool on) { mock_generation = mock_reward = mock_trainer = mock_embedding = on; }

  nlohmann::json to_json() const;
};

RunConfig load_run_config(const std::filesystem::path& path);
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);

/// Fills unset endpoint URLs from TRAINER_URL / EMBED_URL.
void apply_environment(RunConfig& config);

struct ClientStats {
  std::size_t generated = 0;
  /// First-attempt parse failures; each one triggers a single regeneration.
  std::size_t parse_failed = 0;
  /// Documents whose pair still failed to parse after the retry.
  std::size_t rule_rejected = 0;
  std::size_t reward_dropped = 0;
  std::size_t kept = 0;
  std::map<std::string, std::size_t> reject_reasons;

  /// generated == kept + rule_rejected + reward_dropped
  bool balanced() const noexcept { return generated == kept + rule_rejected + reward_dropped; }
};

/// Accumulates into <out>/manifest.json across commands.
class Manifest {
 public:
  explicit Manifest(std::filesystem::path out_dir);

  void set_config(const RunConfig& config);
  void add_input(const std::filesystem::path& path);
  ClientStats& client(const std::string& id) { return stats_[id]; }
  const std::map<std::string, ClientStats>& clients() const { return stats_; }
  void set_timing(const std::string& stage, double millis);
  void save() const;

 private:
  std::filesystem::path path_;
  nlohmann::json doc_;
  std::map<std::string, ClientStats> stats_;
};

/// Backend factories honoring the mock switches.
std::unique_ptr<GenerationBackend> make_generation_backend(const RunConfig& config);
std::unique_ptr<EmbeddingProvider> make_embedding_provider(const RunConfig& config);
std::unique_ptr<RewardBackend> make_reward_backend(const RunConfig& config, const std::vector<ClientCorpus>& corpora);
std::unique_ptr<TrainerBackend> make_trainer(const RunConfig& config, const std::vector<std::string>& client_ids,
                                             const ParameterSet& init);
ParameterSet initial_parameters(const RunConfig& config);

/// Generates one pair per document for one client. Updates stats.
GeneratedDataset generate_client_dataset(const ClientCorpus& corpus, const ExampleIndex& index,
                                         const GenerationBackend& backend, const RunConfig& config,
                                         ClientStats& stats);

std::filesystem::path dataset_dir(const std::filesystem::path& out);
std::filesystem::path filtered_dir(const std::filesystem::path& out);
std::filesystem::path federation_dir(const std::filesystem::path& out);

/// Writes <out>/datasets/<client>.jsonl per client and the manifest.
std::vector<std::filesystem::path> cmd_generate(const RunConfig& config);

/// Reward-filters each dataset into <out>/filtered/<client>.jsonl.
std::vector<std::filesystem::path> cmd_filter(const RunConfig& config,
                                              const std::vector<std::filesystem::path>& datasets);

/// Runs federation over the given datasets into <out>/federation/.
FederationResult cmd_federate(const RunConfig& config, const std::vector<std::filesystem::path>& datasets);

/// Writes <out_stem>.json and <out_stem>.csv.
EvalReport cmd_evaluate(const RunConfig& config, const std::filesystem::path& responses,
                        const std::filesystem::path& references, const std::filesystem::path& out_stem);

/// generate -> filter -> federate -> evaluate (when eval files are set).
void cmd_pipeline(const RunConfig& config);

}  // namespace fedit
