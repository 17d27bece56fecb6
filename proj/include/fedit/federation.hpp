#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fedit/core.hpp"
#include "fedit/corpus_io.hpp"
#include "fedit/retry.hpp"

namespace fedit {

struct TrainHyperparams {
  float learning_rate = 2e-5f;
  std::size_t batch_size = 16;
  std::size_t local_steps = 10;
  std::uint64_t seed = 0;
};

struct TrainResult {
  ParameterSet params;
  std::size_t num_examples = 0;
  float train_loss = 0.0f;
};

/// Local fine-tuning on one client. The returned parameters must be
/// aggregation-compatible with the input and num_examples must equal the
/// dataset size. Implementations must allow concurrent calls.
class TrainerBackend {
 public:
  virtual ~TrainerBackend() = default;
  virtual TrainResult train(std::size_t round, const std::string& client_id, const ParameterSet& params,
                            const std::vector<InstructionPair>& dataset, const TrainHyperparams& hyper) const = 0;
};

/// Returns the input parameters unchanged.
class IdentityTrainer final : public TrainerBackend {
 public:
  TrainResult train(std::size_t round, const std::string& client_id, const ParameterSet& params,
                    const std::vector<InstructionPair>& dataset, const TrainHyperparams& hyper) const override;
};

/// Least-squares objective 0.5 * ||A w - b||^2 over the flattened parameters.
struct Quadratic {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> a;  // row-major rows x cols
  std::vector<double> b;  // rows

  double loss(std::span<const double> w) const;
  /// A^T (A w - b)
  std::vector<double> gradient(std::span<const double> w) const;
};

/// Runs local_steps full-batch gradient steps on the client's quadratic.
/// train_loss is the mean objective over the visited iterates before each
/// step. Deterministic and stateless.
class SimulatedTrainer final : public TrainerBackend {
 public:
  explicit SimulatedTrainer(std::map<std::string, Quadratic> objectives);

  /// A entries uniform in [-1, 1] / sqrt(dim), b uniform in [-1, 1]; one
  /// independent stream per client id.
  static SimulatedTrainer generate(const std::vector<std::string>& client_ids, std::size_t dim, std::size_t rows,
                                   std::uint64_t seed);

  const Quadratic& objective(const std::string& client_id) const;

  TrainResult train(std::size_t round, const std::string& client_id, const ParameterSet& params,
                    const std::vector<InstructionPair>& dataset, const TrainHyperparams& hyper) const override;

 private:
  std::map<std::string, Quadratic> objectives_;
};

/// Client for the trainer wire protocol (POST /v1/train, GET /v1/health).
class HttpTrainerBackend final : public TrainerBackend {
 public:
  HttpTrainerBackend(std::string base_url, RetryPolicy retry = {},
                     std::chrono::seconds timeout = std::chrono::seconds(3600));

  /// True iff GET /v1/health answers 200.
  bool healthy() const;

  TrainResult train(std::size_t round, const std::string& client_id, const ParameterSet& params,
                    const std::vector<InstructionPair>& dataset, const TrainHyperparams& hyper) const override;

 private:
  std::string base_url_;
  RetryPolicy retry_;
  std::chrono::seconds timeout_;
};

/// Request/response bodies of /v1/train; shared by the client above and by
/// test servers.
nlohmann::json make_train_request(std::size_t round, const std::string& client_id, const ParameterSet& params,
                                  const std::vector<InstructionPair>& dataset, const TrainHyperparams& hyper);
TrainResult parse_train_response(const nlohmann::json& body);

// ---------------------------------------------------------------------------

/// Uniform draw without replacement, returned in draw order.
std::vector<std::string> sample_clients(const std::vector<std::string>& all_ids, std::size_t clients_per_round,
                                        Rng& rng);

struct ClientUpdate {
  std::string client_id;
  ParameterSet params;
  std::size_t num_examples = 0;
};

/// Dataset-size weighted mean, weights N_m / sum(N). Accumulated in f64 in
/// ascending client-id order, so the result does not depend on input order.
/// Throws NameSetMismatch / ShapeMismatch(name) on incompatible inputs and
/// ConfigError on an empty list or a zero size.
ParameterSet aggregate(const std::vector<ClientUpdate>& updates);

/// Same weighting without client ids; inputs are put into a canonical order
/// (size, then raw bits) before accumulation.
ParameterSet aggregate(const std::vector<ParameterSet>& client_params, const std::vector<std::size_t>& sizes);

struct RoundRecord {
  std::size_t round = 0;
  std::vector<std::string> sampled_client_ids;
  std::vector<float> weights;
  std::vector<float> train_losses;
  double checksum = 0.0;
  std::optional<std::string> error;
};

nlohmann::json to_json(const RoundRecord& record);

struct FederationResult {
  ParameterSet final_params;
  std::vector<RoundRecord> records;
};

/// Output files under the checkpoint directory.
inline constexpr const char* kRoundRecordsFile = "rounds.jsonl";
inline constexpr const char* kFinalCheckpointFile = "final.ftp1";
std::string round_checkpoint_name(std::size_t completed_rounds);

/// The FedAvg round loop. Each round samples clients_per_round clients,
/// trains them concurrently from the current global parameters on their kept
/// pairs, and aggregates with N_m = kept-pair count. When checkpoint_dir is
/// set, round records stream to rounds.jsonl and checkpoints are written
/// every checkpoint_interval rounds, after the last round, and as final.ftp1.
/// A trainer failure aborts the run with TrainerFailure after its round
/// record (carrying the error) is persisted.
FederationResult run_federation(const FederationConfig& config, const std::vector<GeneratedDataset>& clients,
                                const ParameterSet& init, const TrainerBackend& trainer,
                                const std::optional<std::filesystem::path>& checkpoint_dir);

}  // namespace fedit
